#include "gsculpt/scene_io.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "gsculpt/error.h"
#include "gsculpt/random.h"

namespace gsculpt {

static_assert(std::endian::native == std::endian::little,
              "PLY reader assumes a little-endian host");

namespace {

enum class PlyType { kInt8, kUInt8, kInt16, kUInt16, kInt32, kUInt32, kFloat32, kFloat64 };

struct PlyProperty {
  std::string name;
  PlyType type;
  size_t offset;
};

size_t TypeSize(PlyType t) {
  switch (t) {
    case PlyType::kInt8:
    case PlyType::kUInt8: return 1;
    case PlyType::kInt16:
    case PlyType::kUInt16: return 2;
    case PlyType::kInt32:
    case PlyType::kUInt32:
    case PlyType::kFloat32: return 4;
    case PlyType::kFloat64: return 8;
  }
  return 0;
}

PlyType ParseType(const std::string& name) {
  static const std::map<std::string, PlyType> kTypes = {
      {"char", PlyType::kInt8},     {"int8", PlyType::kInt8},
      {"uchar", PlyType::kUInt8},   {"uint8", PlyType::kUInt8},
      {"short", PlyType::kInt16},   {"int16", PlyType::kInt16},
      {"ushort", PlyType::kUInt16}, {"uint16", PlyType::kUInt16},
      {"int", PlyType::kInt32},     {"int32", PlyType::kInt32},
      {"uint", PlyType::kUInt32},   {"uint32", PlyType::kUInt32},
      {"float", PlyType::kFloat32}, {"float32", PlyType::kFloat32},
      {"double", PlyType::kFloat64}, {"float64", PlyType::kFloat64},
  };
  auto it = kTypes.find(name);
  if (it == kTypes.end()) {
    throw Error(ErrorCode::kMalformedHeader, "unknown PLY property type '" + name + "'");
  }
  return it->second;
}

double ReadValue(const char* p, PlyType t) {
  switch (t) {
    case PlyType::kInt8: { int8_t v; std::memcpy(&v, p, 1); return v; }
    case PlyType::kUInt8: { uint8_t v; std::memcpy(&v, p, 1); return v; }
    case PlyType::kInt16: { int16_t v; std::memcpy(&v, p, 2); return v; }
    case PlyType::kUInt16: { uint16_t v; std::memcpy(&v, p, 2); return v; }
    case PlyType::kInt32: { int32_t v; std::memcpy(&v, p, 4); return v; }
    case PlyType::kUInt32: { uint32_t v; std::memcpy(&v, p, 4); return v; }
    case PlyType::kFloat32: { float v; std::memcpy(&v, p, 4); return v; }
    case PlyType::kFloat64: { double v; std::memcpy(&v, p, 8); return v; }
  }
  return 0.0;
}

struct PlyHeader {
  size_t vertex_count = 0;
  size_t stride = 0;
  size_t data_offset = 0;
  std::vector<PlyProperty> properties;

  const PlyProperty* Find(const std::string& name) const {
    for (const auto& p : properties) {
      if (p.name == name) return &p;
    }
    return nullptr;
  }
  const PlyProperty& Require(const std::string& name) const {
    const PlyProperty* p = Find(name);
    if (!p) throw Error(ErrorCode::kMissingProperty, "PLY is missing vertex property '" + name + "'");
    return *p;
  }
};

PlyHeader ParseHeader(const std::string& bytes) {
  const size_t end = bytes.find("end_header\n");
  if (bytes.rfind("ply\n", 0) != 0 || end == std::string::npos) {
    throw Error(ErrorCode::kMalformedHeader, "not a PLY file or unterminated header");
  }
  PlyHeader header;
  header.data_offset = end + std::string("end_header\n").size();
  std::istringstream in(bytes.substr(0, end));
  std::string line;
  bool format_ok = false;
  bool in_vertex = false;
  bool seen_vertex = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream tokens(line);
    std::string keyword;
    tokens >> keyword;
    if (keyword == "format") {
      std::string fmt;
      tokens >> fmt;
      if (fmt != "binary_little_endian") {
        throw Error(ErrorCode::kMalformedHeader, "only binary_little_endian PLY is supported");
      }
      format_ok = true;
    } else if (keyword == "element") {
      std::string name;
      size_t count = 0;
      tokens >> name >> count;
      if (seen_vertex && name != "vertex") {
        // Elements after the vertex block do not affect vertex decoding.
        in_vertex = false;
        continue;
      }
      if (name != "vertex") {
        throw Error(ErrorCode::kMalformedHeader, "vertex element must come first");
      }
      if (tokens.fail()) throw Error(ErrorCode::kMalformedHeader, "bad element line");
      header.vertex_count = count;
      in_vertex = seen_vertex = true;
    } else if (keyword == "property") {
      if (!in_vertex) continue;
      std::string type, name;
      tokens >> type;
      if (type == "list") {
        throw Error(ErrorCode::kMalformedHeader, "list properties unsupported on vertices");
      }
      tokens >> name;
      if (tokens.fail() || name.empty()) throw Error(ErrorCode::kMalformedHeader, "bad property line");
      const PlyType t = ParseType(type);
      header.properties.push_back({name, t, header.stride});
      header.stride += TypeSize(t);
    } else if (keyword == "ply" || keyword == "comment" || keyword == "obj_info" || keyword.empty()) {
      continue;
    } else {
      throw Error(ErrorCode::kMalformedHeader, "unexpected header line '" + line + "'");
    }
  }
  if (!format_ok || !seen_vertex) {
    throw Error(ErrorCode::kMalformedHeader, "missing format or vertex element");
  }
  return header;
}

double Sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double Logit(double p) {
  p = std::clamp(p, 1e-12, 1.0 - 1e-12);
  return std::log(p / (1.0 - p));
}

int ShRestPerChannel(int degree) { return (degree + 1) * (degree + 1) - 1; }

}  // namespace

GaussianScene ParseScenePly(const std::string& bytes) {
  const PlyHeader header = ParseHeader(bytes);
  if (bytes.size() < header.data_offset + header.vertex_count * header.stride) {
    throw Error(ErrorCode::kMalformedHeader, "PLY body shorter than the header declares");
  }

  std::array<const PlyProperty*, 3> pos = {&header.Require("x"), &header.Require("y"),
                                           &header.Require("z")};
  std::array<const PlyProperty*, 3> dc = {&header.Require("f_dc_0"), &header.Require("f_dc_1"),
                                          &header.Require("f_dc_2")};
  const PlyProperty& opacity = header.Require("opacity");
  std::array<const PlyProperty*, 3> scale = {
      &header.Require("scale_0"), &header.Require("scale_1"), &header.Require("scale_2")};
  std::array<const PlyProperty*, 4> rot = {&header.Require("rot_0"), &header.Require("rot_1"),
                                           &header.Require("rot_2"), &header.Require("rot_3")};
  std::vector<const PlyProperty*> rest;
  for (int i = 0;; ++i) {
    const PlyProperty* p = header.Find("f_rest_" + std::to_string(i));
    if (!p) break;
    rest.push_back(p);
  }
  int degree = -1;
  for (int d = 0; d <= kMaxShDegree; ++d) {
    if (static_cast<int>(rest.size()) == 3 * ShRestPerChannel(d)) degree = d;
  }
  if (degree < 0) {
    throw Error(ErrorCode::kMalformedHeader,
                "f_rest count " + std::to_string(rest.size()) + " matches no SH degree");
  }
  const int per_channel = ShRestPerChannel(degree);
  const PlyProperty* label = header.Find("label");

  std::vector<Gaussian> gaussians(header.vertex_count);
  std::vector<int32_t> labels;
  if (label) labels.resize(header.vertex_count);

  for (size_t i = 0; i < header.vertex_count; ++i) {
    const char* row = bytes.data() + header.data_offset + i * header.stride;
    auto get = [row](const PlyProperty* p) { return ReadValue(row + p->offset, p->type); };
    Gaussian& g = gaussians[i];
    double raw_opacity = get(&opacity);
    Eigen::Vector4d q(get(rot[0]), get(rot[1]), get(rot[2]), get(rot[3]));
    Eigen::Vector3d raw_scale(get(scale[0]), get(scale[1]), get(scale[2]));
    Eigen::Vector3d raw_dc(get(dc[0]), get(dc[1]), get(dc[2]));
    g.position = {get(pos[0]), get(pos[1]), get(pos[2])};
    bool finite = std::isfinite(raw_opacity) && q.allFinite() && raw_scale.allFinite() &&
                  raw_dc.allFinite() && g.position.allFinite();
    for (int k = 0; k < static_cast<int>(rest.size()); ++k) {
      const double v = get(rest[k]);
      finite = finite && std::isfinite(v);
      g.sh_rest[(k / per_channel) * 15 + (k % per_channel)] = static_cast<float>(v);
    }
    if (!finite || q.norm() == 0.0) {
      throw Error(ErrorCode::kNonFiniteAttribute,
                  "non-finite attribute at vertex " + std::to_string(i));
    }
    g.opacity = Sigmoid(raw_opacity);
    g.scale = raw_scale.array().exp();
    if (!g.scale.allFinite() || !(g.scale.array() > 0.0).all()) {
      throw Error(ErrorCode::kNonFiniteAttribute,
                  "scale overflows at vertex " + std::to_string(i));
    }
    q.normalize();
    g.rotation = Eigen::Quaterniond(q[0], q[1], q[2], q[3]);
    g.color = Eigen::Vector3d::Constant(0.5) + kShC0 * raw_dc;
    if (label) labels[i] = static_cast<int32_t>(get(label));
  }
  std::optional<std::vector<int32_t>> maybe_labels;
  if (label) maybe_labels = std::move(labels);
  return GaussianScene(std::move(gaussians), std::move(maybe_labels), degree);
}

GaussianScene LoadScenePly(const std::filesystem::path& path) {
  return ParseScenePly(ReadFileBytes(path));
}

std::string SerializeScenePly(const GaussianScene& scene) {
  if (scene.empty()) throw Error(ErrorCode::kEmptyScene, "cannot write an empty scene");
  const int per_channel = ShRestPerChannel(scene.sh_degree());
  std::ostringstream out;
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << scene.size() << "\n";
  for (const char* name : {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"}) {
    out << "property float " << name << "\n";
  }
  for (int k = 0; k < 3 * per_channel; ++k) out << "property float f_rest_" << k << "\n";
  for (const char* name :
       {"opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"}) {
    out << "property float " << name << "\n";
  }
  if (scene.has_labels()) out << "property int label\n";
  out << "end_header\n";

  std::string body;
  auto put = [&body](auto v) {
    char buf[sizeof(v)];
    std::memcpy(buf, &v, sizeof(v));
    body.append(buf, sizeof(v));
  };
  for (size_t i = 0; i < scene.size(); ++i) {
    const Gaussian& g = scene[i];
    for (int a = 0; a < 3; ++a) put(static_cast<float>(g.position[a]));
    for (int a = 0; a < 3; ++a) put(0.0f);
    for (int a = 0; a < 3; ++a) put(static_cast<float>((g.color[a] - 0.5) / kShC0));
    for (int k = 0; k < 3 * per_channel; ++k) {
      put(g.sh_rest[(k / per_channel) * 15 + (k % per_channel)]);
    }
    put(static_cast<float>(Logit(g.opacity)));
    for (int a = 0; a < 3; ++a) put(static_cast<float>(std::log(g.scale[a])));
    put(static_cast<float>(g.rotation.w()));
    put(static_cast<float>(g.rotation.x()));
    put(static_cast<float>(g.rotation.y()));
    put(static_cast<float>(g.rotation.z()));
    if (scene.has_labels()) put(static_cast<int32_t>(scene.labels()[i]));
  }
  return out.str() + body;
}

void SaveScenePly(const GaussianScene& scene, const std::filesystem::path& path) {
  WriteFileBytes(SerializeScenePly(scene), path);
}

nlohmann::json CamerasToJson(const ViewSet& views) {
  nlohmann::json cams = nlohmann::json::array();
  for (const auto& c : views) {
    std::vector<double> r(9);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) r[i * 3 + j] = c.rotation(i, j);
    }
    cams.push_back({{"id", c.id},
                    {"width", c.width},
                    {"height", c.height},
                    {"fx", c.fx},
                    {"fy", c.fy},
                    {"cx", c.cx},
                    {"cy", c.cy},
                    {"R", r},
                    {"t", {c.translation.x(), c.translation.y(), c.translation.z()}}});
  }
  return {{"cameras", cams}};
}

ViewSet CamerasFromJson(const nlohmann::json& doc) {
  ViewSet views;
  try {
    for (const auto& j : doc.at("cameras")) {
      Camera c;
      c.id = j.at("id").get<int>();
      c.width = j.at("width").get<int>();
      c.height = j.at("height").get<int>();
      c.fx = j.at("fx").get<double>();
      c.fy = j.at("fy").get<double>();
      c.cx = j.at("cx").get<double>();
      c.cy = j.at("cy").get<double>();
      const auto r = j.at("R").get<std::vector<double>>();
      const auto t = j.at("t").get<std::vector<double>>();
      if (r.size() != 9 || t.size() != 3) {
        throw Error(ErrorCode::kInvalidArgument, "R needs 9 values and t needs 3");
      }
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) c.rotation(a, b) = r[a * 3 + b];
      }
      c.translation = {t[0], t[1], t[2]};
      views.push_back(c);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("cameras JSON: ") + e.what());
  }
  for (size_t i = 0; i < views.size(); ++i) {
    ValidateCamera(views[i]);
    for (size_t k = 0; k < i; ++k) {
      if (views[k].id == views[i].id) {
        throw Error(ErrorCode::kDuplicateViewId, "duplicate view id " + std::to_string(views[i].id));
      }
    }
  }
  return views;
}

ViewSet LoadCameras(const std::filesystem::path& path) { return CamerasFromJson(ReadJsonFile(path)); }

void SaveCameras(const ViewSet& views, const std::filesystem::path& path) {
  WriteJsonFile(CamerasToJson(views), path);
}

nlohmann::json ClicksToJson(const ClickSet& clicks, bool with_source) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : clicks) {
    nlohmann::json j = {{"view_id", c.view_id},
                        {"x", c.x},
                        {"y", c.y},
                        {"polarity", c.polarity == Polarity::kPositive ? "pos" : "neg"}};
    if (with_source) j["source"] = c.source == ClickSource::kUser ? "user" : "propagated";
    arr.push_back(std::move(j));
  }
  return {{"clicks", arr}};
}

ClickSet ClicksFromJson(const nlohmann::json& doc) {
  ClickSet clicks;
  try {
    for (const auto& j : doc.at("clicks")) {
      Click c;
      c.view_id = j.at("view_id").get<int>();
      c.x = j.at("x").get<double>();
      c.y = j.at("y").get<double>();
      const auto pol = j.value("polarity", std::string("pos"));
      if (pol != "pos" && pol != "neg") {
        throw Error(ErrorCode::kInvalidArgument, "polarity must be pos or neg");
      }
      c.polarity = pol == "pos" ? Polarity::kPositive : Polarity::kNegative;
      c.source = j.value("source", std::string("user")) == "propagated" ? ClickSource::kPropagated
                                                                        : ClickSource::kUser;
      clicks.push_back(c);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("clicks JSON: ") + e.what());
  }
  return clicks;
}

ClickSet LoadClicks(const std::filesystem::path& path) { return ClicksFromJson(ReadJsonFile(path)); }

void SaveClicks(const ClickSet& clicks, const std::filesystem::path& path, bool with_source) {
  WriteJsonFile(ClicksToJson(clicks, with_source), path);
}

void ValidateClicks(const ClickSet& clicks, const ViewSet& views) {
  for (const auto& c : clicks) {
    const Camera& cam = FindCamera(views, c.view_id);
    if (!(c.x >= 0.0 && c.x < cam.width && c.y >= 0.0 && c.y < cam.height)) {
      throw Error(ErrorCode::kBadClick, "click outside image of view " + std::to_string(c.view_id));
    }
  }
}

nlohmann::json SelectionToJson(const Selection& selection) {
  return {{"scene_hash", selection.scene_hash()}, {"indices", selection.indices()}};
}

Selection SelectionFromJson(const nlohmann::json& doc) {
  try {
    return Selection::FromParts(doc.at("scene_hash").get<std::string>(),
                                doc.at("indices").get<std::vector<uint32_t>>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("selection JSON: ") + e.what());
  }
}

Selection LoadSelection(const std::filesystem::path& path) {
  return SelectionFromJson(ReadJsonFile(path));
}

void SaveSelection(const Selection& selection, const std::filesystem::path& path) {
  WriteJsonFile(SelectionToJson(selection), path);
}

ViewSet SubsampleViews(const ViewSet& views, double rate, bool shuffle, uint64_t seed) {
  if (!(rate > 0.0 && rate <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "sampling rate must be in (0, 1]");
  }
  if (views.empty()) throw Error(ErrorCode::kEmptyResult, "no views to sample");
  const size_t total = views.size();
  // Guard against 0.1 * 20 = 2.0000000000000004 rounding up to 3.
  const size_t count = std::clamp<size_t>(
      static_cast<size_t>(std::ceil(rate * static_cast<double>(total) - 1e-9)), 1, total);
  const size_t stride = total / count;
  ViewSet out;
  out.reserve(count);
  for (size_t i = 0; i < count; ++i) out.push_back(views[i * stride]);
  if (shuffle) {
    Rng rng(seed);
    rng.Shuffle(out);
  }
  return out;
}

std::string ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFileBytes(const std::string& bytes, const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoFailure, "short write to " + path.string());
}

nlohmann::json ReadJsonFile(const std::filesystem::path& path) {
  const std::string text = ReadFileBytes(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
  }
}

void WriteJsonFile(const nlohmann::json& doc, const std::filesystem::path& path) {
  WriteFileBytes(doc.dump(2) + "\n", path);
}

}  // namespace gsculpt
