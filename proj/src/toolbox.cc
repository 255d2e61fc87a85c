#include "gsculpt/toolbox.h"

#include <algorithm>
#include <cmath>

#include "gsculpt/error.h"
#include "gsculpt/image_io.h"
#include "gsculpt/random.h"
#include "gsculpt/remote.h"
#include "gsculpt/render.h"
#include "gsculpt/scene_io.h"

namespace gsculpt {

namespace {

Eigen::Vector3d SelectionCentroid(const GaussianScene& scene, const Selection& selection) {
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  for (uint32_t i : selection.indices()) sum += scene[i].position;
  return sum / static_cast<double>(selection.size());
}

// Rebuilds a scene after in-place edits to a copy of its Gaussians.
GaussianScene Rebuild(const GaussianScene& like, std::vector<Gaussian> gaussians) {
  return GaussianScene(std::move(gaussians), like.maybe_labels(), like.sh_degree());
}

Selection Rebind(const GaussianScene& scene, const Selection& selection) {
  return Selection::Create(scene, selection.indices());
}

void CheckColor(const Eigen::Vector3d& c) {
  for (int k = 0; k < 3; ++k) {
    if (!(c[k] >= 0.0 && c[k] <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "target color components must lie in [0, 1]");
    }
  }
}

Eigen::Vector3d ReadVector3(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) {
    throw Error(ErrorCode::kInvalidArgument, std::string(what) + " must be a 3-element array");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

GaussianScene Colorize(const GaussianScene& scene, const Selection& selection,
                       const Eigen::Vector3d& target, ColorizeMode mode) {
  selection.CheckBound(scene);
  CheckColor(target);
  std::vector<Gaussian> gaussians = scene.gaussians();
  if (mode == ColorizeMode::kReplace) {
    for (uint32_t i : selection.indices()) gaussians[i].color = target;
  } else {
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (uint32_t i : selection.indices()) mean += scene[i].color;
    mean /= static_cast<double>(selection.size());
    const Eigen::Vector3d offset = target - mean;
    for (uint32_t i : selection.indices()) gaussians[i].color += offset;
  }
  return Rebuild(scene, std::move(gaussians));
}

GaussianScene ScaleSelection(const GaussianScene& scene, const Selection& selection,
                             double epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw Error(ErrorCode::kNonPositiveEpsilon, "scale factor must be positive and finite");
  }
  selection.CheckBound(scene);
  const Eigen::Vector3d center = SelectionCentroid(scene, selection);
  std::vector<Gaussian> gaussians = scene.gaussians();
  for (uint32_t i : selection.indices()) {
    gaussians[i].position = (scene[i].position - center) * epsilon + center;
    gaussians[i].scale = scene[i].scale * epsilon;
  }
  return Rebuild(scene, std::move(gaussians));
}

void PlacementTransform::Validate() const {
  if (!(uniform_scale > 0.0) || !std::isfinite(uniform_scale)) {
    throw Error(ErrorCode::kInvalidArgument, "placement uniform_scale must be positive");
  }
  if (!translation.allFinite() || !rotation.coeffs().allFinite() ||
      std::abs(rotation.norm() - 1.0) > 1e-6) {
    throw Error(ErrorCode::kInvalidArgument, "placement rotation must be a unit quaternion");
  }
}

PlacementTransform PlacementTransform::FromJson(const nlohmann::json& j) {
  PlacementTransform t;
  if (j.is_null()) return t;
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "placement must be an object");
  if (j.contains("translation")) t.translation = ReadVector3(j["translation"], "translation");
  if (j.contains("rotation")) {
    const auto& q = j["rotation"];
    if (!q.is_array() || q.size() != 4) {
      throw Error(ErrorCode::kInvalidArgument, "rotation must be [w, x, y, z]");
    }
    t.rotation = Eigen::Quaterniond(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                                    q[3].get<double>());
  }
  t.uniform_scale = j.value("uniform_scale", 1.0);
  t.Validate();
  return t;
}

nlohmann::json PlacementTransform::ToJson() const {
  return {{"translation", {translation.x(), translation.y(), translation.z()}},
          {"rotation", {rotation.w(), rotation.x(), rotation.y(), rotation.z()}},
          {"uniform_scale", uniform_scale}};
}

std::vector<Gaussian> TransformedCopies(const GaussianScene& scene, const Selection& selection,
                                        const PlacementTransform& placement) {
  selection.CheckBound(scene);
  placement.Validate();
  const Eigen::Vector3d center = SelectionCentroid(scene, selection);
  const Eigen::Matrix3d r = placement.rotation.toRotationMatrix();
  const double s = placement.uniform_scale;
  std::vector<Gaussian> copies;
  copies.reserve(selection.size());
  for (uint32_t i : selection.indices()) {
    Gaussian g = scene[i];
    g.position = center + s * (r * (g.position - center)) + placement.translation;
    g.rotation = (placement.rotation * g.rotation).normalized();
    g.scale *= s;
    // TODO: rotate the higher SH bands with the placement rotation; copies of
    // view-dependent Gaussians currently keep their original orientation.
    copies.push_back(g);
  }
  return copies;
}

CopyPasteResult CopyPaste(const GaussianScene& scene, const Selection& selection,
                          const PlacementTransform& placement) {
  std::vector<Gaussian> copies = TransformedCopies(scene, selection, placement);
  std::vector<Gaussian> gaussians = scene.gaussians();
  const size_t first = gaussians.size();
  gaussians.insert(gaussians.end(), copies.begin(), copies.end());
  std::optional<std::vector<int32_t>> labels = scene.maybe_labels();
  if (labels) {
    for (uint32_t i : selection.indices()) labels->push_back((*labels)[i]);
  }
  GaussianScene out(std::move(gaussians), std::move(labels), scene.sh_degree());
  std::vector<uint32_t> copy_indices(copies.size());
  for (size_t k = 0; k < copies.size(); ++k) copy_indices[k] = static_cast<uint32_t>(first + k);
  Selection copy_selection = Selection::Create(out, std::move(copy_indices));
  return {std::move(out), std::move(copy_selection)};
}

GaussianScene Combine(const GaussianScene& target, const GaussianScene& source,
                      const Selection& source_selection, const PlacementTransform& placement) {
  std::vector<Gaussian> copies = TransformedCopies(source, source_selection, placement);
  std::vector<Gaussian> gaussians = target.gaussians();
  gaussians.insert(gaussians.end(), copies.begin(), copies.end());

  // Labels survive when the target has them (or is empty); inserted
  // Gaussians from an unlabeled source count as background.
  std::optional<std::vector<int32_t>> labels;
  if (target.has_labels() || (target.empty() && source.has_labels())) {
    labels = target.maybe_labels().value_or(std::vector<int32_t>{});
    for (uint32_t i : source_selection.indices()) {
      labels->push_back(source.has_labels() ? source.labels()[i] : kBackgroundLabel);
    }
  }
  return GaussianScene(std::move(gaussians), std::move(labels),
                       std::max(target.sh_degree(), source.sh_degree()));
}

RemovalResult RemoveSelection(const GaussianScene& scene, const Selection& selection) {
  selection.CheckBound(scene);
  if (selection.size() == scene.size()) {
    throw Error(ErrorCode::kWouldEmptyScene, "removing every gaussian would empty the scene");
  }
  const auto removed = selection.MembershipFlags(scene.size());
  std::vector<Gaussian> kept;
  kept.reserve(scene.size() - selection.size());
  std::optional<std::vector<int32_t>> labels;
  if (scene.has_labels()) labels.emplace();
  std::vector<int64_t> remap(scene.size(), -1);
  for (size_t i = 0; i < scene.size(); ++i) {
    if (removed[i]) continue;
    remap[i] = static_cast<int64_t>(kept.size());
    kept.push_back(scene[i]);
    if (labels) labels->push_back(scene.labels()[i]);
  }
  return {GaussianScene(std::move(kept), std::move(labels), scene.sh_degree()), std::move(remap)};
}

Image TintEditor::Edit(const Image& rendered, const std::string&, const Camera&) const {
  Image out = rendered;
  for (size_t p = 0; p < out.rgb.size(); ++p) {
    out.rgb[p] = (1.0 - strength_) * rendered.rgb[p] + strength_ * tint_[p % 3];
  }
  return out;
}

Image GammaEditor::Edit(const Image& rendered, const std::string&, const Camera&) const {
  Image out = rendered;
  for (double& v : out.rgb) v = std::pow(std::clamp(v, 0.0, 1.0), gamma_);
  return out;
}

Image RegionRecolorEditor::Edit(const Image& rendered, const std::string&,
                                const Camera& cam) const {
  Image out = rendered;
  const auto it = masks_.find(cam.id);
  if (it == masks_.end()) return out;
  const Mask& mask = it->second;
  if (mask.width != rendered.width || mask.height != rendered.height) {
    throw Error(ErrorCode::kDimensionMismatch, "recolor mask does not match the render");
  }
  for (size_t p = 0; p < mask.bits.size(); ++p) {
    if (!mask.bits[p]) continue;
    for (int ch = 0; ch < 3; ++ch) out.rgb[p * 3 + ch] = color_[ch];
  }
  return out;
}

Image RemoteEditor::Edit(const Image& rendered, const std::string& instruction,
                         const Camera&) const {
  nlohmann::json reply;
  Image edited;
  try {
    reply = PostJson(endpoint_, "/edit",
                     {{"image_png", Base64Encode(EncodePng(rendered))}, {"instruction", instruction}});
    edited = DecodeRgbPng(Base64Decode(reply.at("image_png").get<std::string>()));
  } catch (const Error& e) {
    throw Error(ErrorCode::kEditorUnavailable, e.what());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kEditorUnavailable, endpoint_ + "/edit: malformed reply");
  }
  if (edited.width != rendered.width || edited.height != rendered.height) {
    throw Error(ErrorCode::kEditorUnavailable, endpoint_ + "/edit: edited image size differs");
  }
  return edited;
}

std::shared_ptr<const Editor> MakeEditor(const std::string& spec) {
  if (spec == "builtin:identity") return std::make_shared<IdentityEditor>();
  if (spec == "builtin:tint-red") {
    return std::make_shared<TintEditor>("tint-red", Eigen::Vector3d(1.0, 0.0, 0.0), 0.5);
  }
  if (spec == "builtin:gamma") return std::make_shared<GammaEditor>(2.2);
  if (spec.rfind("remote:", 0) == 0) {
    const std::string endpoint = spec.substr(7);
    SplitEndpoint(endpoint);
    return std::make_shared<RemoteEditor>(endpoint);
  }
  throw Error(ErrorCode::kEditorUnavailable, "unknown editor '" + spec + "'");
}

double L1Distance(const Image& rendered, const Image& target) {
  if (rendered.width != target.width || rendered.height != target.height) {
    throw Error(ErrorCode::kDimensionMismatch, "L1 operands differ in size");
  }
  double sum = 0.0;
  for (size_t p = 0; p < rendered.rgb.size(); ++p) sum += std::abs(rendered.rgb[p] - target.rgb[p]);
  return sum;
}

namespace {

struct GradientPass {
  std::vector<Eigen::Vector3d> gradient;  // selection order
  double l1 = 0.0;
  double region_l1 = 0.0;
};

// Color is linear in each DC term through the blend weights, so
// d|C_p - T_p| / dc_j = sign(C_p - T_p) * w_pj wherever c_j is not clamped.
GradientPass ComputeGradient(const GaussianScene& scene, const Selection& selection,
                             const Camera& cam, const RenderedView& view, const Image& target) {
  const size_t n = scene.size();
  std::vector<int32_t> slot(n, -1);
  for (size_t k = 0; k < selection.size(); ++k) slot[selection.indices()[k]] = static_cast<int32_t>(k);

  const Eigen::Vector3d center = cam.Center();
  std::vector<Eigen::Vector3d> live(selection.size());
  for (size_t k = 0; k < selection.size(); ++k) {
    const Eigen::Vector3d raw = EvaluateColorRaw(scene[selection.indices()[k]], scene.sh_degree(), center);
    for (int ch = 0; ch < 3; ++ch) live[k][ch] = raw[ch] > 0.0 ? 1.0 : 0.0;
  }

  GradientPass pass;
  pass.gradient.assign(selection.size(), Eigen::Vector3d::Zero());
  pass.l1 = L1Distance(view.color, target);
  const BlendRecords& records = *view.weights;
  double region_sum = 0.0;
  size_t region_pixels = 0;
  const size_t npix = static_cast<size_t>(view.width) * view.height;
  for (size_t p = 0; p < npix; ++p) {
    Eigen::Vector3d sign;
    double pixel_l1 = 0.0;
    for (int ch = 0; ch < 3; ++ch) {
      const double d = view.color.rgb[p * 3 + ch] - target.rgb[p * 3 + ch];
      sign[ch] = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      pixel_l1 += std::abs(d);
    }
    double selected_weight = 0.0;
    for (const Contribution& c : records.pixel(p)) {
      const int32_t k = slot[c.gaussian];
      if (k < 0) continue;
      selected_weight += c.weight;
      pass.gradient[k] += c.weight * sign.cwiseProduct(live[k]);
    }
    const double covered = 1.0 - view.transmittance[p];
    if (covered >= kMinCoverage && selected_weight >= 0.5 * covered) {
      region_sum += pixel_l1;
      ++region_pixels;
    }
  }
  pass.region_l1 = region_pixels ? region_sum / static_cast<double>(region_pixels) : 0.0;
  return pass;
}

}  // namespace

std::vector<Eigen::Vector3d> DcColorGradient(const GaussianScene& scene,
                                             const Selection& selection, const Camera& cam,
                                             const Image& target,
                                             const Eigen::Vector3d& background) {
  selection.CheckBound(scene);
  RenderOptions options;
  options.background = background;
  options.record_weights = true;
  const RenderedView view = Render(scene, cam, options);
  return ComputeGradient(scene, selection, cam, view, target).gradient;
}

EditStepResult SemanticEditStep(const GaussianScene& scene, const Selection& selection,
                                const Camera& view, const Editor& editor,
                                const std::string& instruction, double step_size,
                                const Eigen::Vector3d& background) {
  selection.CheckBound(scene);
  if (!(step_size >= 0.0) || !std::isfinite(step_size)) {
    throw Error(ErrorCode::kInvalidArgument, "step size must be non-negative");
  }
  RenderOptions options;
  options.background = background;
  options.record_weights = true;
  const RenderedView rendered = Render(scene, view, options);
  const Image edited = editor.Edit(rendered.color, instruction, view);
  if (edited.width != rendered.width || edited.height != rendered.height) {
    throw Error(ErrorCode::kEditorUnavailable, "editor changed the image size");
  }
  const GradientPass pass = ComputeGradient(scene, selection, view, rendered, edited);

  EditStepResult result{scene, selection, pass.l1, pass.region_l1};
  if (step_size == 0.0) return result;
  std::vector<Gaussian> gaussians = scene.gaussians();
  bool changed = false;
  for (size_t k = 0; k < selection.size(); ++k) {
    if (pass.gradient[k].isZero(0.0)) continue;
    Gaussian& g = gaussians[selection.indices()[k]];
    g.color = (g.color - step_size * pass.gradient[k]).cwiseMax(0.0).cwiseMin(1.0);
    changed = true;
  }
  if (changed) {
    result.scene = Rebuild(scene, std::move(gaussians));
    result.selection = Rebind(result.scene, selection);
  }
  return result;
}

void EditRequest::Validate() const {
  if (steps < 1) throw Error(ErrorCode::kInvalidArgument, "edit steps must be >= 1");
  if (!(step_size > 0.0) || !std::isfinite(step_size)) {
    throw Error(ErrorCode::kInvalidArgument, "edit step_size must be positive");
  }
  if (!editor) throw Error(ErrorCode::kEditorUnavailable, "no editor configured");
}

EditResult SemanticEdit(const GaussianScene& scene, const Selection& selection,
                        const ViewSet& views, const EditRequest& request,
                        const EditProgress& progress) {
  request.Validate();
  selection.CheckBound(scene);
  if (views.empty()) throw Error(ErrorCode::kEmptyResult, "no views to edit from");

  EditResult result{scene, {}, {}, {}};
  Selection current = selection;
  Rng rng(request.seed);
  for (int s = 1; s <= request.steps; ++s) {
    const Camera& cam = views[rng.Index(views.size())];
    const double step = request.annealing
                            ? request.step_size * (1.0 - static_cast<double>(s) / request.steps)
                            : request.step_size;
    EditStepResult r = SemanticEditStep(result.scene, current, cam, *request.editor,
                                        request.instruction, step, request.background);
    result.scene = std::move(r.scene);
    current = std::move(r.selection);
    result.loss_trace.push_back(r.l1);
    result.region_loss_trace.push_back(r.region_l1);
    result.sampled_views.push_back(cam.id);
    if (progress) progress(s, request.steps, r.l1);
  }
  return result;
}

bool IsLongOp(const nlohmann::json& descriptor) {
  return descriptor.is_object() && descriptor.value("op", "") == "edit";
}

OpResult ApplyOp(const nlohmann::json& d, const GaussianScene& scene,
                 const std::optional<Selection>& selection, const ViewSet& views,
                 const EditProgress& progress) {
  if (!d.is_object() || !d.contains("op") || !d["op"].is_string()) {
    throw Error(ErrorCode::kInvalidArgument, "op descriptor needs an \"op\" string");
  }
  const std::string op = d["op"].get<std::string>();
  auto need_selection = [&]() -> const Selection& {
    if (!selection) throw Error(ErrorCode::kEmptySelection, "op '" + op + "' needs a selection");
    return *selection;
  };

  try {
    if (op == "colorize") {
      const std::string mode = d.value("mode", "replace");
      if (mode != "replace" && mode != "balanced") {
        throw Error(ErrorCode::kInvalidArgument, "colorize mode must be replace or balanced");
      }
      const Selection& sel = need_selection();
      GaussianScene out = Colorize(scene, sel, ReadVector3(d.at("color"), "color"),
                                   mode == "replace" ? ColorizeMode::kReplace : ColorizeMode::kBalanced);
      Selection rebound = Rebind(out, sel);
      return {std::move(out), std::move(rebound), std::nullopt, {}, {}};
    }
    if (op == "scale") {
      const Selection& sel = need_selection();
      GaussianScene out = ScaleSelection(scene, sel, d.at("epsilon").get<double>());
      Selection rebound = Rebind(out, sel);
      return {std::move(out), std::move(rebound), std::nullopt, {}, {}};
    }
    if (op == "remove") {
      RemovalResult r = RemoveSelection(scene, need_selection());
      return {std::move(r.scene), std::nullopt, std::move(r.remap), {}, {}};
    }
    if (op == "copy_paste") {
      CopyPasteResult r = CopyPaste(scene, need_selection(),
                                    PlacementTransform::FromJson(d.value("placement", nlohmann::json())));
      return {std::move(r.scene), std::move(r.copies), std::nullopt, {}, {}};
    }
    if (op == "combine") {
      const GaussianScene source = LoadScenePly(d.at("source_scene").get<std::string>());
      Selection source_selection =
          d.contains("source_selection")
              ? LoadSelection(d["source_selection"].get<std::string>())
              : [&] {
                  std::vector<uint32_t> all(source.size());
                  for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<uint32_t>(i);
                  return Selection::Create(source, std::move(all));
                }();
      const PlacementTransform placement =
          PlacementTransform::FromJson(d.value("placement", nlohmann::json()));
      GaussianScene out = Combine(scene, source, source_selection, placement);
      std::vector<uint32_t> inserted(source_selection.size());
      for (size_t k = 0; k < inserted.size(); ++k) inserted[k] = static_cast<uint32_t>(scene.size() + k);
      Selection sel = Selection::Create(out, std::move(inserted));
      return {std::move(out), std::move(sel), std::nullopt, {}, {}};
    }
    if (op == "edit") {
      EditRequest request;
      request.instruction = d.value("instruction", "");
      request.steps = d.value("steps", request.steps);
      request.step_size = d.value("step_size", request.step_size);
      request.annealing = d.value("annealing", request.annealing);
      request.seed = d.value("seed", request.seed);
      request.editor = MakeEditor(d.value("editor", std::string("builtin:identity")));
      if (d.contains("background")) request.background = ReadVector3(d["background"], "background");
      const Selection& sel = need_selection();
      EditResult r = SemanticEdit(scene, sel, views, request, progress);
      Selection rebound = Rebind(r.scene, sel);
      return {std::move(r.scene), std::move(rebound), std::nullopt, std::move(r.loss_trace),
              std::move(r.region_loss_trace)};
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, "op '" + op + "': " + e.what());
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown op '" + op + "'");
}

}  // namespace gsculpt
