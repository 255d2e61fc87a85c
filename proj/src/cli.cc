#include "gsculpt/cli.h"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <sstream>

#include "gsculpt/error.h"
#include "gsculpt/image_io.h"
#include "gsculpt/perception.h"
#include "gsculpt/render.h"
#include "gsculpt/scene_io.h"
#include "gsculpt/synth_bench.h"
#include "gsculpt/toolbox.h"
#include "gsculpt/voting.h"

namespace gsculpt {

namespace fs = std::filesystem;

namespace {

// Shortest form that still shows a decimal point: 1 -> "1.0".
std::string FormatMetric(double v) {
  std::ostringstream ss;
  ss << std::setprecision(10) << v;
  std::string s = ss.str();
  if (s.find_first_of(".en") == std::string::npos) s += ".0";
  return s;
}

bool OnOff(const std::string& v) { return v == "on"; }

struct SegmentArgs {
  std::string scene, cameras, clicks, out;
  double threshold = 0.8;
  std::string mode = "blend_weight";
  std::string iim = "on";
  std::string epipolar = "on";
  double sample_rate = 1.0;
  bool shuffle = false;
  uint64_t seed = 0;
  std::string segmenter = "oracle";
  std::string features = "oracle";
  int patch = 16;
};

void RunSegment(const SegmentArgs& a, std::ostream& out) {
  auto scene = std::make_shared<const GaussianScene>(LoadScenePly(a.scene));
  const ViewSet all_views = LoadCameras(a.cameras);
  const ClickSet clicks = LoadClicks(a.clicks);
  ValidateClicks(clicks, all_views);
  const ViewSet views = SubsampleViews(all_views, a.sample_rate, a.shuffle, a.seed);

  SegmentConfig config;
  config.threshold = a.threshold;
  config.mode = ParseVotePowerMode(a.mode);
  config.iim = OnOff(a.iim);
  config.epipolar = OnOff(a.epipolar);
  const auto segmenter = MakeSegmenter(a.segmenter, scene);
  const auto features = MakeFeatureExtractor(a.features, a.patch);
  const SegmentResult result = RunSegmentation(*scene, views, clicks, *segmenter, *features, config);

  const fs::path dir(a.out);
  fs::create_directories(dir / "masks");
  fs::create_directories(dir / "predicted");
  nlohmann::json report = result.report.ToJson();
  report["run"] = {{"scene", a.scene},
                   {"scene_hash", scene->content_hash()},
                   {"sample_rate", a.sample_rate},
                   {"shuffle", a.shuffle},
                   {"seed", a.seed},
                   {"segmenter", segmenter->Describe()},
                   {"features", features->Describe()},
                   {"views_used", views.size()},
                   {"selected", result.selection ? result.selection->size() : 0}};
  WriteJsonFile(report, dir / "report.json");
  SaveClicks(result.clicks, dir / "clicks_all.json", true);
  for (const Mask& m : result.masks) {
    if (m.width > 0) SaveMaskPng(m, dir / "predicted" / MaskFileName(m.view_id));
  }
  if (!result.selection) {
    throw Error(ErrorCode::kEmptySelection, "no gaussian cleared the vote threshold");
  }
  SaveSelection(*result.selection, dir / "selection.json");
  for (const Camera& cam : all_views) {
    SaveMaskPng(RenderDominantSelectionMask(*scene, *result.selection, cam),
                dir / "masks" / MaskFileName(cam.id));
  }
  out << nlohmann::json{{"selected", result.selection->size()},
                        {"out", dir.string()}}.dump()
      << '\n';
}

std::vector<fs::path> MaskFiles(const fs::path& p) {
  if (!fs::is_directory(p)) return {p};
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(p)) {
    if (entry.path().extension() == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

void RunEval(const std::string& pred_path, const std::string& gt_path, std::ostream& out) {
  const fs::path pred_root(pred_path), gt_root(gt_path);
  if (!fs::exists(pred_root)) throw Error(ErrorCode::kIoFailure, "missing " + pred_path);
  if (!fs::exists(gt_root)) throw Error(ErrorCode::kIoFailure, "missing " + gt_path);
  std::vector<Mask> pred, gt;
  for (const fs::path& g : MaskFiles(gt_root)) {
    const fs::path p = fs::is_directory(pred_root) ? pred_root / g.filename() : pred_root;
    if (!fs::exists(p)) throw Error(ErrorCode::kIoFailure, "no prediction for " + g.filename().string());
    gt.push_back(LoadMaskPng(g));
    pred.push_back(LoadMaskPng(p));
  }
  const SegMetrics m = MiouMacc(pred, gt);
  out << FormatMetric(m.miou) << ' ' << FormatMetric(m.macc) << '\n';
}

void RunManip(const std::string& scene_path, const std::string& selection_path,
              const std::string& op_path, const std::string& cameras_path, const std::string& out_path,
              const std::string& selection_out, std::ostream& out) {
  const GaussianScene scene = LoadScenePly(scene_path);
  std::optional<Selection> selection;
  if (!selection_path.empty()) {
    selection = LoadSelection(selection_path);
    selection->CheckBound(scene);
  }
  const ViewSet views = cameras_path.empty() ? ViewSet{} : LoadCameras(cameras_path);
  const nlohmann::json descriptor = ReadJsonFile(op_path);
  const OpResult r = ApplyOp(descriptor, scene, selection, views);
  SaveScenePly(r.scene, out_path);
  if (!selection_out.empty() && r.selection) SaveSelection(*r.selection, selection_out);
  nlohmann::json summary = {{"gaussians", r.scene.size()}, {"scene_hash", r.scene.content_hash()}};
  if (r.selection) summary["selected"] = r.selection->size();
  if (!r.loss_trace.empty()) {
    summary["loss_first"] = r.loss_trace.front();
    summary["loss_last"] = r.loss_trace.back();
  }
  out << summary.dump() << '\n';
}

void RunRender(const std::string& scene_path, const std::string& cameras_path, int view,
               const std::string& selection_path, const std::string& out_path) {
  const GaussianScene scene = LoadScenePly(scene_path);
  const Camera& cam = FindCamera(LoadCameras(cameras_path), view);
  Image image = Render(scene, cam).color;
  if (!selection_path.empty()) {
    const Selection sel = LoadSelection(selection_path);
    sel.CheckBound(scene);
    TintMask(image, RenderSelectionMask(scene, sel, cam));
  }
  SavePng(image, out_path);
}

void RunGen(const std::string& spec_path, const std::string& out_path, std::ostream& out) {
  const SceneSpec spec = SceneSpec::FromJson(ReadJsonFile(spec_path));
  const GeneratedScene g = GenerateScene(spec);
  const BenchTarget target = ChooseTarget(g);
  const fs::path dir(out_path);
  fs::create_directories(dir / "masks");
  SaveScenePly(g.scene, dir / "scene.ply");
  SaveCameras(g.views, dir / "cameras.json");
  SaveClicks({target.click}, dir / "clicks.json", false);
  for (const Camera& cam : g.views) {
    SaveMaskPng(LabelMask(g.label_maps[cam.id], target.label, cam.id), dir / "masks" / MaskFileName(cam.id));
  }
  nlohmann::json palette = nlohmann::json::array();
  for (const auto& c : g.palette) palette.push_back({c.x(), c.y(), c.z()});
  nlohmann::json centroids = nlohmann::json::array();
  for (const auto& c : g.centroids) centroids.push_back({c.x(), c.y(), c.z()});
  WriteJsonFile({{"spec", g.spec.ToJson()},
                 {"target_label", target.label},
                 {"palette", palette},
                 {"centroids", centroids},
                 {"gaussians", g.scene.size()},
                 {"scene_hash", g.scene.content_hash()}},
                dir / "meta.json");
  out << nlohmann::json{{"gaussians", g.scene.size()}, {"target_label", target.label}}.dump() << '\n';
}

void RunBench(const std::string& specs_path, const std::string& grid_path, const std::string& csv_path,
              const std::string& summary_path, std::ostream& out) {
  const std::vector<SceneSpec> specs =
      specs_path == "standard" ? StandardSuite() : SceneSpecsFromJson(ReadJsonFile(specs_path));
  const BenchGrid grid = grid_path.empty() ? BenchGrid{} : BenchGrid::FromJson(ReadJsonFile(grid_path));
  const std::vector<BenchRow> rows = RunBenchmark(specs, grid);
  WriteFileBytes(BenchCsv(rows), csv_path);
  const nlohmann::json summary = BenchSummary(rows, grid);
  if (!summary_path.empty()) WriteJsonFile(summary, summary_path);
  out << summary["means"].dump(2) << '\n';
}

}  // namespace

std::string MaskFileName(int view_id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "view_%03d.png", view_id);
  return buf;
}

int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Click-driven segmentation and editing for Gaussian splat scenes", "gsculpt"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  SegmentArgs seg;
  auto* segment = app.add_subcommand("segment", "clicks -> 3D selection, masks and report");
  segment->add_option("--scene", seg.scene, "scene PLY")->required();
  segment->add_option("--cameras", seg.cameras, "cameras JSON")->required();
  segment->add_option("--clicks", seg.clicks, "clicks JSON")->required();
  segment->add_option("--out", seg.out, "output directory")->required();
  segment->add_option("--threshold", seg.threshold, "normalized vote threshold")->capture_default_str();
  segment->add_option("--mode", seg.mode, "vote power mode")
      ->check(CLI::IsMember({"blend_weight", "opacity_weight"}))
      ->capture_default_str();
  segment->add_option("--iim", seg.iim)->check(CLI::IsMember({"on", "off"}))->capture_default_str();
  segment->add_option("--epipolar", seg.epipolar)->check(CLI::IsMember({"on", "off"}))->capture_default_str();
  segment->add_option("--sample-rate", seg.sample_rate, "fraction of views used")->capture_default_str();
  segment->add_flag("--shuffle", seg.shuffle, "shuffle the view order");
  segment->add_option("--seed", seg.seed, "seed for shuffling")->capture_default_str();
  segment->add_option("--segmenter", seg.segmenter, "oracle | remote:<url>")->capture_default_str();
  segment->add_option("--features", seg.features, "oracle | remote:<url>")->capture_default_str();
  segment->add_option("--patch", seg.patch, "feature patch size")->capture_default_str();

  std::string pred, gt;
  auto* eval = app.add_subcommand("eval", "mIoU and mAcc of predicted masks");
  eval->add_option("--pred", pred, "mask PNG or directory")->required();
  eval->add_option("--gt", gt, "mask PNG or directory")->required();

  std::string scene, selection, op, cameras, out_path, selection_out;
  auto* manip = app.add_subcommand("manip", "apply one toolbox op");
  manip->add_option("--scene", scene)->required();
  manip->add_option("--selection", selection, "selection JSON");
  manip->add_option("--op", op, "op descriptor JSON")->required();
  manip->add_option("--cameras", cameras, "cameras JSON, needed by edit");
  manip->add_option("--out", out_path, "output PLY")->required();
  manip->add_option("--selection-out", selection_out, "where to write the resulting selection");

  std::string specs, grid, csv, summary;
  auto* bench = app.add_subcommand("bench", "synthetic benchmark grid");
  bench->add_option("--specs", specs, "scene spec JSON, or 'standard'")->required();
  bench->add_option("--grid", grid, "grid JSON");
  bench->add_option("--csv", csv, "output CSV")->required();
  bench->add_option("--summary", summary, "output summary JSON");

  std::string r_scene, r_cameras, r_out, r_selection;
  int r_view = 0;
  auto* render = app.add_subcommand("render", "render one view to PNG");
  render->add_option("--scene", r_scene)->required();
  render->add_option("--cameras", r_cameras)->required();
  render->add_option("--view", r_view)->required();
  render->add_option("--selection", r_selection, "tint the selection");
  render->add_option("--out", r_out)->required();

  std::string spec, g_out;
  auto* gen = app.add_subcommand("gen", "generate a labeled synthetic scene");
  gen->add_option("--spec", spec, "scene spec JSON")->required();
  gen->add_option("--out", g_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*segment) RunSegment(seg, out);
    if (*eval) RunEval(pred, gt, out);
    if (*manip) RunManip(scene, selection, op, cameras, out_path, selection_out, out);
    if (*bench) RunBench(specs, grid, csv, summary, out);
    if (*render) RunRender(r_scene, r_cameras, r_view, r_selection, r_out);
    if (*gen) RunGen(spec, g_out, out);
  } catch (const Error& e) {
    err << nlohmann::json{{"error", {{"code", std::string(ErrorCodeName(e.code()))}, {"message", e.what()}}}}
               .dump()
        << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << nlohmann::json{{"error", {{"code", "Internal"}, {"message", e.what()}}}}.dump() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace gsculpt
