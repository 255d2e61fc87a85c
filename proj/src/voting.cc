#include "gsculpt/voting.h"

#include <chrono>

#include "gsculpt/error.h"
#include "gsculpt/parallel.h"
#include "gsculpt/scene_io.h"

namespace gsculpt {

namespace {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

std::string_view VotePowerModeName(VotePowerMode mode) {
  return mode == VotePowerMode::kBlendWeight ? "blend_weight" : "opacity_weight";
}

VotePowerMode ParseVotePowerMode(std::string_view name) {
  if (name == "blend_weight") return VotePowerMode::kBlendWeight;
  if (name == "opacity_weight") return VotePowerMode::kOpacityWeight;
  throw Error(ErrorCode::kInvalidArgument,
              "vote mode must be blend_weight or opacity_weight, got '" + std::string(name) + "'");
}

void AccumulateView(VoteTally& tally, const Mask& mask, const BlendRecords& records,
                    VotePowerMode mode, const GaussianScene& scene) {
  if (mask.width != records.width() || mask.height != records.height()) {
    throw Error(ErrorCode::kDimensionMismatch, "mask and weight records differ in size");
  }
  if (tally.size() != scene.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "tally does not match the scene");
  }
  const size_t npix = mask.bits.size();
  for (size_t p = 0; p < npix; ++p) {
    const bool inside = mask.bits[p] != 0;
    for (const Contribution& c : records.pixel(p)) {
      const double power =
          mode == VotePowerMode::kBlendWeight ? c.weight : scene[c.gaussian].opacity * c.weight;
      tally.Add(c.gaussian, power, inside);
    }
  }
  tally.accepted_views.push_back(mask.view_id);
}

std::vector<double> NormalizedVotes(const VoteTally& tally) {
  std::vector<double> votes(tally.size(), 0.0);
  for (size_t j = 0; j < tally.size(); ++j) {
    const double total = tally.total_mass(j);
    if (total >= kMinVisibilityMass) {
      votes[j] = std::clamp(tally.positive_mass(j) / total, 0.0, 1.0);
    }
  }
  return votes;
}

Selection SelectGaussians(const std::vector<double>& votes, double threshold,
                          const GaussianScene& scene) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "vote threshold must be in (0, 1)");
  }
  if (votes.size() != scene.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "one vote per gaussian required");
  }
  std::vector<uint32_t> indices;
  for (size_t j = 0; j < votes.size(); ++j) {
    if (votes[j] > threshold) indices.push_back(static_cast<uint32_t>(j));
  }
  if (indices.empty()) {
    throw Error(ErrorCode::kEmptySelection, "no gaussian cleared the vote threshold");
  }
  return Selection::Create(scene, std::move(indices));
}

bool IimInspect(const Mask& predicted, const GaussianScene& scene,
                const std::optional<Selection>& running, const Camera& cam,
                double mask_threshold) {
  if (!running) return true;
  const Mask rendered = RenderSelectionMask(scene, *running, cam, mask_threshold);
  return predicted.Intersects(rendered);
}

nlohmann::json SegmentConfig::ToJson() const {
  return {{"threshold", threshold},
          {"mode", VotePowerModeName(mode)},
          {"iim", iim},
          {"epipolar", epipolar},
          {"iim_mask_threshold", iim_mask_threshold},
          {"background", {background.x(), background.y(), background.z()}}};
}

nlohmann::json SegmentReport::ToJson() const {
  nlohmann::json skipped = nlohmann::json::array();
  for (const auto& [view, reason] : skipped_views) {
    skipped.push_back({{"view_id", view}, {"reason", reason}});
  }
  nlohmann::json prop = nlohmann::json::array();
  for (const auto& s : propagation_skips) {
    prop.push_back({{"view_id", s.view_id}, {"source_click", s.source_click}, {"reason", s.reason}});
  }
  return {{"accepted_views", accepted_views},
          {"rejected_views", rejected_views},
          {"skipped_views", skipped},
          {"propagation_skips", prop},
          {"config", config},
          {"timings_ms", timings_ms}};
}

SegmentResult RunSegmentation(const GaussianScene& scene, const ViewSet& views,
                              const ClickSet& clicks, const Segmenter& segmenter,
                              const FeatureExtractor& extractor, const SegmentConfig& config) {
  const Stopwatch total_clock;
  if (scene.empty()) throw Error(ErrorCode::kEmptyScene, "cannot segment an empty scene");
  if (views.empty()) throw Error(ErrorCode::kEmptyResult, "no views to segment");
  if (clicks.empty()) throw Error(ErrorCode::kNoPositiveClick, "at least one click required");
  if (!(config.threshold > 0.0 && config.threshold < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "vote threshold must be in (0, 1)");
  }
  ValidateClicks(clicks, views);

  SegmentResult result;
  SegmentReport& report = result.report;
  report.config = config.ToJson();
  report.config["segmenter"] = segmenter.Describe();
  report.config["features"] = extractor.Describe();
  report.config["feature_stride"] = extractor.stride();
  report.config["view_order"] = [&views] {
    std::vector<int> ids;
    for (const auto& v : views) ids.push_back(v.id);
    return ids;
  }();

  // Color renders and features for every view.
  Stopwatch clock;
  RenderOptions color_options;
  color_options.background = config.background;
  std::vector<Image> images(views.size());
  std::vector<std::optional<FeatureMap>> feature_maps(views.size());
  std::vector<std::string> feature_errors(views.size());
  ParallelFor(views.size(), [&](size_t i) {
    images[i] = Render(scene, views[i], color_options).color;
    try {
      feature_maps[i] = extractor.Extract(views[i], images[i]);
    } catch (const Error& e) {
      feature_errors[i] = std::string(ErrorCodeName(e.code())) + ": " + e.what();
    }
  });
  report.timings_ms["render_features"] = clock.ms();

  ViewSet usable_views;
  std::vector<FeatureMap> usable_features;
  for (size_t i = 0; i < views.size(); ++i) {
    if (feature_maps[i]) {
      usable_views.push_back(views[i]);
      usable_features.push_back(std::move(*feature_maps[i]));
    } else {
      report.skipped_views.emplace_back(views[i].id, "features " + feature_errors[i]);
      for (const Click& c : clicks) {
        if (c.view_id == views[i].id) {
          throw Error(ErrorCode::kRemoteUnavailable,
                      "features unavailable for click view: " + feature_errors[i]);
        }
      }
    }
  }

  clock = Stopwatch();
  PropagationOptions prop_options;
  prop_options.scene_radius = scene.BoundingSphere().second;
  prop_options.epipolar = config.epipolar;
  PropagationResult propagated = PropagateClicks(clicks, usable_views, usable_features, prop_options);
  result.clicks = propagated.clicks;
  report.propagation_skips = std::move(propagated.skipped);
  report.timings_ms["propagate"] = clock.ms();

  double segment_ms = 0.0, iim_ms = 0.0, vote_ms = 0.0;
  VoteTally tally(scene.size());
  std::optional<Selection> running;
  RenderOptions record_options;
  record_options.background = config.background;
  record_options.record_weights = true;

  for (size_t vi = 0; vi < views.size(); ++vi) {
    const Camera& cam = views[vi];
    if (!feature_maps[vi] && !feature_errors[vi].empty()) continue;  // already reported
    std::vector<Click> positive, negative;
    for (const Click& c : result.clicks) {
      if (c.view_id != cam.id) continue;
      (c.polarity == Polarity::kPositive ? positive : negative).push_back(c);
    }
    if (positive.empty()) {
      report.skipped_views.emplace_back(cam.id, "no_positive_click");
      continue;
    }
    clock = Stopwatch();
    Mask predicted;
    try {
      predicted = segmenter.Segment(cam, images[vi], positive, negative);
    } catch (const Error& e) {
      report.skipped_views.emplace_back(cam.id, std::string(ErrorCodeName(e.code())) + ": " + e.what());
      segment_ms += clock.ms();
      continue;
    }
    segment_ms += clock.ms();
    predicted.view_id = cam.id;
    if (predicted.width != cam.width || predicted.height != cam.height) {
      report.skipped_views.emplace_back(cam.id, "DimensionMismatch: mask size");
      continue;
    }
    if (!predicted.any()) {
      report.skipped_views.emplace_back(cam.id, "empty_mask");
      result.masks.push_back(std::move(predicted));
      continue;
    }

    if (config.iim) {
      clock = Stopwatch();
      const bool accept = IimInspect(predicted, scene, running, cam, config.iim_mask_threshold);
      iim_ms += clock.ms();
      if (!accept) {
        report.rejected_views.push_back(cam.id);
        result.masks.push_back(std::move(predicted));
        continue;
      }
    }

    clock = Stopwatch();
    const RenderedView rendered = Render(scene, cam, record_options);
    AccumulateView(tally, predicted, *rendered.weights, config.mode, scene);
    report.accepted_views.push_back(cam.id);
    if (config.iim) {
      try {
        running = SelectGaussians(NormalizedVotes(tally), config.threshold, scene);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kEmptySelection) throw;
        running.reset();
      }
    }
    vote_ms += clock.ms();
    result.masks.push_back(std::move(predicted));
  }
  report.timings_ms["segment2d"] = segment_ms;
  report.timings_ms["iim"] = iim_ms;
  report.timings_ms["vote"] = vote_ms;

  result.votes = NormalizedVotes(tally);
  try {
    result.selection = SelectGaussians(result.votes, config.threshold, scene);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kEmptySelection) throw;
  }
  result.tally = std::move(tally);
  report.timings_ms["total"] = total_clock.ms();
  return result;
}

SegmentResult Segment(const GaussianScene& scene, const ViewSet& views, const ClickSet& clicks,
                      const Segmenter& segmenter, const FeatureExtractor& features,
                      const SegmentConfig& config) {
  SegmentResult result = RunSegmentation(scene, views, clicks, segmenter, features, config);
  if (!result.selection) {
    throw Error(ErrorCode::kEmptySelection, "no gaussian cleared the vote threshold");
  }
  return result;
}

}  // namespace gsculpt
