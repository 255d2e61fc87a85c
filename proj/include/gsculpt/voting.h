#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gsculpt/epipolar.h"
#include "gsculpt/perception.h"
#include "gsculpt/render.h"
#include "gsculpt/types.h"

namespace gsculpt {

// How much a pixel's vote counts toward a Gaussian it sees.
enum class VotePowerMode {
  kBlendWeight,   // alpha_j * prod(1 - alpha_k): the compositing weight
  kOpacityWeight,  // opacity_j * blend weight (opacity counted a second time)
};

std::string_view VotePowerModeName(VotePowerMode mode);
VotePowerMode ParseVotePowerMode(std::string_view name);

// Per-Gaussian vote mass. Sums are compensated so accumulation order only
// perturbs results at the 1e-16 level.
class VoteTally {
 public:
  explicit VoteTally(size_t gaussian_count)
      : positive_(gaussian_count), total_(gaussian_count) {}

  size_t size() const { return total_.size(); }
  double positive_mass(size_t j) const { return positive_[j].value(); }
  double total_mass(size_t j) const { return total_[j].value(); }

  void Add(size_t j, double power, bool inside) {
    total_[j].Add(power);
    if (inside) positive_[j].Add(power);
  }

  std::vector<int> accepted_views;

  bool operator==(const VoteTally&) const = default;

 private:
  struct Sum {
    double sum = 0.0;
    double compensation = 0.0;

    void Add(double x) {
      const double t = sum + x;
      if (std::abs(sum) >= std::abs(x)) {
        compensation += (sum - t) + x;
      } else {
        compensation += (x - t) + sum;
      }
      sum = t;
    }
    double value() const { return sum + compensation; }
    bool operator==(const Sum&) const = default;
  };

  std::vector<Sum> positive_;
  std::vector<Sum> total_;
};

// Adds one view's votes. `scene` supplies opacities for kOpacityWeight.
// Throws kDimensionMismatch when mask and records disagree.
void AccumulateView(VoteTally& tally, const Mask& mask, const BlendRecords& records,
                    VotePowerMode mode, const GaussianScene& scene);

inline constexpr double kMinVisibilityMass = 1e-8;

// positive / total per Gaussian; 0 for Gaussians never meaningfully seen.
std::vector<double> NormalizedVotes(const VoteTally& tally);

// Indices with vote > threshold (strict). Throws kEmptySelection.
Selection SelectGaussians(const std::vector<double>& votes, double threshold,
                          const GaussianScene& scene);

// Accept the first view unconditionally, later ones only when the predicted
// mask overlaps the running selection's rendered mask.
bool IimInspect(const Mask& predicted, const GaussianScene& scene,
                const std::optional<Selection>& running, const Camera& cam,
                double mask_threshold = 0.5);

struct SegmentConfig {
  double threshold = 0.8;
  VotePowerMode mode = VotePowerMode::kBlendWeight;
  bool iim = true;
  bool epipolar = true;
  double iim_mask_threshold = 0.5;
  Eigen::Vector3d background = Eigen::Vector3d::Zero();

  nlohmann::json ToJson() const;
};

struct SegmentReport {
  std::vector<int> accepted_views;
  std::vector<int> rejected_views;
  std::vector<std::pair<int, std::string>> skipped_views;
  std::vector<PropagationSkip> propagation_skips;
  nlohmann::json config;
  std::map<std::string, double> timings_ms;

  nlohmann::json ToJson() const;
};

struct SegmentResult {
  std::optional<Selection> selection;  // nullopt when no Gaussian cleared the threshold
  std::vector<Mask> masks;             // predicted 2D masks, view order
  ClickSet clicks;                     // user + propagated
  std::vector<double> votes;
  VoteTally tally{0};
  SegmentReport report;
};

// Full click -> selection pipeline. Per-view perception failures are
// reported as skips; the result's selection is empty when nothing passed.
SegmentResult RunSegmentation(const GaussianScene& scene, const ViewSet& views,
                              const ClickSet& clicks, const Segmenter& segmenter,
                              const FeatureExtractor& features, const SegmentConfig& config);

// As RunSegmentation, but throws kEmptySelection instead of returning none.
SegmentResult Segment(const GaussianScene& scene, const ViewSet& views, const ClickSet& clicks,
                      const Segmenter& segmenter, const FeatureExtractor& features,
                      const SegmentConfig& config);

}  // namespace gsculpt
