#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gsculpt/types.h"

namespace gsculpt {

// Back-projected click ray. `origin` is the source camera center and
// `depth_step` maps source depth d to the point origin + d * depth_step.
struct Ray {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d direction = Eigen::Vector3d::UnitZ();  // unit, p_w1 - p_w2
  Eigen::Vector3d depth_step = Eigen::Vector3d::UnitZ();

  Eigen::Vector3d PointAtDepth(double d) const { return origin + d * depth_step; }
};

struct Segment2d {
  Eigen::Vector2d a;
  Eigen::Vector2d b;
};

struct EpipolarLine {
  int view_id = 0;
  Eigen::Vector2d p1 = Eigen::Vector2d::Zero();
  Eigen::Vector2d p2 = Eigen::Vector2d::Zero();
  // Part of the infinite line through p1, p2 inside the image, ordered p1 -> p2.
  std::optional<Segment2d> clipped_segment;

  // Perpendicular pixel distance from `q` to the line.
  double DistanceTo(const Eigen::Vector2d& q) const;
};

struct FeatureMap {
  int view_id = 0;
  int grid_width = 0;
  int grid_height = 0;
  int dim = 0;
  int stride = 1;  // image pixels per cell
  std::vector<float> data;  // row-major grid_height x grid_width x dim

  const float* cell(int row, int col) const {
    return data.data() + (static_cast<size_t>(row) * grid_width + col) * dim;
  }
  float* cell(int row, int col) {
    return data.data() + (static_cast<size_t>(row) * grid_width + col) * dim;
  }
};

struct GridCell {
  int col = 0;
  int row = 0;
  bool operator==(const GridCell&) const = default;
};

// Throws kSingularIntrinsics.
Ray RegisterRay(const Click& click, const Camera& cam);

// `scene_radius` scales the adaptive depth samples (0.1 r and 10 r along the
// ray). Throws kRayBehindCamera or kDegenerateEpipole.
EpipolarLine ProjectRay(const Ray& ray, const Camera& target, double scene_radius);

// Integer Bresenham walk through `from` .. `to`, endpoints included.
std::vector<GridCell> BresenhamLine(GridCell from, GridCell to);

// Feature-grid cells along the clipped segment, p1 -> p2. Throws kEmptySegment.
std::vector<GridCell> RasterizeLine(const EpipolarLine& line, const FeatureMap& features);

// Nearest-cell lookup at floor(pixel / stride), clamped to the grid.
GridCell CellAt(const FeatureMap& features, double x, double y);
std::vector<float> FeatureAt(const FeatureMap& features, double x, double y);

struct Match {
  size_t sample_index = 0;
  double affinity = 0.0;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
};

// Dot-product argmax over the samples; first maximum wins.
Match MatchClick(const std::vector<float>& source_feature, const std::vector<GridCell>& samples,
                 const FeatureMap& features);

// Every cell of the grid in row-major order (the unconstrained search space).
std::vector<GridCell> AllCells(const FeatureMap& features);

struct PropagationSkip {
  int view_id = 0;
  size_t source_click = 0;
  std::string reason;
};

struct PropagationResult {
  ClickSet clicks;  // source clicks first, then propagated ones by view order
  std::vector<PropagationSkip> skipped;
};

struct PropagationOptions {
  double scene_radius = 1.0;
  // false: match over the full target feature map (ablation).
  bool epipolar = true;
};

// `features` is parallel to `views`.
PropagationResult PropagateClicks(const ClickSet& clicks, const ViewSet& views,
                                  const std::vector<FeatureMap>& features,
                                  const PropagationOptions& options);

}  // namespace gsculpt
