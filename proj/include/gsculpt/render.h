#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "gsculpt/types.h"

namespace gsculpt {

// Compositing constants (standard splatting values).
inline constexpr double kNearPlane = 0.01;
inline constexpr double kLowPassDilation = 0.3;  // px^2 added to cov2d diagonal
inline constexpr double kMaxAlpha = 0.99;
inline constexpr double kMinAlpha = 1.0 / 255.0;
inline constexpr double kTransmittanceStop = 1e-4;
// A Gaussian influences pixels whose centers lie within its 3-sigma ellipse.
inline constexpr double kSupportMahalanobisSq = 9.0;
// Pixels whose accumulated weight is below this count as background.
inline constexpr double kMinCoverage = 1e-3;

struct PixelRect {
  int col0 = 0, row0 = 0;  // inclusive
  int col1 = 0, row1 = 0;  // exclusive
  bool empty() const { return col0 >= col1 || row0 >= row1; }
};

struct ProjectedGaussian {
  uint32_t gaussian_index = 0;
  Eigen::Vector2d mean2d = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov2d = Eigen::Matrix2d::Identity();  // includes low-pass
  Eigen::Matrix2d conic = Eigen::Matrix2d::Identity();  // cov2d inverse
  double depth = 0.0;
  PixelRect screen_bbox;
  double opacity = 0.0;
  Eigen::Vector3d color = Eigen::Vector3d::Zero();  // SH evaluated for this view

  // Mahalanobis distance squared of a pixel center from mean2d.
  double Power(int row, int col) const {
    const Eigen::Vector2d d(col + 0.5 - mean2d.x(), row + 0.5 - mean2d.y());
    return d.dot(conic * d);
  }
};

Eigen::Matrix3d CovarianceWorld(const Gaussian& g);

// Screen-space footprint, or nullopt when behind the near plane or the
// 3-sigma box misses the image.
std::optional<ProjectedGaussian> ProjectGaussian(const Gaussian& g, const Camera& cam,
                                                 uint32_t index = 0, int sh_degree = 0);

// View-dependent color of `g` seen from `camera_center`, before and after
// the clamp at zero.
Eigen::Vector3d EvaluateColorRaw(const Gaussian& g, int sh_degree,
                                 const Eigen::Vector3d& camera_center);
inline Eigen::Vector3d EvaluateColor(const Gaussian& g, int sh_degree,
                                     const Eigen::Vector3d& camera_center) {
  return EvaluateColorRaw(g, sh_degree, camera_center).cwiseMax(0.0);
}

// Visible Gaussians sorted front to back by center depth (index breaks ties).
std::vector<ProjectedGaussian> ProjectScene(const GaussianScene& scene, const Camera& cam);

struct Contribution {
  uint32_t gaussian = 0;
  double alpha = 0.0;
  double weight = 0.0;  // alpha * prod_{k<i} (1 - alpha_k)
};

// Per-pixel depth-ordered contribution lists in CSR layout.
class BlendRecords {
 public:
  BlendRecords() = default;
  BlendRecords(int width, int height, std::vector<uint32_t> offsets,
               std::vector<Contribution> entries)
      : width_(width), height_(height), offsets_(std::move(offsets)), entries_(std::move(entries)) {}

  int width() const { return width_; }
  int height() const { return height_; }
  std::span<const Contribution> pixel(size_t index) const {
    return {entries_.data() + offsets_[index], entries_.data() + offsets_[index + 1]};
  }
  std::span<const Contribution> at(int row, int col) const {
    return pixel(static_cast<size_t>(row) * width_ + col);
  }
  size_t total_contributions() const { return entries_.size(); }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<uint32_t> offsets_;
  std::vector<Contribution> entries_;
};

struct RenderOptions {
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
  bool record_weights = false;
  // Disabling is only useful to check that the cutoff is harmless.
  bool early_termination = true;
};

struct RenderedView {
  int width = 0;
  int height = 0;
  Image color;
  std::vector<double> transmittance;  // final T per pixel
  std::vector<double> depth;          // weight-averaged depth, NaN when uncovered
  std::optional<BlendRecords> weights;
};

RenderedView Render(const GaussianScene& scene, const Camera& cam, const RenderOptions& options = {});

struct LabelMap {
  int width = 0;
  int height = 0;
  std::vector<int32_t> labels;

  int32_t at(int row, int col) const { return labels[static_cast<size_t>(row) * width + col]; }
};

// Label of the largest-weight Gaussian per pixel; kBackgroundLabel where the
// accumulated weight is below kMinCoverage. Throws kMissingLabels.
LabelMap RenderLabelMap(const GaussianScene& scene, const Camera& cam);

// Pixel set iff covered and selected weight >= threshold * total weight.
Mask RenderSelectionMask(const GaussianScene& scene, const Selection& selection,
                         const Camera& cam, double threshold = 0.5);

// Pixel set iff covered and its largest-weight contributor is selected: the
// rule RenderLabelMap uses, so an exact selection reproduces a label mask.
Mask RenderDominantSelectionMask(const GaussianScene& scene, const Selection& selection,
                                 const Camera& cam);

// Blends masked pixels 40% toward pure red, the UI's selection overlay.
void TintMask(Image& image, const Mask& mask);

}  // namespace gsculpt
