#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace gsculpt {

// Zeroth-order real spherical harmonic constant.
inline constexpr double kShC0 = 0.28209479177387814;
inline constexpr int kMaxShDegree = 3;
inline constexpr int kShRestCount = 45;  // 15 coefficients x 3 channels
inline constexpr int32_t kBackgroundLabel = -1;

struct Gaussian {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d scale = Eigen::Vector3d::Ones();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  double opacity = 1.0;
  // Activated DC color, 0.5 + C0 * f_dc.
  Eigen::Vector3d color = Eigen::Vector3d::Constant(0.5);
  // Higher-order SH bands in PLY order: f_rest_0..14 red, 15..29 green,
  // 30..44 blue. Only the first (degree+1)^2-1 per channel are meaningful.
  std::array<float, kShRestCount> sh_rest{};
};

// Ordered Gaussian set; a Gaussian's identity is its index. Immutable once
// built: every edit produces a new scene with a fresh content hash.
class GaussianScene {
 public:
  GaussianScene() : GaussianScene(std::vector<Gaussian>{}) {}
  explicit GaussianScene(std::vector<Gaussian> gaussians,
                         std::optional<std::vector<int32_t>> labels = std::nullopt,
                         int sh_degree = 0);

  const std::vector<Gaussian>& gaussians() const { return gaussians_; }
  const Gaussian& operator[](size_t i) const { return gaussians_[i]; }
  size_t size() const { return gaussians_.size(); }
  bool empty() const { return gaussians_.empty(); }

  bool has_labels() const { return labels_.has_value(); }
  const std::vector<int32_t>& labels() const;
  const std::optional<std::vector<int32_t>>& maybe_labels() const { return labels_; }

  int sh_degree() const { return sh_degree_; }
  // Lowercase hex SHA-256 over all attribute bytes (labels included).
  const std::string& content_hash() const { return hash_; }

  // Center and radius of a sphere enclosing all Gaussian centers.
  std::pair<Eigen::Vector3d, double> BoundingSphere() const;

 private:
  std::vector<Gaussian> gaussians_;
  std::optional<std::vector<int32_t>> labels_;
  int sh_degree_ = 0;
  std::string hash_;
};

struct Camera {
  int id = 0;
  int width = 0;
  int height = 0;
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  // World-to-camera: x_cam = rotation * x_world + translation.
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Matrix3d K() const;
  Eigen::Vector3d Center() const { return -rotation.transpose() * translation; }
  Eigen::Vector3d ToCamera(const Eigen::Vector3d& world) const {
    return rotation * world + translation;
  }
  // Continuous pixel coordinates; pixel (col, row) covers [col, col+1).
  Eigen::Vector2d ProjectCameraPoint(const Eigen::Vector3d& cam) const {
    return {fx * cam.x() / cam.z() + cx, fy * cam.y() / cam.z() + cy};
  }
  int pixel_count() const { return width * height; }
};

using ViewSet = std::vector<Camera>;

// Throws kBadIntrinsics / kNonOrthonormalRotation.
void ValidateCamera(const Camera& cam);
const Camera& FindCamera(const ViewSet& views, int view_id);

// Camera at `eye` looking at `target`; image y axis follows -up.
Camera LookAtCamera(int id, int width, int height, double focal,
                    const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                    const Eigen::Vector3d& up = Eigen::Vector3d::UnitZ());

enum class Polarity { kPositive, kNegative };
enum class ClickSource { kUser, kPropagated };

struct Click {
  int view_id = 0;
  double x = 0.0;
  double y = 0.0;
  Polarity polarity = Polarity::kPositive;
  ClickSource source = ClickSource::kUser;

  bool operator==(const Click&) const = default;
};

using ClickSet = std::vector<Click>;

struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> rgb;  // row-major, 3 per pixel

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb(static_cast<size_t>(w) * h * 3, 0.0) {}

  double* at(int row, int col) { return &rgb[(static_cast<size_t>(row) * width + col) * 3]; }
  const double* at(int row, int col) const {
    return &rgb[(static_cast<size_t>(row) * width + col) * 3];
  }
};

struct Mask {
  int view_id = 0;
  int width = 0;
  int height = 0;
  std::vector<uint8_t> bits;  // row-major, values 0/1

  Mask() = default;
  Mask(int id, int w, int h)
      : view_id(id), width(w), height(h), bits(static_cast<size_t>(w) * h, 0) {}

  uint8_t at(int row, int col) const { return bits[static_cast<size_t>(row) * width + col]; }
  size_t count() const;
  bool any() const;
  bool Intersects(const Mask& other) const;

  bool operator==(const Mask&) const = default;
};

// Non-empty sorted index set bound to one scene version.
class Selection {
 public:
  // Sorts and deduplicates; throws kEmptySelection on empty input and
  // kInvalidArgument when an index is out of range.
  static Selection Create(const GaussianScene& scene, std::vector<uint32_t> indices);
  // For deserialization, without a scene at hand.
  static Selection FromParts(std::string scene_hash, std::vector<uint32_t> indices);

  const std::string& scene_hash() const { return scene_hash_; }
  const std::vector<uint32_t>& indices() const { return indices_; }
  size_t size() const { return indices_.size(); }

  // Throws kSelectionMismatch unless bound to `scene` and in range.
  void CheckBound(const GaussianScene& scene) const;
  // Per-Gaussian membership flags for `scene`.
  std::vector<uint8_t> MembershipFlags(size_t scene_size) const;

  bool operator==(const Selection&) const = default;

 private:
  Selection(std::string hash, std::vector<uint32_t> indices)
      : scene_hash_(std::move(hash)), indices_(std::move(indices)) {}

  std::string scene_hash_;
  std::vector<uint32_t> indices_;
};

}  // namespace gsculpt
