#include "gsculpt/types.h"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <openssl/evp.h>

#include "gsculpt/error.h"

namespace gsculpt {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIoFailure: return "IoFailure";
    case ErrorCode::kMalformedHeader: return "MalformedHeader";
    case ErrorCode::kMissingProperty: return "MissingProperty";
    case ErrorCode::kNonFiniteAttribute: return "NonFiniteAttribute";
    case ErrorCode::kEmptyScene: return "EmptyScene";
    case ErrorCode::kNonOrthonormalRotation: return "NonOrthonormalRotation";
    case ErrorCode::kDuplicateViewId: return "DuplicateViewId";
    case ErrorCode::kBadIntrinsics: return "BadIntrinsics";
    case ErrorCode::kBadClick: return "BadClick";
    case ErrorCode::kEmptyResult: return "EmptyResult";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kMissingLabels: return "MissingLabels";
    case ErrorCode::kSelectionMismatch: return "SelectionMismatch";
    case ErrorCode::kSingularIntrinsics: return "SingularIntrinsics";
    case ErrorCode::kDegenerateEpipole: return "DegenerateEpipole";
    case ErrorCode::kRayBehindCamera: return "RayBehindCamera";
    case ErrorCode::kEmptySegment: return "EmptySegment";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kEmptySelection: return "EmptySelection";
    case ErrorCode::kNonPositiveEpsilon: return "NonPositiveEpsilon";
    case ErrorCode::kWouldEmptyScene: return "WouldEmptyScene";
    case ErrorCode::kEditorUnavailable: return "EditorUnavailable";
    case ErrorCode::kRemoteUnavailable: return "RemoteUnavailable";
    case ErrorCode::kNoPositiveClick: return "NoPositiveClick";
    case ErrorCode::kSpecInfeasible: return "SpecInfeasible";
    case ErrorCode::kUnknownView: return "UnknownView";
  }
  return "Unknown";
}

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) { EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr); }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  template <typename T>
  void Add(const T& value) {
    EVP_DigestUpdate(ctx_, &value, sizeof(T));
  }
  void AddBytes(const void* data, size_t n) { EVP_DigestUpdate(ctx_, data, n); }

  std::string HexDigest() {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, digest, &len);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
      out.push_back(kHex[digest[i] >> 4]);
      out.push_back(kHex[digest[i] & 0xF]);
    }
    return out;
  }

 private:
  EVP_MD_CTX* ctx_;
};

void CheckGaussian(const Gaussian& g, size_t index) {
  auto fail = [index](const std::string& what) {
    throw Error(ErrorCode::kInvalidArgument,
                "gaussian " + std::to_string(index) + ": " + what);
  };
  if (!g.position.allFinite()) fail("non-finite position");
  if (!(g.opacity >= 0.0 && g.opacity <= 1.0)) fail("opacity outside [0,1]");
  if (!(g.scale.array() > 0.0).all() || !g.scale.allFinite()) fail("non-positive scale");
  if (std::abs(g.rotation.norm() - 1.0) > 1e-6) fail("rotation not unit-norm");
  if (!g.color.allFinite()) fail("non-finite color");
}

}  // namespace

GaussianScene::GaussianScene(std::vector<Gaussian> gaussians,
                             std::optional<std::vector<int32_t>> labels, int sh_degree)
    : gaussians_(std::move(gaussians)), labels_(std::move(labels)), sh_degree_(sh_degree) {
  if (sh_degree_ < 0 || sh_degree_ > kMaxShDegree) {
    throw Error(ErrorCode::kInvalidArgument, "sh degree must be in [0,3]");
  }
  if (labels_ && labels_->size() != gaussians_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "labels must cover every gaussian");
  }
  Sha256 sha;
  const int32_t degree = sh_degree_;
  sha.Add(degree);
  for (size_t i = 0; i < gaussians_.size(); ++i) {
    const Gaussian& g = gaussians_[i];
    CheckGaussian(g, i);
    sha.AddBytes(g.position.data(), sizeof(double) * 3);
    sha.AddBytes(g.scale.data(), sizeof(double) * 3);
    sha.AddBytes(g.rotation.coeffs().data(), sizeof(double) * 4);
    sha.Add(g.opacity);
    sha.AddBytes(g.color.data(), sizeof(double) * 3);
    sha.AddBytes(g.sh_rest.data(), sizeof(float) * g.sh_rest.size());
  }
  if (labels_) sha.AddBytes(labels_->data(), sizeof(int32_t) * labels_->size());
  hash_ = sha.HexDigest();
}

const std::vector<int32_t>& GaussianScene::labels() const {
  if (!labels_) throw Error(ErrorCode::kMissingLabels, "scene has no labels");
  return *labels_;
}

std::pair<Eigen::Vector3d, double> GaussianScene::BoundingSphere() const {
  if (gaussians_.empty()) return {Eigen::Vector3d::Zero(), 0.0};
  Eigen::Vector3d lo = gaussians_.front().position;
  Eigen::Vector3d hi = lo;
  for (const auto& g : gaussians_) {
    lo = lo.cwiseMin(g.position);
    hi = hi.cwiseMax(g.position);
  }
  const Eigen::Vector3d center = 0.5 * (lo + hi);
  double radius = 0.0;
  for (const auto& g : gaussians_) radius = std::max(radius, (g.position - center).norm());
  return {center, radius};
}

Eigen::Matrix3d Camera::K() const {
  Eigen::Matrix3d k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

void ValidateCamera(const Camera& cam) {
  const std::string who = "camera " + std::to_string(cam.id) + ": ";
  if (cam.width <= 0 || cam.height <= 0) {
    throw Error(ErrorCode::kBadIntrinsics, who + "non-positive image size");
  }
  if (!(cam.fx > 0.0) || !(cam.fy > 0.0)) {
    throw Error(ErrorCode::kBadIntrinsics, who + "focal lengths must be positive");
  }
  if (!(cam.cx > 0.0 && cam.cx < cam.width && cam.cy > 0.0 && cam.cy < cam.height)) {
    throw Error(ErrorCode::kBadIntrinsics, who + "principal point outside image");
  }
  const Eigen::Matrix3d gram = cam.rotation * cam.rotation.transpose();
  if (!cam.rotation.allFinite() ||
      (gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6) {
    throw Error(ErrorCode::kNonOrthonormalRotation, who + "rotation not orthonormal");
  }
  if (std::abs(cam.rotation.determinant() - 1.0) > 1e-6) {
    throw Error(ErrorCode::kNonOrthonormalRotation, who + "rotation determinant != +1");
  }
  if (!cam.translation.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, who + "non-finite translation");
  }
}

const Camera& FindCamera(const ViewSet& views, int view_id) {
  for (const auto& cam : views) {
    if (cam.id == view_id) return cam;
  }
  throw Error(ErrorCode::kUnknownView, "no camera with id " + std::to_string(view_id));
}

Camera LookAtCamera(int id, int width, int height, double focal, const Eigen::Vector3d& eye,
                    const Eigen::Vector3d& target, const Eigen::Vector3d& up) {
  const Eigen::Vector3d forward = (target - eye).normalized();
  Eigen::Vector3d right = forward.cross(up);
  if (right.norm() < 1e-9) right = forward.unitOrthogonal();
  right.normalize();
  const Eigen::Vector3d down = forward.cross(right);
  Camera cam;
  cam.id = id;
  cam.width = width;
  cam.height = height;
  cam.fx = cam.fy = focal;
  cam.cx = width / 2.0;
  cam.cy = height / 2.0;
  cam.rotation.row(0) = right.transpose();
  cam.rotation.row(1) = down.transpose();
  cam.rotation.row(2) = forward.transpose();
  cam.translation = -cam.rotation * eye;
  return cam;
}

size_t Mask::count() const {
  return static_cast<size_t>(std::count(bits.begin(), bits.end(), uint8_t{1}));
}

bool Mask::any() const {
  return std::any_of(bits.begin(), bits.end(), [](uint8_t b) { return b != 0; });
}

bool Mask::Intersects(const Mask& other) const {
  if (other.width != width || other.height != height) {
    throw Error(ErrorCode::kDimensionMismatch, "mask dimensions differ");
  }
  for (size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] && other.bits[i]) return true;
  }
  return false;
}

Selection Selection::Create(const GaussianScene& scene, std::vector<uint32_t> indices) {
  std::sort(indices.begin(), indices.end());
  indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
  if (indices.empty()) throw Error(ErrorCode::kEmptySelection, "selection is empty");
  if (indices.back() >= scene.size()) {
    throw Error(ErrorCode::kInvalidArgument, "selection index out of range");
  }
  return Selection(scene.content_hash(), std::move(indices));
}

Selection Selection::FromParts(std::string scene_hash, std::vector<uint32_t> indices) {
  std::sort(indices.begin(), indices.end());
  indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
  if (indices.empty()) throw Error(ErrorCode::kEmptySelection, "selection is empty");
  return Selection(std::move(scene_hash), std::move(indices));
}

void Selection::CheckBound(const GaussianScene& scene) const {
  if (scene_hash_ != scene.content_hash()) {
    throw Error(ErrorCode::kSelectionMismatch, "selection is bound to a different scene");
  }
  if (indices_.back() >= scene.size()) {
    throw Error(ErrorCode::kSelectionMismatch, "selection index out of range");
  }
}

std::vector<uint8_t> Selection::MembershipFlags(size_t scene_size) const {
  std::vector<uint8_t> flags(scene_size, 0);
  for (uint32_t i : indices_) {
    if (i < scene_size) flags[i] = 1;
  }
  return flags;
}

}  // namespace gsculpt
