#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include "gsculpt/types.h"

namespace gsculpt {

// All operations are pure: they validate the selection binding before
// touching anything and leave unselected Gaussians bit-identical.

enum class ColorizeMode { kReplace, kBalanced };

// Replace: every selected DC color becomes `target`. Balanced: shift the
// selected DC colors so their mean equals `target`.
GaussianScene Colorize(const GaussianScene& scene, const Selection& selection,
                       const Eigen::Vector3d& target, ColorizeMode mode);

// Scales selected positions about their centroid and their scales by epsilon.
GaussianScene ScaleSelection(const GaussianScene& scene, const Selection& selection,
                             double epsilon);

// Similarity transform applied about the selection centroid.
struct PlacementTransform {
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  double uniform_scale = 1.0;

  void Validate() const;
  static PlacementTransform FromJson(const nlohmann::json& j);
  nlohmann::json ToJson() const;
};

// The selected Gaussians transformed by `placement`, as standalone Gaussians.
std::vector<Gaussian> TransformedCopies(const GaussianScene& scene, const Selection& selection,
                                        const PlacementTransform& placement);

struct CopyPasteResult {
  GaussianScene scene;
  Selection copies;
};
CopyPasteResult CopyPaste(const GaussianScene& scene, const Selection& selection,
                          const PlacementTransform& placement);

// Appends transformed selected Gaussians of `source` to `target` (which may
// be empty).
GaussianScene Combine(const GaussianScene& target, const GaussianScene& source,
                      const Selection& source_selection, const PlacementTransform& placement);

struct RemovalResult {
  GaussianScene scene;
  std::vector<int64_t> remap;  // old index -> new index, -1 when removed
};
RemovalResult RemoveSelection(const GaussianScene& scene, const Selection& selection);

// 2D image editor role (instruction-driven in production).
class Editor {
 public:
  virtual ~Editor() = default;
  virtual Image Edit(const Image& rendered, const std::string& instruction,
                     const Camera& cam) const = 0;
  virtual std::string Describe() const = 0;
};

class IdentityEditor : public Editor {
 public:
  Image Edit(const Image& rendered, const std::string&, const Camera&) const override {
    return rendered;
  }
  std::string Describe() const override { return "builtin:identity"; }
};

// Blends every pixel toward `tint` by `strength`.
class TintEditor : public Editor {
 public:
  TintEditor(std::string name, Eigen::Vector3d tint, double strength)
      : name_(std::move(name)), tint_(tint), strength_(strength) {}
  Image Edit(const Image& rendered, const std::string&, const Camera&) const override;
  std::string Describe() const override { return "builtin:" + name_; }

 private:
  std::string name_;
  Eigen::Vector3d tint_;
  double strength_;
};

class GammaEditor : public Editor {
 public:
  explicit GammaEditor(double gamma) : gamma_(gamma) {}
  Image Edit(const Image& rendered, const std::string&, const Camera&) const override;
  std::string Describe() const override { return "builtin:gamma"; }

 private:
  double gamma_;
};

// Paints `color` inside a per-view mask, leaves other pixels alone.
class RegionRecolorEditor : public Editor {
 public:
  RegionRecolorEditor(std::map<int, Mask> masks, Eigen::Vector3d color)
      : masks_(std::move(masks)), color_(color) {}
  Image Edit(const Image& rendered, const std::string&, const Camera& cam) const override;
  std::string Describe() const override { return "builtin:region-recolor"; }

 private:
  std::map<int, Mask> masks_;
  Eigen::Vector3d color_;
};

// POST {endpoint}/edit {"image_png","instruction"} -> {"image_png"}.
class RemoteEditor : public Editor {
 public:
  explicit RemoteEditor(std::string endpoint) : endpoint_(std::move(endpoint)) {}
  Image Edit(const Image& rendered, const std::string& instruction,
             const Camera& cam) const override;
  std::string Describe() const override { return "remote:" + endpoint_; }

 private:
  std::string endpoint_;
};

// "builtin:identity" | "builtin:tint-red" | "builtin:gamma" | "remote:<url>".
std::shared_ptr<const Editor> MakeEditor(const std::string& spec);

// Sum over pixels and channels of |rendered - target|.
double L1Distance(const Image& rendered, const Image& target);

// Exact gradient of L1Distance(render(scene), target) with respect to the DC
// color of each selected Gaussian (target held fixed), in selection order.
std::vector<Eigen::Vector3d> DcColorGradient(const GaussianScene& scene,
                                             const Selection& selection, const Camera& cam,
                                             const Image& target,
                                             const Eigen::Vector3d& background);

struct EditStepResult {
  GaussianScene scene;
  Selection selection;  // same indices, bound to the new scene
  double l1 = 0.0;         // full-image L1 norm before the update
  double region_l1 = 0.0;  // mean |I - I_e| over the selection's pixels
};

// One update of the selected DC colors toward the editor's output.
EditStepResult SemanticEditStep(const GaussianScene& scene, const Selection& selection,
                                const Camera& view, const Editor& editor,
                                const std::string& instruction, double step_size,
                                const Eigen::Vector3d& background = Eigen::Vector3d::Zero());

struct EditRequest {
  std::string instruction;
  int steps = 1500;
  double step_size = 1e-3;
  bool annealing = true;  // linear decay to zero at the last step
  std::shared_ptr<const Editor> editor;
  uint64_t seed = 0;
  Eigen::Vector3d background = Eigen::Vector3d::Zero();

  void Validate() const;
};

struct EditResult {
  GaussianScene scene;
  std::vector<double> loss_trace;
  std::vector<double> region_loss_trace;
  std::vector<int> sampled_views;
};

using EditProgress = std::function<void(int step, int steps, double loss)>;

EditResult SemanticEdit(const GaussianScene& scene, const Selection& selection,
                        const ViewSet& views, const EditRequest& request,
                        const EditProgress& progress = nullptr);

// Parsed form of a JSON op descriptor, e.g. {"op":"scale","epsilon":2}.
// "combine" reads "source_scene" (PLY path) and optionally
// "source_selection" (selection JSON path, default: the whole source), and
// inserts into the current scene. "edit" also accepts "seed".
struct OpResult {
  GaussianScene scene;
  std::optional<Selection> selection;    // selection bound to `scene`, when one survives
  std::optional<std::vector<int64_t>> remap;  // remove only
  std::vector<double> loss_trace;             // edit only
  std::vector<double> region_loss_trace;      // edit only
};

// Every op except combine needs `selection`; throws kInvalidArgument on a
// malformed descriptor.
OpResult ApplyOp(const nlohmann::json& descriptor, const GaussianScene& scene,
                 const std::optional<Selection>& selection, const ViewSet& views,
                 const EditProgress& progress = nullptr);

// True for ops that run long enough to deserve a background job.
bool IsLongOp(const nlohmann::json& descriptor);

}  // namespace gsculpt
