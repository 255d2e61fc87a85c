#include "gsculpt/render.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gsculpt/error.h"

namespace gsculpt {

namespace {

constexpr double kShC1 = 0.4886025119029199;
constexpr double kShC2[] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                            -1.0925484305920792, 0.5462742152960396};
constexpr double kShC3[] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                            0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                            -0.5900435899266435};

// Front-to-back compositing over a depth-sorted list. `visit(pixel, pg,
// alpha, weight)` sees every accepted contribution in depth order per pixel;
// `transmittance` ends holding the final T per pixel.
template <typename Visitor>
void Composite(const std::vector<ProjectedGaussian>& sorted, int width, int height,
               bool early_termination, std::vector<double>& transmittance, Visitor&& visit) {
  transmittance.assign(static_cast<size_t>(width) * height, 1.0);
  for (const ProjectedGaussian& pg : sorted) {
    const PixelRect& box = pg.screen_bbox;
    for (int row = box.row0; row < box.row1; ++row) {
      for (int col = box.col0; col < box.col1; ++col) {
        const size_t p = static_cast<size_t>(row) * width + col;
        double& t = transmittance[p];
        if (early_termination && t < kTransmittanceStop) continue;
        const double power = pg.Power(row, col);
        if (power > kSupportMahalanobisSq) continue;
        const double alpha = std::min(kMaxAlpha, pg.opacity * std::exp(-0.5 * power));
        if (alpha < kMinAlpha) continue;
        const double weight = alpha * t;
        visit(p, pg, alpha, weight);
        t *= 1.0 - alpha;
      }
    }
  }
}

}  // namespace

Eigen::Matrix3d CovarianceWorld(const Gaussian& g) {
  const Eigen::Matrix3d r = g.rotation.normalized().toRotationMatrix();
  const Eigen::Matrix3d m = r * g.scale.asDiagonal();
  return m * m.transpose();
}

Eigen::Vector3d EvaluateColorRaw(const Gaussian& g, int sh_degree,
                                 const Eigen::Vector3d& camera_center) {
  Eigen::Vector3d c = g.color;
  if (sh_degree > 0) {
    Eigen::Vector3d dir = g.position - camera_center;
    const double n = dir.norm();
    if (n > 0.0) dir /= n;
    const double x = dir.x(), y = dir.y(), z = dir.z();
    auto coeff = [&g](int k) {
      // k is 1-based SH coefficient index; rest storage is channel-major.
      return Eigen::Vector3d(g.sh_rest[k - 1], g.sh_rest[15 + k - 1], g.sh_rest[30 + k - 1]);
    };
    c += -kShC1 * y * coeff(1) + kShC1 * z * coeff(2) - kShC1 * x * coeff(3);
    if (sh_degree > 1) {
      const double xx = x * x, yy = y * y, zz = z * z;
      c += kShC2[0] * x * y * coeff(4) + kShC2[1] * y * z * coeff(5) +
           kShC2[2] * (2.0 * zz - xx - yy) * coeff(6) + kShC2[3] * x * z * coeff(7) +
           kShC2[4] * (xx - yy) * coeff(8);
      if (sh_degree > 2) {
        c += kShC3[0] * y * (3.0 * xx - yy) * coeff(9) + kShC3[1] * x * y * z * coeff(10) +
             kShC3[2] * y * (4.0 * zz - xx - yy) * coeff(11) +
             kShC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy) * coeff(12) +
             kShC3[4] * x * (4.0 * zz - xx - yy) * coeff(13) +
             kShC3[5] * z * (xx - yy) * coeff(14) + kShC3[6] * x * (xx - 3.0 * yy) * coeff(15);
      }
    }
  }
  return c;
}

std::optional<ProjectedGaussian> ProjectGaussian(const Gaussian& g, const Camera& cam,
                                                 uint32_t index, int sh_degree) {
  const Eigen::Vector3d p = cam.ToCamera(g.position);
  if (p.z() <= kNearPlane) return std::nullopt;

  const double inv_z = 1.0 / p.z();
  Eigen::Matrix<double, 2, 3> jac;
  jac << cam.fx * inv_z, 0.0, -cam.fx * p.x() * inv_z * inv_z,
         0.0, cam.fy * inv_z, -cam.fy * p.y() * inv_z * inv_z;
  const Eigen::Matrix<double, 2, 3> t = jac * cam.rotation;

  ProjectedGaussian pg;
  pg.gaussian_index = index;
  pg.depth = p.z();
  pg.mean2d = cam.ProjectCameraPoint(p);
  pg.cov2d = t * CovarianceWorld(g) * t.transpose();
  pg.cov2d(0, 1) = pg.cov2d(1, 0) = 0.5 * (pg.cov2d(0, 1) + pg.cov2d(1, 0));
  pg.cov2d(0, 0) += kLowPassDilation;
  pg.cov2d(1, 1) += kLowPassDilation;
  const double det = pg.cov2d.determinant();
  if (!(det > 0.0)) return std::nullopt;
  pg.conic = pg.cov2d.inverse();

  // Tight axis-aligned box of the 3-sigma ellipse, as pixel-center ranges.
  const double rx = 3.0 * std::sqrt(pg.cov2d(0, 0));
  const double ry = 3.0 * std::sqrt(pg.cov2d(1, 1));
  const double lo_x = std::ceil(pg.mean2d.x() - rx - 0.5);
  const double hi_x = std::floor(pg.mean2d.x() + rx - 0.5) + 1.0;
  const double lo_y = std::ceil(pg.mean2d.y() - ry - 0.5);
  const double hi_y = std::floor(pg.mean2d.y() + ry - 0.5) + 1.0;
  pg.screen_bbox.col0 = static_cast<int>(std::clamp(lo_x, 0.0, double(cam.width)));
  pg.screen_bbox.col1 = static_cast<int>(std::clamp(hi_x, 0.0, double(cam.width)));
  pg.screen_bbox.row0 = static_cast<int>(std::clamp(lo_y, 0.0, double(cam.height)));
  pg.screen_bbox.row1 = static_cast<int>(std::clamp(hi_y, 0.0, double(cam.height)));
  if (pg.screen_bbox.empty()) return std::nullopt;

  pg.opacity = g.opacity;
  pg.color = EvaluateColor(g, sh_degree, cam.Center());
  return pg;
}

std::vector<ProjectedGaussian> ProjectScene(const GaussianScene& scene, const Camera& cam) {
  std::vector<ProjectedGaussian> out;
  out.reserve(scene.size());
  for (size_t i = 0; i < scene.size(); ++i) {
    if (auto pg = ProjectGaussian(scene[i], cam, static_cast<uint32_t>(i), scene.sh_degree())) {
      out.push_back(std::move(*pg));
    }
  }
  std::sort(out.begin(), out.end(), [](const ProjectedGaussian& a, const ProjectedGaussian& b) {
    return a.depth != b.depth ? a.depth < b.depth : a.gaussian_index < b.gaussian_index;
  });
  return out;
}

RenderedView Render(const GaussianScene& scene, const Camera& cam, const RenderOptions& options) {
  const auto sorted = ProjectScene(scene, cam);
  const size_t npix = static_cast<size_t>(cam.width) * cam.height;

  RenderedView view;
  view.width = cam.width;
  view.height = cam.height;
  view.color = Image(cam.width, cam.height);
  std::vector<double> depth_sum(npix, 0.0);

  struct Entry {
    uint32_t pixel;
    Contribution c;
  };
  std::vector<Entry> entries;

  Composite(sorted, cam.width, cam.height, options.early_termination, view.transmittance,
            [&](size_t p, const ProjectedGaussian& pg, double alpha, double weight) {
              double* rgb = &view.color.rgb[p * 3];
              rgb[0] += weight * pg.color[0];
              rgb[1] += weight * pg.color[1];
              rgb[2] += weight * pg.color[2];
              depth_sum[p] += weight * pg.depth;
              if (options.record_weights) {
                entries.push_back({static_cast<uint32_t>(p), {pg.gaussian_index, alpha, weight}});
              }
            });

  view.depth.assign(npix, std::numeric_limits<double>::quiet_NaN());
  for (size_t p = 0; p < npix; ++p) {
    const double t = view.transmittance[p];
    for (int ch = 0; ch < 3; ++ch) view.color.rgb[p * 3 + ch] += t * options.background[ch];
    const double covered = 1.0 - t;
    if (covered > 0.0) view.depth[p] = depth_sum[p] / covered;
  }

  if (options.record_weights) {
    // Stable counting sort by pixel keeps each pixel's list in depth order.
    std::vector<uint32_t> offsets(npix + 1, 0);
    for (const Entry& e : entries) ++offsets[e.pixel + 1];
    for (size_t p = 0; p < npix; ++p) offsets[p + 1] += offsets[p];
    std::vector<Contribution> flat(entries.size());
    std::vector<uint32_t> cursor(offsets.begin(), offsets.end() - 1);
    for (const Entry& e : entries) flat[cursor[e.pixel]++] = e.c;
    view.weights.emplace(cam.width, cam.height, std::move(offsets), std::move(flat));
  }
  return view;
}

namespace {

// Largest-weight contributor per pixel (smaller index on ties), or -1 where
// coverage stays below kMinCoverage.
std::vector<int64_t> DominantGaussians(const GaussianScene& scene, const Camera& cam) {
  const auto sorted = ProjectScene(scene, cam);
  const size_t npix = static_cast<size_t>(cam.width) * cam.height;
  std::vector<double> best_weight(npix, -1.0);
  std::vector<uint32_t> best_index(npix, std::numeric_limits<uint32_t>::max());
  std::vector<double> transmittance;
  Composite(sorted, cam.width, cam.height, true, transmittance,
            [&](size_t p, const ProjectedGaussian& pg, double, double weight) {
              if (weight > best_weight[p] ||
                  (weight == best_weight[p] && pg.gaussian_index < best_index[p])) {
                best_weight[p] = weight;
                best_index[p] = pg.gaussian_index;
              }
            });
  std::vector<int64_t> dominant(npix, -1);
  for (size_t p = 0; p < npix; ++p) {
    if (1.0 - transmittance[p] >= kMinCoverage && best_weight[p] >= 0.0) dominant[p] = best_index[p];
  }
  return dominant;
}

}  // namespace

LabelMap RenderLabelMap(const GaussianScene& scene, const Camera& cam) {
  const auto& labels = scene.labels();
  const auto dominant = DominantGaussians(scene, cam);
  LabelMap map{cam.width, cam.height, std::vector<int32_t>(dominant.size(), kBackgroundLabel)};
  for (size_t p = 0; p < dominant.size(); ++p) {
    if (dominant[p] >= 0) map.labels[p] = labels[dominant[p]];
  }
  return map;
}

Mask RenderDominantSelectionMask(const GaussianScene& scene, const Selection& selection,
                                 const Camera& cam) {
  selection.CheckBound(scene);
  const auto selected = selection.MembershipFlags(scene.size());
  const auto dominant = DominantGaussians(scene, cam);
  Mask mask(cam.id, cam.width, cam.height);
  for (size_t p = 0; p < dominant.size(); ++p) {
    mask.bits[p] = dominant[p] >= 0 && selected[dominant[p]] ? 1 : 0;
  }
  return mask;
}

Mask RenderSelectionMask(const GaussianScene& scene, const Selection& selection,
                         const Camera& cam, double threshold) {
  selection.CheckBound(scene);
  const auto selected = selection.MembershipFlags(scene.size());
  const auto sorted = ProjectScene(scene, cam);
  const size_t npix = static_cast<size_t>(cam.width) * cam.height;
  std::vector<double> selected_weight(npix, 0.0);
  std::vector<double> transmittance;
  Composite(sorted, cam.width, cam.height, true, transmittance,
            [&](size_t p, const ProjectedGaussian& pg, double, double weight) {
              if (selected[pg.gaussian_index]) selected_weight[p] += weight;
            });
  Mask mask(cam.id, cam.width, cam.height);
  for (size_t p = 0; p < npix; ++p) {
    const double total = 1.0 - transmittance[p];
    mask.bits[p] = total >= kMinCoverage && selected_weight[p] >= threshold * total ? 1 : 0;
  }
  return mask;
}

void TintMask(Image& image, const Mask& mask) {
  if (mask.width != image.width || mask.height != image.height) {
    throw Error(ErrorCode::kDimensionMismatch, "mask and image sizes differ");
  }
  for (size_t p = 0; p < mask.bits.size(); ++p) {
    if (!mask.bits[p]) continue;
    double* rgb = &image.rgb[p * 3];
    rgb[0] = 0.6 * rgb[0] + 0.4;
    rgb[1] = 0.6 * rgb[1];
    rgb[2] = 0.6 * rgb[2];
  }
}

}  // namespace gsculpt
