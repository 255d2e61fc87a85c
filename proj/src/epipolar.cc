#include "gsculpt/epipolar.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/LU>

#include "gsculpt/error.h"
#include "gsculpt/parallel.h"
#include "gsculpt/render.h"

namespace gsculpt {

namespace {

constexpr double kCoincidentPx = 1e-6;

// Liang-Barsky clip of the infinite line p1 + s (p2 - p1) to [0,w] x [0,h].
std::optional<Segment2d> ClipLine(const Eigen::Vector2d& p1, const Eigen::Vector2d& p2,
                                  double width, double height) {
  const Eigen::Vector2d d = p2 - p1;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  const double p[4] = {-d.x(), d.x(), -d.y(), d.y()};
  const double q[4] = {p1.x(), width - p1.x(), p1.y(), height - p1.y()};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0.0) return std::nullopt;
      continue;
    }
    const double r = q[i] / p[i];
    if (p[i] < 0.0) {
      lo = std::max(lo, r);
    } else {
      hi = std::min(hi, r);
    }
  }
  if (lo > hi) return std::nullopt;
  // Rounding can leave an endpoint a few ulps outside the border.
  auto inside = [&](const Eigen::Vector2d& v) {
    return Eigen::Vector2d(std::clamp(v.x(), 0.0, width), std::clamp(v.y(), 0.0, height));
  };
  return Segment2d{inside(p1 + lo * d), inside(p1 + hi * d)};
}

}  // namespace

double EpipolarLine::DistanceTo(const Eigen::Vector2d& q) const {
  const Eigen::Vector2d d = p2 - p1;
  const Eigen::Vector2d r = q - p1;
  return std::abs(d.x() * r.y() - d.y() * r.x()) / d.norm();
}

Ray RegisterRay(const Click& click, const Camera& cam) {
  const Eigen::Matrix3d k = cam.K();
  const double det = k.determinant();
  if (!std::isfinite(det) || std::abs(det) < 1e-12) {
    throw Error(ErrorCode::kSingularIntrinsics, "camera intrinsics are singular");
  }
  const Eigen::Matrix3d r_inv = cam.rotation.inverse();
  Ray ray;
  ray.origin = -r_inv * cam.translation;
  ray.depth_step = r_inv * (k.inverse() * Eigen::Vector3d(click.x, click.y, 1.0));
  const Eigen::Vector3d p_w2 = ray.origin + ray.depth_step;
  ray.direction = (ray.origin - p_w2).normalized();
  return ray;
}

EpipolarLine ProjectRay(const Ray& ray, const Camera& target, double scene_radius) {
  const double s = scene_radius > 0.0 ? scene_radius : 1.0;
  // Target-camera depth is affine in source depth: z(d) = z0 + d * dz.
  const double z0 = target.ToCamera(ray.origin).z();
  const double dz = (target.rotation * ray.depth_step).z();
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  if (dz > 0.0) {
    lo = std::max(lo, (kNearPlane - z0) / dz);
  } else if (dz < 0.0) {
    hi = std::min(hi, (kNearPlane - z0) / dz);
  } else if (z0 <= kNearPlane) {
    hi = lo;
  }
  if (!(lo < hi)) {
    throw Error(ErrorCode::kRayBehindCamera,
                "ray never in front of camera " + std::to_string(target.id));
  }
  double d1 = 0.1 * s;
  double d2 = 10.0 * s;
  auto valid = [&](double d) { return d > lo && d < hi; };
  if (!valid(d1) || !valid(d2)) {
    if (std::isfinite(hi)) {
      d1 = lo + 0.25 * (hi - lo);
      d2 = lo + 0.75 * (hi - lo);
    } else {
      d1 = lo + 0.1 * s;
      d2 = lo + 10.0 * s;
    }
  }
  auto project = [&target](const Eigen::Vector3d& world) {
    const Eigen::Vector3d h = target.K() * target.ToCamera(world);
    return Eigen::Vector2d(h.x() / h.z(), h.y() / h.z());
  };
  EpipolarLine line;
  line.view_id = target.id;
  line.p1 = project(ray.PointAtDepth(d1));
  line.p2 = project(ray.PointAtDepth(d2));
  if ((line.p1 - line.p2).norm() < kCoincidentPx) {
    throw Error(ErrorCode::kDegenerateEpipole,
                "ray projects to a point in view " + std::to_string(target.id));
  }
  line.clipped_segment = ClipLine(line.p1, line.p2, target.width, target.height);
  return line;
}

std::vector<GridCell> BresenhamLine(GridCell from, GridCell to) {
  std::vector<GridCell> cells;
  const int dx = std::abs(to.col - from.col);
  const int dy = -std::abs(to.row - from.row);
  const int sx = from.col < to.col ? 1 : -1;
  const int sy = from.row < to.row ? 1 : -1;
  int err = dx + dy;
  GridCell c = from;
  cells.reserve(static_cast<size_t>(std::max(dx, -dy)) + 1);
  while (true) {
    cells.push_back(c);
    if (c == to) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      c.col += sx;
    }
    if (e2 <= dx) {
      err += dx;
      c.row += sy;
    }
  }
  return cells;
}

GridCell CellAt(const FeatureMap& features, double x, double y) {
  const int col = static_cast<int>(std::floor(x / features.stride));
  const int row = static_cast<int>(std::floor(y / features.stride));
  return {std::clamp(col, 0, features.grid_width - 1), std::clamp(row, 0, features.grid_height - 1)};
}

std::vector<float> FeatureAt(const FeatureMap& features, double x, double y) {
  const GridCell c = CellAt(features, x, y);
  const float* f = features.cell(c.row, c.col);
  return {f, f + features.dim};
}

std::vector<GridCell> RasterizeLine(const EpipolarLine& line, const FeatureMap& features) {
  if (!line.clipped_segment || features.grid_width <= 0 || features.grid_height <= 0) {
    throw Error(ErrorCode::kEmptySegment,
                "epipolar line misses view " + std::to_string(line.view_id));
  }
  const GridCell a = CellAt(features, line.clipped_segment->a.x(), line.clipped_segment->a.y());
  const GridCell b = CellAt(features, line.clipped_segment->b.x(), line.clipped_segment->b.y());
  return BresenhamLine(a, b);
}

Match MatchClick(const std::vector<float>& source_feature, const std::vector<GridCell>& samples,
                 const FeatureMap& features) {
  if (samples.empty()) throw Error(ErrorCode::kInvalidArgument, "no samples to match");
  if (static_cast<int>(source_feature.size()) != features.dim) {
    throw Error(ErrorCode::kDimensionMismatch, "feature dimensions differ");
  }
  Match best;
  best.affinity = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < samples.size(); ++i) {
    const float* f = features.cell(samples[i].row, samples[i].col);
    double a = 0.0;
    for (int k = 0; k < features.dim; ++k) a += static_cast<double>(source_feature[k]) * f[k];
    if (a > best.affinity) {
      best.affinity = a;
      best.sample_index = i;
    }
  }
  const GridCell& c = samples[best.sample_index];
  best.pixel = {(c.col + 0.5) * features.stride, (c.row + 0.5) * features.stride};
  return best;
}

std::vector<GridCell> AllCells(const FeatureMap& features) {
  std::vector<GridCell> cells;
  cells.reserve(static_cast<size_t>(features.grid_width) * features.grid_height);
  for (int row = 0; row < features.grid_height; ++row) {
    for (int col = 0; col < features.grid_width; ++col) cells.push_back({col, row});
  }
  return cells;
}

PropagationResult PropagateClicks(const ClickSet& clicks, const ViewSet& views,
                                  const std::vector<FeatureMap>& features,
                                  const PropagationOptions& options) {
  if (features.size() != views.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "one feature map per view required");
  }
  auto view_index = [&views](int id) -> size_t {
    for (size_t i = 0; i < views.size(); ++i) {
      if (views[i].id == id) return i;
    }
    throw Error(ErrorCode::kUnknownView, "click references absent view " + std::to_string(id));
  };
  struct Source {
    Ray ray;
    std::vector<float> feature;
  };
  std::vector<Source> sources;
  sources.reserve(clicks.size());
  for (const Click& click : clicks) {
    const size_t vi = view_index(click.view_id);
    sources.push_back({RegisterRay(click, views[vi]), FeatureAt(features[vi], click.x, click.y)});
  }

  struct PerView {
    ClickSet clicks;
    std::vector<PropagationSkip> skipped;
  };
  std::vector<PerView> per_view(views.size());
  ParallelFor(views.size(), [&](size_t vi) {
    const Camera& target = views[vi];
    for (size_t ci = 0; ci < clicks.size(); ++ci) {
      if (clicks[ci].view_id == target.id) continue;
      try {
        std::vector<GridCell> samples;
        if (options.epipolar) {
          const EpipolarLine line = ProjectRay(sources[ci].ray, target, options.scene_radius);
          samples = RasterizeLine(line, features[vi]);
        } else {
          samples = AllCells(features[vi]);
        }
        const Match m = MatchClick(sources[ci].feature, samples, features[vi]);
        Click out = clicks[ci];
        out.view_id = target.id;
        out.x = std::min(m.pixel.x(), std::nextafter(double(target.width), 0.0));
        out.y = std::min(m.pixel.y(), std::nextafter(double(target.height), 0.0));
        out.source = ClickSource::kPropagated;
        per_view[vi].clicks.push_back(out);
      } catch (const Error& e) {
        per_view[vi].skipped.push_back({target.id, ci, std::string(ErrorCodeName(e.code()))});
      }
    }
  });

  PropagationResult result;
  result.clicks = clicks;
  for (auto& pv : per_view) {
    result.clicks.insert(result.clicks.end(), pv.clicks.begin(), pv.clicks.end());
    result.skipped.insert(result.skipped.end(), pv.skipped.begin(), pv.skipped.end());
  }
  return result;
}

}  // namespace gsculpt
