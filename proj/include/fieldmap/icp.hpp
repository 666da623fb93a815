#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fieldmap/camera.hpp"
#include "fieldmap/error.hpp"
#include "fieldmap/geometry.hpp"
#include "fieldmap/point_cloud.hpp"

namespace fieldmap {

enum class IcpMode { kFullCloud, kSeedCenters };

inline std::string to_string(IcpMode m) {
  return m == IcpMode::kFullCloud ? "full_cloud" : "seed_centers";
}

inline IcpMode icp_mode_from_string(const std::string& s) {
  if (s == "full_cloud" || s == "full-cloud") return IcpMode::kFullCloud;
  if (s == "seed_centers" || s == "seed-centers") return IcpMode::kSeedCenters;
  throw ConfigError("unknown icp mode: " + s);
}

struct IcpConfig {
  IcpMode mode = IcpMode::kFullCloud;
  int max_iterations = 50;
  double correspondence_radius = 0.02;  // meters; 0.05 suits sparse seed centers
  double convergence_tol = 1e-6;        // meters, change in inlier RMS
  double trim_fraction = 0.1;           // worst correspondences dropped, [0, 0.5)
};

struct IcpResult {
  PoseSE3 transform;  // source -> target
  double rms_error = 0.0;
  int iterations = 0;
  bool converged = false;
  int inlier_count = 0;
};

namespace detail {

// Uniform hash grid over a fixed point set, cell size = query radius, so any
// neighbor within the radius lies in one of the 27 adjacent cells.
class PointGrid {
 public:
  PointGrid(const std::vector<Vec3>& points, double cell) : points_(points), cell_(cell) {
    buckets_.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      buckets_[key_of(points[i])].push_back(static_cast<int>(i));
    }
  }

  // Nearest point within `radius`; ties resolve to the lowest index.
  int nearest_within(const Vec3& q, double radius, double* dist_out = nullptr) const {
    const std::int64_t qx = coord(q.x());
    const std::int64_t qy = coord(q.y());
    const std::int64_t qz = coord(q.z());
    int best = -1;
    double best_d2 = radius * radius;
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          const auto it = buckets_.find(pack(qx + dx, qy + dy, qz + dz));
          if (it == buckets_.end()) continue;
          for (const int i : it->second) {
            const double d2 = (points_[i] - q).squaredNorm();
            if (d2 < best_d2 || (d2 == best_d2 && best >= 0 && i < best)) {
              best_d2 = d2;
              best = i;
            }
          }
        }
      }
    }
    if (best >= 0 && dist_out != nullptr) *dist_out = std::sqrt(best_d2);
    return best;
  }

 private:
  std::int64_t coord(double v) const { return static_cast<std::int64_t>(std::floor(v / cell_)); }

  std::uint64_t key_of(const Vec3& p) const {
    return pack(coord(p.x()), coord(p.y()), coord(p.z()));
  }

  static std::uint64_t pack(std::int64_t x, std::int64_t y, std::int64_t z) {
    const std::uint64_t a = static_cast<std::uint64_t>(x) * 0x9e3779b97f4a7c15ULL;
    const std::uint64_t b = static_cast<std::uint64_t>(y) * 0xc2b2ae3d27d4eb4fULL;
    const std::uint64_t c = static_cast<std::uint64_t>(z) * 0x165667b19e3779f9ULL;
    return a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)) ^ (c << 1);
  }

  const std::vector<Vec3>& points_;
  double cell_;
  std::unordered_map<std::uint64_t, std::vector<int>> buckets_;
};

struct Correspondences {
  std::vector<int> src;
  std::vector<int> tgt;
  std::vector<double> dist;
  double rms = 0.0;
};

inline Correspondences find_correspondences(const std::vector<Vec3>& source, const PoseSE3& T,
                                            const PointGrid& grid,
                                            const std::vector<Vec3>& target, double radius,
                                            double trim_fraction) {
  (void)target;
  Correspondences c;
  for (std::size_t i = 0; i < source.size(); ++i) {
    double d = 0.0;
    const int j = grid.nearest_within(T * source[i], radius, &d);
    if (j >= 0) {
      c.src.push_back(static_cast<int>(i));
      c.tgt.push_back(j);
      c.dist.push_back(d);
    }
  }
  if (c.src.size() >= 3 && trim_fraction > 0.0) {
    const std::size_t keep = std::max<std::size_t>(
        3, static_cast<std::size_t>(std::ceil((1.0 - trim_fraction) * c.src.size())));
    if (keep < c.src.size()) {
      std::vector<int> order(c.src.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (c.dist[a] != c.dist[b]) return c.dist[a] < c.dist[b];
        return a < b;
      });
      Correspondences kept;
      for (std::size_t i = 0; i < keep; ++i) {
        kept.src.push_back(c.src[order[i]]);
        kept.tgt.push_back(c.tgt[order[i]]);
        kept.dist.push_back(c.dist[order[i]]);
      }
      c = std::move(kept);
    }
  }
  double sum = 0.0;
  for (const double d : c.dist) sum += d * d;
  c.rms = c.dist.empty() ? 0.0 : std::sqrt(sum / static_cast<double>(c.dist.size()));
  return c;
}

}  // namespace detail

// Point-to-point ICP: alternate nearest-neighbor correspondence (within
// correspondence_radius, worst trim_fraction dropped) with a closed-form
// rigid fit, until the inlier RMS stops improving by more than the tolerance.
// A refit is only adopted if it does not increase the inlier RMS; the best
// transform seen is returned.
inline IcpResult icp_align(const PointCloud& source, const PointCloud& target,
                           const PoseSE3& initial, const IcpConfig& config) {
  if (!(config.trim_fraction >= 0.0 && config.trim_fraction < 0.5)) {
    throw Error("icp_align: trim_fraction must be in [0, 0.5)");
  }
  const detail::PointGrid grid(target.points, config.correspondence_radius);

  auto correspondences = [&](const PoseSE3& T) {
    detail::Correspondences c =
        detail::find_correspondences(source.points, T, grid, target.points,
                                     config.correspondence_radius, config.trim_fraction);
    if (c.src.size() < 3) {
      throw InsufficientOverlap("icp_align: " + std::to_string(c.src.size()) +
                                " correspondences (need 3)");
    }
    return c;
  };

  IcpResult result;
  result.transform = initial;
  detail::Correspondences current = correspondences(initial);
  result.rms_error = current.rms;
  result.inlier_count = static_cast<int>(current.src.size());

  for (int iter = 0; iter < config.max_iterations; ++iter) {
    // Rigid fit from the original source points to their matched targets.
    std::vector<Vec3> src_pts(current.src.size()), tgt_pts(current.src.size());
    for (std::size_t k = 0; k < current.src.size(); ++k) {
      src_pts[k] = source.points[current.src[k]];
      tgt_pts[k] = target.points[current.tgt[k]];
    }
    const PoseSE3 refit = umeyama_rigid(src_pts, tgt_pts);

    detail::Correspondences next = correspondences(refit);
    ++result.iterations;

    if (next.rms > result.rms_error + 1e-15) {
      break;  // would increase the inlier RMS; keep the best transform
    }
    const double improvement = result.rms_error - next.rms;
    result.transform = refit;
    result.rms_error = next.rms;
    result.inlier_count = static_cast<int>(next.src.size());
    current = std::move(next);
    if (improvement < config.convergence_tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

// One triangulated 3D point per stereo-matched seed, in the camera frame.
// Seeds whose disparity fails the floor are skipped and counted.
inline PointCloud seed_center_cloud(const std::vector<std::pair<ImagePoint, ImagePoint>>& matches,
                                    const StereoCamera& cam, double min_disparity = 0.5,
                                    int* skipped = nullptr) {
  PointCloud cloud;
  int bad = 0;
  for (const auto& [left, right] : matches) {
    try {
      cloud.push_back(triangulate(left, right, cam, min_disparity));
    } catch (const NonPositiveDisparity&) {
      ++bad;
    }
  }
  if (skipped != nullptr) *skipped = bad;
  return cloud;
}

// Transform per-frame clouds into the world frame, concatenate, and collapse
// with a voxel grid (0.03 m default spacing).
inline PointCloud fuse(const std::vector<std::pair<PointCloud, PoseSE3>>& frames,
                       double cell = 0.03) {
  PointCloud merged;
  bool all_colored = !frames.empty();
  for (const auto& [cloud, pose] : frames) {
    (void)pose;
    all_colored = all_colored && cloud.has_colors();
  }
  for (const auto& [cloud, pose] : frames) {
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      if (all_colored) {
        merged.push_back(pose * cloud.points[i], cloud.colors[i]);
      } else {
        merged.push_back(pose * cloud.points[i]);
      }
    }
  }
  if (merged.empty()) return merged;
  return voxel_downsample(merged, cell);
}

struct BlurMetrics {
  double seed_rms = 0.0;  // RMS distance of assigned points to their seed center
  double spread = 0.0;    // mean per-seed RMS dispersion about the per-seed centroid
  int points_used = 0;
  int seeds_hit = 0;
};

// Sharpness of a fused reconstruction against ground-truth seed centers:
// every fused point within `radius` of its nearest center contributes. Lower
// is sharper; misregistered frames smear a seed's points apart, which shows
// up in `spread` directly.
inline BlurMetrics blur_metric(const PointCloud& fused, const std::vector<Vec3>& gt_seed_centers,
                               double radius) {
  if (gt_seed_centers.empty()) {
    throw NoGroundTruth("blur_metric: no ground-truth seed centers");
  }
  if (fused.empty()) {
    throw EmptyInput("blur_metric: empty fused cloud");
  }
  const detail::PointGrid grid(gt_seed_centers, radius);
  std::map<int, std::vector<Vec3>> per_seed;
  double sq_sum = 0.0;
  int used = 0;
  for (const Vec3& p : fused.points) {
    double d = 0.0;
    const int seed = grid.nearest_within(p, radius, &d);
    if (seed < 0) continue;
    per_seed[seed].push_back(p);
    sq_sum += d * d;
    ++used;
  }
  BlurMetrics out;
  out.points_used = used;
  out.seeds_hit = static_cast<int>(per_seed.size());
  if (used == 0) return out;
  out.seed_rms = std::sqrt(sq_sum / static_cast<double>(used));
  double spread_sum = 0.0;
  for (const auto& [seed, pts] : per_seed) {
    (void)seed;
    Vec3 centroid = Vec3::Zero();
    for (const Vec3& p : pts) centroid += p;
    centroid /= static_cast<double>(pts.size());
    double s = 0.0;
    for (const Vec3& p : pts) s += (p - centroid).squaredNorm();
    spread_sum += std::sqrt(s / static_cast<double>(pts.size()));
  }
  out.spread = spread_sum / static_cast<double>(per_seed.size());
  return out;
}

}  // namespace fieldmap
