#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fieldmap/backend.hpp"
#include "fieldmap/icp.hpp"
#include "fieldmap/simulator.hpp"

namespace fieldmap {

// ---------------------------------------------------------------------------
// Scene-level drivers shared by the CLI, the evaluation module, and tests.
// ---------------------------------------------------------------------------

inline SlamConfig default_slam_config(const Scene& scene) {
  SlamConfig cfg;
  cfg.match = MatchParams::defaults_for(scene.config.camera);
  cfg.motion_max_vertical = cfg.match.epsilon;
  cfg.nominal_step = Vec3(scene.config.trajectory.speed, 0.0, 0.0);
  cfg.backend.sigma_px = std::max(scene.config.noise.pixel_sigma, 0.25);
  return cfg;
}

struct SlamRunResult {
  TrackState state;
  DistanceMapped dm;
  double range_length = 0.0;
  int frames_total = 0;
  int frames_processed = 0;
  std::map<int, PoseSE3> trajectory;
  std::vector<Landmark> landmarks;
  std::vector<FrameSummary> frames;
};

// Runs match -> filter -> backend over every frame of a scene, stopping at
// track loss or a back-end failure (a result, not an error).
inline SlamRunResult run_slam_on_scene(const Scene& scene, const SlamConfig& cfg) {
  SlamSystem slam(scene.config.camera, cfg);
  SlamRunResult out;
  out.frames_total = scene.frame_count();
  for (int f = 0; f < out.frames_total; ++f) {
    const FrameDetections* left = scene.find(f, CameraSide::kLeft);
    const FrameDetections* right = scene.find(f, CameraSide::kRight);
    if (left == nullptr || right == nullptr) continue;
    slam.process_frame(f, left->keypoints, right->keypoints);
    ++out.frames_processed;
    if (slam.state().status != TrackState::Status::kTracking) break;
  }
  out.state = slam.state();
  out.trajectory = slam.trajectory();
  out.landmarks = slam.landmarks();
  out.frames = slam.frames();
  out.range_length = scene.config.range_length;
  if (scene.is_orbit()) {
    double arc = 0.0;
    const PoseSE3* prev = nullptr;
    for (const auto& [id, pose] : scene.gt.trajectory) {
      (void)id;
      if (prev != nullptr) arc += (pose.translation() - prev->translation()).norm();
      prev = &pose;
    }
    out.range_length = arc;
  }
  out.dm = distance_mapped(out.trajectory, out.state, out.range_length);
  return out;
}

struct ReconstructOptions {
  IcpMode mode = IcpMode::kSeedCenters;
  IcpConfig icp;
  double fuse_cell = 0.03;
  double pre_downsample_cell = 0.0;  // applied per frame before registration; 0 = off
  MatchParams match;                 // stereo association for seed centers
  double motion_max_vertical = 16.0;
  double min_disparity = 0.5;

  static ReconstructOptions defaults_for(const Scene& scene, IcpMode mode) {
    ReconstructOptions opt;
    opt.mode = mode;
    opt.icp.mode = mode;
    opt.icp.correspondence_radius = mode == IcpMode::kSeedCenters ? 0.05 : 0.02;
    opt.match = MatchParams::defaults_for(scene.config.camera);
    opt.motion_max_vertical = opt.match.epsilon;
    return opt;
  }
};

struct FrameRegistration {
  int frame_id = 0;
  bool attempted = false;
  bool fk_fallback = false;
  int iterations = 0;
  double rms = 0.0;
  bool converged = false;
  int inliers = 0;
  std::string error;
  PoseSE3 relative;  // adopted transform: previous frame <- this frame
};

struct ReconstructResult {
  IcpMode mode = IcpMode::kFullCloud;
  PointCloud fused;
  std::map<int, PoseSE3> refined;  // world poses after chained refinement
  std::vector<FrameRegistration> reports;
  int seed_points_skipped = 0;
};

namespace detail {

// Stereo-matched seed centers of one frame, triangulated into its camera
// frame using the structural matcher.
inline PointCloud frame_seed_centers(const Scene& scene, int frame_id,
                                     const ReconstructOptions& opt, int* skipped) {
  const FrameDetections* left = scene.find(frame_id, CameraSide::kLeft);
  const FrameDetections* right = scene.find(frame_id, CameraSide::kRight);
  if (left == nullptr || right == nullptr || left->keypoints.empty() ||
      right->keypoints.empty()) {
    return PointCloud{};
  }
  const BipartiteGraph graph{left->keypoints, right->keypoints};
  Assignment a = solve_lsap(build_cost_matrix(graph, opt.match));
  a = filter_by_cost(a, opt.match.cost_threshold);
  a = filter_by_motion(a, graph, opt.motion_max_vertical, TravelDirection::kRightToLeft);
  std::vector<std::pair<ImagePoint, ImagePoint>> pairs;
  pairs.reserve(a.matches.size());
  for (const Match& m : a.matches) {
    pairs.emplace_back(left->keypoints[m.u_index].center, right->keypoints[m.v_index].center);
  }
  return seed_center_cloud(pairs, scene.config.camera, opt.min_disparity, skipped);
}

}  // namespace detail

// Chained reconstruction: every frame registers to the previous refined frame
// (full clouds or seed centers depending on mode), ICP failures fall back to
// the forward-kinematics relative pose, and the full clouds are fused at the
// refined world poses.
inline ReconstructResult reconstruct_scene(const Scene& scene, const ReconstructOptions& opt) {
  if (scene.clouds.empty()) {
    throw InputIoError("reconstruct: scene has no clouds/ directory");
  }
  if (scene.fk_trajectory.empty()) {
    throw InputIoError("reconstruct: scene has no fk/trajectory.txt");
  }
  ReconstructResult result;
  result.mode = opt.mode;

  std::vector<int> frame_ids;
  for (const auto& [id, cloud] : scene.clouds) {
    (void)cloud;
    frame_ids.push_back(id);
  }
  std::sort(frame_ids.begin(), frame_ids.end());

  // Registration inputs per frame.
  std::map<int, PointCloud> reg_clouds;
  for (const int f : frame_ids) {
    if (opt.mode == IcpMode::kSeedCenters) {
      int skipped = 0;
      reg_clouds[f] = detail::frame_seed_centers(scene, f, opt, &skipped);
      result.seed_points_skipped += skipped;
    } else if (opt.pre_downsample_cell > 0.0) {
      reg_clouds[f] = voxel_downsample(scene.clouds.at(f), opt.pre_downsample_cell);
    } else {
      reg_clouds[f] = scene.clouds.at(f);
    }
  }

  const int first = frame_ids.front();
  result.refined.emplace(first, scene.fk_trajectory.at(first));
  {
    FrameRegistration rep;
    rep.frame_id = first;
    rep.relative = PoseSE3();
    result.reports.push_back(rep);
  }

  for (std::size_t k = 1; k < frame_ids.size(); ++k) {
    const int cur = frame_ids[k];
    const int prev = frame_ids[k - 1];
    const PoseSE3 fk_rel = scene.fk_trajectory.at(prev).inverse() * scene.fk_trajectory.at(cur);
    FrameRegistration rep;
    rep.frame_id = cur;
    rep.attempted = true;
    rep.relative = fk_rel;
    try {
      const IcpResult icp = icp_align(reg_clouds.at(cur), reg_clouds.at(prev), fk_rel, opt.icp);
      rep.iterations = icp.iterations;
      rep.rms = icp.rms_error;
      rep.converged = icp.converged;
      rep.inliers = icp.inlier_count;
      rep.relative = icp.transform;
    } catch (const Error& e) {
      rep.fk_fallback = true;
      rep.error = e.what();
    }
    result.refined.emplace(cur, result.refined.at(prev) * rep.relative);
    result.reports.push_back(rep);
  }

  std::vector<std::pair<PointCloud, PoseSE3>> frames;
  frames.reserve(frame_ids.size());
  for (const int f : frame_ids) {
    if (opt.pre_downsample_cell > 0.0) {
      frames.emplace_back(voxel_downsample(scene.clouds.at(f), opt.pre_downsample_cell),
                          result.refined.at(f));
    } else {
      frames.emplace_back(scene.clouds.at(f), result.refined.at(f));
    }
  }
  result.fused = fuse(frames, opt.fuse_cell);
  return result;
}

}  // namespace fieldmap
