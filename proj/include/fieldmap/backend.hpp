#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fieldmap/association.hpp"
#include "fieldmap/camera.hpp"
#include "fieldmap/error.hpp"
#include "fieldmap/geometry.hpp"
#include "fieldmap/landmark.hpp"
#include "fieldmap/log.hpp"

namespace fieldmap {

// ---------------------------------------------------------------------------
// Factor graph over camera poses (camera-to-world) and 3D seed landmarks.
// Pose increments use the right perturbation from geometry.hpp:
//   R <- R exp(omega^), t <- t + R nu, delta = (omega, nu).
// All residuals below are whitened by their sigmas.
// ---------------------------------------------------------------------------

struct StereoObservation {
  ImagePoint left;
  ImagePoint right;
};

struct ProjectionFactor {
  int frame_id = 0;
  int landmark_id = 0;
  StereoObservation obs;
};

struct OdometryFactor {
  int frame_a = 0;
  int frame_b = 0;
  PoseSE3 relative;  // pose of camera b expressed in camera a's frame
};

struct PriorFactor {
  int frame_id = 0;
  PoseSE3 pose;
};

class FactorGraph {
 public:
  FactorGraph() = default;
  explicit FactorGraph(const StereoCamera& cam) : camera_(cam) {}

  const StereoCamera& camera() const { return camera_; }
  void set_camera(const StereoCamera& cam) { camera_ = cam; }

  void add_pose(int frame_id, const PoseSE3& pose) {
    if (!poses_.emplace(frame_id, pose).second) {
      throw Error("add_pose: frame " + std::to_string(frame_id) + " already present");
    }
  }

  void add_landmark(int id, const Vec3& position) {
    if (!landmarks_.emplace(id, position).second) {
      throw Error("add_landmark: id " + std::to_string(id) + " already present");
    }
  }

  void add_projection(const ProjectionFactor& f) {
    require_pose(f.frame_id);
    if (landmarks_.count(f.landmark_id) == 0) {
      throw Error("add_projection: unknown landmark " + std::to_string(f.landmark_id));
    }
    projection_factors_.push_back(f);
  }

  void add_odometry(const OdometryFactor& f) {
    require_pose(f.frame_a);
    require_pose(f.frame_b);
    odometry_factors_.push_back(f);
  }

  void add_prior(const PriorFactor& f) {
    require_pose(f.frame_id);
    prior_factors_.push_back(f);
  }

  const std::map<int, PoseSE3>& poses() const { return poses_; }
  const std::map<int, Vec3>& landmarks() const { return landmarks_; }
  const std::vector<ProjectionFactor>& projection_factors() const { return projection_factors_; }
  const std::vector<OdometryFactor>& odometry_factors() const { return odometry_factors_; }
  const std::vector<PriorFactor>& prior_factors() const { return prior_factors_; }

  const PoseSE3& pose(int frame_id) const {
    const auto it = poses_.find(frame_id);
    if (it == poses_.end()) throw Error("unknown pose " + std::to_string(frame_id));
    return it->second;
  }

  const Vec3& landmark(int id) const {
    const auto it = landmarks_.find(id);
    if (it == landmarks_.end()) throw Error("unknown landmark " + std::to_string(id));
    return it->second;
  }

  void set_pose(int frame_id, const PoseSE3& pose) { poses_.at(frame_id) = pose; }
  void set_landmark(int id, const Vec3& p) { landmarks_.at(id) = p; }

 private:
  void require_pose(int frame_id) const {
    if (poses_.count(frame_id) == 0) {
      throw Error("factor references unknown pose " + std::to_string(frame_id));
    }
  }

  StereoCamera camera_;
  std::map<int, PoseSE3> poses_;
  std::map<int, Vec3> landmarks_;
  std::vector<ProjectionFactor> projection_factors_;
  std::vector<OdometryFactor> odometry_factors_;
  std::vector<PriorFactor> prior_factors_;
};

// Stereo reprojection residual [u_l, v_l, u_r, v_r], whitened by sigma_px.
// Throws BehindCamera when the landmark sits at or behind the camera plane.
inline Vec4 stereo_residual(const PoseSE3& pose_wc, const Vec3& point_w,
                            const StereoObservation& obs, const StereoCamera& cam,
                            double sigma_px, Eigen::Matrix<double, 4, 6>* j_pose = nullptr,
                            Eigen::Matrix<double, 4, 3>* j_point = nullptr) {
  const Mat3 r_wc = pose_wc.rotation_matrix();
  const Vec3 p = r_wc.transpose() * (point_w - pose_wc.translation());
  if (p.z() <= 0.0) {
    throw BehindCamera("stereo_residual: landmark behind camera (z = " +
                       std::to_string(p.z()) + ")");
  }
  const double inv_z = 1.0 / p.z();
  const double inv_s = 1.0 / sigma_px;
  Vec4 res;
  res(0) = cam.fx * p.x() * inv_z + cam.cx - obs.left.u;
  res(1) = cam.fy * p.y() * inv_z + cam.cy - obs.left.v;
  res(2) = cam.fx * (p.x() - cam.baseline) * inv_z + cam.cx - obs.right.u;
  res(3) = cam.fy * p.y() * inv_z + cam.cy - obs.right.v;
  res *= inv_s;

  if (j_pose != nullptr || j_point != nullptr) {
    Eigen::Matrix<double, 4, 3> j_proj;
    const double fx_z = cam.fx * inv_z;
    const double fy_z = cam.fy * inv_z;
    j_proj << fx_z, 0.0, -cam.fx * p.x() * inv_z * inv_z,
              0.0, fy_z, -cam.fy * p.y() * inv_z * inv_z,
              fx_z, 0.0, -cam.fx * (p.x() - cam.baseline) * inv_z * inv_z,
              0.0, fy_z, -cam.fy * p.y() * inv_z * inv_z;
    j_proj *= inv_s;
    if (j_pose != nullptr) {
      // d p_cam / d omega = [p]x,  d p_cam / d nu = -I
      j_pose->leftCols<3>() = j_proj * skew(p);
      j_pose->rightCols<3>() = -j_proj;
    }
    if (j_point != nullptr) {
      *j_point = j_proj * r_wc.transpose();
    }
  }
  return res;
}

// Relative-pose residual [log(R_z^T R_a^T R_b); R_a^T (t_b - t_a) - t_z].
inline Vec6 odometry_residual(const PoseSE3& pose_a, const PoseSE3& pose_b,
                              const PoseSE3& measured, double sigma_rot, double sigma_trans,
                              Eigen::Matrix<double, 6, 6>* j_a = nullptr,
                              Eigen::Matrix<double, 6, 6>* j_b = nullptr) {
  const Mat3 ra = pose_a.rotation_matrix();
  const Mat3 rb = pose_b.rotation_matrix();
  const Mat3 rz = measured.rotation_matrix();
  const Mat3 e = rz.transpose() * ra.transpose() * rb;
  const Vec3 phi = so3_log(e);
  const Vec3 t_est = ra.transpose() * (pose_b.translation() - pose_a.translation());

  Vec6 res;
  res.head<3>() = phi / sigma_rot;
  res.tail<3>() = (t_est - measured.translation()) / sigma_trans;

  if (j_a != nullptr || j_b != nullptr) {
    const Mat3 jr_inv = so3_right_jacobian_inv(phi);
    const Mat3 jl_inv = so3_left_jacobian_inv(phi);
    if (j_b != nullptr) {
      j_b->setZero();
      j_b->block<3, 3>(0, 0) = jr_inv / sigma_rot;
      j_b->block<3, 3>(3, 3) = (ra.transpose() * rb) / sigma_trans;
    }
    if (j_a != nullptr) {
      j_a->setZero();
      j_a->block<3, 3>(0, 0) = -(jl_inv * rz.transpose()) / sigma_rot;
      j_a->block<3, 3>(3, 0) = skew(t_est) / sigma_trans;
      j_a->block<3, 3>(3, 3) = -Mat3::Identity() / sigma_trans;
    }
  }
  return res;
}

// Absolute-pose anchor residual [log(R_p^T R); t - t_p].
inline Vec6 prior_residual(const PoseSE3& pose, const PoseSE3& prior, double sigma_rot,
                           double sigma_trans, Eigen::Matrix<double, 6, 6>* j = nullptr) {
  const Mat3 e = prior.rotation_matrix().transpose() * pose.rotation_matrix();
  const Vec3 phi = so3_log(e);
  Vec6 res;
  res.head<3>() = phi / sigma_rot;
  res.tail<3>() = (pose.translation() - prior.translation()) / sigma_trans;
  if (j != nullptr) {
    j->setZero();
    j->block<3, 3>(0, 0) = so3_right_jacobian_inv(phi) / sigma_rot;
    j->block<3, 3>(3, 3) = pose.rotation_matrix() / sigma_trans;
  }
  return res;
}

struct BackendConfig {
  double sigma_px = 1.0;           // pixels
  double sigma_odo_trans = 0.02;   // meters per frame
  double sigma_odo_rot = 1.0 * M_PI / 180.0;
  double sigma_prior_trans = 1e-6;
  double sigma_prior_rot = 1e-6;
  bool huber = true;
  double huber_delta = 2.0;  // on the whitened reprojection residual
  int max_iterations = 50;
  double lambda_init = 1e-4;
  double lambda_max = 1e12;
  double tol = 1e-12;          // relative cost decrease
  double gradient_tol = 1e-10; // infinity norm on the gradient
  double cost_floor = 1e-13;   // absolute cost below which the fit is exact
  int window = 10;             // sliding-window length in keyframes
  bool full_batch = false;
};

struct OptimizeSummary {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
  bool failure = false;
  std::string failure_reason;
  std::vector<double> cost_history;
};

namespace detail {

struct ActiveProjection {
  const ProjectionFactor* factor;
  int pose_block;  // -1 if the pose is fixed
  int lm_block;    // -1 if the landmark is fixed (never when pose_block >= 0)
};

struct ActivePosePair {
  const OdometryFactor* factor;
  int block_a;  // -1 if fixed
  int block_b;
};

struct ActivePrior {
  const PriorFactor* factor;
  int block;
};

// Huber loss on the whitened squared norm s; returns rho(s) and the IRLS
// weight rho'(s).
inline std::pair<double, double> huber_loss(double s, double delta, bool enabled) {
  if (!enabled || s <= delta * delta) return {s, 1.0};
  const double rs = std::sqrt(s);
  return {2.0 * delta * rs - delta * delta, delta / rs};
}

// Non-throwing projection evaluation for the optimizer; behind-camera states
// contribute a large constant cost with zero gradient so the step that caused
// them is rejected.
inline bool eval_projection(const PoseSE3& pose, const Vec3& point, const StereoObservation& obs,
                            const StereoCamera& cam, double sigma_px, Vec4& res,
                            Eigen::Matrix<double, 4, 6>* jp, Eigen::Matrix<double, 4, 3>* jl) {
  const Vec3 p = pose.rotation_matrix().transpose() * (point - pose.translation());
  if (p.z() <= 1e-9) {
    res.setConstant(1e3);
    if (jp != nullptr) jp->setZero();
    if (jl != nullptr) jl->setZero();
    return false;
  }
  res = stereo_residual(pose, point, obs, cam, sigma_px, jp, jl);
  return true;
}

}  // namespace detail

// Levenberg-Marquardt over the graph. Poses with frame_id >= first_active_frame
// are free; older poses stay fixed (sliding window). Landmarks are free iff
// they are observed by at least one free pose. The first-pose prior fixes the
// gauge, so the normal equations are positive definite for a connected graph.
inline OptimizeSummary optimize(FactorGraph& graph, const BackendConfig& cfg,
                                int first_active_frame = std::numeric_limits<int>::min()) {
  using Mat63 = Eigen::Matrix<double, 6, 3>;
  using Mat66 = Eigen::Matrix<double, 6, 6>;
  using Mat46 = Eigen::Matrix<double, 4, 6>;
  using Mat43 = Eigen::Matrix<double, 4, 3>;

  OptimizeSummary summary;

  // Variable indexing.
  std::map<int, int> pose_block;
  std::vector<int> pose_ids;
  for (const auto& [id, pose] : graph.poses()) {
    (void)pose;
    if (id >= first_active_frame) {
      pose_block[id] = static_cast<int>(pose_ids.size());
      pose_ids.push_back(id);
    }
  }
  std::set<int> free_lm_set;
  for (const auto& f : graph.projection_factors()) {
    if (pose_block.count(f.frame_id) > 0) free_lm_set.insert(f.landmark_id);
  }
  std::map<int, int> lm_block;
  std::vector<int> lm_ids;
  for (int id : free_lm_set) {
    lm_block[id] = static_cast<int>(lm_ids.size());
    lm_ids.push_back(id);
  }
  const int np = static_cast<int>(pose_ids.size());
  const int nl = static_cast<int>(lm_ids.size());
  if (np == 0) {
    summary.converged = true;
    return summary;
  }
  if (graph.prior_factors().empty()) {
    throw Error("optimize: graph has no prior factor to fix the gauge");
  }

  // Active factors.
  std::vector<detail::ActiveProjection> projections;
  for (const auto& f : graph.projection_factors()) {
    const auto pit = pose_block.find(f.frame_id);
    const auto lit = lm_block.find(f.landmark_id);
    const int pb = pit == pose_block.end() ? -1 : pit->second;
    const int lb = lit == lm_block.end() ? -1 : lit->second;
    if (pb >= 0 || lb >= 0) projections.push_back({&f, pb, lb});
  }
  std::vector<detail::ActivePosePair> odometries;
  for (const auto& f : graph.odometry_factors()) {
    const auto ait = pose_block.find(f.frame_a);
    const auto bit = pose_block.find(f.frame_b);
    const int ba = ait == pose_block.end() ? -1 : ait->second;
    const int bb = bit == pose_block.end() ? -1 : bit->second;
    if (ba >= 0 || bb >= 0) odometries.push_back({&f, ba, bb});
  }
  std::vector<detail::ActivePrior> priors;
  for (const auto& f : graph.prior_factors()) {
    const auto it = pose_block.find(f.frame_id);
    if (it != pose_block.end()) priors.push_back({&f, it->second});
  }

  struct State {
    std::map<int, PoseSE3> poses;
    std::map<int, Vec3> landmarks;
  };
  State state{graph.poses(), graph.landmarks()};
  const StereoCamera& cam = graph.camera();

  auto total_cost = [&](const State& s) {
    double cost = 0.0;
    Vec4 res4;
    for (const auto& ap : projections) {
      detail::eval_projection(s.poses.at(ap.factor->frame_id),
                              s.landmarks.at(ap.factor->landmark_id), ap.factor->obs, cam,
                              cfg.sigma_px, res4, nullptr, nullptr);
      cost += detail::huber_loss(res4.squaredNorm(), cfg.huber_delta, cfg.huber).first;
    }
    for (const auto& ao : odometries) {
      const Vec6 r = odometry_residual(s.poses.at(ao.factor->frame_a),
                                       s.poses.at(ao.factor->frame_b), ao.factor->relative,
                                       cfg.sigma_odo_rot, cfg.sigma_odo_trans);
      cost += r.squaredNorm();
    }
    for (const auto& aprior : priors) {
      const Vec6 r = prior_residual(s.poses.at(aprior.factor->frame_id), aprior.factor->pose,
                                    cfg.sigma_prior_rot, cfg.sigma_prior_trans);
      cost += r.squaredNorm();
    }
    return cost;
  };

  double cost = total_cost(state);
  summary.initial_cost = cost;
  summary.cost_history.push_back(cost);
  if (!std::isfinite(cost)) {
    summary.failure = true;
    summary.failure_reason = "non-finite initial cost";
    summary.final_cost = cost;
    return summary;
  }
  if (cost <= cfg.cost_floor) {
    summary.converged = true;
    summary.final_cost = cost;
    return summary;
  }

  double lambda = cfg.lambda_init;

  Eigen::MatrixXd h_pp(6 * np, 6 * np);
  Eigen::VectorXd g_p(6 * np);
  std::vector<Mat3> h_ll(nl);
  std::vector<Vec3> g_l(nl);
  // Per-landmark off-diagonal blocks, keyed by pose block.
  std::vector<std::map<int, Mat63>> h_pl(nl);

  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    h_pp.setZero();
    g_p.setZero();
    for (int l = 0; l < nl; ++l) {
      h_ll[l].setZero();
      g_l[l].setZero();
      h_pl[l].clear();
    }

    Vec4 res4;
    Mat46 jp4;
    Mat43 jl4;
    for (const auto& ap : projections) {
      detail::eval_projection(state.poses.at(ap.factor->frame_id),
                              state.landmarks.at(ap.factor->landmark_id), ap.factor->obs, cam,
                              cfg.sigma_px, res4, ap.pose_block >= 0 ? &jp4 : nullptr,
                              ap.lm_block >= 0 ? &jl4 : nullptr);
      const double w = detail::huber_loss(res4.squaredNorm(), cfg.huber_delta, cfg.huber).second;
      if (ap.pose_block >= 0) {
        h_pp.block<6, 6>(6 * ap.pose_block, 6 * ap.pose_block) += w * jp4.transpose() * jp4;
        g_p.segment<6>(6 * ap.pose_block) += w * jp4.transpose() * res4;
      }
      if (ap.lm_block >= 0) {
        h_ll[ap.lm_block] += w * jl4.transpose() * jl4;
        g_l[ap.lm_block] += w * jl4.transpose() * res4;
        if (ap.pose_block >= 0) {
          auto [it, inserted] = h_pl[ap.lm_block].try_emplace(ap.pose_block, Mat63::Zero());
          (void)inserted;
          it->second += w * jp4.transpose() * jl4;
        }
      }
    }
    Mat66 ja, jb;
    for (const auto& ao : odometries) {
      const Vec6 r = odometry_residual(state.poses.at(ao.factor->frame_a),
                                       state.poses.at(ao.factor->frame_b), ao.factor->relative,
                                       cfg.sigma_odo_rot, cfg.sigma_odo_trans,
                                       ao.block_a >= 0 ? &ja : nullptr,
                                       ao.block_b >= 0 ? &jb : nullptr);
      if (ao.block_a >= 0) {
        h_pp.block<6, 6>(6 * ao.block_a, 6 * ao.block_a) += ja.transpose() * ja;
        g_p.segment<6>(6 * ao.block_a) += ja.transpose() * r;
      }
      if (ao.block_b >= 0) {
        h_pp.block<6, 6>(6 * ao.block_b, 6 * ao.block_b) += jb.transpose() * jb;
        g_p.segment<6>(6 * ao.block_b) += jb.transpose() * r;
      }
      if (ao.block_a >= 0 && ao.block_b >= 0) {
        h_pp.block<6, 6>(6 * ao.block_a, 6 * ao.block_b) += ja.transpose() * jb;
        h_pp.block<6, 6>(6 * ao.block_b, 6 * ao.block_a) += jb.transpose() * ja;
      }
    }
    Mat66 jprior;
    for (const auto& aprior : priors) {
      const Vec6 r = prior_residual(state.poses.at(aprior.factor->frame_id), aprior.factor->pose,
                                    cfg.sigma_prior_rot, cfg.sigma_prior_trans, &jprior);
      h_pp.block<6, 6>(6 * aprior.block, 6 * aprior.block) += jprior.transpose() * jprior;
      g_p.segment<6>(6 * aprior.block) += jprior.transpose() * r;
    }

    double grad_inf = g_p.lpNorm<Eigen::Infinity>();
    for (int l = 0; l < nl; ++l) {
      grad_inf = std::max(grad_inf, g_l[l].lpNorm<Eigen::Infinity>());
    }
    if (grad_inf < cfg.gradient_tol) {
      summary.converged = true;
      break;
    }

    // Inner loop: escalate lambda until a step decreases the cost.
    bool accepted = false;
    while (lambda <= cfg.lambda_max) {
      // Damped blocks (multiplicative on the diagonal).
      Eigen::MatrixXd s_mat = h_pp;
      for (int i = 0; i < 6 * np; ++i) {
        s_mat(i, i) += lambda * std::max(h_pp(i, i), 1e-12);
      }
      Eigen::VectorXd rhs = -g_p;
      std::vector<Mat3> h_ll_inv(nl);
      bool block_ok = true;
      for (int l = 0; l < nl; ++l) {
        Mat3 d = h_ll[l];
        for (int i = 0; i < 3; ++i) d(i, i) += lambda * std::max(h_ll[l](i, i), 1e-12);
        const double det = d.determinant();
        if (!std::isfinite(det) || std::abs(det) < 1e-300) {
          block_ok = false;
          break;
        }
        h_ll_inv[l] = d.inverse();
        // Schur complement: S -= Hpl Hll^-1 Hlp, rhs += Hpl Hll^-1 gl
        for (const auto& [p1, b1] : h_pl[l]) {
          const Mat63 b1a = b1 * h_ll_inv[l];
          rhs.segment<6>(6 * p1) += b1a * g_l[l];
          for (const auto& [p2, b2] : h_pl[l]) {
            s_mat.block<6, 6>(6 * p1, 6 * p2) -= b1a * b2.transpose();
          }
        }
      }
      if (!block_ok) {
        lambda *= 10.0;
        continue;
      }

      Eigen::LDLT<Eigen::MatrixXd> ldlt(s_mat);
      if (ldlt.info() != Eigen::Success) {
        lambda *= 10.0;
        continue;
      }
      const Eigen::VectorXd dp = ldlt.solve(rhs);
      if (!dp.allFinite()) {
        lambda *= 10.0;
        continue;
      }

      State candidate = state;
      for (int b = 0; b < np; ++b) {
        candidate.poses.at(pose_ids[b]) =
            se3_boxplus(state.poses.at(pose_ids[b]), dp.segment<6>(6 * b));
      }
      for (int l = 0; l < nl; ++l) {
        Vec3 acc = -g_l[l];
        for (const auto& [p1, b1] : h_pl[l]) {
          acc -= b1.transpose() * dp.segment<6>(6 * p1);
        }
        candidate.landmarks.at(lm_ids[l]) = state.landmarks.at(lm_ids[l]) + h_ll_inv[l] * acc;
      }

      const double new_cost = total_cost(candidate);
      if (std::isfinite(new_cost) && new_cost < cost) {
        const double decrease = cost - new_cost;
        state = std::move(candidate);
        cost = new_cost;
        summary.cost_history.push_back(cost);
        ++summary.iterations;
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        if (cost <= cfg.cost_floor || decrease <= cfg.tol * std::max(cost, 1e-300)) {
          summary.converged = true;
        }
        break;
      }
      lambda *= 10.0;
    }

    if (!accepted) {
      if (grad_inf < 1e-6) {
        summary.converged = true;  // stalled at a flat point
      } else {
        summary.failure = true;
        summary.failure_reason = "no cost-decreasing step found (lambda exhausted)";
      }
      break;
    }
    if (summary.converged) break;
  }

  summary.final_cost = cost;
  if (!summary.failure) {
    for (int id : pose_ids) graph.set_pose(id, state.poses.at(id));
    for (int id : lm_ids) graph.set_landmark(id, state.landmarks.at(id));
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Tracking state and the Maximum Distance Mapped metric.
// ---------------------------------------------------------------------------

struct TrackState {
  enum class Status { kTracking, kLost, kBackendFailure };
  Status status = Status::kTracking;
  int last_good_frame = -1;
  double distance_mapped = 0.0;  // meters, arc length up to last_good_frame
  int consecutive_bad = 0;
};

inline std::string to_string(TrackState::Status s) {
  switch (s) {
    case TrackState::Status::kLost: return "lost";
    case TrackState::Status::kBackendFailure: return "backend_failure";
    default: return "tracking";
  }
}

struct DistanceMapped {
  double distance = 0.0;
  double fraction = 0.0;
};

// Arc length of the estimated trajectory up to the last good frame, capped at
// the range length.
inline DistanceMapped distance_mapped(const std::map<int, PoseSE3>& trajectory,
                                      const TrackState& state, double range_length) {
  if (trajectory.empty()) {
    throw EmptyInput("distance_mapped: empty trajectory");
  }
  double arc = 0.0;
  const PoseSE3* prev = nullptr;
  for (const auto& [frame_id, pose] : trajectory) {
    if (frame_id > state.last_good_frame) break;
    if (prev != nullptr) {
      arc += (pose.translation() - prev->translation()).norm();
    }
    prev = &pose;
  }
  DistanceMapped out;
  out.distance = std::min(arc, range_length);
  out.fraction = range_length > 0.0 ? out.distance / range_length : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Trajectory files: one line per pose, `frame_id tx ty tz qx qy qz qw`.
// ---------------------------------------------------------------------------

inline void write_trajectory(const std::map<int, PoseSE3>& trajectory,
                             const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) {
    throw OutputIoError("cannot write trajectory: " + path.string());
  }
  for (const auto& [frame_id, pose] : trajectory) {
    const Vec3& t = pose.translation();
    const Quat& q = pose.rotation();
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%d %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", frame_id,
                  t.x(), t.y(), t.z(), q.x(), q.y(), q.z(), q.w());
    os << buf;
  }
}

inline std::map<int, PoseSE3> read_trajectory(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) {
    throw InputIoError("cannot open trajectory: " + path.string());
  }
  std::map<int, PoseSE3> trajectory;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    int frame_id;
    double tx, ty, tz, qx, qy, qz, qw;
    if (!(ls >> frame_id >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
      throw InputIoError("malformed trajectory line in " + path.string() + ": " + line);
    }
    trajectory.emplace(frame_id, PoseSE3(Quat(qw, qx, qy, qz), Vec3(tx, ty, tz)));
  }
  return trajectory;
}

// ---------------------------------------------------------------------------
// Frame-by-frame SLAM: structural (or baseline) matching, landmark
// bookkeeping, windowed optimization, and loss detection.
// ---------------------------------------------------------------------------

enum class MatcherKind { kStructural, kBaseline };

inline std::string to_string(MatcherKind m) {
  return m == MatcherKind::kStructural ? "structural" : "baseline";
}

struct SlamConfig {
  MatchParams match;  // shared by stereo and temporal association
  MatcherKind matcher = MatcherKind::kStructural;
  double baseline_max_dist = 160.0;  // px, for the nearest-neighbor baseline
  double motion_max_vertical = 16.0;
  TravelDirection stereo_direction = TravelDirection::kRightToLeft;
  TravelDirection temporal_direction = TravelDirection::kRightToLeft;
  double min_disparity = 0.5;
  Vec3 nominal_step = Vec3(0.05, 0.0, 0.0);  // commanded per-frame motion, camera frame
  PoseSE3 initial_pose;
  BackendConfig backend;
  bool optimize_per_frame = true;
  // Loss rule: a frame is bad when fewer than min_temporal_matches temporal
  // matches survive the cost/motion filters and the post-optimization
  // reprojection gate; max_bad_frames consecutive bad frames lose the track.
  int min_temporal_matches = 5;
  int max_bad_frames = 3;
  double reproj_gate = 13.277;  // chi-square 0.99 quantile, 4 dof
};

struct FrameSummary {
  int frame_id = 0;
  int stereo_matches = 0;
  int temporal_matches = 0;
  int reobserved = 0;
  int new_landmarks = 0;
  int inliers = 0;
  bool good = true;
  double opt_final_cost = 0.0;
  int opt_iterations = 0;
};

class SlamSystem {
 public:
  SlamSystem(const StereoCamera& cam, const SlamConfig& cfg)
      : camera_(cam), cfg_(cfg), graph_(cam) {}

  // Full per-frame pipeline: associate, then update the graph.
  const TrackState& process_frame(int frame_id, const std::vector<SeedKeypoint>& left,
                                  const std::vector<SeedKeypoint>& right) {
    const Assignment stereo = match_pair(left, right, cfg_.stereo_direction);
    Assignment temporal;
    if (!prev_left_.empty()) {
      temporal = match_pair(prev_left_, left, cfg_.temporal_direction);
    }
    return add_frame(frame_id, left, right, stereo, temporal);
  }

  // Graph update from pre-associated, pre-filtered matches. `stereo` maps
  // left->right detections of this frame; `temporal` maps the previous
  // frame's left detections to this frame's left detections.
  const TrackState& add_frame(int frame_id, const std::vector<SeedKeypoint>& left,
                              const std::vector<SeedKeypoint>& right, const Assignment& stereo,
                              const Assignment& temporal) {
    if (state_.status != TrackState::Status::kTracking) {
      return state_;  // terminal; callers normally stop feeding frames
    }
    FrameSummary summary;
    summary.frame_id = frame_id;
    summary.stereo_matches = static_cast<int>(stereo.matches.size());
    summary.temporal_matches = static_cast<int>(temporal.matches.size());

    const bool first = graph_.poses().empty();
    if (first) {
      graph_.add_pose(frame_id, cfg_.initial_pose);
      graph_.add_prior(PriorFactor{frame_id, cfg_.initial_pose});
    } else {
      // Constant-velocity initialization; commanded-step odometry factor.
      PoseSE3 rel(Quat::Identity(), cfg_.nominal_step);
      if (frame_ids_.size() >= 2) {
        const PoseSE3& p2 = graph_.pose(frame_ids_[frame_ids_.size() - 2]);
        const PoseSE3& p1 = graph_.pose(frame_ids_.back());
        rel = p2.inverse() * p1;
      }
      graph_.add_pose(frame_id, graph_.pose(frame_ids_.back()) * rel);
      graph_.add_odometry(
          OdometryFactor{frame_ids_.back(), frame_id, PoseSE3(Quat::Identity(), cfg_.nominal_step)});
    }
    const PoseSE3& pose_init = graph_.pose(frame_id);

    std::map<int, int> stereo_of_left;  // left index -> right index
    for (const Match& m : stereo.matches) stereo_of_left[m.u_index] = m.v_index;

    // Re-observations: temporal matches whose previous keypoint carries a
    // landmark and whose current keypoint is stereo-matched.
    std::map<int, int> links;  // current left index -> landmark id
    std::vector<std::size_t> frame_factors;
    for (const Match& m : temporal.matches) {
      const auto prev_it = prev_links_.find(m.u_index);
      if (prev_it == prev_links_.end()) continue;
      const auto stereo_it = stereo_of_left.find(m.v_index);
      if (stereo_it == stereo_of_left.end()) continue;
      const int lm_id = prev_it->second;
      const StereoObservation obs{left[m.v_index].center, right[stereo_it->second].center};
      frame_factors.push_back(graph_.projection_factors().size());
      graph_.add_projection(ProjectionFactor{frame_id, lm_id, obs});
      links[m.v_index] = lm_id;
      record_observation(lm_id, frame_id, left[m.v_index], right[stereo_it->second]);
      ++summary.reobserved;
    }

    // New landmarks from the remaining stereo matches (stereo only; stereo
    // gives metric depth directly).
    for (const Match& m : stereo.matches) {
      if (links.count(m.u_index) > 0) continue;
      Vec3 p_cam;
      try {
        p_cam = triangulate(left[m.u_index].center, right[m.v_index].center, camera_,
                            cfg_.min_disparity);
      } catch (const NonPositiveDisparity&) {
        continue;
      }
      if (p_cam.z() > 100.0) continue;
      const int lm_id = next_landmark_id_++;
      graph_.add_landmark(lm_id, pose_init * p_cam);
      graph_.add_projection(
          ProjectionFactor{frame_id, lm_id, StereoObservation{left[m.u_index].center,
                                                              right[m.v_index].center}});
      landmarks_.push_back(Landmark{lm_id, pose_init * p_cam, {}});
      landmark_row_[lm_id] = landmarks_.size() - 1;
      record_observation(lm_id, frame_id, left[m.u_index], right[m.v_index]);
      links[m.u_index] = lm_id;
      ++summary.new_landmarks;
    }

    frame_ids_.push_back(frame_id);

    // Windowed (or batch) refinement.
    if (cfg_.optimize_per_frame) {
      int first_active = std::numeric_limits<int>::min();
      if (!cfg_.backend.full_batch &&
          static_cast<int>(frame_ids_.size()) > cfg_.backend.window) {
        first_active = frame_ids_[frame_ids_.size() - cfg_.backend.window];
      }
      const OptimizeSummary opt = optimize(graph_, cfg_.backend, first_active);
      summary.opt_final_cost = opt.final_cost;
      summary.opt_iterations = opt.iterations;
      if (opt.failure) {
        log_info("backend failure at frame " + std::to_string(frame_id) + ": " +
                 opt.failure_reason);
        state_.status = TrackState::Status::kBackendFailure;
        summary.good = false;
        frames_.push_back(summary);
        sync_landmarks();
        return state_;
      }
    }

    // Reprojection gate on this frame's re-observations.
    for (const std::size_t fi : frame_factors) {
      const ProjectionFactor& f = graph_.projection_factors()[fi];
      Vec4 res;
      if (detail::eval_projection(graph_.pose(f.frame_id), graph_.landmark(f.landmark_id), f.obs,
                                  camera_, cfg_.backend.sigma_px, res, nullptr, nullptr) &&
          res.squaredNorm() < cfg_.reproj_gate) {
        ++summary.inliers;
      }
    }

    // Track-loss bookkeeping.
    if (first) {
      state_.last_good_frame = frame_id;
    } else if (summary.inliers >= cfg_.min_temporal_matches) {
      state_.consecutive_bad = 0;
      state_.last_good_frame = frame_id;
    } else {
      summary.good = false;
      ++state_.consecutive_bad;
      if (state_.consecutive_bad >= cfg_.max_bad_frames) {
        state_.status = TrackState::Status::kLost;
      }
    }
    state_.distance_mapped =
        std::max(state_.distance_mapped, arc_length_up_to(state_.last_good_frame));

    prev_left_ = left;
    prev_links_ = std::move(links);
    frames_.push_back(summary);
    sync_landmarks();
    return state_;
  }

  const FactorGraph& graph() const { return graph_; }
  FactorGraph& mutable_graph() { return graph_; }
  const TrackState& state() const { return state_; }
  const std::vector<FrameSummary>& frames() const { return frames_; }
  const std::vector<Landmark>& landmarks() const { return landmarks_; }
  const StereoCamera& camera() const { return camera_; }
  const SlamConfig& config() const { return cfg_; }

  std::map<int, PoseSE3> trajectory() const { return graph_.poses(); }

 private:
  Assignment match_pair(const std::vector<SeedKeypoint>& a, const std::vector<SeedKeypoint>& b,
                        TravelDirection direction) const {
    if (a.empty() || b.empty()) return Assignment{};
    const BipartiteGraph graph{a, b};
    Assignment assignment;
    if (cfg_.matcher == MatcherKind::kStructural) {
      assignment = solve_lsap(build_cost_matrix(graph, cfg_.match));
      assignment = filter_by_cost(assignment, cfg_.match.cost_threshold);
    } else {
      assignment = baseline_nn_match(graph, cfg_.baseline_max_dist);
    }
    return filter_by_motion(assignment, graph, cfg_.motion_max_vertical, direction);
  }

  void record_observation(int lm_id, int frame_id, const SeedKeypoint& left_kp,
                          const SeedKeypoint& right_kp) {
    Landmark& lm = landmarks_[landmark_row_.at(lm_id)];
    lm.observations.push_back(LandmarkObservation{frame_id, CameraSide::kLeft, left_kp});
    lm.observations.push_back(LandmarkObservation{frame_id, CameraSide::kRight, right_kp});
  }

  double arc_length_up_to(int frame_id) const {
    double arc = 0.0;
    const PoseSE3* prev = nullptr;
    for (const auto& [id, pose] : graph_.poses()) {
      if (id > frame_id) break;
      if (prev != nullptr) arc += (pose.translation() - prev->translation()).norm();
      prev = &pose;
    }
    return arc;
  }

  void sync_landmarks() {
    for (Landmark& lm : landmarks_) {
      lm.position = graph_.landmark(lm.id);
    }
  }

  StereoCamera camera_;
  SlamConfig cfg_;
  FactorGraph graph_;
  TrackState state_;
  std::vector<int> frame_ids_;
  std::vector<FrameSummary> frames_;
  std::vector<Landmark> landmarks_;
  std::map<int, std::size_t> landmark_row_;
  std::vector<SeedKeypoint> prev_left_;
  std::map<int, int> prev_links_;
  int next_landmark_id_ = 0;
};

}  // namespace fieldmap
