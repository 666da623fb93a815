// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Scene parameters follow the shipped defaults unless a criterion
// pins its own.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "../oracles.hpp"
#include "fieldmap/runner.hpp"

using namespace fieldmap;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string details;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// --- criterion 1: published table reproduction ------------------------------

Outcome criterion_table() {
  std::ostringstream sink;
  const auto averages = run_table(fs::path(FIELDMAP_DATA_DIR) / "table1.json", sink, std::nullopt);
  const double ours = averages.at("OURS");
  const double sift = averages.at("SIFT+BF");
  char buf[160];
  std::snprintf(buf, sizeof(buf), "OURS %.4f (want 0.78 +/- 0.005), SIFT+BF %.4f (want 0.38 +/- 0.005)",
                ours, sift);
  return {std::abs(ours - 0.78) < 0.005 && std::abs(sift - 0.38) < 0.005, buf};
}

// --- criterion 2: LSAP optimality against exhaustive enumeration ------------

Outcome criterion_lsap() {
  Rng rng(20240801);
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + trial % 7;  // sizes 2..8
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) m(i, j) = rng.uniform(0.0, 50.0);
    }
    CostMatrix cm;
    cm.values = m;
    cm.rows_real = cm.cols_real = n;
    cm.dummy_cost = m.maxCoeff() * 10.0 + 1.0;
    const double got = solve_lsap(cm).total_cost();
    const double want = oracles::brute_force_lsap_min(m);
    if (std::abs(got - want) > 1e-9) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "trial %d (n=%d): solver %.12f != brute force %.12f", trial,
                    n, got, want);
      return {false, buf};
    }
    ++checked;
  }
  return {true, "1000/1000 matrices match the exhaustive minimum"};
}

// --- criterion 3: structural-cost formula fidelity ---------------------------

Outcome criterion_cost_fidelity() {
  Rng rng(20240802);
  double worst = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const int nu = rng.uniform_int(1, 10);
    const int nv = rng.uniform_int(1, 10);
    std::vector<SeedKeypoint> u_nodes(nu), v_nodes(nv);
    std::vector<ImagePoint> u_pts(nu), v_pts(nv);
    for (int i = 0; i < nu; ++i) {
      u_pts[i] = ImagePoint{rng.uniform(0, 640), rng.uniform(0, 480)};
      u_nodes[i].center = u_pts[i];
    }
    for (int j = 0; j < nv; ++j) {
      v_pts[j] = ImagePoint{rng.uniform(0, 640), rng.uniform(0, 480)};
      v_nodes[j].center = v_pts[j];
    }
    const double delta = rng.uniform(10, 80);
    const double eps = rng.uniform(2, 25);
    const double r = rng.uniform(0.1, 40.0);
    const int iu = rng.uniform_int(0, nu - 1);
    const int iv = rng.uniform_int(0, nv - 1);

    std::vector<SeedKeypoint> u_peers = u_nodes;
    u_peers.erase(u_peers.begin() + iu);
    std::vector<SeedKeypoint> v_peers = v_nodes;
    v_peers.erase(v_peers.begin() + iv);
    const NeighborSets us = neighbor_sets(u_nodes[iu], u_peers, delta, eps);
    const NeighborSets vs = neighbor_sets(v_nodes[iv], v_peers, delta, eps);
    const double got = structural_cost(u_nodes[iu], us, v_nodes[iv], vs, r);
    const double want = oracles::literal_structural_cost(u_pts, iu, v_pts, iv, delta, eps, r);
    worst = std::max(worst, std::abs(got - want));
    if (std::abs(got - want) > 1e-12) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "trial %d: |%.17g - %.17g| > 1e-12", trial, got, want);
      return {false, buf};
    }
  }
  // Empty-set cases: isolated nodes leave exactly the vertical penalty.
  Rng rng2(20240803);
  for (int trial = 0; trial < 100; ++trial) {
    SeedKeypoint u, v;
    u.center = ImagePoint{rng2.uniform(0, 640), rng2.uniform(0, 480)};
    v.center = ImagePoint{rng2.uniform(0, 640), rng2.uniform(0, 480)};
    const double got = structural_cost(u, NeighborSets{}, v, NeighborSets{}, rng2.uniform(0, 40));
    if (got != std::abs(u.center.v - v.center.v)) {
      return {false, "empty-set case is not exactly |b - n|"};
    }
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "10000 constellations, worst |diff| %.3g; empty-set exact", worst);
  return {true, buf};
}

// --- criterion 4: structural matcher vs nearest-neighbor baseline -----------

Outcome criterion_matcher() {
  double f1_structural_sum = 0.0, f1_baseline_sum = 0.0;
  long long tp = 0, fp = 0;
  int pairs = 0;
  for (int s = 0; s < 20; ++s) {
    SceneConfig cfg;  // defaults already sigma=1, dropout 0.1, fp 0.05
    cfg.kind = "range";
    cfg.rng_seed = 7000 + s;
    cfg.range_length = 1.5;
    cfg.panicle_count = 4;
    const Scene scene = generate_range_scene(cfg);
    const MatchParams params = MatchParams::defaults_for(cfg.camera);

    const FrameDetections* prev = nullptr;
    for (int f = 0; f < scene.frame_count(); ++f) {
      const FrameDetections* left = scene.find(f, CameraSide::kLeft);
      if (prev != nullptr && !prev->keypoints.empty() && !left->keypoints.empty()) {
        const BipartiteGraph g{prev->keypoints, left->keypoints};
        Assignment structural = solve_lsap(build_cost_matrix(g, params));
        structural = filter_by_cost(structural, params.cost_threshold);
        const MatchReport rs = match_accuracy(structural, prev->seed_ids, left->seed_ids);
        const Assignment nn = baseline_nn_match(g, 160.0);
        const MatchReport rb = match_accuracy(nn, prev->seed_ids, left->seed_ids);
        if (rs.f1.has_value() && rb.f1.has_value()) {
          f1_structural_sum += *rs.f1;
          f1_baseline_sum += *rb.f1;
          tp += rs.tp;
          fp += rs.fp;
          ++pairs;
        }
      }
      prev = left;
    }
  }
  const double f1s = f1_structural_sum / pairs;
  const double f1b = f1_baseline_sum / pairs;
  const double precision = static_cast<double>(tp) / (tp + fp);
  char buf[192];
  std::snprintf(buf, sizeof(buf),
                "F1 structural %.3f vs baseline %.3f (need +0.15), post-filter precision %.3f "
                "(need >= 0.95), %d pairs",
                f1s, f1b, precision, pairs);
  return {f1s - f1b >= 0.15 && precision >= 0.95, buf};
}

// --- criterion 5: SLAM coverage, structural vs baseline ----------------------

Outcome criterion_slam_coverage() {
  double frac_structural = 0.0, frac_baseline = 0.0;
  for (int s = 0; s < 10; ++s) {
    SceneConfig cfg;  // default noise
    cfg.kind = "range";
    cfg.rng_seed = 9100 + s;
    const Scene scene = generate_range_scene(cfg);

    SlamConfig slam_cfg = default_slam_config(scene);
    slam_cfg.matcher = MatcherKind::kStructural;
    frac_structural += run_slam_on_scene(scene, slam_cfg).dm.fraction;

    slam_cfg.matcher = MatcherKind::kBaseline;
    frac_baseline += run_slam_on_scene(scene, slam_cfg).dm.fraction;
  }
  frac_structural /= 10.0;
  frac_baseline /= 10.0;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "mean fraction structural %.3f (need >= 0.9), baseline %.3f (need strictly lower)",
                frac_structural, frac_baseline);
  return {frac_structural >= 0.9 && frac_baseline < frac_structural, buf};
}

// --- criterion 6: back-end correctness ---------------------------------------

Outcome criterion_backend() {
  StereoCamera cam;
  Rng rng(20240806);
  double worst_rel = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Quat q = Quat(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
    const PoseSE3 pose(q, Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)));
    const Vec3 p_cam(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(0.4, 3.0));
    const Vec3 point = pose * p_cam;
    const StereoObservation obs{ImagePoint{rng.uniform(0, 640), rng.uniform(0, 480)},
                                ImagePoint{rng.uniform(0, 640), rng.uniform(0, 480)}};
    Eigen::Matrix<double, 4, 6> jp;
    Eigen::Matrix<double, 4, 3> jl;
    stereo_residual(pose, point, obs, cam, 1.0, &jp, &jl);
    const double eps = 1e-7;
    for (int k = 0; k < 6; ++k) {
      Vec6 d = Vec6::Zero();
      d(k) = eps;
      const Vec4 fd = (stereo_residual(se3_boxplus(pose, d), point, obs, cam, 1.0) -
                       stereo_residual(se3_boxplus(pose, -d), point, obs, cam, 1.0)) /
                      (2.0 * eps);
      worst_rel = std::max(worst_rel, (fd - jp.col(k)).norm() / std::max(1.0, fd.norm()));
    }
    for (int k = 0; k < 3; ++k) {
      Vec3 d = Vec3::Zero();
      d(k) = eps;
      const Vec4 fd = (stereo_residual(pose, point + d, obs, cam, 1.0) -
                       stereo_residual(pose, point - d, obs, cam, 1.0)) /
                      (2.0 * eps);
      worst_rel = std::max(worst_rel, (fd - jl.col(k)).norm() / std::max(1.0, fd.norm()));
    }
  }
  if (worst_rel >= 1e-5) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "worst Jacobian relative error %.3g >= 1e-5", worst_rel);
    return {false, buf};
  }

  // Zero-noise batch recovery after 1 cm / 0.5 deg perturbations.
  FactorGraph graph(cam);
  std::map<int, PoseSE3> gt_poses;
  std::map<int, Vec3> gt_lms;
  Mat3 rig;
  rig.col(0) = Vec3(1, 0, 0);
  rig.col(1) = Vec3(0, 0, -1);
  rig.col(2) = Vec3(0, 1, 0);
  for (int f = 0; f < 8; ++f) gt_poses.emplace(f, PoseSE3(Quat(rig), Vec3(0.05 * f, 0, 0)));
  for (int l = 0; l < 80; ++l) {
    gt_lms.emplace(l, Vec3(rng.uniform(-0.1, 0.5), rng.uniform(0.3, 0.45),
                           rng.uniform(-0.12, 0.12)));
  }
  for (const auto& [f, p] : gt_poses) graph.add_pose(f, p);
  for (const auto& [l, p] : gt_lms) graph.add_landmark(l, p);
  graph.add_prior(PriorFactor{0, gt_poses.at(0)});
  for (int f = 1; f < 8; ++f) {
    graph.add_odometry(OdometryFactor{f - 1, f, gt_poses.at(f - 1).inverse() * gt_poses.at(f)});
  }
  for (const auto& [f, p] : gt_poses) {
    const PoseSE3 inv = p.inverse();
    for (const auto& [l, x] : gt_lms) {
      const Vec3 pc = inv * x;
      if (pc.z() < 0.1) continue;
      ImagePoint left, right;
      try {
        left = project(pc, cam, CameraSide::kLeft);
        right = project(pc, cam, CameraSide::kRight);
      } catch (const BehindCamera&) {
        continue;
      }
      if (left.u < 0 || left.u >= cam.width || left.v < 0 || left.v >= cam.height) continue;
      if (right.u < 0 || right.u >= cam.width) continue;
      graph.add_projection(ProjectionFactor{f, l, StereoObservation{left, right}});
    }
  }
  const double rot_s = 0.5 * M_PI / 180.0 / std::sqrt(3.0);
  const double trans_s = 0.01 / std::sqrt(3.0);
  for (const auto& [f, p] : gt_poses) {
    if (f == 0) continue;
    Vec6 d;
    d << rng.normal(0, rot_s), rng.normal(0, rot_s), rng.normal(0, rot_s),
        rng.normal(0, trans_s), rng.normal(0, trans_s), rng.normal(0, trans_s);
    graph.set_pose(f, se3_boxplus(p, d));
  }
  for (const auto& [l, x] : gt_lms) {
    graph.set_landmark(l, x + Vec3(rng.normal(0, 0.005), rng.normal(0, 0.005),
                                   rng.normal(0, 0.005)));
  }
  BackendConfig cfg;
  cfg.full_batch = true;
  cfg.max_iterations = 100;
  const OptimizeSummary sum = optimize(graph, cfg);
  double worst_pose_t = 0.0, worst_pose_r = 0.0, worst_lm = 0.0;
  for (const auto& [f, p] : gt_poses) {
    worst_pose_t = std::max(worst_pose_t, (graph.pose(f).translation() - p.translation()).norm());
    worst_pose_r = std::max(worst_pose_r, rotation_distance(graph.pose(f), p));
  }
  for (const auto& [l, x] : gt_lms) {
    worst_lm = std::max(worst_lm, (graph.landmark(l) - x).norm());
  }
  char buf[224];
  std::snprintf(buf, sizeof(buf),
                "worst Jacobian rel err %.2g; recovery: pose %.2g m / %.2g rad, landmark %.2g m "
                "(need < 1e-5), %d iters",
                worst_rel, worst_pose_t, worst_pose_r, worst_lm, sum.iterations);
  return {!sum.failure && worst_pose_t < 1e-5 && worst_pose_r < 1e-5 && worst_lm < 1e-5, buf};
}

// --- criterion 7: ICP recovery -----------------------------------------------

Outcome criterion_icp_recovery() {
  Rng rng(20240807);
  int ok = 0;
  double worst_t = 0.0, worst_r = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    PointCloud source;
    for (int i = 0; i < 1500; ++i) {
      source.push_back(Vec3(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2),
                            rng.uniform(-0.2, 0.2)));
    }
    const Vec3 axis = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
    const double angle = rng.uniform(-5.0, 5.0) * M_PI / 180.0;
    const PoseSE3 truth(Quat(Eigen::AngleAxisd(angle, axis)),
                        Vec3(rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02),
                             rng.uniform(-0.02, 0.02)));
    PointCloud target;
    for (const auto& p : source.points) target.push_back(truth * p);
    IcpConfig cfg;
    cfg.correspondence_radius = 0.08;
    cfg.trim_fraction = 0.2;
    cfg.max_iterations = 60;
    const IcpResult r = icp_align(source, target, PoseSE3(), cfg);
    const double te = (r.transform.translation() - truth.translation()).norm();
    const double re = rotation_distance(r.transform, truth);
    worst_t = std::max(worst_t, te);
    worst_r = std::max(worst_r, re);
    if (te < 1e-4 && re < 1e-4) ++ok;
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%d/100 recovered; worst %.3g m / %.3g rad (need < 1e-4)", ok,
                worst_t, worst_r);
  return {ok == 100, buf};
}

// --- criterion 8: seed-center vs full-cloud ICP ------------------------------

Outcome criterion_icp_modes() {
  SceneConfig base;
  base.kind = "orbit";
  base.rng_seed = 20240808;
  const IcpModeComparison cmp = compare_icp_modes(base, 50);
  const double win_rate = static_cast<double>(cmp.seed_center_pose_wins) / cmp.trials;
  char buf[224];
  std::snprintf(buf, sizeof(buf),
                "seed-centers wins pose error in %d/%d trials (need >= 80%%); mean spread seed "
                "%.4f mm vs full %.4f mm (need lower); mean pose err %.2f vs %.2f mm",
                cmp.seed_center_pose_wins, cmp.trials, 1000.0 * cmp.mean_spread_seed,
                1000.0 * cmp.mean_spread_full, 1000.0 * cmp.mean_pose_error_seed,
                1000.0 * cmp.mean_pose_error_full);
  return {win_rate >= 0.8 && cmp.mean_spread_seed < cmp.mean_spread_full, buf};
}

// --- criterion 9: determinism ------------------------------------------------

Outcome criterion_determinism() {
  const fs::path tmp = fs::temp_directory_path() / "fieldmap_acceptance_det";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  // Scene configs.
  const fs::path range_cfg = tmp / "range.toml";
  {
    std::ofstream os(range_cfg);
    os << "[scene]\nkind = \"range\"\nrng_seed = 5\nrange_length = 0.6\npanicle_count = 2\n"
          "panicle_spacing = 0.3\n[lattice]\npitch = 0.03\n";
  }
  const fs::path orbit_cfg = tmp / "orbit.toml";
  {
    std::ofstream os(orbit_cfg);
    os << "[scene]\nkind = \"orbit\"\nrng_seed = 6\n[lattice]\npitch = 0.03\n"
          "[orbit]\narc_coverage_deg = 30.0\ncloud_samples_per_seed = 3\n";
  }

  std::vector<std::string> mismatches;
  auto expect_equal = [&](const fs::path& a, const fs::path& b, const std::string& what) {
    if (slurp(a) != slurp(b)) mismatches.push_back(what);
  };

  run_simulate(range_cfg, tmp / "scene_a");
  run_simulate(range_cfg, tmp / "scene_b");
  expect_equal(tmp / "scene_a" / "metrics.json", tmp / "scene_b" / "metrics.json",
               "simulate metrics");
  expect_equal(tmp / "scene_a" / "detections.jsonl", tmp / "scene_b" / "detections.jsonl",
               "simulate detections");

  run_match(tmp / "scene_a", tmp / "match_a");
  run_match(tmp / "scene_a", tmp / "match_b");
  expect_equal(tmp / "match_a" / "metrics.json", tmp / "match_b" / "metrics.json",
               "match metrics");

  run_slam(tmp / "scene_a", tmp / "slam_a");
  run_slam(tmp / "scene_a", tmp / "slam_b");
  expect_equal(tmp / "slam_a" / "metrics.json", tmp / "slam_b" / "metrics.json", "slam metrics");
  expect_equal(tmp / "slam_a" / "trajectory.txt", tmp / "slam_b" / "trajectory.txt",
               "slam trajectory");

  run_simulate(orbit_cfg, tmp / "orbit_scene");
  run_reconstruct(tmp / "orbit_scene", tmp / "rec_a");
  run_reconstruct(tmp / "orbit_scene", tmp / "rec_b");
  expect_equal(tmp / "rec_a" / "metrics.json", tmp / "rec_b" / "metrics.json",
               "reconstruct metrics");

  EvalRunOptions ev;
  ev.results = {tmp / "slam_a" / "metrics.json", tmp / "slam_b" / "metrics.json"};
  run_eval(ev, tmp / "eval_a.json");
  run_eval(ev, tmp / "eval_b.json");
  expect_equal(tmp / "eval_a.json", tmp / "eval_b.json", "eval report");

  std::ostringstream t1, t2;
  run_table(fs::path(FIELDMAP_DATA_DIR) / "table1.json", t1, tmp / "table_a.json");
  run_table(fs::path(FIELDMAP_DATA_DIR) / "table1.json", t2, tmp / "table_b.json");
  if (t1.str() != t2.str()) mismatches.push_back("table stdout");
  expect_equal(tmp / "table_a.json", tmp / "table_b.json", "table json");

  fs::remove_all(tmp);
  if (mismatches.empty()) {
    return {true, "all pipeline outputs byte-identical across repeated runs"};
  }
  std::string what = "mismatched:";
  for (const auto& m : mismatches) what += " " + m;
  return {false, what};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"table reproduction (78% / 38%)", criterion_table},
      {"LSAP optimality vs exhaustive enumeration", criterion_lsap},
      {"structural-cost formula fidelity", criterion_cost_fidelity},
      {"matcher superiority on repetitive structure", criterion_matcher},
      {"SLAM coverage: structural vs baseline", criterion_slam_coverage},
      {"back-end Jacobians and zero-noise recovery", criterion_backend},
      {"ICP recovery of known transforms", criterion_icp_recovery},
      {"seed-center vs full-cloud ICP", criterion_icp_modes},
      {"determinism of pipeline commands", criterion_determinism},
  };

  bool all_pass = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = criteria[i].second();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s — criterion %zu: %s (%s) [%.1f s]\n", outcome.pass ? "PASS" : "FAIL", i + 1,
                criteria[i].first.c_str(), outcome.details.c_str(), seconds);
    std::fflush(stdout);
    all_pass = all_pass && outcome.pass;
  }
  return all_pass ? 0 : 1;
}
