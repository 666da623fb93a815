#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fieldmap/eval.hpp"
#include "fieldmap/log.hpp"
#include "fieldmap/pipeline.hpp"
#include "fieldmap/scene_io.hpp"

namespace fieldmap {

// ---------------------------------------------------------------------------
// Command implementations behind the CLI, reused directly by tests. All
// floating-point metrics are rounded to 9 significant digits before
// serialization so metrics files are byte-stable across runs and platforms.
// ---------------------------------------------------------------------------

inline double round_sig9(double v) {
  if (!std::isfinite(v)) return v;
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return std::strtod(buf, nullptr);
}

namespace detail {

inline void write_json_file(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) {
    throw OutputIoError("cannot write: " + path.string());
  }
  os << j.dump(2) << "\n";
  if (!os) {
    throw OutputIoError("write failed: " + path.string());
  }
}

inline void ensure_out_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw OutputIoError("cannot create output directory: " + dir.string());
  }
}

}  // namespace detail

// ---- simulate --------------------------------------------------------------

struct SimulateOutcome {
  std::filesystem::path scene_dir;
  int frames = 0;
  int seeds = 0;
  int detections = 0;
};

inline SimulateOutcome run_simulate(const std::filesystem::path& config_path,
                                    const std::filesystem::path& out_dir,
                                    std::optional<std::uint64_t> seed_override = std::nullopt) {
  SceneConfig cfg = SceneConfig::from_config(ConfigFile::load(config_path));
  if (seed_override.has_value()) cfg.rng_seed = *seed_override;
  cfg.validate();
  const Scene scene = generate_scene(cfg);
  detail::ensure_out_dir(out_dir);
  write_scene(scene, out_dir);

  SimulateOutcome outcome;
  outcome.scene_dir = out_dir;
  outcome.frames = scene.frame_count();
  outcome.seeds = static_cast<int>(scene.gt.seeds.size());
  for (const FrameDetections& d : scene.detections) {
    outcome.detections += static_cast<int>(d.keypoints.size());
  }
  detail::write_json_file(nlohmann::json{{"command", "simulate"},
                                         {"kind", cfg.kind},
                                         {"rng_seed", cfg.rng_seed},
                                         {"frames", outcome.frames},
                                         {"seeds", outcome.seeds},
                                         {"detections", outcome.detections}},
                          out_dir / "metrics.json");
  log_info("simulate: " + std::to_string(outcome.frames) + " frames, " +
           std::to_string(outcome.detections) + " detections -> " + out_dir.string());
  return outcome;
}

// ---- match -----------------------------------------------------------------

struct MatchRunOptions {
  MatchParams params;
  bool params_set = false;  // when false, defaults come from the scene camera
  MatcherKind matcher = MatcherKind::kStructural;
  double baseline_max_dist = 160.0;
  double motion_max_vertical = -1.0;  // <0: use epsilon
  std::optional<double> threshold_override;
  std::optional<CostVariant> variant_override;
};

struct MatchRunOutcome {
  int stereo_pairs = 0;
  int temporal_pairs = 0;
  std::optional<double> mean_stereo_f1;
  std::optional<double> mean_temporal_f1;
};

inline Assignment match_frames(const std::vector<SeedKeypoint>& a,
                               const std::vector<SeedKeypoint>& b, const MatchParams& params,
                               MatcherKind matcher, double baseline_max_dist,
                               double motion_max_vertical, TravelDirection direction) {
  if (a.empty() || b.empty()) return Assignment{};
  const BipartiteGraph graph{a, b};
  Assignment assignment;
  if (matcher == MatcherKind::kStructural) {
    assignment = solve_lsap(build_cost_matrix(graph, params));
    assignment = filter_by_cost(assignment, params.cost_threshold);
  } else {
    assignment = baseline_nn_match(graph, baseline_max_dist);
  }
  return filter_by_motion(assignment, graph, motion_max_vertical, direction);
}

inline MatchRunOutcome run_match(const std::filesystem::path& scene_dir,
                                 const std::filesystem::path& out_dir, MatchRunOptions opt = {}) {
  const Scene scene = load_scene(scene_dir);
  if (!opt.params_set) opt.params = MatchParams::defaults_for(scene.config.camera);
  if (opt.threshold_override.has_value()) opt.params.cost_threshold = *opt.threshold_override;
  if (opt.variant_override.has_value()) opt.params.variant = *opt.variant_override;
  if (opt.motion_max_vertical < 0.0) opt.motion_max_vertical = opt.params.epsilon;
  detail::ensure_out_dir(out_dir / "matches");

  const bool has_gt = !scene.gt.seeds.empty();
  MatchRunOutcome outcome;
  double stereo_f1_sum = 0.0;
  int stereo_f1_n = 0;
  double temporal_f1_sum = 0.0;
  int temporal_f1_n = 0;

  const int frames = scene.frame_count();
  const FrameDetections* prev_left = nullptr;
  for (int f = 0; f < frames; ++f) {
    const FrameDetections* left = scene.find(f, CameraSide::kLeft);
    const FrameDetections* right = scene.find(f, CameraSide::kRight);
    if (left == nullptr || right == nullptr) continue;
    const Assignment stereo =
        match_frames(left->keypoints, right->keypoints, opt.params, opt.matcher,
                     opt.baseline_max_dist, opt.motion_max_vertical, TravelDirection::kRightToLeft);
    char name[64];
    std::snprintf(name, sizeof(name), "stereo_%04d.json", f);
    write_match_json(out_dir / "matches" / name, f, f, stereo, opt.params);
    ++outcome.stereo_pairs;
    if (has_gt) {
      const MatchReport rep = match_accuracy(stereo, left->seed_ids, right->seed_ids);
      if (rep.f1.has_value()) {
        stereo_f1_sum += *rep.f1;
        ++stereo_f1_n;
      }
    }
    if (prev_left != nullptr) {
      const Assignment temporal = match_frames(prev_left->keypoints, left->keypoints, opt.params,
                                               opt.matcher, opt.baseline_max_dist,
                                               opt.motion_max_vertical,
                                               TravelDirection::kRightToLeft);
      std::snprintf(name, sizeof(name), "temporal_%04d_%04d.json", prev_left->frame_id, f);
      write_match_json(out_dir / "matches" / name, prev_left->frame_id, f, temporal, opt.params);
      ++outcome.temporal_pairs;
      if (has_gt) {
        const MatchReport rep = match_accuracy(temporal, prev_left->seed_ids, left->seed_ids);
        if (rep.f1.has_value()) {
          temporal_f1_sum += *rep.f1;
          ++temporal_f1_n;
        }
      }
    }
    prev_left = left;
  }
  if (stereo_f1_n > 0) outcome.mean_stereo_f1 = stereo_f1_sum / stereo_f1_n;
  if (temporal_f1_n > 0) outcome.mean_temporal_f1 = temporal_f1_sum / temporal_f1_n;

  nlohmann::json metrics{{"command", "match"},
                         {"matcher", to_string(opt.matcher)},
                         {"cost_variant", to_string(opt.params.variant)},
                         {"threshold", round_sig9(opt.params.cost_threshold)},
                         {"stereo_pairs", outcome.stereo_pairs},
                         {"temporal_pairs", outcome.temporal_pairs}};
  metrics["mean_stereo_f1"] = outcome.mean_stereo_f1.has_value()
                                  ? nlohmann::json(round_sig9(*outcome.mean_stereo_f1))
                                  : nlohmann::json(nullptr);
  metrics["mean_temporal_f1"] = outcome.mean_temporal_f1.has_value()
                                    ? nlohmann::json(round_sig9(*outcome.mean_temporal_f1))
                                    : nlohmann::json(nullptr);
  detail::write_json_file(metrics, out_dir / "metrics.json");
  return outcome;
}

// ---- slam ------------------------------------------------------------------

struct SlamRunOptions {
  MatcherKind matcher = MatcherKind::kStructural;
  std::optional<CostVariant> variant_override;
  std::optional<double> threshold_override;
  bool full_batch_final = false;  // run one batch pass after the sequence
};

inline SlamRunResult run_slam(const std::filesystem::path& scene_dir,
                              const std::filesystem::path& out_dir, SlamRunOptions opt = {}) {
  const Scene scene = load_scene(scene_dir);
  SlamConfig cfg = default_slam_config(scene);
  cfg.matcher = opt.matcher;
  if (opt.variant_override.has_value()) cfg.match.variant = *opt.variant_override;
  if (opt.threshold_override.has_value()) cfg.match.cost_threshold = *opt.threshold_override;

  SlamRunResult result = run_slam_on_scene(scene, cfg);
  detail::ensure_out_dir(out_dir);

  // Echo the resolved run parameters.
  ConfigFile echo;
  echo.set_string("slam", "matcher", to_string(cfg.matcher));
  echo.set_string("slam", "cost_variant", to_string(cfg.match.variant));
  echo.set_double("slam", "delta", cfg.match.delta);
  echo.set_double("slam", "epsilon", cfg.match.epsilon);
  echo.set_double("slam", "r", cfg.match.r);
  echo.set_double("slam", "threshold", cfg.match.cost_threshold);
  echo.set_double("slam", "motion_max_vertical", cfg.motion_max_vertical);
  echo.set_int("slam", "min_temporal_matches", cfg.min_temporal_matches);
  echo.set_int("slam", "max_bad_frames", cfg.max_bad_frames);
  echo.set_int("slam", "window", cfg.backend.window);
  echo.set_double("slam", "sigma_px", cfg.backend.sigma_px);
  echo.save(out_dir / "config.toml");

  write_trajectory(result.trajectory, out_dir / "trajectory.txt");
  PointCloud map_cloud;
  for (const Landmark& lm : result.landmarks) {
    map_cloud.push_back(lm.position, Color{0, 200, 0});
  }
  write_ply(map_cloud, out_dir / "map.ply");

  detail::write_json_file(
      nlohmann::json{{"command", "slam"},
                     {"matcher", to_string(cfg.matcher)},
                     {"distance_mapped", round_sig9(result.dm.distance)},
                     {"fraction", round_sig9(result.dm.fraction)},
                     {"range_length", round_sig9(result.range_length)},
                     {"frames_total", result.frames_total},
                     {"frames_processed", result.frames_processed},
                     {"last_good_frame", result.state.last_good_frame},
                     {"failure_mode", to_string(result.state.status)},
                     {"landmarks", static_cast<int>(result.landmarks.size())}},
      out_dir / "metrics.json");
  return result;
}

// ---- reconstruct -----------------------------------------------------------

struct ReconstructRunOptions {
  IcpMode mode = IcpMode::kSeedCenters;
  double fuse_cell = 0.005;  // desk-scale default; 0.03 is the field-scale figure
  std::optional<double> radius_override;
};

inline ReconstructResult run_reconstruct(const std::filesystem::path& scene_dir,
                                         const std::filesystem::path& out_dir,
                                         ReconstructRunOptions ropt = {}) {
  const Scene scene = load_scene(scene_dir);
  if (scene.clouds.empty()) {
    throw InputIoError("reconstruct: missing clouds/ under " + scene_dir.string());
  }
  ReconstructOptions opt = ReconstructOptions::defaults_for(scene, ropt.mode);
  opt.fuse_cell = ropt.fuse_cell;
  if (ropt.radius_override.has_value()) opt.icp.correspondence_radius = *ropt.radius_override;

  const ReconstructResult result = reconstruct_scene(scene, opt);
  detail::ensure_out_dir(out_dir);

  ConfigFile echo;
  echo.set_string("icp", "mode", to_string(opt.mode));
  echo.set_double("icp", "correspondence_radius", opt.icp.correspondence_radius);
  echo.set_int("icp", "max_iterations", opt.icp.max_iterations);
  echo.set_double("icp", "convergence_tol", opt.icp.convergence_tol);
  echo.set_double("icp", "trim_fraction", opt.icp.trim_fraction);
  echo.set_double("icp", "fuse_cell", opt.fuse_cell);
  echo.save(out_dir / "config.toml");

  write_ply(result.fused, out_dir / "panicle.ply");
  write_trajectory(result.refined, out_dir / "trajectory.txt");

  nlohmann::json reports = nlohmann::json::array();
  int fallbacks = 0;
  double rms_sum = 0.0;
  int rms_n = 0;
  for (const FrameRegistration& r : result.reports) {
    const Vec3& t = r.relative.translation();
    const Quat& q = r.relative.rotation();
    reports.push_back(nlohmann::json{
        {"frame", r.frame_id},
        {"mode", to_string(result.mode)},
        {"attempted", r.attempted},
        {"fk_fallback", r.fk_fallback},
        {"iterations", r.iterations},
        {"rms", round_sig9(r.rms)},
        {"converged", r.converged},
        {"inliers", r.inliers},
        {"error", r.error},
        {"transform",
         {round_sig9(t.x()), round_sig9(t.y()), round_sig9(t.z()), round_sig9(q.x()),
          round_sig9(q.y()), round_sig9(q.z()), round_sig9(q.w())}}});
    if (r.attempted && !r.fk_fallback) {
      rms_sum += r.rms;
      ++rms_n;
    }
    fallbacks += r.fk_fallback ? 1 : 0;
  }
  detail::write_json_file(nlohmann::json{{"frames", reports}}, out_dir / "registration_report.json");

  nlohmann::json metrics{{"command", "reconstruct"},
                         {"mode", to_string(result.mode)},
                         {"frames", static_cast<int>(result.reports.size())},
                         {"fused_points", static_cast<int>(result.fused.size())},
                         {"fk_fallbacks", fallbacks},
                         {"mean_icp_rms", rms_n > 0 ? nlohmann::json(round_sig9(rms_sum / rms_n))
                                                    : nlohmann::json(nullptr)},
                         {"seed_points_skipped", result.seed_points_skipped}};
  if (!scene.gt.seeds.empty()) {
    std::vector<Vec3> centers;
    for (const GtSeed& s : scene.gt.seeds) centers.push_back(s.position);
    const BlurMetrics blur =
        blur_metric(result.fused, centers, 0.45 * scene.config.lattice.pitch);
    metrics["seed_rms"] = round_sig9(blur.seed_rms);
    metrics["spread"] = round_sig9(blur.spread);
    metrics["pose_ate"] = round_sig9(trajectory_ate(result.refined, scene.gt.trajectory).rmse);
  }
  detail::write_json_file(metrics, out_dir / "metrics.json");
  return result;
}

// ---- eval ------------------------------------------------------------------

struct EvalRunOptions {
  std::vector<std::filesystem::path> results;  // slam metrics.json files
  std::optional<std::filesystem::path> est_trajectory;
  std::optional<std::filesystem::path> gt_trajectory;
};

inline nlohmann::json run_eval(const EvalRunOptions& opt,
                               const std::optional<std::filesystem::path>& out_path) {
  if (opt.results.empty() && !(opt.est_trajectory.has_value() && opt.gt_trajectory.has_value())) {
    throw ConfigError("eval: provide --results files and/or --est with --gt");
  }
  nlohmann::json report{{"command", "eval"}};
  if (!opt.results.empty()) {
    std::vector<RangeResult> ranges;
    nlohmann::json per_run = nlohmann::json::array();
    for (const auto& path : opt.results) {
      std::ifstream is(path);
      if (!is) {
        throw InputIoError("cannot open results file: " + path.string());
      }
      nlohmann::json j;
      try {
        is >> j;
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed results file " + path.string() + ": " + e.what());
      }
      if (!j.contains("distance_mapped") || !j.contains("range_length")) {
        throw ConfigError("results file missing distance_mapped/range_length: " + path.string());
      }
      RangeResult r;
      r.range_id = path.string();
      r.range_length = j.at("range_length").get<double>();
      r.mapped = j.at("distance_mapped").get<double>();
      ranges.push_back(r);
      per_run.push_back(nlohmann::json{{"file", path.string()},
                                       {"fraction", round_sig9(*r.mapped / r.range_length)}});
    }
    report["mean_fraction"] = round_sig9(aggregate_distance_mapped(ranges));
    report["runs"] = per_run;
  }
  if (opt.est_trajectory.has_value() && opt.gt_trajectory.has_value()) {
    const AteResult ate = trajectory_ate(read_trajectory(*opt.est_trajectory),
                                         read_trajectory(*opt.gt_trajectory));
    report["ate_rmse"] = round_sig9(ate.rmse);
    report["ate_frames"] = static_cast<int>(ate.per_frame.size());
  }
  if (out_path.has_value()) {
    detail::write_json_file(report, *out_path);
  }
  return report;
}

// ---- table1 ----------------------------------------------------------------

inline std::map<std::string, double> run_table(const std::filesystem::path& data_path,
                                               std::ostream& os,
                                               const std::optional<std::filesystem::path>& out) {
  const PublishedTable table = load_published_table(data_path);
  const std::map<std::string, double> averages = table_method_averages(table);

  os << table.name << "\n";
  os << "range (length)";
  for (const std::string& m : table.methods) os << "  " << m;
  os << "\n";
  char buf[64];
  for (const PublishedTable::Row& row : table.rows) {
    std::snprintf(buf, sizeof(buf), "%s (%.2f m)", row.id.c_str(), row.length);
    os << buf;
    for (const std::string& m : table.methods) {
      const auto& v = row.mapped.at(m);
      if (v.has_value()) {
        std::snprintf(buf, sizeof(buf), "  %.2f m", *v);
        os << buf;
      } else {
        os << "  Failed";
      }
    }
    os << "\n";
  }
  os << "average fraction of range mapped:\n";
  for (const std::string& m : table.methods) {
    std::snprintf(buf, sizeof(buf), "  %-12s %.1f%%\n", m.c_str(), 100.0 * averages.at(m));
    os << buf;
  }

  if (out.has_value()) {
    nlohmann::json j{{"command", "table1"}, {"table", table.name}};
    nlohmann::json av;
    for (const auto& [m, v] : averages) av[m] = round_sig9(v);
    j["average_fraction"] = av;
    detail::write_json_file(j, *out);
  }
  return averages;
}

}  // namespace fieldmap
