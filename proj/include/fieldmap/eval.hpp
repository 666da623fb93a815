#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fieldmap/association.hpp"
#include "fieldmap/error.hpp"
#include "fieldmap/geometry.hpp"
#include "fieldmap/pipeline.hpp"

namespace fieldmap {

// ---------------------------------------------------------------------------
// Maximum Distance Mapped aggregation
// ---------------------------------------------------------------------------

struct RangeResult {
  std::string range_id;
  double range_length = 0.0;            // meters
  std::optional<double> mapped;         // nullopt = Failed (counts as 0 m)
};

// Mean over ranges of mapped/length; Failed rows contribute 0. This is the
// convention under which the published per-range numbers average to their
// reported 78%/38% figures.
inline double aggregate_distance_mapped(const std::vector<RangeResult>& results) {
  if (results.empty()) {
    throw EmptyInput("aggregate_distance_mapped: no results");
  }
  double sum = 0.0;
  for (const RangeResult& r : results) {
    if (!(r.range_length > 0.0)) {
      throw Error("aggregate_distance_mapped: non-positive range length for " + r.range_id);
    }
    sum += r.mapped.has_value() ? *r.mapped / r.range_length : 0.0;
  }
  return sum / static_cast<double>(results.size());
}

// ---------------------------------------------------------------------------
// Match accuracy against simulator ground truth
// ---------------------------------------------------------------------------

struct MatchReport {
  std::optional<double> precision;  // null when no predictions
  std::optional<double> recall;     // null when no ground-truth pairs
  std::optional<double> f1;
  int tp = 0;
  int fp = 0;
  int fn = 0;
};

// `u_seed_ids` / `v_seed_ids` map detection indices to seed ids (-1 = false
// positive). A predicted match is correct when both sides carry the same
// real seed.
inline MatchReport match_accuracy(const Assignment& predicted,
                                  const std::vector<int>& u_seed_ids,
                                  const std::vector<int>& v_seed_ids) {
  std::set<int> u_seeds, v_seeds;
  for (const int id : u_seed_ids) {
    if (id >= 0) u_seeds.insert(id);
  }
  for (const int id : v_seed_ids) {
    if (id >= 0) v_seeds.insert(id);
  }
  int gt_pairs = 0;
  for (const int id : u_seeds) gt_pairs += v_seeds.count(id) > 0 ? 1 : 0;

  MatchReport report;
  for (const Match& m : predicted.matches) {
    if (m.u_index < 0 || m.u_index >= static_cast<int>(u_seed_ids.size()) || m.v_index < 0 ||
        m.v_index >= static_cast<int>(v_seed_ids.size())) {
      throw MissingGroundTruth("match_accuracy: match index outside correspondence table");
    }
    const int a = u_seed_ids[m.u_index];
    const int b = v_seed_ids[m.v_index];
    if (a >= 0 && a == b) {
      ++report.tp;
    } else {
      ++report.fp;
    }
  }
  report.fn = gt_pairs - report.tp;
  if (report.tp + report.fp > 0) {
    report.precision = static_cast<double>(report.tp) / (report.tp + report.fp);
  }
  if (gt_pairs > 0) {
    report.recall = static_cast<double>(report.tp) / gt_pairs;
  }
  if (report.precision.has_value() && report.recall.has_value()) {
    const double p = *report.precision;
    const double r = *report.recall;
    report.f1 = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Absolute trajectory error
// ---------------------------------------------------------------------------

struct AteResult {
  double rmse = 0.0;
  std::vector<std::pair<int, double>> per_frame;  // frame id -> translational error
};

// Rigid (no-scale) alignment of the estimate onto the ground truth, then the
// RMSE of the translational differences. Stereo fixes metric scale, so no
// scale is estimated.
inline AteResult trajectory_ate(const std::map<int, PoseSE3>& estimated,
                                const std::map<int, PoseSE3>& ground_truth) {
  std::vector<int> common;
  for (const auto& [id, pose] : estimated) {
    (void)pose;
    if (ground_truth.count(id) > 0) common.push_back(id);
  }
  if (common.size() < 3) {
    throw FrameMismatch("trajectory_ate: " + std::to_string(common.size()) +
                        " common frames (need 3)");
  }
  std::vector<Vec3> est, gt;
  est.reserve(common.size());
  gt.reserve(common.size());
  for (const int id : common) {
    est.push_back(estimated.at(id).translation());
    gt.push_back(ground_truth.at(id).translation());
  }
  const PoseSE3 align = umeyama_rigid(est, gt, /*allow_degenerate=*/true);
  AteResult out;
  double sq = 0.0;
  for (std::size_t i = 0; i < common.size(); ++i) {
    const double e = (align * est[i] - gt[i]).norm();
    out.per_frame.emplace_back(common[i], e);
    sq += e * e;
  }
  out.rmse = std::sqrt(sq / static_cast<double>(common.size()));
  return out;
}

// ---------------------------------------------------------------------------
// Seed-center vs full-cloud ICP comparison on paired simulator trials
// ---------------------------------------------------------------------------

struct IcpModeTrial {
  std::uint64_t seed = 0;
  double pose_error_full = 0.0;  // trajectory ATE, meters
  double pose_error_seed = 0.0;
  BlurMetrics blur_full;
  BlurMetrics blur_seed;
  bool seed_wins_pose = false;
};

struct IcpModeComparison {
  int trials = 0;
  int seed_center_pose_wins = 0;
  double mean_pose_error_full = 0.0;
  double mean_pose_error_seed = 0.0;
  double mean_spread_full = 0.0;
  double mean_spread_seed = 0.0;
  std::vector<IcpModeTrial> per_trial;
};

// Runs both ICP modes on identical orbit scenes; per-trial seeds derive
// deterministically from the base config seed.
inline IcpModeComparison compare_icp_modes(const SceneConfig& base, int trials,
                                           double fuse_cell = 0.005) {
  if (trials < 1) {
    throw EmptyInput("compare_icp_modes: trials must be >= 1");
  }
  IcpModeComparison cmp;
  cmp.trials = trials;
  for (int t = 0; t < trials; ++t) {
    SceneConfig cfg = base;
    cfg.kind = "orbit";
    cfg.rng_seed = Rng::mix(base.rng_seed, static_cast<std::uint64_t>(t));
    const Scene scene = generate_orbit_scene(cfg);

    std::vector<Vec3> centers;
    centers.reserve(scene.gt.seeds.size());
    for (const GtSeed& s : scene.gt.seeds) centers.push_back(s.position);
    const double assoc_radius = 0.45 * cfg.lattice.pitch;

    IcpModeTrial trial;
    trial.seed = cfg.rng_seed;

    ReconstructOptions full_opt = ReconstructOptions::defaults_for(scene, IcpMode::kFullCloud);
    full_opt.fuse_cell = fuse_cell;
    const ReconstructResult full = reconstruct_scene(scene, full_opt);
    trial.pose_error_full = trajectory_ate(full.refined, scene.gt.trajectory).rmse;
    trial.blur_full = blur_metric(full.fused, centers, assoc_radius);

    ReconstructOptions seed_opt = ReconstructOptions::defaults_for(scene, IcpMode::kSeedCenters);
    seed_opt.fuse_cell = fuse_cell;
    const ReconstructResult seeded = reconstruct_scene(scene, seed_opt);
    trial.pose_error_seed = trajectory_ate(seeded.refined, scene.gt.trajectory).rmse;
    trial.blur_seed = blur_metric(seeded.fused, centers, assoc_radius);

    trial.seed_wins_pose = trial.pose_error_seed < trial.pose_error_full;
    cmp.seed_center_pose_wins += trial.seed_wins_pose ? 1 : 0;
    cmp.mean_pose_error_full += trial.pose_error_full;
    cmp.mean_pose_error_seed += trial.pose_error_seed;
    cmp.mean_spread_full += trial.blur_full.spread;
    cmp.mean_spread_seed += trial.blur_seed.spread;
    cmp.per_trial.push_back(trial);
  }
  const double inv = 1.0 / static_cast<double>(trials);
  cmp.mean_pose_error_full *= inv;
  cmp.mean_pose_error_seed *= inv;
  cmp.mean_spread_full *= inv;
  cmp.mean_spread_seed *= inv;
  return cmp;
}

// ---------------------------------------------------------------------------
// Published per-range tables (transcribed constants, shipped as data files)
// ---------------------------------------------------------------------------

struct PublishedTable {
  std::string name;
  std::vector<std::string> methods;
  struct Row {
    std::string id;
    double length = 0.0;
    std::map<std::string, std::optional<double>> mapped;  // nullopt = Failed
  };
  std::vector<Row> rows;
};

inline PublishedTable load_published_table(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) {
    throw InputIoError("cannot open table data: " + path.string());
  }
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed table data " + path.string() + ": " + e.what());
  }
  PublishedTable table;
  try {
    table.name = j.at("table").get<std::string>();
    table.methods = j.at("methods").get<std::vector<std::string>>();
    for (const auto& row : j.at("ranges")) {
      PublishedTable::Row r;
      r.id = row.at("id").get<std::string>();
      r.length = row.at("length_m").get<double>();
      if (!(r.length > 0.0)) {
        throw ConfigError("table row " + r.id + ": non-positive length");
      }
      const auto& mapped = row.at("mapped_m");
      for (const std::string& method : table.methods) {
        const auto& v = mapped.at(method);
        if (v.is_null()) {
          r.mapped[method] = std::nullopt;
        } else {
          r.mapped[method] = v.get<double>();
        }
      }
      table.rows.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed table data " + path.string() + ": " + e.what());
  }
  if (table.rows.empty()) {
    throw ConfigError("table data has no ranges: " + path.string());
  }
  return table;
}

inline std::map<std::string, double> table_method_averages(const PublishedTable& table) {
  std::map<std::string, double> averages;
  for (const std::string& method : table.methods) {
    std::vector<RangeResult> results;
    for (const PublishedTable::Row& row : table.rows) {
      results.push_back(RangeResult{row.id, row.length, row.mapped.at(method)});
    }
    averages[method] = aggregate_distance_mapped(results);
  }
  return averages;
}

}  // namespace fieldmap
