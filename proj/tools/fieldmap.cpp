// fieldmap — semantic seed-landmark SLAM, reconstruction, and evaluation
// experiments on synthetic sorghum scenes.
//
// Subcommands: simulate, match, slam, reconstruct, eval, table1.
// Exit codes: 0 success, 2 config error, 3 output I/O error, 4 input I/O error.
// Set FIELDMAP_LOG={error,info,debug} for diagnostics on stderr.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fieldmap/runner.hpp"

namespace {

std::optional<fieldmap::CostVariant> parse_variant(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return fieldmap::cost_variant_from_string(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fieldmap: structural seed matching, SLAM, and panicle reconstruction"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic scene directory");
  std::string sim_config, sim_out;
  std::int64_t sim_seed = -1;
  sim->add_option("--config", sim_config, "Scene config file (TOML)")->required();
  sim->add_option("--out", sim_out, "Output scene directory")->required();
  sim->add_option("--seed", sim_seed, "Override [scene] rng_seed");

  // match
  auto* match = app.add_subcommand("match", "Run data association over a scene");
  std::string match_scene, match_out, match_matcher = "structural", match_variant;
  double match_threshold = -1.0;
  match->add_option("scene", match_scene, "Scene directory")->required();
  match->add_option("--out", match_out, "Output directory")->required();
  match->add_option("--matcher", match_matcher, "structural | baseline")
      ->check(CLI::IsMember({"structural", "baseline"}));
  match->add_option("--cost-variant", match_variant, "literal | deviation")
      ->check(CLI::IsMember({"literal", "deviation"}));
  match->add_option("--threshold", match_threshold, "Confidence cost threshold");

  // slam
  auto* slam = app.add_subcommand("slam", "Run the SLAM pipeline over a range scene");
  std::string slam_scene, slam_out, slam_matcher = "structural", slam_variant;
  double slam_threshold = -1.0;
  slam->add_option("scene", slam_scene, "Scene directory")->required();
  slam->add_option("--out", slam_out, "Output directory")->required();
  slam->add_option("--matcher", slam_matcher, "structural | baseline")
      ->check(CLI::IsMember({"structural", "baseline"}));
  slam->add_option("--cost-variant", slam_variant, "literal | deviation")
      ->check(CLI::IsMember({"literal", "deviation"}));
  slam->add_option("--threshold", slam_threshold, "Confidence cost threshold");

  // reconstruct
  auto* rec = app.add_subcommand("reconstruct", "Chained-ICP reconstruction of an orbit scene");
  std::string rec_scene, rec_out, rec_mode = "seed-centers";
  double rec_fuse_cell = 0.005, rec_radius = -1.0;
  rec->add_option("scene", rec_scene, "Scene directory")->required();
  rec->add_option("--out", rec_out, "Output directory")->required();
  rec->add_option("--icp", rec_mode, "full-cloud | seed-centers")
      ->check(CLI::IsMember({"full-cloud", "seed-centers", "full_cloud", "seed_centers"}));
  rec->add_option("--fuse-cell", rec_fuse_cell,
                  "Fusion voxel size in meters (0.03 = field-scale figure)");
  rec->add_option("--radius", rec_radius, "ICP correspondence radius override");

  // eval
  auto* ev = app.add_subcommand("eval", "Aggregate run metrics and/or compute trajectory ATE");
  std::vector<std::string> ev_results;
  std::string ev_est, ev_gt, ev_out;
  ev->add_option("--results", ev_results, "slam metrics.json files to aggregate");
  ev->add_option("--est", ev_est, "Estimated trajectory file");
  ev->add_option("--gt", ev_gt, "Ground-truth trajectory file");
  ev->add_option("--out", ev_out, "Report output path (report.json)");

  // table1
  auto* tab = app.add_subcommand("table1", "Print a published per-range table and its averages");
  std::string tab_data, tab_out;
  tab->add_option("--data", tab_data, "Table data file (JSON)")->required();
  tab->add_option("--out", tab_out, "Optional JSON output of the averages");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) {
      fieldmap::run_simulate(sim_config, sim_out,
                             sim_seed >= 0
                                 ? std::optional<std::uint64_t>(static_cast<std::uint64_t>(sim_seed))
                                 : std::nullopt);
    } else if (match->parsed()) {
      fieldmap::MatchRunOptions opt;
      opt.matcher = match_matcher == "baseline" ? fieldmap::MatcherKind::kBaseline
                                                : fieldmap::MatcherKind::kStructural;
      opt.variant_override = parse_variant(match_variant);
      if (match_threshold > 0.0) opt.threshold_override = match_threshold;
      fieldmap::run_match(match_scene, match_out, opt);
    } else if (slam->parsed()) {
      fieldmap::SlamRunOptions opt;
      opt.matcher = slam_matcher == "baseline" ? fieldmap::MatcherKind::kBaseline
                                               : fieldmap::MatcherKind::kStructural;
      opt.variant_override = parse_variant(slam_variant);
      if (slam_threshold > 0.0) opt.threshold_override = slam_threshold;
      fieldmap::run_slam(slam_scene, slam_out, opt);
    } else if (rec->parsed()) {
      fieldmap::ReconstructRunOptions opt;
      opt.mode = fieldmap::icp_mode_from_string(rec_mode);
      opt.fuse_cell = rec_fuse_cell;
      if (rec_radius > 0.0) opt.radius_override = rec_radius;
      fieldmap::run_reconstruct(rec_scene, rec_out, opt);
    } else if (ev->parsed()) {
      fieldmap::EvalRunOptions opt;
      for (const std::string& r : ev_results) opt.results.emplace_back(r);
      if (!ev_est.empty()) opt.est_trajectory = ev_est;
      if (!ev_gt.empty()) opt.gt_trajectory = ev_gt;
      const auto report = fieldmap::run_eval(
          opt, ev_out.empty() ? std::nullopt
                              : std::optional<std::filesystem::path>(ev_out));
      std::cout << report.dump(2) << "\n";
    } else if (tab->parsed()) {
      fieldmap::run_table(tab_data, std::cout,
                          tab_out.empty() ? std::nullopt
                                          : std::optional<std::filesystem::path>(tab_out));
    }
  } catch (const fieldmap::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const fieldmap::OutputIoError& e) {
    std::cerr << "output error: " << e.what() << "\n";
    return 3;
  } catch (const fieldmap::InputIoError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
