#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "fieldmap/eval.hpp"
#include "fieldmap/random.hpp"

using namespace fieldmap;

namespace {

// Published per-range values (Tables 1/2), used here as frozen constants.
const double kLengths[8] = {3.56, 5.00, 4.42, 4.10, 4.78, 3.94, 5.03, 4.43};
const double kOurs[8] = {3.56, 5.00, 2.85, 2.31, 2.31, 3.20, 3.72, 4.43};
const double kSift[8] = {1.86, 0.25, 0.50, 1.47, 0.57, 1.40, 3.15, 4.04};
const double kOrbSlam2[8] = {0.35, 0.25, 0.18, 0.25, 0.31, 0.12, 0.33, 0.26};

std::vector<RangeResult> rows(const double mapped[8]) {
  std::vector<RangeResult> out;
  for (int i = 0; i < 8; ++i) {
    out.push_back(RangeResult{std::to_string(i + 1), kLengths[i], mapped[i]});
  }
  return out;
}

}  // namespace

TEST_CASE("published averages: 78% ours, 38% SIFT, ~6% ORB-SLAM2") {
  REQUIRE(std::abs(aggregate_distance_mapped(rows(kOurs)) - 0.78) < 0.005);
  REQUIRE(std::abs(aggregate_distance_mapped(rows(kSift)) - 0.38) < 0.005);
  REQUIRE(std::abs(aggregate_distance_mapped(rows(kOrbSlam2)) - 0.06) < 0.005);
}

TEST_CASE("Failed rows count as zero meters") {
  std::vector<RangeResult> all_failed;
  for (int i = 0; i < 4; ++i) {
    all_failed.push_back(RangeResult{std::to_string(i), 4.0, std::nullopt});
  }
  REQUIRE(aggregate_distance_mapped(all_failed) == 0.0);

  std::vector<RangeResult> mixed = all_failed;
  mixed.push_back(RangeResult{"x", 4.0, 4.0});
  REQUIRE(aggregate_distance_mapped(mixed) == Catch::Approx(0.2));
}

TEST_CASE("aggregate rejects empty input") {
  REQUIRE_THROWS_AS(aggregate_distance_mapped({}), EmptyInput);
}

TEST_CASE("match accuracy confusion counting") {
  // Ten seeds detected in both frames, identity correspondence.
  std::vector<int> u_ids, v_ids;
  for (int i = 0; i < 10; ++i) {
    u_ids.push_back(i);
    v_ids.push_back(i);
  }

  SECTION("perfect prediction") {
    Assignment a;
    for (int i = 0; i < 10; ++i) a.matches.push_back(Match{i, i, 1.0});
    const MatchReport r = match_accuracy(a, u_ids, v_ids);
    REQUIRE(r.precision == 1.0);
    REQUIRE(r.recall == 1.0);
    REQUIRE(r.f1 == 1.0);
  }
  SECTION("empty prediction: recall 0, precision null") {
    const MatchReport r = match_accuracy(Assignment{}, u_ids, v_ids);
    REQUIRE_FALSE(r.precision.has_value());
    REQUIRE(r.recall == 0.0);
    REQUIRE(r.tp == 0);
    REQUIRE(r.fn == 10);
  }
  SECTION("one swapped pair among ten: 8 tp, 2 fp, 2 fn") {
    Assignment a;
    for (int i = 0; i < 8; ++i) a.matches.push_back(Match{i, i, 1.0});
    a.matches.push_back(Match{8, 9, 1.0});
    a.matches.push_back(Match{9, 8, 1.0});
    const MatchReport r = match_accuracy(a, u_ids, v_ids);
    REQUIRE(r.tp == 8);
    REQUIRE(r.fp == 2);
    REQUIRE(r.fn == 2);
    REQUIRE(*r.precision == Catch::Approx(0.8));
    REQUIRE(*r.recall == Catch::Approx(0.8));
  }
  SECTION("false-positive detections are counted as fp matches") {
    std::vector<int> v_with_fp = v_ids;
    v_with_fp.push_back(-1);
    Assignment a;
    a.matches.push_back(Match{0, 10, 1.0});  // matched onto the fp detection
    const MatchReport r = match_accuracy(a, u_ids, v_with_fp);
    REQUIRE(r.tp == 0);
    REQUIRE(r.fp == 1);
  }
  SECTION("f1 is the exact harmonic mean") {
    Assignment a;
    for (int i = 0; i < 6; ++i) a.matches.push_back(Match{i, i, 1.0});
    a.matches.push_back(Match{6, 7, 1.0});
    const MatchReport r = match_accuracy(a, u_ids, v_ids);
    const double p = *r.precision, rec = *r.recall;
    REQUIRE(*r.f1 == 2.0 * p * rec / (p + rec));
  }
  SECTION("out-of-table index is an error") {
    Assignment a;
    a.matches.push_back(Match{0, 99, 1.0});
    REQUIRE_THROWS_AS(match_accuracy(a, u_ids, v_ids), MissingGroundTruth);
  }
}

TEST_CASE("trajectory ATE") {
  Rng rng(812);
  std::map<int, PoseSE3> gt;
  for (int f = 0; f < 40; ++f) {
    gt.emplace(f, PoseSE3(Quat::Identity(), Vec3(0.1 * f, 0.05 * std::sin(0.3 * f), 0.0)));
  }

  SECTION("estimate equal to ground truth") {
    REQUIRE(trajectory_ate(gt, gt).rmse < 1e-12);
  }
  SECTION("constant offset vanishes after alignment") {
    std::map<int, PoseSE3> est;
    for (const auto& [f, p] : gt) {
      est.emplace(f, PoseSE3(p.rotation(), p.translation() + Vec3(1.0, -2.0, 0.5)));
    }
    REQUIRE(trajectory_ate(est, gt).rmse < 1e-9);
  }
  SECTION("invariant to a rigid transform of the estimate") {
    std::map<int, PoseSE3> noisy;
    for (const auto& [f, p] : gt) {
      noisy.emplace(f, PoseSE3(p.rotation(), p.translation() + Vec3(rng.normal(0, 0.02),
                                                                    rng.normal(0, 0.02),
                                                                    rng.normal(0, 0.02))));
    }
    const double base = trajectory_ate(noisy, gt).rmse;
    const PoseSE3 t(Quat(Eigen::AngleAxisd(1.1, Vec3(0.3, -0.2, 0.93).normalized())),
                    Vec3(5.0, 6.0, -7.0));
    std::map<int, PoseSE3> moved;
    for (const auto& [f, p] : noisy) moved.emplace(f, t * p);
    REQUIRE(std::abs(trajectory_ate(moved, gt).rmse - base) < 1e-9);
  }
  SECTION("iid noise: RMSE within the chi window") {
    std::map<int, PoseSE3> big_gt, est;
    Rng noise(99);
    const double sigma = 0.01;
    for (int f = 0; f < 1000; ++f) {
      const Vec3 t(0.01 * f, 0.0, 0.0);
      big_gt.emplace(f, PoseSE3(Quat::Identity(), t));
      est.emplace(f, PoseSE3(Quat::Identity(), t + Vec3(noise.normal(0, sigma),
                                                        noise.normal(0, sigma),
                                                        noise.normal(0, sigma))));
    }
    const double rmse = trajectory_ate(est, big_gt).rmse;
    REQUIRE(rmse > 0.008 * std::sqrt(3.0));
    REQUIRE(rmse < 0.012 * std::sqrt(3.0));
  }
  SECTION("too few common frames") {
    std::map<int, PoseSE3> two{{0, PoseSE3()}, {1, PoseSE3()}};
    REQUIRE_THROWS_AS(trajectory_ate(two, gt), FrameMismatch);
  }
}

TEST_CASE("published table loader and averages") {
  // A miniature table in the bundled format.
  const auto dir = std::filesystem::temp_directory_path();
  const auto path = dir / "fieldmap_table_test.json";
  {
    std::ofstream os(path);
    os << R"({"table":"mini","methods":["A","B"],
      "ranges":[
        {"id":"1","length_m":2.0,"mapped_m":{"A":1.0,"B":null}},
        {"id":"2","length_m":4.0,"mapped_m":{"A":4.0,"B":1.0}}
      ]})";
  }
  const PublishedTable table = load_published_table(path);
  REQUIRE(table.rows.size() == 2);
  const auto averages = table_method_averages(table);
  REQUIRE(averages.at("A") == Catch::Approx(0.75));   // (0.5 + 1.0) / 2
  REQUIRE(averages.at("B") == Catch::Approx(0.125));  // (0 + 0.25) / 2
  std::filesystem::remove(path);

  REQUIRE_THROWS_AS(load_published_table(dir / "does_not_exist.json"), InputIoError);
}

TEST_CASE("compare_icp_modes smoke: two tiny paired trials") {
  SceneConfig base;
  base.kind = "orbit";
  base.rng_seed = 4;
  base.lattice.pitch = 0.03;
  base.orbit.arc_coverage_deg = 30.0;
  base.orbit.cloud_samples_per_seed = 3;
  const IcpModeComparison cmp = compare_icp_modes(base, 2);
  REQUIRE(cmp.trials == 2);
  REQUIRE(cmp.per_trial.size() == 2);
  REQUIRE(cmp.mean_pose_error_full >= 0.0);
  REQUIRE(cmp.mean_spread_seed > 0.0);
  // Deterministic per-trial seeds.
  const IcpModeComparison again = compare_icp_modes(base, 2);
  REQUIRE(again.per_trial[0].pose_error_full == cmp.per_trial[0].pose_error_full);
  REQUIRE(again.per_trial[1].pose_error_seed == cmp.per_trial[1].pose_error_seed);
}
