#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "fieldmap/icp.hpp"
#include "fieldmap/random.hpp"

using namespace fieldmap;

namespace {

PointCloud random_cloud(Rng& rng, int n, double extent = 0.4) {
  PointCloud c;
  for (int i = 0; i < n; ++i) {
    c.push_back(Vec3(rng.uniform(-extent / 2, extent / 2), rng.uniform(-extent / 2, extent / 2),
                     rng.uniform(-extent / 2, extent / 2)));
  }
  return c;
}

PoseSE3 small_transform(Rng& rng, double max_trans, double max_rot_deg) {
  const Vec3 axis = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
  const double angle = rng.uniform(-max_rot_deg, max_rot_deg) * M_PI / 180.0;
  return PoseSE3(Quat(Eigen::AngleAxisd(angle, axis)),
                 Vec3(rng.uniform(-max_trans, max_trans), rng.uniform(-max_trans, max_trans),
                      rng.uniform(-max_trans, max_trans)));
}

}  // namespace

TEST_CASE("aligning a cloud to itself is the identity") {
  Rng rng(41);
  const PointCloud cloud = random_cloud(rng, 200);
  IcpConfig cfg;
  cfg.correspondence_radius = 0.05;
  const IcpResult r = icp_align(cloud, cloud, PoseSE3(), cfg);
  REQUIRE(r.converged);
  REQUIRE(r.iterations == 1);
  REQUIRE(r.rms_error < 1e-12);
  REQUIRE(r.transform.translation().norm() < 1e-12);
}

TEST_CASE("recovers a 1 cm translation") {
  Rng rng(43);
  const PointCloud source = random_cloud(rng, 300);
  const PoseSE3 truth(Quat::Identity(), Vec3(0.01, 0.0, 0.0));
  PointCloud target;
  for (const auto& p : source.points) target.push_back(truth * p);
  IcpConfig cfg;
  cfg.correspondence_radius = 0.05;
  const IcpResult r = icp_align(source, target, PoseSE3(), cfg);
  REQUIRE(r.converged);
  REQUIRE((r.transform.translation() - truth.translation()).norm() < 1e-6);
  REQUIRE(rotation_distance(r.transform, truth) < 1e-6);
}

TEST_CASE("recovers small rigid transforms exactly (noiseless)") {
  Rng rng(47);
  for (int trial = 0; trial < 25; ++trial) {
    const PointCloud source = random_cloud(rng, 1500);
    const PoseSE3 truth = small_transform(rng, 0.02, 5.0);
    PointCloud target;
    for (const auto& p : source.points) target.push_back(truth * p);
    IcpConfig cfg;
    cfg.correspondence_radius = 0.08;
    cfg.trim_fraction = 0.2;
    const IcpResult r = icp_align(source, target, PoseSE3(), cfg);
    REQUIRE((r.transform.translation() - truth.translation()).norm() < 1e-4);
    REQUIRE(rotation_distance(r.transform, truth) < 1e-4);
  }
}

TEST_CASE("forward and backward alignments compose to identity") {
  Rng rng(53);
  const PointCloud a = random_cloud(rng, 800);
  const PoseSE3 truth = small_transform(rng, 0.015, 4.0);
  PointCloud b;
  for (const auto& p : a.points) b.push_back(truth * p);
  IcpConfig cfg;
  cfg.correspondence_radius = 0.08;
  const IcpResult fwd = icp_align(a, b, PoseSE3(), cfg);
  const IcpResult bwd = icp_align(b, a, PoseSE3(), cfg);
  REQUIRE(fwd.converged);
  REQUIRE(bwd.converged);
  const PoseSE3 compose = fwd.transform * bwd.transform;
  REQUIRE(compose.translation().norm() < 10.0 * cfg.convergence_tol);
  REQUIRE(rotation_distance(compose, PoseSE3()) < 1e-4);
}

TEST_CASE("disjoint clouds have insufficient overlap") {
  Rng rng(59);
  const PointCloud a = random_cloud(rng, 100, 0.2);
  PointCloud b;
  for (const auto& p : a.points) b.push_back(p + Vec3(1.0, 0.0, 0.0));
  IcpConfig cfg;
  cfg.correspondence_radius = 0.05;
  REQUIRE_THROWS_AS(icp_align(a, b, PoseSE3(), cfg), InsufficientOverlap);
}

TEST_CASE("collinear correspondences are degenerate") {
  PointCloud line;
  for (int i = 0; i < 50; ++i) line.push_back(Vec3(0.01 * i, 0.0, 0.0));
  IcpConfig cfg;
  cfg.correspondence_radius = 0.05;
  cfg.trim_fraction = 0.0;
  REQUIRE_THROWS_AS(icp_align(line, line, PoseSE3(), cfg), DegenerateGeometry);
}

TEST_CASE("seed center cloud: cardinality and skip counting") {
  StereoCamera cam;
  std::vector<std::pair<ImagePoint, ImagePoint>> matches;
  for (int i = 0; i < 30; ++i) {
    matches.emplace_back(ImagePoint{300.0 + i, 200.0}, ImagePoint{250.0 + i, 200.0});
  }
  matches.emplace_back(ImagePoint{100, 100}, ImagePoint{100, 100});  // zero disparity
  int skipped = 0;
  const PointCloud cloud = seed_center_cloud(matches, cam, 0.5, &skipped);
  REQUIRE(cloud.size() == 30);
  REQUIRE(skipped == 1);
}

TEST_CASE("fuse: single frame is just the transformed cloud") {
  Rng rng(61);
  const PointCloud cloud = random_cloud(rng, 50, 0.1);
  const PoseSE3 pose(Quat::Identity(), Vec3(1.0, 2.0, 3.0));
  const PointCloud fused = fuse({{cloud, pose}}, 0.001);
  REQUIRE(fused.size() == cloud.size());
  // Every fused point should be a transformed input point (cells are tiny).
  double max_d = 0.0;
  for (const auto& p : fused.points) {
    double best = 1e9;
    for (const auto& q : cloud.points) best = std::min(best, (p - (pose * q)).norm());
    max_d = std::max(max_d, best);
  }
  REQUIRE(max_d < 1e-9);
}

TEST_CASE("fuse: duplicates collapse and order does not matter") {
  Rng rng(67);
  const PointCloud cloud = random_cloud(rng, 200, 0.2);
  const PointCloud dup = fuse({{cloud, PoseSE3()}, {cloud, PoseSE3()}}, 0.02);
  const PointCloud single = fuse({{cloud, PoseSE3()}}, 0.02);
  REQUIRE(dup.size() == single.size());

  PointCloud other = random_cloud(rng, 150, 0.2);
  const PointCloud ab = fuse({{cloud, PoseSE3()}, {other, PoseSE3()}}, 0.02);
  const PointCloud ba = fuse({{other, PoseSE3()}, {cloud, PoseSE3()}}, 0.02);
  REQUIRE(ab.size() == ba.size());
  for (std::size_t i = 0; i < ab.size(); ++i) {
    REQUIRE((ab.points[i] - ba.points[i]).norm() < 1e-9);  // sorted cell order
  }
}

TEST_CASE("blur metric: perfect poses sit at the sensor noise floor") {
  Rng rng(71);
  // 27 seeds on a grid, sampled with 1.5 mm noise from two "frames".
  std::vector<Vec3> centers;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) centers.push_back(Vec3(0.02 * i, 0.02 * j, 0.02 * k));
    }
  }
  const double sigma = 0.0015;
  PointCloud fused;
  for (int rep = 0; rep < 12; ++rep) {
    for (const auto& c : centers) {
      fused.push_back(c + Vec3(rng.normal(0, sigma), rng.normal(0, sigma), rng.normal(0, sigma)));
    }
  }
  const BlurMetrics m = blur_metric(fused, centers, 0.009);
  const double floor = sigma * std::sqrt(3.0);
  REQUIRE(m.spread > 0.3 * floor);
  REQUIRE(m.spread < 2.0 * floor);

  // Misregistration (one half shifted by 5 mm) must grow the spread.
  PointCloud blurred = fused;
  for (std::size_t i = 0; i < blurred.points.size() / 2; ++i) {
    blurred.points[i] += Vec3(0.005, 0.0, 0.0);
  }
  const BlurMetrics worse = blur_metric(blurred, centers, 0.009);
  REQUIRE(worse.spread > m.spread);
}

TEST_CASE("blur metric error paths") {
  PointCloud cloud;
  cloud.push_back(Vec3::Zero());
  REQUIRE_THROWS_AS(blur_metric(cloud, {}, 0.01), NoGroundTruth);
  REQUIRE_THROWS_AS(blur_metric(PointCloud{}, {Vec3::Zero()}, 0.01), EmptyInput);
}
