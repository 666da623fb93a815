#include <catch2/catch_amalgamated.hpp>
#include <set>
#include <sstream>

#include "fieldmap/point_cloud.hpp"
#include "fieldmap/random.hpp"

using namespace fieldmap;

TEST_CASE("two points in one cell collapse to their centroid") {
  PointCloud cloud;
  cloud.push_back(Vec3(0.010, 0.010, 0.010));
  cloud.push_back(Vec3(0.020, 0.010, 0.010));
  const PointCloud out = voxel_downsample(cloud, 0.03);
  REQUIRE(out.size() == 1);
  REQUIRE((out.points[0] - Vec3(0.015, 0.010, 0.010)).norm() < 1e-12);
}

TEST_CASE("grid coarser than the cell is left intact") {
  PointCloud cloud;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) cloud.push_back(Vec3(0.05 * i, 0.05 * j, 0.0));
  }
  REQUIRE(voxel_downsample(cloud, 0.03).size() == cloud.size());
}

TEST_CASE("random cube at half-meter cells: occupancy oracle") {
  Rng rng(5);
  PointCloud cloud;
  std::set<std::array<long long, 3>> occupied;
  for (int i = 0; i < 1000; ++i) {
    const Vec3 p(rng.uniform(), rng.uniform(), rng.uniform());
    cloud.push_back(p);
    occupied.insert({static_cast<long long>(std::floor(p.x() / 0.5)),
                     static_cast<long long>(std::floor(p.y() / 0.5)),
                     static_cast<long long>(std::floor(p.z() / 0.5))});
  }
  const PointCloud out = voxel_downsample(cloud, 0.5);
  REQUIRE(out.size() == occupied.size());
  REQUIRE(out.size() <= 8);
}

TEST_CASE("downsampling is idempotent") {
  Rng rng(6);
  PointCloud cloud;
  for (int i = 0; i < 500; ++i) {
    cloud.push_back(Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)));
  }
  const PointCloud once = voxel_downsample(cloud, 0.07);
  const PointCloud twice = voxel_downsample(once, 0.07);
  REQUIRE(once.size() == twice.size());
  for (std::size_t i = 0; i < once.size(); ++i) {
    REQUIRE((once.points[i] - twice.points[i]).norm() < 1e-15);
  }
}

TEST_CASE("empty cloud stays empty") {
  REQUIRE(voxel_downsample(PointCloud{}, 0.1).empty());
}

TEST_CASE("colors are averaged per cell") {
  PointCloud cloud;
  cloud.push_back(Vec3(0.01, 0.01, 0.01), Color{100, 0, 0});
  cloud.push_back(Vec3(0.02, 0.01, 0.01), Color{200, 0, 0});
  const PointCloud out = voxel_downsample(cloud, 0.05);
  REQUIRE(out.size() == 1);
  REQUIRE(static_cast<int>(out.colors[0][0]) == 150);
}

TEST_CASE("PLY header and write/read round trip") {
  PointCloud cloud;
  Rng rng(8);
  for (int i = 0; i < 40; ++i) {
    cloud.push_back(Vec3(rng.normal(), rng.normal(), rng.normal()),
                    Color{static_cast<std::uint8_t>(rng.uniform_int(0, 255)),
                          static_cast<std::uint8_t>(rng.uniform_int(0, 255)),
                          static_cast<std::uint8_t>(rng.uniform_int(0, 255))});
  }
  std::ostringstream os;
  write_ply(cloud, os);
  const std::string text = os.str();
  REQUIRE(text.find("element vertex 40") != std::string::npos);
  REQUIRE(text.find("property uchar red") != std::string::npos);

  std::istringstream is(text);
  const PointCloud back = read_ply(is);
  REQUIRE(back.size() == cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    REQUIRE((back.points[i] - cloud.points[i]).norm() == 0.0);  // exact round trip
    REQUIRE(back.colors[i] == cloud.colors[i]);
  }
}

TEST_CASE("PLY reader rejects non-PLY input") {
  std::istringstream is("not a ply\n1 2 3\n");
  REQUIRE_THROWS_AS(read_ply(is), InputIoError);
}
