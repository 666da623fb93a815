#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "fieldmap/backend.hpp"
#include "fieldmap/point_cloud.hpp"
#include "fieldmap/simulator.hpp"

namespace fieldmap {

// Scene directory layout:
//   config.toml               echoed generator config
//   detections.jsonl          one record per frame per side
//   clouds/frame_%04d.ply     orbit scenes, camera-frame stereo clouds
//   gt/seeds.json             seed id, panicle id, world position
//   gt/trajectory.txt         frame_id tx ty tz qx qy qz qw
//   gt/correspondences.jsonl  detection index -> seed id (-1 = false positive)
//   fk/trajectory.txt         orbit scenes, noisy forward-kinematics poses

namespace detail {

inline std::string cloud_filename(int frame_id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04d.ply", frame_id);
  return buf;
}

}  // namespace detail

inline void write_scene(const Scene& scene, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "gt", ec);
  if (ec) {
    throw OutputIoError("cannot create scene directory: " + dir.string());
  }
  scene.config.to_config().save(dir / "config.toml");

  {
    std::ofstream os(dir / "detections.jsonl");
    std::ofstream corr(dir / "gt" / "correspondences.jsonl");
    if (!os || !corr) {
      throw OutputIoError("cannot write detections under " + dir.string());
    }
    for (const FrameDetections& d : scene.detections) {
      nlohmann::json keypoints = nlohmann::json::array();
      nlohmann::json bboxes = nlohmann::json::array();
      for (const SeedKeypoint& kp : d.keypoints) {
        keypoints.push_back({kp.center.u, kp.center.v});
        if (kp.bbox.has_value()) {
          bboxes.push_back({(*kp.bbox)[0], (*kp.bbox)[1], (*kp.bbox)[2], (*kp.bbox)[3]});
        } else {
          bboxes.push_back(nullptr);
        }
      }
      os << nlohmann::json{{"frame", d.frame_id},
                           {"side", to_string(d.side)},
                           {"keypoints", keypoints},
                           {"bboxes", bboxes}}
                .dump()
         << "\n";
      corr << nlohmann::json{{"frame", d.frame_id},
                             {"side", to_string(d.side)},
                             {"seed_ids", d.seed_ids}}
                  .dump()
           << "\n";
    }
  }

  {
    nlohmann::json seeds = nlohmann::json::array();
    for (const GtSeed& s : scene.gt.seeds) {
      seeds.push_back({{"id", s.id},
                       {"panicle", s.panicle},
                       {"position", {s.position.x(), s.position.y(), s.position.z()}}});
    }
    std::ofstream os(dir / "gt" / "seeds.json");
    if (!os) {
      throw OutputIoError("cannot write gt/seeds.json under " + dir.string());
    }
    os << nlohmann::json{{"seeds", seeds}}.dump(2) << "\n";
  }

  write_trajectory(scene.gt.trajectory, dir / "gt" / "trajectory.txt");

  if (scene.is_orbit()) {
    fs::create_directories(dir / "fk", ec);
    fs::create_directories(dir / "clouds", ec);
    if (ec) {
      throw OutputIoError("cannot create scene subdirectories: " + dir.string());
    }
    write_trajectory(scene.fk_trajectory, dir / "fk" / "trajectory.txt");
    for (const auto& [frame_id, cloud] : scene.clouds) {
      write_ply(cloud, dir / "clouds" / detail::cloud_filename(frame_id));
    }
  }
}

inline Scene load_scene(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::exists(dir / "config.toml") || !fs::exists(dir / "detections.jsonl")) {
    throw InputIoError("not a scene directory (missing config.toml/detections.jsonl): " +
                       dir.string());
  }
  Scene scene;
  scene.config = SceneConfig::from_config(ConfigFile::load(dir / "config.toml"));

  // Detections (+ optional ground-truth correspondences).
  {
    std::ifstream is(dir / "detections.jsonl");
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw InputIoError("malformed detections.jsonl in " + dir.string() + ": " + e.what());
      }
      FrameDetections d;
      d.frame_id = j.at("frame").get<int>();
      d.side = side_from_string(j.at("side").get<std::string>());
      const auto& keypoints = j.at("keypoints");
      const auto& bboxes = j.at("bboxes");
      for (std::size_t i = 0; i < keypoints.size(); ++i) {
        SeedKeypoint kp;
        kp.center = ImagePoint{keypoints[i][0].get<double>(), keypoints[i][1].get<double>()};
        kp.frame_id = d.frame_id;
        kp.side = d.side;
        kp.index = static_cast<int>(i);
        if (i < bboxes.size() && !bboxes[i].is_null()) {
          kp.bbox = std::array<double, 4>{bboxes[i][0].get<double>(), bboxes[i][1].get<double>(),
                                          bboxes[i][2].get<double>(), bboxes[i][3].get<double>()};
        }
        d.keypoints.push_back(kp);
      }
      d.seed_ids.assign(d.keypoints.size(), -1);
      scene.detections.push_back(std::move(d));
    }
  }
  if (fs::exists(dir / "gt" / "correspondences.jsonl")) {
    std::ifstream is(dir / "gt" / "correspondences.jsonl");
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const nlohmann::json j = nlohmann::json::parse(line);
      const int frame_id = j.at("frame").get<int>();
      const CameraSide side = side_from_string(j.at("side").get<std::string>());
      for (FrameDetections& d : scene.detections) {
        if (d.frame_id == frame_id && d.side == side) {
          d.seed_ids = j.at("seed_ids").get<std::vector<int>>();
          break;
        }
      }
    }
  }

  if (fs::exists(dir / "gt" / "seeds.json")) {
    std::ifstream is(dir / "gt" / "seeds.json");
    nlohmann::json j;
    is >> j;
    for (const auto& s : j.at("seeds")) {
      GtSeed seed;
      seed.id = s.at("id").get<int>();
      seed.panicle = s.at("panicle").get<int>();
      const auto& p = s.at("position");
      seed.position = Vec3(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
      scene.gt.seeds.push_back(seed);
    }
  }
  if (fs::exists(dir / "gt" / "trajectory.txt")) {
    scene.gt.trajectory = read_trajectory(dir / "gt" / "trajectory.txt");
  }
  if (fs::exists(dir / "fk" / "trajectory.txt")) {
    scene.fk_trajectory = read_trajectory(dir / "fk" / "trajectory.txt");
  }
  if (fs::exists(dir / "clouds")) {
    for (const auto& [frame_id, pose] : scene.is_orbit() ? scene.fk_trajectory
                                                         : scene.gt.trajectory) {
      (void)pose;
      const fs::path p = dir / "clouds" / detail::cloud_filename(frame_id);
      if (fs::exists(p)) scene.clouds.emplace(frame_id, read_ply(p));
    }
  }
  return scene;
}

}  // namespace fieldmap
