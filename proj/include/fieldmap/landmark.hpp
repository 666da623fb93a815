#pragma once

#include <array>
#include <optional>
#include <vector>

#include "fieldmap/camera.hpp"
#include "fieldmap/geometry.hpp"

namespace fieldmap {

// A detected seed keypoint: the fitted ellipse center in pixel coordinates.
// `index` is the detection's position within its frame/side list, so
// assignments and ground-truth correspondence tables can refer back to it.
struct SeedKeypoint {
  ImagePoint center;
  std::optional<std::array<double, 4>> bbox;  // x_min, y_min, x_max, y_max
  int frame_id = 0;
  CameraSide side = CameraSide::kLeft;
  int index = -1;
};

struct LandmarkObservation {
  int frame_id = 0;
  CameraSide side = CameraSide::kLeft;
  SeedKeypoint keypoint;
};

// A mapped 3D seed center with its observation history.
struct Landmark {
  int id = 0;
  Vec3 position = Vec3::Zero();  // world frame, meters
  std::vector<LandmarkObservation> observations;
};

}  // namespace fieldmap
