#pragma once

#include <string>

#include "fieldmap/error.hpp"
#include "fieldmap/geometry.hpp"

namespace fieldmap {

// Image coordinates: u rightward, v downward, origin at the top-left corner.
// The association cost's vertical penalty |b - n| is defined on v.
struct ImagePoint {
  double u = 0.0;
  double v = 0.0;
};

enum class CameraSide { kLeft, kRight };

inline std::string to_string(CameraSide side) {
  return side == CameraSide::kLeft ? "left" : "right";
}

inline CameraSide side_from_string(const std::string& s) {
  if (s == "left") return CameraSide::kLeft;
  if (s == "right") return CameraSide::kRight;
  throw Error("unknown camera side: " + s);
}

// Rectified pinhole stereo pair; the right camera is displaced by +baseline
// along the left camera's x axis.
struct StereoCamera {
  double fx = 500.0;
  double fy = 500.0;
  double cx = 320.0;
  double cy = 240.0;
  double baseline = 0.1;  // meters
  int width = 640;
  int height = 480;

  double disparity_at(double z) const { return fx * baseline / z; }
};

// Pinhole projection of a camera-frame point.
inline ImagePoint project(const Vec3& p_cam, const StereoCamera& cam, CameraSide side) {
  if (p_cam.z() <= 0.0) {
    throw BehindCamera("project: point at z = " + std::to_string(p_cam.z()));
  }
  ImagePoint px;
  px.u = cam.fx * p_cam.x() / p_cam.z() + cam.cx;
  px.v = cam.fy * p_cam.y() / p_cam.z() + cam.cy;
  if (side == CameraSide::kRight) {
    px.u -= cam.fx * cam.baseline / p_cam.z();
  }
  return px;
}

// Stereo triangulation into the left camera frame:
//   z = fx b / d,  x = (u_l - cx) z / fx,  y = (v_l - cy) z / fy
// with disparity d = u_l - u_r. Disparities at or below min_disparity signal
// a bad match or near-infinite depth.
inline Vec3 triangulate(const ImagePoint& left, const ImagePoint& right,
                        const StereoCamera& cam, double min_disparity = 0.5) {
  const double d = left.u - right.u;
  if (d <= min_disparity) {
    throw NonPositiveDisparity("triangulate: disparity " + std::to_string(d) +
                               " <= " + std::to_string(min_disparity));
  }
  const double z = cam.fx * cam.baseline / d;
  return Vec3((left.u - cam.cx) * z / cam.fx, (left.v - cam.cy) * z / cam.fy, z);
}

}  // namespace fieldmap
