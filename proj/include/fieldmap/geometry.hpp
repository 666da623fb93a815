#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <cmath>
#include <vector>

#include "fieldmap/error.hpp"

namespace fieldmap {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

// Rodrigues formula with a series fallback for small angles.
inline Mat3 so3_exp(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 W = skew(w);
  if (theta2 < 1e-16) {
    return Mat3::Identity() + W + 0.5 * W * W;
  }
  const double theta = std::sqrt(theta2);
  return Mat3::Identity() + (std::sin(theta) / theta) * W +
         ((1.0 - std::cos(theta)) / theta2) * W * W;
}

// Log map via the unit quaternion; stable near the identity.
inline Vec3 so3_log(const Mat3& r) {
  Quat q(r);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vec3 v(q.x(), q.y(), q.z());
  const double n = v.norm();
  if (n < 1e-12) {
    return 2.0 * v;  // angle ~ 0
  }
  const double angle = 2.0 * std::atan2(n, q.w());
  return (angle / n) * v;
}

// Inverse of the right Jacobian of SO(3); needed for rotation-residual
// Jacobians in the factor graph.
inline Mat3 so3_right_jacobian_inv(const Vec3& phi) {
  const double theta2 = phi.squaredNorm();
  const Mat3 W = skew(phi);
  if (theta2 < 1e-12) {
    return Mat3::Identity() + 0.5 * W + (1.0 / 12.0) * W * W;
  }
  const double theta = std::sqrt(theta2);
  const double c = 1.0 / theta2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() + 0.5 * W + c * W * W;
}

inline Mat3 so3_left_jacobian_inv(const Vec3& phi) { return so3_right_jacobian_inv(-phi); }

// Rigid body pose. Quaternion is Hamilton convention, stored w-first in all
// file formats that spell components out; translation in meters. Construction
// rejects quaternions whose norm is off by more than 1e-6 and renormalizes the
// rest, so downstream code can rely on unit rotations.
class PoseSE3 {
 public:
  PoseSE3() : q_(1.0, 0.0, 0.0, 0.0), t_(Vec3::Zero()) {}

  PoseSE3(const Quat& q, const Vec3& t) : q_(q), t_(t) {
    const double n = q_.norm();
    if (std::abs(n - 1.0) > 1e-6) {
      throw NonUnitQuaternion("quaternion norm " + std::to_string(n) +
                              " deviates from 1 by more than 1e-6");
    }
    q_.normalize();
  }

  static PoseSE3 identity() { return PoseSE3(); }

  static PoseSE3 from_matrix(const Mat3& r, const Vec3& t) { return PoseSE3(Quat(r), t); }

  static PoseSE3 from_wxyz(double w, double x, double y, double z, const Vec3& t) {
    return PoseSE3(Quat(w, x, y, z), t);
  }

  const Quat& rotation() const { return q_; }
  const Vec3& translation() const { return t_; }
  Mat3 rotation_matrix() const { return q_.toRotationMatrix(); }

  PoseSE3 inverse() const {
    const Quat qi = q_.conjugate();
    return PoseSE3(qi, qi * (-t_));
  }

  PoseSE3 operator*(const PoseSE3& other) const {
    Quat q = q_ * other.q_;
    q.normalize();
    return PoseSE3(q, q_ * other.t_ + t_);
  }

  Vec3 operator*(const Vec3& p) const { return q_ * p + t_; }

 private:
  Quat q_;
  Vec3 t_;
};

inline PoseSE3 se3_compose(const PoseSE3& a, const PoseSE3& b) { return a * b; }
inline PoseSE3 se3_inverse(const PoseSE3& a) { return a.inverse(); }
inline Vec3 se3_apply(const PoseSE3& a, const Vec3& p) { return a * p; }

// Local update used by the optimizer and its finite-difference checks:
// delta = (omega, nu), applied in the pose's own frame:
//   R <- R exp(omega^),  t <- t + R nu
inline PoseSE3 se3_boxplus(const PoseSE3& pose, const Vec6& delta) {
  const Mat3 r = pose.rotation_matrix() * so3_exp(delta.head<3>());
  return PoseSE3(Quat(r), pose.translation() + pose.rotation() * delta.tail<3>());
}

// Rotation-angle distance between two poses, radians.
inline double rotation_distance(const PoseSE3& a, const PoseSE3& b) {
  return so3_log(a.rotation_matrix().transpose() * b.rotation_matrix()).norm();
}

// Closed-form least-squares rigid fit (rotation + translation, no scale):
// finds T with dst_i ~ R src_i + t. Throws DegenerateGeometry when the point
// sets do not constrain a rotation (fewer than 3 points or collinear), unless
// allow_degenerate is set — collinear sets still admit a valid minimizer with
// the rotation about the line unconstrained, which is what trajectory
// alignment wants for straight paths.
inline PoseSE3 umeyama_rigid(const std::vector<Vec3>& src, const std::vector<Vec3>& dst,
                             bool allow_degenerate = false) {
  if (src.size() != dst.size()) {
    throw Error("umeyama_rigid: size mismatch");
  }
  const std::size_t n = src.size();
  if (n < 3) {
    throw DegenerateGeometry("umeyama_rigid: need at least 3 point pairs");
  }
  Vec3 cs = Vec3::Zero(), cd = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= static_cast<double>(n);
  cd /= static_cast<double>(n);

  Mat3 cov = Mat3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    cov += (dst[i] - cd) * (src[i] - cs).transpose();
  }
  cov /= static_cast<double>(n);

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (!allow_degenerate && sv(1) <= 1e-12 * std::max(sv(0), 1e-300)) {
    throw DegenerateGeometry("umeyama_rigid: collinear point set");
  }
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) {
    d(2, 2) = -1.0;
  }
  const Mat3 r = svd.matrixU() * d * svd.matrixV().transpose();
  return PoseSE3(Quat(r), cd - r * cs);
}

}  // namespace fieldmap
