#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "fieldmap/camera.hpp"
#include "fieldmap/error.hpp"

namespace fieldmap {

// Row-major binary image; nonzero = foreground.
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  BinaryMask(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  void set(int x, int y, std::uint8_t v = 1) { data[static_cast<std::size_t>(y) * width + x] = v; }
};

struct Ellipse {
  ImagePoint center;
  double semi_major = 0.0;  // a_len >= b_len > 0, pixels
  double semi_minor = 0.0;
  double rotation = 0.0;  // radians, in [0, pi)
};

// Moment-based ellipse fit: center is the foreground centroid, axes come from
// the second central moments (a uniform ellipse with semi-axes (a,b) has
// eigenvalues a^2/4, b^2/4, hence the factor 2 sqrt). Pixels are treated as
// unit point masses at integer coordinates, summed in row-major order; tests
// rely on the centroid matching a plain row-major summation exactly.
inline Ellipse fit_ellipse(const BinaryMask& mask) {
  long long n = 0;
  double sx = 0.0, sy = 0.0;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (mask.at(x, y)) {
        ++n;
        sx += x;
        sy += y;
      }
    }
  }
  if (n < 5) {
    throw DegenerateMask("fit_ellipse: " + std::to_string(n) + " foreground pixels (need 5)");
  }
  const double cx = sx / static_cast<double>(n);
  const double cy = sy / static_cast<double>(n);

  double mu20 = 0.0, mu02 = 0.0, mu11 = 0.0;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (mask.at(x, y)) {
        const double dx = x - cx;
        const double dy = y - cy;
        mu20 += dx * dx;
        mu02 += dy * dy;
        mu11 += dx * dy;
      }
    }
  }
  mu20 /= static_cast<double>(n);
  mu02 /= static_cast<double>(n);
  mu11 /= static_cast<double>(n);

  const double tr = mu20 + mu02;
  const double disc = std::sqrt(std::max(0.0, 0.25 * (mu20 - mu02) * (mu20 - mu02) + mu11 * mu11));
  const double lambda1 = 0.5 * tr + disc;
  const double lambda2 = 0.5 * tr - disc;
  if (lambda2 <= 1e-12) {
    throw DegenerateMask("fit_ellipse: collinear foreground pixels");
  }

  Ellipse e;
  e.center = ImagePoint{cx, cy};
  e.semi_major = 2.0 * std::sqrt(lambda1);
  e.semi_minor = 2.0 * std::sqrt(lambda2);
  double rot = 0.5 * std::atan2(2.0 * mu11, mu20 - mu02);
  if (rot < 0.0) rot += M_PI;
  if (rot >= M_PI) rot -= M_PI;
  e.rotation = rot;
  return e;
}

}  // namespace fieldmap
