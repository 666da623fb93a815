#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fieldmap/error.hpp"
#include "fieldmap/geometry.hpp"

namespace fieldmap {

using Color = std::array<std::uint8_t, 3>;

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Color> colors;  // empty, or one entry per point

  bool has_colors() const { return !colors.empty(); }
  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  void push_back(const Vec3& p) { points.push_back(p); }
  void push_back(const Vec3& p, const Color& c) {
    points.push_back(p);
    colors.push_back(c);
  }
};

inline PointCloud transformed(const PointCloud& cloud, const PoseSE3& pose) {
  PointCloud out;
  out.points.reserve(cloud.size());
  out.colors = cloud.colors;
  for (const auto& p : cloud.points) out.points.push_back(pose * p);
  return out;
}

// Grid downsampling: one centroid per occupied cell, colors averaged.
// Cells are keyed by floor(p/cell), and emitted in sorted key order so the
// result is independent of input ordering.
inline PointCloud voxel_downsample(const PointCloud& cloud, double cell) {
  if (!(cell > 0.0)) {
    throw Error("voxel_downsample: cell must be positive");
  }
  struct Accum {
    Vec3 sum = Vec3::Zero();
    double r = 0.0, g = 0.0, b = 0.0;
    std::size_t n = 0;
  };
  std::map<std::array<std::int64_t, 3>, Accum> cells;
  const bool colored = cloud.has_colors();
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const Vec3& p = cloud.points[i];
    const std::array<std::int64_t, 3> key{
        static_cast<std::int64_t>(std::floor(p.x() / cell)),
        static_cast<std::int64_t>(std::floor(p.y() / cell)),
        static_cast<std::int64_t>(std::floor(p.z() / cell))};
    Accum& a = cells[key];
    a.sum += p;
    if (colored) {
      a.r += cloud.colors[i][0];
      a.g += cloud.colors[i][1];
      a.b += cloud.colors[i][2];
    }
    ++a.n;
  }
  PointCloud out;
  out.points.reserve(cells.size());
  if (colored) out.colors.reserve(cells.size());
  for (const auto& [key, a] : cells) {
    (void)key;
    const double inv = 1.0 / static_cast<double>(a.n);
    out.points.push_back(a.sum * inv);
    if (colored) {
      out.colors.push_back(Color{static_cast<std::uint8_t>(std::lround(a.r * inv)),
                                 static_cast<std::uint8_t>(std::lround(a.g * inv)),
                                 static_cast<std::uint8_t>(std::lround(a.b * inv))});
    }
  }
  return out;
}

namespace detail {
inline std::string format_full(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace detail

// ASCII PLY writer. Coordinates are written as doubles at full precision so a
// write/read round trip is exact; colors are written when present.
inline void write_ply(const PointCloud& cloud, std::ostream& os) {
  const bool colored = cloud.has_colors();
  os << "ply\n"
     << "format ascii 1.0\n"
     << "element vertex " << cloud.size() << "\n"
     << "property double x\n"
     << "property double y\n"
     << "property double z\n";
  if (colored) {
    os << "property uchar red\n"
       << "property uchar green\n"
       << "property uchar blue\n";
  }
  os << "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    os << detail::format_full(p.x()) << " " << detail::format_full(p.y()) << " "
       << detail::format_full(p.z());
    if (colored) {
      const Color& c = cloud.colors[i];
      os << " " << static_cast<int>(c[0]) << " " << static_cast<int>(c[1]) << " "
         << static_cast<int>(c[2]);
    }
    os << "\n";
  }
}

inline void write_ply(const PointCloud& cloud, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) {
    throw OutputIoError("cannot open for writing: " + path.string());
  }
  write_ply(cloud, os);
  if (!os) {
    throw OutputIoError("write failed: " + path.string());
  }
}

// ASCII PLY reader for the subset this project writes: double/float xyz and
// optional uchar rgb, extra properties skipped.
inline PointCloud read_ply(std::istream& is, const std::string& origin = "<stream>") {
  std::string line;
  if (!std::getline(is, line) || line != "ply") {
    throw InputIoError("not a PLY file: " + origin);
  }
  std::size_t vertex_count = 0;
  std::vector<std::string> props;
  bool ascii = false;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "format") {
      std::string fmt;
      ls >> fmt;
      ascii = (fmt == "ascii");
    } else if (tok == "element") {
      std::string what;
      ls >> what >> vertex_count;
      if (what != "vertex") {
        throw InputIoError("unsupported PLY element '" + what + "' in " + origin);
      }
    } else if (tok == "property") {
      std::string type, name;
      ls >> type >> name;
      props.push_back(name);
    } else if (tok == "end_header") {
      break;
    }
  }
  if (!ascii) {
    throw InputIoError("only ascii PLY supported: " + origin);
  }
  int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
  for (int i = 0; i < static_cast<int>(props.size()); ++i) {
    if (props[i] == "x") ix = i;
    if (props[i] == "y") iy = i;
    if (props[i] == "z") iz = i;
    if (props[i] == "red") ir = i;
    if (props[i] == "green") ig = i;
    if (props[i] == "blue") ib = i;
  }
  if (ix < 0 || iy < 0 || iz < 0) {
    throw InputIoError("PLY missing x/y/z properties: " + origin);
  }
  const bool colored = ir >= 0 && ig >= 0 && ib >= 0;
  PointCloud cloud;
  cloud.points.reserve(vertex_count);
  std::vector<double> row(props.size());
  for (std::size_t v = 0; v < vertex_count; ++v) {
    if (!std::getline(is, line)) {
      throw InputIoError("PLY truncated at vertex " + std::to_string(v) + ": " + origin);
    }
    std::istringstream ls(line);
    for (double& x : row) {
      if (!(ls >> x)) {
        throw InputIoError("PLY malformed vertex line in " + origin);
      }
    }
    cloud.points.emplace_back(row[ix], row[iy], row[iz]);
    if (colored) {
      cloud.colors.push_back(Color{static_cast<std::uint8_t>(row[ir]),
                                   static_cast<std::uint8_t>(row[ig]),
                                   static_cast<std::uint8_t>(row[ib])});
    }
  }
  return cloud;
}

inline PointCloud read_ply(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) {
    throw InputIoError("cannot open: " + path.string());
  }
  return read_ply(is, path.string());
}

}  // namespace fieldmap
