#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fieldmap/camera.hpp"
#include "fieldmap/config.hpp"
#include "fieldmap/error.hpp"
#include "fieldmap/geometry.hpp"
#include "fieldmap/landmark.hpp"
#include "fieldmap/point_cloud.hpp"
#include "fieldmap/random.hpp"

namespace fieldmap {

// ---------------------------------------------------------------------------
// Deterministic synthetic scenes for the two capture setups: a stereo rig
// driving past a row of panicles (range), and an in-hand camera orbiting a
// single panicle (orbit). Everything is a pure function of the config,
// including the rng seed. Defaults are stand-ins; the source paper reports
// no camera intrinsics, panicle geometry, or noise magnitudes.
// ---------------------------------------------------------------------------

struct LatticeConfig {
  double semi_axis_x = 0.06;  // panicle ellipsoid shell, meters
  double semi_axis_y = 0.06;
  double semi_axis_z = 0.15;
  double pitch = 0.019;         // seed spacing on the shell
  double jitter_sigma = 0.0015; // static placement jitter
  double seed_radius = 0.004;   // physical seed radius, for bboxes/clutter scale
};

struct TrajectoryConfig {
  double speed = 0.05;           // meters per frame along the row
  double standoff = 0.35;        // camera-to-row distance
  double bounce_amplitude = 0.0; // vertical sinusoid amplitude
};

struct NoiseConfig {
  double pixel_sigma = 1.0;
  double dropout = 0.1;              // per detection
  double false_positive_rate = 0.05; // expected fraction of extra detections
  double seed_jitter_sigma = 0.0;    // per-frame common-mode seed motion (wind proxy)
};

struct OrbitConfig {
  double radius = 0.35;
  double arc_start_deg = 0.0;
  double arc_coverage_deg = 90.0;
  double arc_step_deg = 5.0;
  double fk_translation_noise = 0.005; // RMS meters
  double fk_rotation_noise_deg = 0.5;  // RMS degrees
  double cloud_sigma = 0.0015;         // sensor noise on cloud samples
  int cloud_samples_per_seed = 4;
  double clutter_ratio = 1.0;          // clutter points per seed sample
};

struct SceneConfig {
  std::string kind = "range";  // "range" | "orbit"
  std::uint64_t rng_seed = 42;
  double range_length = 4.0;
  int panicle_count = 10;
  int seeds_per_panicle = 400;  // cap on the lattice
  double panicle_spacing = 0.4;
  LatticeConfig lattice;
  StereoCamera camera;
  TrajectoryConfig trajectory;
  NoiseConfig noise;
  OrbitConfig orbit;

  void validate() const {
    auto positive = [](double v, const char* field) {
      if (!(v > 0.0)) throw ConfigError(std::string("field ") + field + " must be positive");
    };
    auto rate = [](double v, const char* field) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw ConfigError(std::string("field ") + field + " must be in [0, 1]");
      }
    };
    if (kind != "range" && kind != "orbit") {
      throw ConfigError("field scene.kind must be \"range\" or \"orbit\"");
    }
    positive(range_length, "scene.range_length");
    if (panicle_count < 1) throw ConfigError("field scene.panicle_count must be >= 1");
    if (seeds_per_panicle < 1) throw ConfigError("field scene.seeds_per_panicle must be >= 1");
    positive(panicle_spacing, "scene.panicle_spacing");
    positive(lattice.semi_axis_x, "lattice.semi_axis_x");
    positive(lattice.semi_axis_y, "lattice.semi_axis_y");
    positive(lattice.semi_axis_z, "lattice.semi_axis_z");
    positive(lattice.pitch, "lattice.pitch");
    if (lattice.jitter_sigma < 0.0) throw ConfigError("field lattice.jitter_sigma must be >= 0");
    positive(lattice.seed_radius, "lattice.seed_radius");
    positive(camera.fx, "camera.fx");
    positive(camera.fy, "camera.fy");
    positive(camera.baseline, "camera.baseline");
    if (camera.width <= 0 || camera.height <= 0) {
      throw ConfigError("field camera.width/height must be positive");
    }
    if (!(camera.cx < camera.width) || !(camera.cy < camera.height)) {
      throw ConfigError("field camera.cx/cy must lie inside the image");
    }
    positive(trajectory.speed, "trajectory.speed");
    positive(trajectory.standoff, "trajectory.standoff");
    if (trajectory.bounce_amplitude < 0.0) {
      throw ConfigError("field trajectory.bounce_amplitude must be >= 0");
    }
    if (noise.pixel_sigma < 0.0) throw ConfigError("field noise.pixel_sigma must be >= 0");
    rate(noise.dropout, "noise.dropout");
    rate(noise.false_positive_rate, "noise.false_positive_rate");
    if (noise.seed_jitter_sigma < 0.0) {
      throw ConfigError("field noise.seed_jitter_sigma must be >= 0");
    }
    positive(orbit.radius, "orbit.radius");
    if (!(orbit.arc_coverage_deg > 0.0 && orbit.arc_coverage_deg <= 360.0)) {
      throw ConfigError("field orbit.arc_coverage_deg must be in (0, 360]");
    }
    positive(orbit.arc_step_deg, "orbit.arc_step_deg");
    if (orbit.fk_translation_noise < 0.0 || orbit.fk_rotation_noise_deg < 0.0) {
      throw ConfigError("field orbit.fk_*_noise must be >= 0");
    }
    if (orbit.cloud_sigma < 0.0) throw ConfigError("field orbit.cloud_sigma must be >= 0");
    if (orbit.cloud_samples_per_seed < 1) {
      throw ConfigError("field orbit.cloud_samples_per_seed must be >= 1");
    }
    if (orbit.clutter_ratio < 0.0) throw ConfigError("field orbit.clutter_ratio must be >= 0");
  }

  ConfigFile to_config() const {
    ConfigFile c;
    c.set_string("scene", "kind", kind);
    c.set_int("scene", "rng_seed", static_cast<std::int64_t>(rng_seed));
    c.set_double("scene", "range_length", range_length);
    c.set_int("scene", "panicle_count", panicle_count);
    c.set_int("scene", "seeds_per_panicle", seeds_per_panicle);
    c.set_double("scene", "panicle_spacing", panicle_spacing);
    c.set_double("lattice", "semi_axis_x", lattice.semi_axis_x);
    c.set_double("lattice", "semi_axis_y", lattice.semi_axis_y);
    c.set_double("lattice", "semi_axis_z", lattice.semi_axis_z);
    c.set_double("lattice", "pitch", lattice.pitch);
    c.set_double("lattice", "jitter_sigma", lattice.jitter_sigma);
    c.set_double("lattice", "seed_radius", lattice.seed_radius);
    c.set_double("camera", "fx", camera.fx);
    c.set_double("camera", "fy", camera.fy);
    c.set_double("camera", "cx", camera.cx);
    c.set_double("camera", "cy", camera.cy);
    c.set_double("camera", "baseline", camera.baseline);
    c.set_int("camera", "width", camera.width);
    c.set_int("camera", "height", camera.height);
    c.set_double("trajectory", "speed", trajectory.speed);
    c.set_double("trajectory", "standoff", trajectory.standoff);
    c.set_double("trajectory", "bounce_amplitude", trajectory.bounce_amplitude);
    c.set_double("noise", "pixel_sigma", noise.pixel_sigma);
    c.set_double("noise", "dropout", noise.dropout);
    c.set_double("noise", "false_positive_rate", noise.false_positive_rate);
    c.set_double("noise", "seed_jitter_sigma", noise.seed_jitter_sigma);
    c.set_double("orbit", "radius", orbit.radius);
    c.set_double("orbit", "arc_start_deg", orbit.arc_start_deg);
    c.set_double("orbit", "arc_coverage_deg", orbit.arc_coverage_deg);
    c.set_double("orbit", "arc_step_deg", orbit.arc_step_deg);
    c.set_double("orbit", "fk_translation_noise", orbit.fk_translation_noise);
    c.set_double("orbit", "fk_rotation_noise_deg", orbit.fk_rotation_noise_deg);
    c.set_double("orbit", "cloud_sigma", orbit.cloud_sigma);
    c.set_int("orbit", "cloud_samples_per_seed", orbit.cloud_samples_per_seed);
    c.set_double("orbit", "clutter_ratio", orbit.clutter_ratio);
    return c;
  }

  static SceneConfig from_config(const ConfigFile& c) {
    SceneConfig s;
    s.kind = c.get_string("scene", "kind", s.kind);
    s.rng_seed = static_cast<std::uint64_t>(c.get_int("scene", "rng_seed", 42));
    s.range_length = c.get_double("scene", "range_length", s.range_length);
    s.panicle_count = static_cast<int>(c.get_int("scene", "panicle_count", s.panicle_count));
    s.seeds_per_panicle =
        static_cast<int>(c.get_int("scene", "seeds_per_panicle", s.seeds_per_panicle));
    s.panicle_spacing = c.get_double("scene", "panicle_spacing", s.panicle_spacing);
    s.lattice.semi_axis_x = c.get_double("lattice", "semi_axis_x", s.lattice.semi_axis_x);
    s.lattice.semi_axis_y = c.get_double("lattice", "semi_axis_y", s.lattice.semi_axis_y);
    s.lattice.semi_axis_z = c.get_double("lattice", "semi_axis_z", s.lattice.semi_axis_z);
    s.lattice.pitch = c.get_double("lattice", "pitch", s.lattice.pitch);
    s.lattice.jitter_sigma = c.get_double("lattice", "jitter_sigma", s.lattice.jitter_sigma);
    s.lattice.seed_radius = c.get_double("lattice", "seed_radius", s.lattice.seed_radius);
    s.camera.fx = c.get_double("camera", "fx", s.camera.fx);
    s.camera.fy = c.get_double("camera", "fy", s.camera.fy);
    s.camera.cx = c.get_double("camera", "cx", s.camera.cx);
    s.camera.cy = c.get_double("camera", "cy", s.camera.cy);
    s.camera.baseline = c.get_double("camera", "baseline", s.camera.baseline);
    s.camera.width = static_cast<int>(c.get_int("camera", "width", s.camera.width));
    s.camera.height = static_cast<int>(c.get_int("camera", "height", s.camera.height));
    s.trajectory.speed = c.get_double("trajectory", "speed", s.trajectory.speed);
    s.trajectory.standoff = c.get_double("trajectory", "standoff", s.trajectory.standoff);
    s.trajectory.bounce_amplitude =
        c.get_double("trajectory", "bounce_amplitude", s.trajectory.bounce_amplitude);
    s.noise.pixel_sigma = c.get_double("noise", "pixel_sigma", s.noise.pixel_sigma);
    s.noise.dropout = c.get_double("noise", "dropout", s.noise.dropout);
    s.noise.false_positive_rate =
        c.get_double("noise", "false_positive_rate", s.noise.false_positive_rate);
    s.noise.seed_jitter_sigma =
        c.get_double("noise", "seed_jitter_sigma", s.noise.seed_jitter_sigma);
    s.orbit.radius = c.get_double("orbit", "radius", s.orbit.radius);
    s.orbit.arc_start_deg = c.get_double("orbit", "arc_start_deg", s.orbit.arc_start_deg);
    s.orbit.arc_coverage_deg = c.get_double("orbit", "arc_coverage_deg", s.orbit.arc_coverage_deg);
    s.orbit.arc_step_deg = c.get_double("orbit", "arc_step_deg", s.orbit.arc_step_deg);
    s.orbit.fk_translation_noise =
        c.get_double("orbit", "fk_translation_noise", s.orbit.fk_translation_noise);
    s.orbit.fk_rotation_noise_deg =
        c.get_double("orbit", "fk_rotation_noise_deg", s.orbit.fk_rotation_noise_deg);
    s.orbit.cloud_sigma = c.get_double("orbit", "cloud_sigma", s.orbit.cloud_sigma);
    s.orbit.cloud_samples_per_seed = static_cast<int>(
        c.get_int("orbit", "cloud_samples_per_seed", s.orbit.cloud_samples_per_seed));
    s.orbit.clutter_ratio = c.get_double("orbit", "clutter_ratio", s.orbit.clutter_ratio);
    return s;
  }
};

struct GtSeed {
  int id = 0;
  int panicle = 0;
  Vec3 position = Vec3::Zero();
};

struct FrameDetections {
  int frame_id = 0;
  CameraSide side = CameraSide::kLeft;
  std::vector<SeedKeypoint> keypoints;
  std::vector<int> seed_ids;  // aligned with keypoints; -1 marks a false positive
};

struct GroundTruth {
  std::vector<GtSeed> seeds;
  std::map<int, PoseSE3> trajectory;
};

struct Scene {
  SceneConfig config;
  std::vector<FrameDetections> detections;  // ordered by (frame, side)
  GroundTruth gt;
  std::map<int, PoseSE3> fk_trajectory;  // orbit scenes
  std::map<int, PointCloud> clouds;      // orbit scenes, camera frame
  // Diagnostics (not serialized): count of visible true seeds per detection
  // record, pre-dropout.
  std::vector<int> visible_counts;

  bool is_orbit() const { return config.kind == "orbit"; }

  int frame_count() const {
    int n = 0;
    for (const auto& d : detections) n = std::max(n, d.frame_id + 1);
    return n;
  }

  const FrameDetections* find(int frame_id, CameraSide side) const {
    for (const auto& d : detections) {
      if (d.frame_id == frame_id && d.side == side) return &d;
    }
    return nullptr;
  }
};

namespace detail {

struct PanicleShell {
  Vec3 center;
  Vec3 semi_axes;
};

// Segment/ellipsoid intersection in the shell's local frame. `shrink` pulls
// the occluder slightly inside its own surface so on-shell seeds do not
// occlude themselves.
inline bool segment_hits_ellipsoid(const Vec3& from, const Vec3& to, const PanicleShell& shell,
                                   double shrink = 0.98) {
  const Vec3 o((from.x() - shell.center.x()) / shell.semi_axes.x(),
               (from.y() - shell.center.y()) / shell.semi_axes.y(),
               (from.z() - shell.center.z()) / shell.semi_axes.z());
  const Vec3 e((to.x() - shell.center.x()) / shell.semi_axes.x(),
               (to.y() - shell.center.y()) / shell.semi_axes.y(),
               (to.z() - shell.center.z()) / shell.semi_axes.z());
  const Vec3 d = e - o;
  const double a = d.squaredNorm();
  if (a <= 0.0) return false;
  const double b = 2.0 * o.dot(d);
  const double c = o.squaredNorm() - shrink * shrink;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return false;
  const double sq = std::sqrt(disc);
  const double t0 = (-b - sq) / (2.0 * a);
  const double t1 = (-b + sq) / (2.0 * a);
  const double eps = 1e-9;
  return (t0 > eps && t0 < 1.0 - eps) || (t1 > eps && t1 < 1.0 - eps);
}

inline bool seed_visible(const Vec3& camera_pos, const Vec3& seed,
                         const std::vector<PanicleShell>& shells) {
  for (const PanicleShell& shell : shells) {
    if (segment_hits_ellipsoid(camera_pos, seed, shell)) return false;
  }
  return true;
}

// Seed sites on an ellipsoid shell: meridian bands spaced ~pitch apart, each
// band filled at ~pitch arc spacing with alternate-band stagger.
inline std::vector<Vec3> shell_lattice(const Vec3& semi_axes, double pitch, int max_seeds,
                                       double jitter_sigma, Rng& rng) {
  std::vector<Vec3> sites;
  const double a = semi_axes.x();
  const double b = semi_axes.y();
  const double c = semi_axes.z();
  const double ab = 0.5 * (a + b);
  double theta = 0.0;
  int band = 0;
  while (theta < M_PI) {
    const double ring_r = ab * std::sin(theta);
    const double circumference = 2.0 * M_PI * std::max(ring_r, 1e-9);
    const int n_phi = std::max(1, static_cast<int>(std::llround(circumference / pitch)));
    const double phase = (band % 2 == 0) ? 0.0 : M_PI / n_phi;
    for (int j = 0; j < n_phi; ++j) {
      const double phi = 2.0 * M_PI * j / n_phi + phase;
      Vec3 p(a * std::sin(theta) * std::cos(phi), b * std::sin(theta) * std::sin(phi),
             c * std::cos(theta));
      if (jitter_sigma > 0.0) {
        p += Vec3(rng.normal(0.0, jitter_sigma), rng.normal(0.0, jitter_sigma),
                  rng.normal(0.0, jitter_sigma));
      }
      sites.push_back(p);
    }
    const double meridian_speed =
        std::sqrt(ab * ab * std::cos(theta) * std::cos(theta) +
                  c * c * std::sin(theta) * std::sin(theta));
    theta += pitch / std::max(meridian_speed, 1e-9);
    ++band;
  }
  if (static_cast<int>(sites.size()) > max_seeds) {
    // Deterministic stride subsample to the cap, keeping shell coverage.
    std::vector<Vec3> kept;
    kept.reserve(max_seeds);
    const double stride = static_cast<double>(sites.size()) / max_seeds;
    for (int i = 0; i < max_seeds; ++i) {
      kept.push_back(sites[static_cast<std::size_t>(i * stride)]);
    }
    sites = std::move(kept);
  }
  return sites;
}

inline void shuffle_detections(FrameDetections& d, Rng& rng) {
  for (int i = static_cast<int>(d.keypoints.size()) - 1; i > 0; --i) {
    const int j = rng.uniform_int(0, i);
    std::swap(d.keypoints[i], d.keypoints[j]);
    std::swap(d.seed_ids[i], d.seed_ids[j]);
  }
  for (int i = 0; i < static_cast<int>(d.keypoints.size()); ++i) {
    d.keypoints[i].index = i;
  }
}

inline Vec3 camera_position_of(const PoseSE3& pose_wc, const StereoCamera& cam, CameraSide side) {
  if (side == CameraSide::kLeft) return pose_wc.translation();
  return pose_wc * Vec3(cam.baseline, 0.0, 0.0);
}

// Emit one frame/side detection record from the world-frame seed positions.
inline FrameDetections make_detections(int frame_id, CameraSide side, const PoseSE3& pose_wc,
                                       const std::vector<GtSeed>& seeds,
                                       const std::vector<Vec3>& seed_positions,
                                       const std::vector<PanicleShell>& shells,
                                       const SceneConfig& cfg, Rng& rng, int* visible_count) {
  FrameDetections out;
  out.frame_id = frame_id;
  out.side = side;
  const PoseSE3 pose_cw = pose_wc.inverse();
  const Vec3 cam_pos = camera_position_of(pose_wc, cfg.camera, side);
  int visible = 0;
  for (std::size_t s = 0; s < seed_positions.size(); ++s) {
    const Vec3& p_w = seed_positions[s];
    const Vec3 p_cam = pose_cw * p_w;
    if (p_cam.z() <= 0.05) continue;
    ImagePoint px;
    try {
      px = project(p_cam, cfg.camera, side);
    } catch (const BehindCamera&) {
      continue;
    }
    if (px.u < 0.0 || px.u >= cfg.camera.width || px.v < 0.0 || px.v >= cfg.camera.height) {
      continue;
    }
    if (!seed_visible(cam_pos, p_w, shells)) continue;
    ++visible;
    if (rng.bernoulli(cfg.noise.dropout)) continue;
    ImagePoint noisy{px.u + rng.normal(0.0, cfg.noise.pixel_sigma),
                     px.v + rng.normal(0.0, cfg.noise.pixel_sigma)};
    SeedKeypoint kp;
    kp.center = noisy;
    kp.frame_id = frame_id;
    kp.side = side;
    const double bbox_r = cfg.camera.fx * cfg.lattice.seed_radius / p_cam.z();
    kp.bbox = std::array<double, 4>{noisy.u - bbox_r, noisy.v - bbox_r, noisy.u + bbox_r,
                                    noisy.v + bbox_r};
    out.keypoints.push_back(kp);
    out.seed_ids.push_back(seeds[s].id);
  }
  if (visible_count != nullptr) *visible_count = visible;
  const int n_fp = rng.poisson(cfg.noise.false_positive_rate * out.keypoints.size());
  for (int k = 0; k < n_fp; ++k) {
    SeedKeypoint kp;
    kp.center = ImagePoint{rng.uniform(0.0, cfg.camera.width), rng.uniform(0.0, cfg.camera.height)};
    kp.frame_id = frame_id;
    kp.side = side;
    out.keypoints.push_back(kp);
    out.seed_ids.push_back(-1);
  }
  shuffle_detections(out, rng);
  return out;
}

}  // namespace detail

// Range scene: panicles along a row (world x), camera translating along the
// row at `speed` per frame, optical axis toward the plants (world y), image u
// along the direction of travel.
inline Scene generate_range_scene(const SceneConfig& cfg) {
  cfg.validate();
  if (cfg.kind != "range") {
    throw ConfigError("generate_range_scene: config kind is '" + cfg.kind + "'");
  }
  Scene scene;
  scene.config = cfg;
  Rng master(cfg.rng_seed);
  Rng placement = master.fork(1);

  // Panicles and seeds.
  std::vector<detail::PanicleShell> shells;
  const Vec3 semi(cfg.lattice.semi_axis_x, cfg.lattice.semi_axis_y, cfg.lattice.semi_axis_z);
  for (int p = 0; p < cfg.panicle_count; ++p) {
    const Vec3 center((p + 0.5) * cfg.panicle_spacing, cfg.trajectory.standoff, 0.0);
    shells.push_back(detail::PanicleShell{center, semi});
    const std::vector<Vec3> sites = detail::shell_lattice(
        semi, cfg.lattice.pitch, cfg.seeds_per_panicle, cfg.lattice.jitter_sigma, placement);
    for (const Vec3& site : sites) {
      GtSeed seed;
      seed.id = static_cast<int>(scene.gt.seeds.size());
      seed.panicle = p;
      seed.position = center + site;
      scene.gt.seeds.push_back(seed);
    }
  }

  // Straight-line trajectory with optional vertical bounce.
  Mat3 r_wc;
  r_wc.col(0) = Vec3(1.0, 0.0, 0.0);   // camera x: along the row
  r_wc.col(1) = Vec3(0.0, 0.0, -1.0);  // camera y (image down): world -z
  r_wc.col(2) = Vec3(0.0, 1.0, 0.0);   // camera z (optical axis): toward plants
  const int frames = static_cast<int>(cfg.range_length / cfg.trajectory.speed) + 1;
  for (int f = 0; f < frames; ++f) {
    const double x = f * cfg.trajectory.speed;
    const double z =
        cfg.trajectory.bounce_amplitude * std::sin(2.0 * M_PI * x);  // 1 m bounce period
    scene.gt.trajectory.emplace(f, PoseSE3(Quat(r_wc), Vec3(x, 0.0, z)));
  }

  // Detections.
  std::vector<Vec3> positions(scene.gt.seeds.size());
  Rng wind = master.fork(2);
  for (int f = 0; f < frames; ++f) {
    Vec3 sway = Vec3::Zero();
    if (cfg.noise.seed_jitter_sigma > 0.0) {
      sway = Vec3(wind.normal(0.0, cfg.noise.seed_jitter_sigma),
                  wind.normal(0.0, cfg.noise.seed_jitter_sigma),
                  wind.normal(0.0, cfg.noise.seed_jitter_sigma));
    }
    for (std::size_t s = 0; s < positions.size(); ++s) {
      positions[s] = scene.gt.seeds[s].position + sway;
    }
    Rng frame_rng = master.fork(1000 + static_cast<std::uint64_t>(f));
    for (const CameraSide side : {CameraSide::kLeft, CameraSide::kRight}) {
      int visible = 0;
      scene.detections.push_back(detail::make_detections(f, side, scene.gt.trajectory.at(f),
                                                         scene.gt.seeds, positions, shells, cfg,
                                                         frame_rng, &visible));
      scene.visible_counts.push_back(visible);
    }
  }
  return scene;
}

// Orbit scene: the camera circles a single panicle at the origin on a
// horizontal arc, always facing the panicle center. Produces stereo clouds,
// detections, exact poses, and noisy forward-kinematics poses.
inline Scene generate_orbit_scene(const SceneConfig& cfg) {
  cfg.validate();
  if (cfg.kind != "orbit") {
    throw ConfigError("generate_orbit_scene: config kind is '" + cfg.kind + "'");
  }
  Scene scene;
  scene.config = cfg;
  Rng master(cfg.rng_seed);
  Rng placement = master.fork(1);

  const Vec3 semi(cfg.lattice.semi_axis_x, cfg.lattice.semi_axis_y, cfg.lattice.semi_axis_z);
  const std::vector<detail::PanicleShell> shells{detail::PanicleShell{Vec3::Zero(), semi}};
  const std::vector<Vec3> sites = detail::shell_lattice(
      semi, cfg.lattice.pitch, cfg.seeds_per_panicle, cfg.lattice.jitter_sigma, placement);
  for (const Vec3& site : sites) {
    GtSeed seed;
    seed.id = static_cast<int>(scene.gt.seeds.size());
    seed.panicle = 0;
    seed.position = site;
    scene.gt.seeds.push_back(seed);
  }

  const int frames =
      static_cast<int>(cfg.orbit.arc_coverage_deg / cfg.orbit.arc_step_deg) + 1;
  Rng fk_rng = master.fork(3);
  for (int f = 0; f < frames; ++f) {
    const double theta =
        (cfg.orbit.arc_start_deg + f * cfg.orbit.arc_step_deg) * M_PI / 180.0;
    const Vec3 pos(cfg.orbit.radius * std::cos(theta), cfg.orbit.radius * std::sin(theta), 0.0);
    Mat3 r_wc;
    r_wc.col(0) = Vec3(-std::sin(theta), std::cos(theta), 0.0);
    r_wc.col(1) = Vec3(0.0, 0.0, -1.0);
    r_wc.col(2) = Vec3(-std::cos(theta), -std::sin(theta), 0.0);
    const PoseSE3 pose(Quat(r_wc), pos);
    scene.gt.trajectory.emplace(f, pose);

    // FK prior = exact pose with small rigid noise (per-axis sigma scaled so
    // the configured values are RMS perturbation norms).
    const double st = cfg.orbit.fk_translation_noise / std::sqrt(3.0);
    const double sr = cfg.orbit.fk_rotation_noise_deg * M_PI / 180.0 / std::sqrt(3.0);
    Vec6 delta;
    delta << fk_rng.normal(0.0, sr), fk_rng.normal(0.0, sr), fk_rng.normal(0.0, sr),
        fk_rng.normal(0.0, st), fk_rng.normal(0.0, st), fk_rng.normal(0.0, st);
    scene.fk_trajectory.emplace(f, se3_boxplus(pose, delta));
  }

  // Detections and clouds.
  std::vector<Vec3> positions(scene.gt.seeds.size());
  for (std::size_t s = 0; s < positions.size(); ++s) {
    positions[s] = scene.gt.seeds[s].position;
  }
  for (int f = 0; f < frames; ++f) {
    const PoseSE3& pose = scene.gt.trajectory.at(f);
    Rng frame_rng = master.fork(1000 + static_cast<std::uint64_t>(f));
    for (const CameraSide side : {CameraSide::kLeft, CameraSide::kRight}) {
      int visible = 0;
      scene.detections.push_back(detail::make_detections(
          f, side, pose, scene.gt.seeds, positions, shells, cfg, frame_rng, &visible));
      scene.visible_counts.push_back(visible);
    }

    // Stereo cloud in the camera frame: samples around visible seeds plus
    // shell clutter between seeds.
    Rng cloud_rng = master.fork(100000 + static_cast<std::uint64_t>(f));
    const PoseSE3 pose_cw = pose.inverse();
    const Vec3 cam_pos = pose.translation();
    PointCloud cloud;
    int seed_samples = 0;
    for (const GtSeed& seed : scene.gt.seeds) {
      const Vec3 p_cam_center = pose_cw * seed.position;
      if (p_cam_center.z() <= 0.05) continue;
      ImagePoint px;
      try {
        px = project(p_cam_center, cfg.camera, CameraSide::kLeft);
      } catch (const BehindCamera&) {
        continue;
      }
      if (px.u < 0.0 || px.u >= cfg.camera.width || px.v < 0.0 || px.v >= cfg.camera.height) {
        continue;
      }
      if (!detail::seed_visible(cam_pos, seed.position, shells)) continue;
      for (int k = 0; k < cfg.orbit.cloud_samples_per_seed; ++k) {
        const Vec3 sample = seed.position + Vec3(cloud_rng.normal(0.0, cfg.orbit.cloud_sigma),
                                                 cloud_rng.normal(0.0, cfg.orbit.cloud_sigma),
                                                 cloud_rng.normal(0.0, cfg.orbit.cloud_sigma));
        cloud.push_back(pose_cw * sample, Color{210, 180, 140});
        ++seed_samples;
      }
    }
    const int n_clutter = static_cast<int>(std::llround(cfg.orbit.clutter_ratio * seed_samples));
    int made = 0;
    int guard = 0;
    while (made < n_clutter && guard < 50 * n_clutter + 1000) {
      ++guard;
      const double ct = cloud_rng.uniform(-1.0, 1.0);
      const double stheta = std::sqrt(std::max(0.0, 1.0 - ct * ct));
      const double phi = cloud_rng.uniform(0.0, 2.0 * M_PI);
      const Vec3 p(semi.x() * stheta * std::cos(phi), semi.y() * stheta * std::sin(phi),
                   semi.z() * ct);
      if (!detail::seed_visible(cam_pos, p, shells)) continue;
      const Vec3 sample = p + Vec3(cloud_rng.normal(0.0, cfg.orbit.cloud_sigma),
                                   cloud_rng.normal(0.0, cfg.orbit.cloud_sigma),
                                   cloud_rng.normal(0.0, cfg.orbit.cloud_sigma));
      cloud.push_back(pose_cw * sample, Color{90, 70, 50});
      ++made;
    }
    scene.clouds.emplace(f, std::move(cloud));
  }
  return scene;
}

inline Scene generate_scene(const SceneConfig& cfg) {
  return cfg.kind == "orbit" ? generate_orbit_scene(cfg) : generate_range_scene(cfg);
}

}  // namespace fieldmap
