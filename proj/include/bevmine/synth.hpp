#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include "bevmine/errors.hpp"
#include "bevmine/geom.hpp"
#include "bevmine/random.hpp"

namespace bevmine::synth {

/// Closed interval [lo, hi] in meters.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct SizeRanges {
  Interval length{3.5, 5.0};
  Interval width{1.6, 2.0};
  Interval height{1.4, 1.8};
};

/// Forward-facing rig 1.6 m above the LiDAR origin: camera x = -LiDAR y,
/// camera y = -LiDAR z, camera z (depth) = LiDAR x.
inline geom::CameraRig default_rig() {
  geom::CameraRig rig;
  rig.fx = 1000.0;
  rig.fy = 1000.0;
  rig.cx = 640.0;
  rig.cy = 360.0;
  rig.R << 0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0;
  rig.T = rig.R * Eigen::Vector3d(0.0, 0.0, -1.6);  // camera center (0,0,1.6)
  return rig;
}

struct SceneSpec {
  int n_objects = 12;
  Interval x_range{8.0, 40.0};   // also the admissible camera-depth band
  Interval y_range{-8.0, 8.0};
  SizeRanges size_ranges;
  geom::CameraRig rig = default_rig();
  double ground_bump_amplitude = 0.0;  // 0 = perfectly flat ground
  std::uint64_t seed = 0;
};

inline void validate(const SceneSpec& spec) {
  geom::validate(spec.rig);
  if (spec.n_objects < 0) throw InvalidConfig("n_objects must be >= 0");
  if (!(spec.x_range.lo < spec.x_range.hi) ||
      !(spec.y_range.lo < spec.y_range.hi)) {
    throw InvalidConfig("placement ranges must be non-empty");
  }
  for (const Interval& r :
       {spec.size_ranges.length, spec.size_ranges.width,
        spec.size_ranges.height}) {
    if (!(r.lo > 0.0) || !(r.lo <= r.hi)) {
      throw InvalidConfig("size ranges must be positive and non-empty");
    }
  }
  if (!(spec.ground_bump_amplitude >= 0.0)) {
    throw InvalidConfig("ground bump amplitude must be >= 0");
  }
}

/// Maps object visibility (2D apparent size via true depth) to a
/// classification score, independent of the depth error.
struct ScoreModel {
  double base = 0.7;
  double visibility_gain = 0.15;  // score swing from near to far objects
  double noise_std = 0.12;
  double ref_depth = 15.0;        // depth at which visibility saturates
};

/// Detector error model: depth errors are Laplace with a scale that grows
/// linearly in distance; the emitted uncertainty sigma mixes the true
/// absolute depth error (weight sigma_fidelity) with a constant baseline
/// 0.1 (weight 1 - sigma_fidelity) plus Gaussian jitter.
struct NoiseModel {
  double depth_laplace_base = 0.5;        // meters
  double depth_laplace_per_meter = 0.03;  // extra scale per meter of depth
  double yaw_noise_std = 0.05;            // radians
  double keypoint_pixel_std = 0.5;        // pixels
  double size_noise_std = 0.05;           // meters, each dimension
  double sigma_fidelity = 0.8;            // gamma in [0, 1]
  double sigma_noise_std = 0.02;
  ScoreModel score_model;
};

inline void validate(const NoiseModel& noise) {
  const double scales[] = {noise.depth_laplace_base,
                           noise.depth_laplace_per_meter,
                           noise.yaw_noise_std,
                           noise.keypoint_pixel_std,
                           noise.size_noise_std,
                           noise.sigma_noise_std,
                           noise.score_model.noise_std};
  for (double s : scales) {
    if (!(s >= 0.0)) throw InvalidConfig("noise scales must be >= 0");
  }
  if (!(noise.sigma_fidelity >= 0.0) || !(noise.sigma_fidelity <= 1.0)) {
    throw InvalidConfig("sigma_fidelity must lie in [0, 1]");
  }
  if (!(noise.score_model.ref_depth > 0.0)) {
    throw InvalidConfig("score ref_depth must be positive");
  }
}

struct Provenance {
  std::uint64_t seed = 0;
  std::uint64_t spec_hash = 0;
};

/// A generated scene: ground-truth boxes, optionally the corrupted
/// detections (one per box, matched by gt_match), and the rig they were
/// rendered with.
struct SceneSample {
  std::vector<geom::Box3D> boxes;
  std::vector<geom::Detection> detections;
  geom::CameraRig rig;
  Provenance provenance;
  std::vector<std::size_t> gt_match;  // detection index -> box index
};

namespace detail {

inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t spec_hash(const SceneSpec& spec) {
  std::vector<double> reals{
      static_cast<double>(spec.n_objects), spec.x_range.lo, spec.x_range.hi,
      spec.y_range.lo, spec.y_range.hi, spec.size_ranges.length.lo,
      spec.size_ranges.length.hi, spec.size_ranges.width.lo,
      spec.size_ranges.width.hi, spec.size_ranges.height.lo,
      spec.size_ranges.height.hi, spec.rig.fx, spec.rig.fy, spec.rig.cx,
      spec.rig.cy, spec.ground_bump_amplitude};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) reals.push_back(spec.rig.R(r, c));
  }
  for (int i = 0; i < 3; ++i) reals.push_back(spec.rig.T(i));
  std::uint64_t h = fnv1a(reals.data(), reals.size() * sizeof(double));
  return fnv1a(&spec.seed, sizeof(spec.seed), h);
}

}  // namespace detail

/// Smooth seeded ground-height field: eight sinusoids with random
/// directions (wavelengths 5-30 m) and phases, scaled so |height| never
/// exceeds the amplitude (the amplitude is the supremum, approached where
/// the waves align). Amplitude 0 is the identically-zero field.
class BumpField {
 public:
  BumpField(std::uint64_t seed, double amplitude) : amplitude_(amplitude) {
    Rng rng(seed ^ 0x67726f756e64ULL);
    for (int i = 0; i < kWaves; ++i) {
      const double wavelength = rng.uniform(5.0, 30.0);
      const double dir = rng.uniform(0.0, 2.0 * M_PI);
      const double k = 2.0 * M_PI / wavelength;
      kx_[i] = k * std::cos(dir);
      ky_[i] = k * std::sin(dir);
      phase_[i] = rng.uniform(0.0, 2.0 * M_PI);
    }
  }

  double operator()(double x, double y) const {
    if (amplitude_ == 0.0) return 0.0;
    double s = 0.0;
    for (int i = 0; i < kWaves; ++i) {
      s += std::sin(kx_[i] * x + ky_[i] * y + phase_[i]);
    }
    return amplitude_ * s / kWaves;
  }

 private:
  static constexpr int kWaves = 8;
  double amplitude_;
  std::array<double, kWaves> kx_{}, ky_{}, phase_{};
};

constexpr int kPlacementAttempts = 1000;

/// Places n_objects boxes bottom-down on the ground surface by rejection
/// sampling: a candidate's bottom center must project inside the image
/// (taken as [0, 2cx] x [0, 2cy]) with camera depth inside x_range.
/// Detections are left empty; fill them with corrupt().
inline SceneSample generate_scene(const SceneSpec& spec) {
  validate(spec);
  SceneSample sample;
  sample.rig = spec.rig;
  sample.provenance = {spec.seed, detail::spec_hash(spec)};
  const BumpField ground(spec.seed, spec.ground_bump_amplitude);
  Rng rng(spec.seed);

  for (int i = 0; i < spec.n_objects; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
      geom::Box3D box;
      const double x = rng.uniform(spec.x_range.lo, spec.x_range.hi);
      const double y = rng.uniform(spec.y_range.lo, spec.y_range.hi);
      box.center = {x, y, ground(x, y)};
      box.yaw = geom::normalize_yaw(rng.uniform(-M_PI, M_PI));
      box.length = rng.uniform(spec.size_ranges.length.lo,
                               spec.size_ranges.length.hi);
      box.width =
          rng.uniform(spec.size_ranges.width.lo, spec.size_ranges.width.hi);
      box.height =
          rng.uniform(spec.size_ranges.height.lo, spec.size_ranges.height.hi);

      geom::Projection proj;
      try {
        proj = geom::project_point(spec.rig, box.center);
      } catch (const BehindCamera&) {
        continue;
      }
      if (proj.depth < spec.x_range.lo || proj.depth > spec.x_range.hi) {
        continue;
      }
      if (proj.image.u < 0.0 || proj.image.u > 2.0 * spec.rig.cx ||
          proj.image.v < 0.0 || proj.image.v > 2.0 * spec.rig.cy) {
        continue;
      }
      sample.boxes.push_back(box);
      placed = true;
      break;
    }
    if (!placed) {
      throw PlacementFailure("could not place a box in view after 1000 tries");
    }
  }
  return sample;
}

/// Renders one Detection per ground-truth box under the noise model:
/// keypoints are the exact bottom-point projections plus Gaussian pixel
/// noise; depth gets additive Laplace error growing with distance; yaw and
/// size get Gaussian perturbations; sigma tracks the realized |depth
/// error| with fidelity gamma; the score depends on visibility and fresh
/// noise only, never on the depth error. Per box the draw order is fixed
/// (keypoints, depth, yaw, size, sigma, score), so output is a pure
/// function of (sample, noise, seed).
inline SceneSample corrupt(const SceneSample& sample, const NoiseModel& noise,
                           std::uint64_t seed) {
  validate(noise);
  SceneSample out = sample;
  out.detections.clear();
  out.gt_match.clear();
  Rng rng(seed);

  for (std::size_t i = 0; i < sample.boxes.size(); ++i) {
    const geom::Box3D& box = sample.boxes[i];
    const auto bottom = geom::bottom_points_lidar(box);

    geom::Detection det;
    det.class_id = 0;
    for (int k = 0; k < 5; ++k) {
      const geom::Projection p = geom::project_point(sample.rig, bottom[k]);
      det.keypoints_bottom[k] = {
          p.image.u + rng.normal(0.0, noise.keypoint_pixel_std),
          p.image.v + rng.normal(0.0, noise.keypoint_pixel_std)};
    }

    const double true_depth = geom::project_point(sample.rig, bottom[0]).depth;
    const double laplace_scale =
        noise.depth_laplace_base + noise.depth_laplace_per_meter * true_depth;
    det.depth = std::max(true_depth + rng.laplace(laplace_scale), 0.1);
    const double depth_error = det.depth - true_depth;

    det.yaw = geom::normalize_yaw(box.yaw + rng.normal(0.0, noise.yaw_noise_std));
    det.length = std::max(box.length + rng.normal(0.0, noise.size_noise_std), 0.05);
    det.width = std::max(box.width + rng.normal(0.0, noise.size_noise_std), 0.05);
    det.height = std::max(box.height + rng.normal(0.0, noise.size_noise_std), 0.05);

    const double gamma = noise.sigma_fidelity;
    det.sigma = std::max(gamma * std::fabs(depth_error) + (1.0 - gamma) * 0.1 +
                             rng.normal(0.0, noise.sigma_noise_std),
                         1e-4);

    const ScoreModel& sm = noise.score_model;
    const double visibility =
        std::clamp(sm.ref_depth / true_depth, 0.0, 1.0);
    det.score = std::clamp(sm.base + sm.visibility_gain * (2.0 * visibility - 1.0) +
                               rng.normal(0.0, sm.noise_std),
                           0.01, 0.99);

    // Tight 2D box around all eight corner projections.
    double u1 = 1e300, v1 = 1e300, u2 = -1e300, v2 = -1e300;
    for (int k = 1; k < 5; ++k) {
      for (double dz : {0.0, box.height}) {
        const Eigen::Vector3d corner =
            bottom[k] + Eigen::Vector3d(0.0, 0.0, dz);
        const geom::Projection p = geom::project_point(sample.rig, corner);
        u1 = std::min(u1, p.image.u);
        v1 = std::min(v1, p.image.v);
        u2 = std::max(u2, p.image.u);
        v2 = std::max(v2, p.image.v);
      }
    }
    det.bbox2d = {u1, v1, u2, v2};

    geom::validate(det);
    out.detections.push_back(det);
    out.gt_match.push_back(i);
  }
  return out;
}

}  // namespace bevmine::synth
