#pragma once

#include <algorithm>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bevmine/errors.hpp"
#include "bevmine/geom.hpp"
#include "bevmine/homography.hpp"

namespace bevmine::mining {

using geom::Detection;

/// Thresholds for decoupled pseudo-label selection. Defaults follow the
/// reference configuration: score gate 0.4, uncertainty gate 0.1,
/// BEV-residual gate 2.0 m, at most 10 mining iterations, background
/// pre-filter 0.2, unsupervised loss weight 1.
struct MiningConfig {
  double theta_c = 0.4;        // 2D selection: score >= theta_c
  double theta_u = 0.1;        // 3D seeding: sigma < theta_u
  double theta_h = 2.0;        // mining acceptance: epsilon < theta_h (m)
  int t_max = 10;
  double background_score = 0.2;  // pre-filter: keep score > background_score
  double alpha = 1.0;             // unsupervised 3D loss weight
};

inline void validate(const MiningConfig& cfg) {
  if (!(cfg.theta_c > 0.0) || !(cfg.theta_u > 0.0) || !(cfg.theta_h > 0.0)) {
    throw InvalidConfig("mining thresholds must be positive");
  }
  if (cfg.t_max < 1) {
    throw InvalidConfig("t_max must be at least 1");
  }
  if (!(cfg.background_score > 0.0)) {
    throw InvalidConfig("background score threshold must be positive");
  }
}

/// One mining iteration: the homography fit on the set at iteration start
/// and the (sorted) selected set after this iteration's additions.
struct IterationRecord {
  homography::HomographyMatrix homography;
  std::vector<size_t> selected_after;
};

/// Decoupled selection result. labels_2d and labels_3d are independent
/// index lists into the candidate detections; labels_3d always contains
/// seed_indices. per_candidate_error holds the last BEV residual computed
/// for each candidate ever evaluated (selected seeds are never evaluated).
/// When the seed set cannot support a homography fit, fallback is true,
/// iterations_used is 0 and labels_3d is the seed set unchanged.
struct PseudoLabelSet {
  std::vector<size_t> labels_2d;
  std::vector<size_t> labels_3d;
  int iterations_used = 0;
  std::map<size_t, double> per_candidate_error;
  bool fallback = false;
  std::string fallback_reason;  // error code, empty unless fallback
  std::vector<size_t> seed_indices;
  std::vector<IterationRecord> iterations;
};

/// Drops likely-background detections: keeps score strictly above the
/// threshold, preserving order.
inline std::vector<Detection> background_filter(std::span<const Detection> dets,
                                                const MiningConfig& cfg) {
  std::vector<Detection> kept;
  kept.reserve(dets.size());
  for (const auto& d : dets) {
    if (d.score > cfg.background_score) kept.push_back(d);
  }
  return kept;
}

/// Indices selected for 2D supervision: score >= theta_c (inclusive, so a
/// score exactly at threshold is kept).
inline std::vector<size_t> select_2d(std::span<const Detection> dets,
                                     const MiningConfig& cfg) {
  std::vector<size_t> out;
  for (size_t i = 0; i < dets.size(); ++i) {
    if (dets[i].score >= cfg.theta_c) out.push_back(i);
  }
  return out;
}

/// Indices seeding the 3D mining loop: sigma strictly below theta_u.
inline std::vector<size_t> uncertainty_filter(std::span<const Detection> dets,
                                              const MiningConfig& cfg) {
  std::vector<size_t> out;
  for (size_t i = 0; i < dets.size(); ++i) {
    if (dets[i].sigma < cfg.theta_u) out.push_back(i);
  }
  return out;
}

/// BEV residual of one detection against a homography: the distance
/// between its model-derived bottom-center BEV point and the homography
/// image of its bottom-center keypoint.
inline double localization_error(const homography::HomographyMatrix& m,
                                 const Detection& det,
                                 const geom::CameraRig& rig) {
  const geom::PointBEV model = geom::detection_bev_points(rig, det)[0];
  const geom::PointBEV mapped = homography::apply(m, det.keypoints_bottom[0]);
  return std::hypot(model.xb - mapped.xb, model.yb - mapped.yb);
}

namespace detail {

inline homography::HomographyMatrix fit_on_selected(
    std::span<const Detection> dets, const std::vector<char>& selected,
    const geom::CameraRig& rig) {
  std::vector<homography::Correspondence> corr;
  for (size_t i = 0; i < dets.size(); ++i) {
    if (!selected[i]) continue;
    const auto bev = geom::detection_bev_points(rig, dets[i]);
    for (int k = 0; k < 5; ++k) {
      corr.push_back({dets[i].keypoints_bottom[k], bev[k]});
    }
  }
  return homography::dlt_solve(corr);
}

inline std::vector<size_t> selected_indices(const std::vector<char>& selected) {
  std::vector<size_t> out;
  for (size_t i = 0; i < selected.size(); ++i) {
    if (selected[i]) out.push_back(i);
  }
  return out;
}

}  // namespace detail

/// Iterative homography-based mining of 3D pseudo-labels over one image's
/// (background-filtered) candidates. Seeds with the low-uncertainty set,
/// then repeatedly: fit the plane homography to all five bottom points of
/// every selected candidate, compute the BEV residual of each unselected
/// candidate, and admit those under theta_h. Stops at a fixed point or
/// after t_max iterations; the selected set only ever grows. A seed set
/// with fewer than two detections, or one whose fit is degenerate, yields
/// the fallback result (seed set unchanged, iterations_used = 0) rather
/// than an error. labels_2d is filled independently via select_2d.
inline PseudoLabelSet hpm_mine(std::span<const Detection> dets,
                               const geom::CameraRig& rig,
                               const MiningConfig& cfg) {
  validate(cfg);
  PseudoLabelSet out;
  out.labels_2d = select_2d(dets, cfg);
  out.seed_indices = uncertainty_filter(dets, cfg);

  std::vector<char> selected(dets.size(), 0);
  for (size_t i : out.seed_indices) selected[i] = 1;

  // A single box contributes one plane patch (its center is an affine
  // combination of its corners), so one seed cannot condition the fit.
  if (out.seed_indices.size() < 2) {
    out.fallback = true;
    out.fallback_reason = "InsufficientSeed";
    out.labels_3d = out.seed_indices;
    return out;
  }

  for (int t = 1; t <= cfg.t_max; ++t) {
    homography::HomographyMatrix m;
    try {
      m = detail::fit_on_selected(dets, selected, rig);
    } catch (const DegenerateConfiguration&) {
      if (t == 1) {
        out.fallback = true;
        out.fallback_reason = "InsufficientSeed";
        out.labels_3d = out.seed_indices;
        out.per_candidate_error.clear();
        out.iterations.clear();
        out.iterations_used = 0;
        return out;
      }
      // A degenerate fit after successful iterations admits nothing more;
      // the previous set is already a fixed point.
      break;
    }

    // Evaluate every unselected candidate against this iteration's fit
    // before admitting any, so admissions within an iteration are
    // order-independent.
    std::vector<size_t> added;
    for (size_t j = 0; j < dets.size(); ++j) {
      if (selected[j]) continue;
      double eps;
      try {
        eps = localization_error(m, dets[j], rig);
      } catch (const PointAtInfinity&) {
        continue;  // horizon point: never admissible, leave unevaluated
      }
      out.per_candidate_error[j] = eps;
      if (eps < cfg.theta_h) added.push_back(j);
    }
    for (size_t j : added) selected[j] = 1;

    out.iterations.push_back({m, detail::selected_indices(selected)});
    out.iterations_used = t;
    if (added.empty()) break;
  }

  out.labels_3d = detail::selected_indices(selected);
  return out;
}

/// Full decoupled pseudo-label generation over raw detections: background
/// filter, then independent 2D (confidence) and 3D (mining) selection.
/// Returned indices refer to positions in the raw input list.
inline PseudoLabelSet decoupled_generate(std::span<const Detection> dets,
                                         const geom::CameraRig& rig,
                                         const MiningConfig& cfg) {
  std::vector<size_t> keep;
  std::vector<Detection> filtered;
  for (size_t i = 0; i < dets.size(); ++i) {
    if (dets[i].score > cfg.background_score) {
      keep.push_back(i);
      filtered.push_back(dets[i]);
    }
  }
  PseudoLabelSet r = hpm_mine(filtered, rig, cfg);

  const auto remap = [&keep](std::vector<size_t>& ids) {
    for (auto& i : ids) i = keep[i];
  };
  remap(r.labels_2d);
  remap(r.labels_3d);
  remap(r.seed_indices);
  for (auto& it : r.iterations) remap(it.selected_after);
  std::map<size_t, double> err;
  for (const auto& [i, e] : r.per_candidate_error) err.emplace(keep[i], e);
  r.per_candidate_error = std::move(err);
  return r;
}

}  // namespace bevmine::mining
