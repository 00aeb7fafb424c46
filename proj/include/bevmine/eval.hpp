#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "bevmine/errors.hpp"
#include "bevmine/geom.hpp"
#include "bevmine/gradproj.hpp"
#include "bevmine/homography.hpp"
#include "bevmine/mining.hpp"
#include "bevmine/synth.hpp"

namespace bevmine::eval {

/// Precision/recall of the mined 3D label set against the "good" set
/// (detections whose true BEV bottom-center displacement is at most
/// good_threshold). Empty selected (or good) sets score 1.0 by convention.
struct SelectionMetrics {
  double precision = 1.0;
  double recall = 1.0;
  std::size_t n_selected = 0;
  std::size_t n_good = 0;
  std::size_t n_candidates = 0;
  double good_threshold = 1.0;
};

/// Mean/median/90th-percentile of a nonnegative error series (meters).
/// Zero-valued with n = 0 for an empty series.
struct ErrorStats {
  double mean = 0.0;
  double median = 0.0;
  double p90 = 0.0;
  std::size_t n = 0;
};

/// Sample Pearson correlation coefficient. Throws DegenerateSeries for
/// constant input (zero variance) and for series shorter than 2.
inline double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw DimensionMismatch("pearson requires equal-length series");
  }
  const std::size_t n = xs.size();
  if (n < 2) throw DegenerateSeries("pearson requires at least 2 samples");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) {
    throw DegenerateSeries("pearson is undefined for a constant series");
  }
  return sxy / std::sqrt(sxx * syy);
}

/// Aggregates a series into ErrorStats. Median is the midpoint of the two
/// central order statistics for even n; p90 is the nearest-rank 90th
/// percentile.
inline ErrorStats series_stats(std::vector<double> xs) {
  ErrorStats st;
  st.n = xs.size();
  if (xs.empty()) return st;
  std::sort(xs.begin(), xs.end());
  double sum = 0.0;
  for (double x : xs) sum += x;
  st.mean = sum / static_cast<double>(xs.size());
  const std::size_t n = xs.size();
  st.median = n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
  const std::size_t rank = static_cast<std::size_t>(
      std::ceil(0.9 * static_cast<double>(n)));
  st.p90 = xs[std::max<std::size_t>(rank, 1) - 1];
  return st;
}

/// The plane homography fitted by DLT to the scene's exact ground-truth
/// correspondences (all five bottom points of every box, exact projections
/// paired with true BEV coordinates). On uneven ground this is the best
/// flat-plane explanation of the scene rather than an exact map.
inline homography::HomographyMatrix gt_fit_homography(
    const synth::SceneSample& sample) {
  std::vector<homography::Correspondence> corr;
  for (const auto& box : sample.boxes) {
    for (const auto& p : geom::bottom_points_lidar(box)) {
      const geom::Projection proj = geom::project_point(sample.rig, p);
      corr.push_back({proj.image, geom::to_bev(p)});
    }
  }
  return homography::dlt_solve(corr);
}

enum class ErrorSource { gt, detections };

/// BEV localization errors of a scene under a homography. Source gt: exact
/// bottom-center projections of the true boxes against their true BEV
/// coordinates (isolates the flat-ground approximation). Source
/// detections: mining's localization error per detection (adds detector
/// noise on top).
inline ErrorStats loc_error_stats(const synth::SceneSample& sample,
                                  const homography::HomographyMatrix& m,
                                  ErrorSource source) {
  std::vector<double> errs;
  if (source == ErrorSource::gt) {
    errs.reserve(sample.boxes.size());
    for (const auto& box : sample.boxes) {
      const geom::Projection proj = geom::project_point(sample.rig, box.center);
      const geom::PointBEV mapped = homography::apply(m, proj.image);
      const geom::PointBEV truth = geom::to_bev(box.center);
      errs.push_back(std::hypot(truth.xb - mapped.xb, truth.yb - mapped.yb));
    }
  } else {
    errs.reserve(sample.detections.size());
    for (const auto& det : sample.detections) {
      errs.push_back(mining::localization_error(m, det, sample.rig));
    }
  }
  return series_stats(std::move(errs));
}

/// True BEV displacement of a detection from its matched ground-truth box:
/// distance between the model-derived bottom-center BEV point and the true
/// one. The ground truth for "is this pseudo-label good".
inline double true_bev_displacement(const synth::SceneSample& sample,
                                    std::size_t det_index) {
  const geom::Detection& det = sample.detections.at(det_index);
  const geom::Box3D& box = sample.boxes.at(sample.gt_match.at(det_index));
  const geom::PointBEV model =
      geom::detection_bev_points(sample.rig, det)[0];
  const geom::PointBEV truth = geom::to_bev(box.center);
  return std::hypot(model.xb - truth.xb, model.yb - truth.yb);
}

inline SelectionMetrics selection_metrics(const synth::SceneSample& sample,
                                          const mining::PseudoLabelSet& result,
                                          double good_threshold = 1.0) {
  SelectionMetrics m;
  m.good_threshold = good_threshold;
  m.n_candidates = sample.detections.size();
  m.n_selected = result.labels_3d.size();

  std::vector<char> good(sample.detections.size(), 0);
  for (std::size_t i = 0; i < sample.detections.size(); ++i) {
    if (true_bev_displacement(sample, i) <= good_threshold) {
      good[i] = 1;
      ++m.n_good;
    }
  }
  std::size_t hit = 0;
  for (std::size_t i : result.labels_3d) {
    if (i < good.size() && good[i]) ++hit;
  }
  m.precision = m.n_selected == 0
                    ? 1.0
                    : static_cast<double>(hit) / static_cast<double>(m.n_selected);
  m.recall = m.n_good == 0
                 ? 1.0
                 : static_cast<double>(hit) / static_cast<double>(m.n_good);
  return m;
}

/// Fraction of harness steps on which each stream pair was in conflict
/// (cosine strictly negative). ud_p is the pseudo-label stream against the
/// principal gradient it is projected against.
struct ConflictProportions {
  double ud_sd = 0.0;
  double ud_o = 0.0;
  double sd_o = 0.0;
  double ud_p = 0.0;
};

inline ConflictProportions conflict_proportions(
    const gradproj::ConflictReport& trace) {
  if (trace.steps() == 0) {
    throw DegenerateSeries("conflict proportions need a non-empty trace");
  }
  const auto frac = [](const std::vector<double>& cs) {
    std::size_t neg = 0;
    for (double c : cs) {
      if (c < 0.0) ++neg;
    }
    return static_cast<double>(neg) / static_cast<double>(cs.size());
  };
  return {frac(trace.cos_ud_sd), frac(trace.cos_ud_o), frac(trace.cos_sd_o),
          frac(trace.cos_ud_p)};
}

}  // namespace bevmine::eval
