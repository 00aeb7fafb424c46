#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include <Eigen/Core>

#include "bevmine/errors.hpp"

namespace bevmine::gradproj {

/// Loss stream a gradient belongs to: supervised depth (sd), unsupervised
/// pseudo-label depth (ud), other auxiliary supervision (o), or the
/// combined parameter update produced by combine_step_gradient.
enum class Stream { ud, sd, o, combined };

/// Flat parameter-space gradient tagged with its loss stream.
struct GradientVector {
  Eigen::VectorXd values;
  Stream stream = Stream::sd;
};

/// Laplacian aleatoric depth loss sqrt(2)/sigma * |d_gt - d_pred| + log(sigma)
/// and its exact partials. The subgradient w.r.t. d_pred at zero residual
/// is taken as 0.
struct DepthLossResult {
  double loss = 0.0;
  double d_dpred = 0.0;
  double d_dsigma = 0.0;
};

inline DepthLossResult laplacian_depth_loss(double d_pred, double sigma,
                                            double d_gt) {
  if (!(sigma > 0.0)) {
    throw NonPositiveSigma("laplacian depth loss requires sigma > 0");
  }
  const double r = d_pred - d_gt;
  const double ar = std::fabs(r);
  const double s2 = std::numbers::sqrt2;
  DepthLossResult out;
  out.loss = s2 / sigma * ar + std::log(sigma);
  out.d_dpred = r > 0.0 ? s2 / sigma : (r < 0.0 ? -s2 / sigma : 0.0);
  out.d_dsigma = -s2 / (sigma * sigma) * ar + 1.0 / sigma;
  return out;
}

/// Cosine similarity of two gradients; both must be nonzero.
inline double cosine(const GradientVector& a, const GradientVector& b) {
  if (a.values.size() != b.values.size()) {
    throw DimensionMismatch("cosine requires equal gradient dimensions");
  }
  const double na = a.values.norm();
  const double nb = b.values.norm();
  if (!(na > 0.0) || !(nb > 0.0)) {
    throw ZeroGradient("cosine of a zero gradient is undefined");
  }
  return a.values.dot(b.values) / (na * nb);
}

/// Removes the component of the pseudo-label depth gradient that opposes
/// the principal gradient: when cos(g_ud, g_p) < 0, g_ud is projected onto
/// the hyperplane normal to g_p; otherwise it passes through unchanged.
/// The output never has negative alignment with g_p beyond roundoff.
inline GradientVector project_depth_gradient(const GradientVector& g_ud,
                                             const GradientVector& g_p) {
  if (g_ud.values.size() != g_p.values.size()) {
    throw DimensionMismatch("projection requires equal gradient dimensions");
  }
  const double np2 = g_p.values.squaredNorm();
  if (!(np2 > 0.0)) {
    throw ZeroPrincipalGradient("principal gradient must be nonzero");
  }
  const double d = g_ud.values.dot(g_p.values);
  // cos < 0 iff dot < 0 (norms nonnegative); a zero g_ud has dot 0 and
  // passes through, so no separate norm guard is needed.
  if (d >= 0.0) return g_ud;
  return {g_ud.values - (d / np2) * g_p.values, g_ud.stream};
}

/// Full step gradient g_sd + g_o + project_depth_gradient(g_ud, g_sd+g_o).
/// When the principal gradient vanishes there is nothing to conflict with
/// and g_ud passes through unprojected.
inline GradientVector combine_step_gradient(const GradientVector& g_sd,
                                            const GradientVector& g_o,
                                            const GradientVector& g_ud) {
  if (g_sd.stream != Stream::sd || g_o.stream != Stream::o ||
      g_ud.stream != Stream::ud) {
    throw InvalidConfig("combine_step_gradient expects sd, o, ud streams");
  }
  if (g_sd.values.size() != g_o.values.size() ||
      g_sd.values.size() != g_ud.values.size()) {
    throw DimensionMismatch("combine requires equal gradient dimensions");
  }
  const GradientVector g_p{g_sd.values + g_o.values, Stream::combined};
  if (!(g_p.values.squaredNorm() > 0.0)) {
    return {g_ud.values, Stream::combined};
  }
  const GradientVector proj = project_depth_gradient(g_ud, g_p);
  return {g_p.values + proj.values, Stream::combined};
}

/// EMA teacher update: m * teacher + (1 - m) * student.
inline Eigen::VectorXd ema_update(const Eigen::VectorXd& teacher,
                                  const Eigen::VectorXd& student,
                                  double momentum) {
  if (teacher.size() != student.size()) {
    throw DimensionMismatch("EMA requires equal parameter dimensions");
  }
  if (!(momentum >= 0.0) || !(momentum <= 1.0)) {
    throw InvalidConfig("EMA momentum must lie in [0, 1]");
  }
  return momentum * teacher + (1.0 - momentum) * student;
}

/// Per-step trace of one toy-harness run. Cosines are recorded before any
/// projection is applied, so runs with and without projection expose the
/// same observables.
struct ConflictReport {
  std::uint64_t seed = 0;
  bool projection = false;
  std::vector<double> cos_ud_p;
  std::vector<double> cos_ud_sd;
  std::vector<double> cos_ud_o;
  std::vector<double> cos_sd_o;
  std::vector<double> loss_sd;
  std::vector<double> loss_ud;
  std::vector<double> loss_o;
  double final_loss_sd = 0.0;
  double final_loss_ud = 0.0;
  double final_loss_o = 0.0;

  double final_reliable_loss() const { return final_loss_sd + final_loss_o; }
  std::size_t steps() const { return cos_ud_p.size(); }
};

}  // namespace bevmine::gradproj
