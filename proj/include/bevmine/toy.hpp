#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Core>

#include "bevmine/errors.hpp"
#include "bevmine/gradproj.hpp"
#include "bevmine/random.hpp"
#include "bevmine/synth.hpp"

namespace bevmine::toy {

/// Desk-scale stand-in for a detector's depth head: a linear regressor
/// d = phi' theta trained by full-batch gradient descent against three
/// loss streams — sd (clean labels), ud (pseudo-labels with Laplace noise
/// from the detector noise model), o (a clean auxiliary target sharing the
/// parameters). Both clean streams are realizable by the same true
/// parameter vector, so any persistent pull away from it comes from the
/// pseudo-label noise — the regime the projection operator targets.
struct HarnessConfig {
  int n_params = 8;
  int n_sd = 64;
  int n_ud = 64;
  int n_o = 64;
  double lr = 1e-2;
  int steps = 500;
  // Multiplier on the noise model's depth-Laplace scale; 0 gives exact
  // pseudo-labels.
  double pseudo_label_noise = 3.0;
  synth::NoiseModel noise;
  bool projection = true;
};

inline void validate(const HarnessConfig& cfg) {
  if (cfg.n_params < 1 || cfg.n_sd < 1 || cfg.n_ud < 1 || cfg.n_o < 1) {
    throw InvalidConfig("harness dimensions must be positive");
  }
  if (!(cfg.lr > 0.0) || cfg.steps < 1) {
    throw InvalidConfig("harness needs lr > 0 and steps >= 1");
  }
  if (!(cfg.pseudo_label_noise >= 0.0)) {
    throw InvalidConfig("pseudo_label_noise must be >= 0");
  }
  synth::validate(cfg.noise);
}

namespace detail {

inline Eigen::MatrixXd random_matrix(Rng& rng, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = rng.normal();
  }
  return m;
}

inline Eigen::VectorXd random_vector(Rng& rng, int n) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

inline double safe_cos(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) return 0.0;
  return a.dot(b) / (na * nb);
}

}  // namespace detail

/// Runs one seeded harness training loop and records the per-step stream
/// losses and pairwise gradient cosines (always measured before any
/// projection, so traces with and without projection are comparable).
/// Draw order is fixed: true parameters, sd/ud/o feature matrices,
/// pseudo-label noise, initial parameters.
inline gradproj::ConflictReport run_toy_experiment(const HarnessConfig& cfg,
                                                   std::uint64_t seed) {
  validate(cfg);
  using gradproj::GradientVector;
  using gradproj::Stream;

  Rng rng(seed);
  const int k = cfg.n_params;
  const Eigen::VectorXd theta_star = detail::random_vector(rng, k);
  const Eigen::MatrixXd phi_sd = detail::random_matrix(rng, cfg.n_sd, k);
  const Eigen::MatrixXd phi_ud = detail::random_matrix(rng, cfg.n_ud, k);
  const Eigen::MatrixXd phi_o = detail::random_matrix(rng, cfg.n_o, k);

  const Eigen::VectorXd t_sd = phi_sd * theta_star;
  const Eigen::VectorXd t_o = phi_o * theta_star;
  Eigen::VectorXd t_ud = phi_ud * theta_star;
  for (int i = 0; i < cfg.n_ud; ++i) {
    const double scale =
        cfg.pseudo_label_noise *
        (cfg.noise.depth_laplace_base +
         cfg.noise.depth_laplace_per_meter * std::fabs(t_ud(i)));
    t_ud(i) += rng.laplace(scale);
  }

  Eigen::VectorXd theta = detail::random_vector(rng, k);

  gradproj::ConflictReport report;
  report.seed = seed;
  report.projection = cfg.projection;

  const auto loss_and_grad = [](const Eigen::MatrixXd& phi,
                                const Eigen::VectorXd& t,
                                const Eigen::VectorXd& th, double& loss) {
    const Eigen::VectorXd r = phi * th - t;
    const double n = static_cast<double>(r.size());
    loss = r.squaredNorm() / n;
    return Eigen::VectorXd((2.0 / n) * (phi.transpose() * r));
  };

  double l_sd = 0.0, l_ud = 0.0, l_o = 0.0;
  for (int step = 0; step < cfg.steps; ++step) {
    const GradientVector g_sd{loss_and_grad(phi_sd, t_sd, theta, l_sd),
                              Stream::sd};
    const GradientVector g_ud{loss_and_grad(phi_ud, t_ud, theta, l_ud),
                              Stream::ud};
    const GradientVector g_o{loss_and_grad(phi_o, t_o, theta, l_o),
                             Stream::o};
    const Eigen::VectorXd g_p = g_sd.values + g_o.values;

    report.cos_ud_p.push_back(detail::safe_cos(g_ud.values, g_p));
    report.cos_ud_sd.push_back(detail::safe_cos(g_ud.values, g_sd.values));
    report.cos_ud_o.push_back(detail::safe_cos(g_ud.values, g_o.values));
    report.cos_sd_o.push_back(detail::safe_cos(g_sd.values, g_o.values));
    report.loss_sd.push_back(l_sd);
    report.loss_ud.push_back(l_ud);
    report.loss_o.push_back(l_o);

    Eigen::VectorXd update;
    if (cfg.projection) {
      update = gradproj::combine_step_gradient(g_sd, g_o, g_ud).values;
    } else {
      update = g_p + g_ud.values;
    }
    theta -= cfg.lr * update;
  }

  loss_and_grad(phi_sd, t_sd, theta, report.final_loss_sd);
  loss_and_grad(phi_ud, t_ud, theta, report.final_loss_ud);
  loss_and_grad(phi_o, t_o, theta, report.final_loss_o);
  return report;
}

}  // namespace bevmine::toy
