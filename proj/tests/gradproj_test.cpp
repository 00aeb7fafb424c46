#include "bevmine/gradproj.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "bevmine/errors.hpp"
#include "bevmine/random.hpp"
#include "bevmine/toy.hpp"

namespace gp = bevmine::gradproj;
using bevmine::Rng;

namespace {

gp::GradientVector vec2(double x, double y, gp::Stream s) {
  Eigen::VectorXd v(2);
  v << x, y;
  return {v, s};
}

gp::GradientVector random_grad(Rng& rng, int n, gp::Stream s) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.normal();
  return {v, s};
}

double conflict_fraction(const std::vector<double>& cosines) {
  std::size_t c = 0;
  for (double v : cosines) c += v < 0.0;
  return static_cast<double>(c) / static_cast<double>(cosines.size());
}

}  // namespace

TEST(LaplacianDepthLoss, ZeroResidualUnitSigmaIsZero) {
  const auto r = gp::laplacian_depth_loss(10.0, 1.0, 10.0);
  EXPECT_DOUBLE_EQ(r.loss, 0.0);
  EXPECT_DOUBLE_EQ(r.d_dpred, 0.0);  // subgradient at the kink
}

TEST(LaplacianDepthLoss, UnitResidualUnitSigmaIsSqrtTwo) {
  const auto r = gp::laplacian_depth_loss(11.0, 1.0, 10.0);
  EXPECT_DOUBLE_EQ(r.loss, std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(r.d_dpred, std::sqrt(2.0));
  const auto l = gp::laplacian_depth_loss(9.0, 1.0, 10.0);
  EXPECT_DOUBLE_EQ(l.loss, std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(l.d_dpred, -std::sqrt(2.0));
}

TEST(LaplacianDepthLoss, NonPositiveSigmaThrows) {
  EXPECT_THROW(gp::laplacian_depth_loss(1.0, 0.0, 1.0),
               bevmine::NonPositiveSigma);
  EXPECT_THROW(gp::laplacian_depth_loss(1.0, -0.2, 1.0),
               bevmine::NonPositiveSigma);
}

TEST(LaplacianDepthLoss, PartialsMatchCentralFiniteDifferences) {
  Rng rng(61);
  const double h = 1e-6;
  for (int i = 0; i < 1000; ++i) {
    const double d_gt = rng.uniform(1.0, 50.0);
    const double mag = rng.uniform(1e-3, 30.0);
    const double r = rng.uniform(0.0, 1.0) < 0.5 ? mag : -mag;
    const double d_pred = d_gt + r;
    const double sigma = rng.uniform(0.05, 5.0);

    const auto res = gp::laplacian_depth_loss(d_pred, sigma, d_gt);
    const double fd_pred =
        (gp::laplacian_depth_loss(d_pred + h, sigma, d_gt).loss -
         gp::laplacian_depth_loss(d_pred - h, sigma, d_gt).loss) /
        (2.0 * h);
    const double fd_sigma =
        (gp::laplacian_depth_loss(d_pred, sigma + h, d_gt).loss -
         gp::laplacian_depth_loss(d_pred, sigma - h, d_gt).loss) /
        (2.0 * h);
    EXPECT_NEAR(res.d_dpred, fd_pred,
                1e-5 * std::max(1.0, std::fabs(res.d_dpred)));
    EXPECT_NEAR(res.d_dsigma, fd_sigma,
                1e-5 * std::max(1.0, std::fabs(res.d_dsigma)));
  }
}

TEST(Cosine, ParallelOppositeAndDiagonal) {
  const auto a = vec2(2.0, 1.0, gp::Stream::sd);
  EXPECT_DOUBLE_EQ(gp::cosine(a, a), 1.0);
  const auto neg = vec2(-2.0, -1.0, gp::Stream::ud);
  EXPECT_DOUBLE_EQ(gp::cosine(a, neg), -1.0);
  EXPECT_NEAR(gp::cosine(vec2(1.0, 0.0, gp::Stream::sd),
                         vec2(1.0, 1.0, gp::Stream::o)),
              1.0 / std::sqrt(2.0), 1e-15);
}

TEST(Cosine, RejectsZeroGradientsAndMismatchedDims) {
  const auto a = vec2(1.0, 0.0, gp::Stream::sd);
  EXPECT_THROW(gp::cosine(a, vec2(0.0, 0.0, gp::Stream::ud)),
               bevmine::ZeroGradient);
  gp::GradientVector three{Eigen::VectorXd::Ones(3), gp::Stream::o};
  EXPECT_THROW(gp::cosine(a, three), bevmine::DimensionMismatch);
}

TEST(ProjectDepthGradient, AlignedGradientPassesThroughUnchanged) {
  const auto out = gp::project_depth_gradient(vec2(1.0, 1.0, gp::Stream::ud),
                                              vec2(0.0, 1.0, gp::Stream::sd));
  EXPECT_DOUBLE_EQ(out.values(0), 1.0);
  EXPECT_DOUBLE_EQ(out.values(1), 1.0);
  EXPECT_EQ(out.stream, gp::Stream::ud);
}

TEST(ProjectDepthGradient, FullyOpposedGradientsAnnihilate) {
  const auto out = gp::project_depth_gradient(vec2(-1.0, 0.0, gp::Stream::ud),
                                              vec2(1.0, 0.0, gp::Stream::sd));
  EXPECT_NEAR(out.values.norm(), 0.0, 1e-15);
}

TEST(ProjectDepthGradient, ConflictingComponentRemoved) {
  const auto out = gp::project_depth_gradient(vec2(1.0, -1.0, gp::Stream::ud),
                                              vec2(0.0, 1.0, gp::Stream::sd));
  EXPECT_NEAR(out.values(0), 1.0, 1e-15);
  EXPECT_NEAR(out.values(1), 0.0, 1e-15);
}

TEST(ProjectDepthGradient, ZeroPrincipalGradientThrows) {
  EXPECT_THROW(gp::project_depth_gradient(vec2(1.0, 0.0, gp::Stream::ud),
                                          vec2(0.0, 0.0, gp::Stream::sd)),
               bevmine::ZeroPrincipalGradient);
}

TEST(ProjectDepthGradient, IdempotentNormNonIncreasingNonNegativeDot) {
  Rng rng(62);
  for (int i = 0; i < 500; ++i) {
    const int n = 2 + static_cast<int>(rng.below(30));
    const auto g_ud = random_grad(rng, n, gp::Stream::ud);
    const auto g_p = random_grad(rng, n, gp::Stream::sd);
    const auto once = gp::project_depth_gradient(g_ud, g_p);
    const auto twice = gp::project_depth_gradient(once, g_p);
    EXPECT_LE((twice.values - once.values).norm(), 1e-12);
    EXPECT_LE(once.values.norm(), g_ud.values.norm() + 1e-12);
    EXPECT_GE(once.values.dot(g_p.values),
              -1e-12 * once.values.norm() * g_p.values.norm());
  }
}

TEST(ProjectDepthGradient, ContinuousAtTheConflictBoundary) {
  // cos(g_ud, g_p) = -1e-8: the projected output must still be within
  // 1e-6 * ||g_ud|| of the input.
  Rng rng(63);
  for (int i = 0; i < 100; ++i) {
    const int n = 3 + static_cast<int>(rng.below(20));
    Eigen::VectorXd p = random_grad(rng, n, gp::Stream::sd).values;
    p.normalize();
    Eigen::VectorXd q = random_grad(rng, n, gp::Stream::ud).values;
    q -= q.dot(p) * p;
    q.normalize();
    const double c = -1e-8;
    const Eigen::VectorXd ud =
        c * p + std::sqrt(1.0 - c * c) * q;  // unit vector, cos exactly c
    const auto out = gp::project_depth_gradient({ud, gp::Stream::ud},
                                                {p, gp::Stream::sd});
    EXPECT_LE((out.values - ud).norm(), 1e-6 * ud.norm());
  }
}

TEST(CombineStepGradient, OrthogonalPseudoGradientGivesPlainSum) {
  const auto g_sd = vec2(1.0, 0.0, gp::Stream::sd);
  const auto g_o = vec2(2.0, 0.0, gp::Stream::o);
  const auto g_ud = vec2(0.0, 3.0, gp::Stream::ud);
  const auto out = gp::combine_step_gradient(g_sd, g_o, g_ud);
  EXPECT_DOUBLE_EQ(out.values(0), 3.0);
  EXPECT_DOUBLE_EQ(out.values(1), 3.0);
  EXPECT_EQ(out.stream, gp::Stream::combined);
}

TEST(CombineStepGradient, FullyOpposedPseudoGradientLeavesPrincipal) {
  const auto g_sd = vec2(1.0, 1.0, gp::Stream::sd);
  const auto g_o = vec2(1.0, -1.0, gp::Stream::o);
  const auto g_ud = vec2(-2.0, 0.0, gp::Stream::ud);  // = -(g_sd + g_o)
  const auto out = gp::combine_step_gradient(g_sd, g_o, g_ud);
  EXPECT_NEAR(out.values(0), 2.0, 1e-15);
  EXPECT_NEAR(out.values(1), 0.0, 1e-15);
}

TEST(CombineStepGradient, WorkedTwoDimensionalCase) {
  const auto g_sd = vec2(0.0, 1.0, gp::Stream::sd);
  const auto g_o = vec2(0.0, 0.0, gp::Stream::o);
  const auto g_ud = vec2(1.0, -1.0, gp::Stream::ud);
  const auto out = gp::combine_step_gradient(g_sd, g_o, g_ud);
  EXPECT_NEAR(out.values(0), 1.0, 1e-15);
  EXPECT_NEAR(out.values(1), 1.0, 1e-15);
}

TEST(CombineStepGradient, VanishingPrincipalPassesPseudoThrough) {
  const auto g_sd = vec2(0.0, 0.0, gp::Stream::sd);
  const auto g_o = vec2(0.0, 0.0, gp::Stream::o);
  const auto g_ud = vec2(-1.0, 4.0, gp::Stream::ud);
  const auto out = gp::combine_step_gradient(g_sd, g_o, g_ud);
  EXPECT_DOUBLE_EQ(out.values(0), -1.0);
  EXPECT_DOUBLE_EQ(out.values(1), 4.0);
}

TEST(CombineStepGradient, RejectsMistaggedStreams) {
  const auto g_sd = vec2(1.0, 0.0, gp::Stream::sd);
  const auto g_o = vec2(0.0, 1.0, gp::Stream::o);
  const auto g_ud = vec2(1.0, 1.0, gp::Stream::ud);
  EXPECT_THROW(gp::combine_step_gradient(g_ud, g_o, g_sd),
               bevmine::InvalidConfig);
  EXPECT_THROW(gp::combine_step_gradient(g_sd, g_sd, g_ud),
               bevmine::InvalidConfig);
}

TEST(CombineStepGradient, UdComponentNeverOpposesThePrincipal) {
  Rng rng(64);
  for (int i = 0; i < 500; ++i) {
    const int n = 2 + static_cast<int>(rng.below(20));
    const auto g_sd = random_grad(rng, n, gp::Stream::sd);
    const auto g_o = random_grad(rng, n, gp::Stream::o);
    const auto g_ud = random_grad(rng, n, gp::Stream::ud);
    const Eigen::VectorXd g_p = g_sd.values + g_o.values;
    const auto out = gp::combine_step_gradient(g_sd, g_o, g_ud);
    const Eigen::VectorXd ud_component = out.values - g_p;
    EXPECT_GE(ud_component.dot(g_p),
              -1e-12 * ud_component.norm() * g_p.norm());
  }
}

TEST(EmaUpdate, EndpointMomentaAndWorkedCase) {
  Eigen::VectorXd teacher(2), student(2);
  teacher << 1.0, 1.0;
  student << 0.0, 0.0;
  EXPECT_TRUE(gp::ema_update(teacher, student, 1.0).isApprox(teacher));
  EXPECT_TRUE(gp::ema_update(teacher, student, 0.0).isApprox(student, 0.0));
  const Eigen::VectorXd mixed = gp::ema_update(teacher, student, 0.999);
  EXPECT_DOUBLE_EQ(mixed(0), 0.999);
  EXPECT_DOUBLE_EQ(mixed(1), 0.999);
}

TEST(EmaUpdate, ContractsTowardTheStudentLinearly) {
  Rng rng(65);
  for (int i = 0; i < 200; ++i) {
    const int n = 1 + static_cast<int>(rng.below(16));
    Eigen::VectorXd teacher(n), student(n);
    for (int j = 0; j < n; ++j) {
      teacher(j) = rng.uniform(-5.0, 5.0);
      student(j) = rng.uniform(-5.0, 5.0);
    }
    const double m = rng.uniform(0.0, 1.0);
    const Eigen::VectorXd out = gp::ema_update(teacher, student, m);
    EXPECT_NEAR((out - student).norm(), m * (teacher - student).norm(),
                1e-12 * (1.0 + (teacher - student).norm()));
  }
}

TEST(EmaUpdate, RejectsBadInputs) {
  const Eigen::VectorXd a = Eigen::VectorXd::Ones(3);
  const Eigen::VectorXd b = Eigen::VectorXd::Ones(4);
  EXPECT_THROW(gp::ema_update(a, b, 0.5), bevmine::DimensionMismatch);
  EXPECT_THROW(gp::ema_update(a, a, -0.1), bevmine::InvalidConfig);
  EXPECT_THROW(gp::ema_update(a, a, 1.1), bevmine::InvalidConfig);
}

TEST(ToyHarness, DeterministicForAFixedSeed) {
  bevmine::toy::HarnessConfig cfg;
  cfg.steps = 50;
  const auto a = bevmine::toy::run_toy_experiment(cfg, 5);
  const auto b = bevmine::toy::run_toy_experiment(cfg, 5);
  EXPECT_EQ(a.cos_ud_p, b.cos_ud_p);
  EXPECT_EQ(a.loss_sd, b.loss_sd);
  EXPECT_EQ(a.final_loss_sd, b.final_loss_sd);
  EXPECT_EQ(a.final_loss_ud, b.final_loss_ud);
  EXPECT_EQ(a.final_loss_o, b.final_loss_o);
  EXPECT_EQ(a.steps(), 50u);
  EXPECT_EQ(a.seed, 5u);
  EXPECT_TRUE(a.projection);
}

TEST(ToyHarness, TraceObservablesAreWellFormed) {
  bevmine::toy::HarnessConfig cfg;
  cfg.steps = 100;
  const auto r = bevmine::toy::run_toy_experiment(cfg, 3);
  ASSERT_EQ(r.cos_ud_p.size(), 100u);
  ASSERT_EQ(r.cos_ud_sd.size(), 100u);
  ASSERT_EQ(r.cos_ud_o.size(), 100u);
  ASSERT_EQ(r.cos_sd_o.size(), 100u);
  ASSERT_EQ(r.loss_sd.size(), 100u);
  for (std::size_t i = 0; i < 100; ++i) {
    EXPECT_GE(r.cos_ud_p[i], -1.0 - 1e-12);
    EXPECT_LE(r.cos_ud_p[i], 1.0 + 1e-12);
    EXPECT_GE(r.loss_sd[i], 0.0);
    EXPECT_GE(r.loss_ud[i], 0.0);
    EXPECT_GE(r.loss_o[i], 0.0);
    EXPECT_TRUE(std::isfinite(r.loss_sd[i]));
  }
  EXPECT_EQ(r.final_reliable_loss(), r.final_loss_sd + r.final_loss_o);
}

TEST(ToyHarness, NoiselessPseudoLabelsConflictLess) {
  bevmine::toy::HarnessConfig noisy;
  bevmine::toy::HarnessConfig clean;
  clean.pseudo_label_noise = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto a = bevmine::toy::run_toy_experiment(clean, seed);
    const auto b = bevmine::toy::run_toy_experiment(noisy, seed);
    EXPECT_LT(conflict_fraction(a.cos_ud_sd), conflict_fraction(b.cos_ud_sd))
        << "seed " << seed;
  }
}

TEST(ToyHarness, ProjectionLowersMeanFinalReliableLoss) {
  bevmine::toy::HarnessConfig with;
  bevmine::toy::HarnessConfig without;
  without.projection = false;
  double sum_with = 0.0, sum_without = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    sum_with += bevmine::toy::run_toy_experiment(with, seed)
                    .final_reliable_loss();
    sum_without += bevmine::toy::run_toy_experiment(without, seed)
                       .final_reliable_loss();
  }
  EXPECT_LE(sum_with / 20.0, sum_without / 20.0);
}

TEST(ToyHarness, RejectsInvalidConfigs) {
  bevmine::toy::HarnessConfig cfg;
  cfg.steps = 0;
  EXPECT_THROW(bevmine::toy::run_toy_experiment(cfg, 0),
               bevmine::InvalidConfig);
  cfg = {};
  cfg.lr = 0.0;
  EXPECT_THROW(bevmine::toy::run_toy_experiment(cfg, 0),
               bevmine::InvalidConfig);
  cfg = {};
  cfg.n_params = 0;
  EXPECT_THROW(bevmine::toy::run_toy_experiment(cfg, 0),
               bevmine::InvalidConfig);
}
