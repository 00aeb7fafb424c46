#include "bevmine/homography.hpp"

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "bevmine/errors.hpp"
#include "bevmine/random.hpp"
#include "bevmine/synth.hpp"
#include "test_util.hpp"

namespace geom = bevmine::geom;
namespace hg = bevmine::homography;
using bevmine::Rng;

namespace {

hg::HomographyMatrix from_raw(const Eigen::Matrix3d& m) {
  return hg::normalized(m);
}

std::vector<hg::Correspondence> pairs_from_matrix(const Eigen::Matrix3d& m,
                                                  std::span<const geom::PointImage> pts) {
  const hg::HomographyMatrix h = from_raw(m);
  std::vector<hg::Correspondence> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back({p, hg::apply(h, p)});
  return out;
}

std::vector<geom::PointImage> generic_points(Rng& rng, size_t n) {
  std::vector<geom::PointImage> pts;
  pts.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    pts.push_back({rng.uniform(0.0, 1280.0), rng.uniform(0.0, 720.0)});
  }
  return pts;
}

double mean_residual(const hg::HomographyMatrix& h,
                     std::span<const hg::Correspondence> corr) {
  double sum = 0.0;
  for (const auto& c : corr) {
    const auto got = hg::apply(h, c.image);
    sum += std::hypot(got.xb - c.bev.xb, got.yb - c.bev.yb);
  }
  return sum / static_cast<double>(corr.size());
}

}  // namespace

TEST(Apply, IdentityMapFixesPoints) {
  const auto h = from_raw(Eigen::Matrix3d::Identity());
  const auto p = hg::apply(h, {3.0, 4.0});
  EXPECT_NEAR(p.xb, 3.0, 1e-12);
  EXPECT_NEAR(p.yb, 4.0, 1e-12);
}

TEST(Apply, TranslationHomographyShiftsOrigin) {
  Eigen::Matrix3d m;
  m << 1, 0, 5, 0, 1, -3, 0, 0, 1;
  const auto p = hg::apply(from_raw(m), {0.0, 0.0});
  EXPECT_NEAR(p.xb, 5.0, 1e-12);
  EXPECT_NEAR(p.yb, -3.0, 1e-12);
}

TEST(Apply, DiagonalScalingWithUnitW) {
  const auto h = from_raw(Eigen::Vector3d(2.0, 2.0, 1.0).asDiagonal().toDenseMatrix());
  const auto p = hg::apply(h, {3.0, 4.0});
  EXPECT_NEAR(p.xb, 6.0, 1e-12);
  EXPECT_NEAR(p.yb, 8.0, 1e-12);
}

TEST(Apply, HorizonPixelThrows) {
  // Last row (0, 0, 1)·scale maps w of (u, v, 1) to the scale itself; make
  // the row orthogonal to the probe pixel instead so w vanishes exactly.
  Eigen::Matrix3d m;
  m << 1, 0, 0, 0, 1, 0, 1, 0, -10.0;
  EXPECT_THROW(hg::apply(from_raw(m), {10.0, 4.0}), bevmine::PointAtInfinity);
}

TEST(Normalized, UnitNormAndScaleInvariantRepresentative) {
  Eigen::Matrix3d m;
  m << 2, -1, 0.5, 3, 4, -2, 0, 1, 7;
  const auto a = hg::normalized(m);
  const auto b = hg::normalized(5.0 * m);
  const auto c = hg::normalized(-3.0 * m);
  EXPECT_NEAR(a.M.norm(), 1.0, 1e-12);
  EXPECT_LE((a.M - b.M).norm(), 1e-12);
  EXPECT_LE((a.M - c.M).norm(), 1e-12);
}

TEST(Normalized, ZeroMatrixThrows) {
  EXPECT_THROW(hg::normalized(Eigen::Matrix3d::Zero()),
               bevmine::DegenerateConfiguration);
}

TEST(UpToScaleDistance, ReflexiveAndScaleInvariant) {
  Eigen::Matrix3d m;
  m << 1, 2, 3, 0, 1, 4, 0, 0, 1;
  const auto h = from_raw(m);
  EXPECT_DOUBLE_EQ(hg::up_to_scale_distance(h, h), 0.0);
  EXPECT_NEAR(hg::up_to_scale_distance(h, from_raw(7.0 * m)), 0.0, 1e-12);
}

TEST(UpToScaleDistance, IdentityVersusDiagonalMatchesHandComputation) {
  const auto a = from_raw(Eigen::Matrix3d::Identity());
  const auto b = from_raw(Eigen::Vector3d(2.0, 2.0, 1.0).asDiagonal().toDenseMatrix());
  // Unit-norm representatives are diag(1,1,1)/sqrt(3) and diag(2,2,1)/3.
  const double i = 1.0 / std::sqrt(3.0);
  const double expected = std::sqrt(2.0 * (2.0 / 3.0 - i) * (2.0 / 3.0 - i) +
                                    (1.0 / 3.0 - i) * (1.0 / 3.0 - i));
  EXPECT_GT(hg::up_to_scale_distance(a, b), 0.0);
  EXPECT_NEAR(hg::up_to_scale_distance(a, b), expected, 1e-12);
}

TEST(DltSolve, FourGenericIdentityPairsRecoverIdentity) {
  Rng rng(21);
  const auto pts = generic_points(rng, 4);
  const auto corr = pairs_from_matrix(Eigen::Matrix3d::Identity(), pts);
  const auto h = hg::dlt_solve(corr);
  EXPECT_LE(hg::up_to_scale_distance(h, from_raw(Eigen::Matrix3d::Identity())),
            1e-8);
}

TEST(DltSolve, TwentyTranslationPairsRecoverTheMap) {
  Rng rng(22);
  Eigen::Matrix3d m;
  m << 1, 0, 5, 0, 1, -3, 0, 0, 1;
  const auto pts = generic_points(rng, 20);
  const auto corr = pairs_from_matrix(m, pts);
  const auto h = hg::dlt_solve(corr);
  EXPECT_LE(hg::up_to_scale_distance(h, from_raw(m)), 1e-8);
  EXPECT_LE(mean_residual(h, corr), 1e-8);
}

TEST(DltSolve, CollinearImagePointsAreDegenerate) {
  std::vector<hg::Correspondence> corr;
  for (int i = 0; i < 10; ++i) {
    const double u = 10.0 * (i + 1);
    corr.push_back({{u, 2.0 * u}, {u + 1.0, u - 1.0}});
  }
  EXPECT_THROW(hg::dlt_solve(corr), bevmine::DegenerateConfiguration);
}

TEST(DltSolve, FewerThanFourPairsThrows) {
  std::vector<hg::Correspondence> corr = {
      {{0.0, 0.0}, {0.0, 0.0}},
      {{1.0, 0.0}, {1.0, 0.0}},
      {{0.0, 1.0}, {0.0, 1.0}},
  };
  EXPECT_THROW(hg::dlt_solve(corr), bevmine::TooFewPoints);
}

TEST(DltSolve, RecoversRandomProjectiveMaps) {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    // Mild perspective terms keep the map rank 3 and the sampled points off
    // its horizon while still exercising the full projective group.
    Eigen::Matrix3d m;
    m << rng.uniform(0.5, 2.0), rng.uniform(-0.3, 0.3), rng.uniform(-20.0, 20.0),
        rng.uniform(-0.3, 0.3), rng.uniform(0.5, 2.0), rng.uniform(-20.0, 20.0),
        rng.uniform(-1e-4, 1e-4), rng.uniform(-1e-4, 1e-4), 1.0;
    const auto pts = generic_points(rng, 4 + static_cast<int>(rng.below(17)));
    const auto corr = pairs_from_matrix(m, pts);
    const auto h = hg::dlt_solve(corr);
    EXPECT_LE(hg::up_to_scale_distance(h, from_raw(m)), 1e-7);
  }
}

TEST(DltSolve, DeterministicAcrossRepeatedCalls) {
  Rng rng(24);
  const auto pts = generic_points(rng, 12);
  Eigen::Matrix3d m;
  m << 1.2, 0.1, 4.0, -0.2, 0.9, 1.0, 1e-5, -2e-5, 1.0;
  const auto corr = pairs_from_matrix(m, pts);
  const auto a = hg::dlt_solve(corr);
  const auto b = hg::dlt_solve(corr);
  EXPECT_EQ(a.M, b.M);
}

TEST(DltSolve, NoisyFitBeatsIdentityBaseline) {
  Rng rng(25);
  const geom::CameraRig rig = bevmine::synth::default_rig();
  std::vector<hg::Correspondence> noisy;
  std::vector<hg::Correspondence> clean;
  // 50 ground points spanning more than 20 m of depth, pixel noise 0.5.
  for (int i = 0; i < 50; ++i) {
    const Eigen::Vector3d p{rng.uniform(8.0, 45.0), rng.uniform(-8.0, 8.0), 0.0};
    const auto proj = geom::project_point(rig, p);
    clean.push_back({proj.image, {p.x(), p.y()}});
    noisy.push_back({{proj.image.u + rng.normal(0.0, 0.5),
                      proj.image.v + rng.normal(0.0, 0.5)},
                     {p.x(), p.y()}});
  }
  const auto fit = hg::dlt_solve(noisy);
  EXPECT_LT(mean_residual(fit, clean),
            mean_residual(from_raw(Eigen::Matrix3d::Identity()), clean));
  EXPECT_LT(mean_residual(fit, clean), 1.0);
}

TEST(DltSolve, TranslationEquivarianceUnderHartleyNormalization) {
  Rng rng(26);
  Eigen::Matrix3d m;
  m << 1.1, -0.2, 6.0, 0.3, 0.8, -2.0, 2e-5, 1e-5, 1.0;
  const auto pts = generic_points(rng, 15);
  const auto corr = pairs_from_matrix(m, pts);

  const Eigen::Vector2d t{317.0, -129.0};
  std::vector<hg::Correspondence> shifted = corr;
  for (auto& c : shifted) {
    c.image.u += t.x();
    c.image.v += t.y();
  }
  Eigen::Matrix3d undo = Eigen::Matrix3d::Identity();
  undo(0, 2) = -t.x();
  undo(1, 2) = -t.y();
  const auto h_shifted = hg::dlt_solve(shifted);
  const auto expected = from_raw(from_raw(m).M * undo);
  EXPECT_LE(hg::up_to_scale_distance(h_shifted, expected), 1e-7);
}

TEST(GroundTruthHomography, MapsGroundPixelsToTheirBevCoordinates) {
  Rng rng(27);
  for (int trial = 0; trial < 100; ++trial) {
    const geom::CameraRig rig = testutil::ground_rig(rng);
    const auto h = hg::ground_truth_homography(rig);
    for (int i = 0; i < 10; ++i) {
      const Eigen::Vector3d p = testutil::ground_point_ahead(rng, rig);
      const auto proj = geom::project_point(rig, p);
      const auto bev = hg::apply(h, proj.image);
      EXPECT_NEAR(bev.xb, p.x(), 1e-6);
      EXPECT_NEAR(bev.yb, p.y(), 1e-6);
    }
  }
}

TEST(GroundTruthHomography, HorizontalOpticalAxisStillRankThree) {
  // The default rig looks exactly parallel to the ground from 1.6 m up; the
  // plane map stays invertible for the half-image below the horizon.
  const geom::CameraRig rig = bevmine::synth::default_rig();
  const auto h = hg::ground_truth_homography(rig);
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(h.M);
  const auto& sv = svd.singularValues();
  EXPECT_GT(sv(2), 1e-10 * sv(0));
  const Eigen::Vector3d p{20.0, 3.0, 0.0};
  const auto proj = geom::project_point(rig, p);
  const auto bev = hg::apply(h, proj.image);
  EXPECT_NEAR(bev.xb, 20.0, 1e-6);
  EXPECT_NEAR(bev.yb, 3.0, 1e-6);
}

TEST(GroundTruthHomography, AgreesWithDltOnExactGroundCorrespondences) {
  Rng rng(28);
  for (int trial = 0; trial < 20; ++trial) {
    const geom::CameraRig rig = testutil::ground_rig(rng);
    const auto truth = hg::ground_truth_homography(rig);
    std::vector<hg::Correspondence> corr;
    for (int i = 0; i < 50; ++i) {
      const Eigen::Vector3d p = testutil::ground_point_ahead(rng, rig);
      const auto proj = geom::project_point(rig, p);
      corr.push_back({proj.image, {p.x(), p.y()}});
    }
    const auto fit = hg::dlt_solve(corr);
    EXPECT_LE(hg::up_to_scale_distance(fit, truth), 1e-7);
  }
}

TEST(GroundTruthHomography, CameraCenterOnThePlaneIsDegenerate) {
  geom::CameraRig rig = bevmine::synth::default_rig();
  rig.T.setZero();  // camera center at the origin, inside the plane z = 0
  EXPECT_THROW(hg::ground_truth_homography(rig),
               bevmine::DegenerateConfiguration);
}
