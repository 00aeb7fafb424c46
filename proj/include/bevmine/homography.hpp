#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Dense>
#include <Eigen/SVD>

#include "bevmine/errors.hpp"
#include "bevmine/geom.hpp"

namespace bevmine::homography {

/// One image-point / ground-point pair used to fit the plane homography.
struct Correspondence {
  geom::PointImage image;
  geom::PointBEV bev;
};

/// 3x3 projective map from image pixels to the BEV ground plane:
/// [x y w]^T = M [u v 1]^T with (x/w, y/w) the BEV point. Stored with unit
/// Frobenius norm and a deterministic sign, so equal maps have directly
/// comparable representatives (the applied map is sign-invariant anyway).
struct HomographyMatrix {
  Eigen::Matrix3d M = Eigen::Matrix3d::Zero();
};

/// Scale- and sign-normalizes a projective matrix into the canonical
/// HomographyMatrix representative.
inline HomographyMatrix normalized(const Eigen::Matrix3d& raw) {
  const double n = raw.norm();
  if (!(n > 1e-300) || !raw.allFinite()) {
    throw DegenerateConfiguration("homography matrix is numerically zero");
  }
  Eigen::Matrix3d m = raw / n;
  int br = 0, bc = 0;
  double best = -1.0;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      if (std::fabs(m(r, c)) > best) {
        best = std::fabs(m(r, c));
        br = r;
        bc = c;
      }
    }
  }
  if (m(br, bc) < 0.0) m = -m;
  return {m};
}

constexpr double kHomogeneousWMin = 1e-12;

/// Applies the map to a pixel. Throws PointAtInfinity when the pixel lies
/// on the horizon line of the homography (|w| below 1e-12 for the
/// unit-norm representative).
inline geom::PointBEV apply(const HomographyMatrix& h,
                            const geom::PointImage& pt) {
  const Eigen::Vector3d q = h.M * Eigen::Vector3d(pt.u, pt.v, 1.0);
  if (std::fabs(q.z()) < kHomogeneousWMin) {
    throw PointAtInfinity("pixel maps to the plane at infinity");
  }
  return {q.x() / q.z(), q.y() / q.z()};
}

namespace detail {

/// Hartley similarity: translate the centroid to the origin, scale so the
/// average distance from it is sqrt(2).
inline Eigen::Matrix3d normalizing_similarity(
    const std::vector<Eigen::Vector2d>& pts) {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  double avg = 0.0;
  for (const auto& p : pts) avg += (p - mean).norm();
  avg /= static_cast<double>(pts.size());
  if (!(avg > 1e-12)) {
    throw DegenerateConfiguration("correspondence points are coincident");
  }
  const double s = std::sqrt(2.0) / avg;
  Eigen::Matrix3d t;
  t << s, 0.0, -s * mean.x(), 0.0, s, -s * mean.y(), 0.0, 0.0, 1.0;
  return t;
}

}  // namespace detail

constexpr double kDltConditionMin = 10.0;

/// Direct linear transform over all given correspondences: Hartley
/// normalization on both sides, a 2Nx9 system solved by SVD, the smallest
/// right singular vector reshaped and denormalized. The configuration is
/// rejected as degenerate when the two smallest singular values are within
/// a factor of 10 of each other (the null space is not unique, e.g. for
/// collinear points).
inline HomographyMatrix dlt_solve(std::span<const Correspondence> corr) {
  if (corr.size() < 4) {
    throw TooFewPoints("homography estimation needs at least 4 points");
  }
  const auto n = corr.size();
  std::vector<Eigen::Vector2d> img(n), bev(n);
  for (size_t i = 0; i < n; ++i) {
    img[i] = {corr[i].image.u, corr[i].image.v};
    bev[i] = {corr[i].bev.xb, corr[i].bev.yb};
  }
  const Eigen::Matrix3d t_img = detail::normalizing_similarity(img);
  const Eigen::Matrix3d t_bev = detail::normalizing_similarity(bev);

  Eigen::MatrixXd a(2 * n, 9);
  for (size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d p = t_img * Eigen::Vector3d(img[i].x(), img[i].y(), 1.0);
    const Eigen::Vector3d q = t_bev * Eigen::Vector3d(bev[i].x(), bev[i].y(), 1.0);
    const double u = p.x(), v = p.y();
    const double x = q.x(), y = q.y();
    a.row(2 * i) << 0.0, 0.0, 0.0, -u, -v, -1.0, y * u, y * v, y;
    a.row(2 * i + 1) << u, v, 1.0, 0.0, 0.0, 0.0, -x * u, -x * v, -x;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  // sv has min(2N, 9) entries; with N >= 4 at least 8. A rank-8 system has
  // exactly one vanishing singular value; a second small one means the
  // solution is not unique. The floor keeps the ratio meaningful when both
  // are at roundoff level.
  const double s1 = sv(0);
  const double s8 = sv.size() >= 8 ? sv(7) : 0.0;
  const double s9 = sv.size() >= 9 ? sv(8) : 0.0;
  const double floor9 = std::max(s9, 1e-13 * s1);
  if (!(s8 / floor9 >= kDltConditionMin)) {
    throw DegenerateConfiguration(
        "point configuration does not determine a unique homography");
  }

  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d m_hat;
  m_hat << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  HomographyMatrix result = normalized(t_bev.inverse() * m_hat * t_img);
  // Sign convention: the centroid of the input image points (interior to the
  // fitted region, never on the horizon for a sane fit) gets positive
  // homogeneous w. Fall back to the normalized() representative when the
  // probe is ambiguous.
  Eigen::Vector2d mean_img = Eigen::Vector2d::Zero();
  for (const auto& p : img) mean_img += p;
  mean_img /= static_cast<double>(n);
  const Eigen::Vector3d probe =
      result.M * Eigen::Vector3d(mean_img.x(), mean_img.y(), 1.0);
  if (probe.z() < -kHomogeneousWMin) result.M = -result.M;
  return result;
}

/// Frobenius distance between two maps modulo the projective scale
/// ambiguity: min over the sign flip, 0 for equal maps.
inline double up_to_scale_distance(const HomographyMatrix& a,
                                   const HomographyMatrix& b) {
  return std::min((a.M - b.M).norm(), (a.M + b.M).norm());
}

/// The exact image->BEV map induced by the rig for the ground plane z = 0:
/// the inverse of K [r1 r2 T], where r1, r2 are the first two columns of
/// the LiDAR->camera rotation. Degenerate when the camera center lies on
/// the ground plane itself.
inline HomographyMatrix ground_truth_homography(const geom::CameraRig& rig) {
  Eigen::Matrix3d plane;
  plane.col(0) = rig.R.col(0);
  plane.col(1) = rig.R.col(1);
  plane.col(2) = rig.T;
  const Eigen::Matrix3d a = rig.intrinsics() * plane;
  const double scale = a.norm();
  if (!(std::fabs(a.determinant()) > 1e-12 * scale * scale * scale)) {
    throw DegenerateConfiguration(
        "ground plane projects degenerately (camera center on the plane)");
  }
  HomographyMatrix h = normalized(a.inverse());
  // Fix the overall sign so that ground pixels in front of the camera get a
  // positive homogeneous w; probe just below the principal point.
  const Eigen::Vector3d probe =
      h.M * Eigen::Vector3d(rig.cx, rig.cy + 100.0, 1.0);
  if (probe.z() < 0.0) h.M = -h.M;
  return h;
}

}  // namespace bevmine::homography
