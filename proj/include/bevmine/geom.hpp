#pragma once

#include <array>
#include <cmath>

#include <Eigen/Core>
#include <Eigen/Dense>

#include "bevmine/errors.hpp"

namespace bevmine::geom {

// Frame conventions used throughout:
//   LiDAR frame:  x forward, y left, z up; the ground plane is z = 0.
//   camera frame: x right, y down, z forward (z is the depth).
//   BEV plane:    the LiDAR (x, y) ground plane seen from above.

/// Pixel coordinates.
struct PointImage {
  double u = 0.0;
  double v = 0.0;
};

/// Camera-frame point, meters.
struct PointCam {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Eigen::Vector3d vec() const { return {x, y, z}; }
};

/// Ground-plane (bird's-eye-view) point, meters.
struct PointBEV {
  double xb = 0.0;
  double yb = 0.0;
};

/// Pinhole camera with zero-skew intrinsics and a LiDAR->camera rigid
/// transform. A point p in the LiDAR frame maps to R*p + T in the camera
/// frame and then through K onto the image.
struct CameraRig {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d T = Eigen::Vector3d::Zero();

  Eigen::Matrix3d intrinsics() const {
    Eigen::Matrix3d k;
    k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return k;
  }
};

/// Checks fx,fy > 0 and that R is a proper rotation (orthonormal, det +1).
inline void validate(const CameraRig& rig) {
  if (!(rig.fx > 0.0) || !(rig.fy > 0.0)) {
    throw InvalidConfig("camera focal lengths must be positive");
  }
  if (!std::isfinite(rig.cx) || !std::isfinite(rig.cy)) {
    throw InvalidConfig("principal point must be finite");
  }
  const double ortho =
      (rig.R.transpose() * rig.R - Eigen::Matrix3d::Identity()).norm();
  if (ortho > 1e-9 || std::fabs(rig.R.determinant() - 1.0) > 1e-9) {
    throw InvalidConfig("extrinsic rotation is not a proper rotation");
  }
  if (!rig.T.allFinite()) {
    throw InvalidConfig("extrinsic translation must be finite");
  }
}

/// Wraps an angle into (-pi, pi].
inline double normalize_yaw(double yaw) {
  double a = std::remainder(yaw, 2.0 * M_PI);
  if (a <= -M_PI) a += 2.0 * M_PI;
  return a;
}

/// Axis-aligned 3D box in the LiDAR frame. `center` is the bottom-face
/// center; `yaw` rotates the box about the LiDAR up-axis.
struct Box3D {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double length = 0.0;
  double width = 0.0;
  double height = 0.0;
  double yaw = 0.0;
};

inline void validate(const Box3D& box) {
  if (!(box.length > 0.0) || !(box.width > 0.0) || !(box.height > 0.0)) {
    throw InvalidConfig("box dimensions must be strictly positive");
  }
  if (!(box.yaw > -M_PI) || !(box.yaw <= M_PI)) {
    throw InvalidConfig("box yaw must lie in (-pi, pi]");
  }
  if (!box.center.allFinite()) {
    throw InvalidConfig("box center must be finite");
  }
}

/// One teacher prediction: 2D attributes (score, box), the five bottom
/// keypoints in the image, and 3D attributes (depth, size, yaw) plus the
/// predicted depth uncertainty sigma.
struct Detection {
  int class_id = 0;
  double score = 0.0;                           // classification confidence
  std::array<double, 4> bbox2d{};               // u1, v1, u2, v2
  std::array<PointImage, 5> keypoints_bottom{}; // bottom center first, then
                                                // corners in box-corner order
  double depth = 0.0;                           // meters, camera frame
  double length = 0.0;
  double width = 0.0;
  double height = 0.0;
  double yaw = 0.0;                             // LiDAR frame, (-pi, pi]
  double sigma = 0.0;                           // depth uncertainty, > 0
};

inline void validate(const Detection& det) {
  if (!(det.score >= 0.0) || !(det.score <= 1.0)) {
    throw InvalidConfig("detection score must lie in [0, 1]");
  }
  if (!(det.bbox2d[0] < det.bbox2d[2]) || !(det.bbox2d[1] < det.bbox2d[3])) {
    throw InvalidConfig("detection 2D box must have positive extent");
  }
  if (!(det.depth > 0.0)) {
    throw InvalidConfig("detection depth must be positive");
  }
  if (!(det.length > 0.0) || !(det.width > 0.0) || !(det.height > 0.0)) {
    throw InvalidConfig("detection size must be strictly positive");
  }
  if (!(det.yaw > -M_PI) || !(det.yaw <= M_PI)) {
    throw InvalidConfig("detection yaw must lie in (-pi, pi]");
  }
  if (!(det.sigma > 0.0)) {
    throw InvalidConfig("detection sigma must be positive");
  }
}

/// Pinhole projection result: pixel location plus camera-frame depth.
struct Projection {
  PointImage image;
  double depth = 0.0;
};

constexpr double kMinCameraDepth = 1e-6;

/// Projects a LiDAR-frame point through the rig. The point is treated as
/// homogeneous [x y z 1] against the 3x4 matrix [R|T].
inline Projection project_point(const CameraRig& rig,
                                const Eigen::Vector3d& p_lidar) {
  const Eigen::Vector3d pc = rig.R * p_lidar + rig.T;
  if (!(pc.z() > kMinCameraDepth)) {
    throw BehindCamera("point is behind the camera (z <= 1e-6)");
  }
  return {{rig.fx * pc.x() / pc.z() + rig.cx,
           rig.fy * pc.y() / pc.z() + rig.cy},
          pc.z()};
}

/// Lifts a pixel back to the camera frame at the given depth; the exact
/// left-inverse of the intrinsic projection.
inline PointCam image_to_camera(const CameraRig& rig, const PointImage& pt,
                                double z) {
  if (!(z > 0.0)) {
    throw NonPositiveDepth("depth must be positive to unproject");
  }
  return {(pt.u - rig.cx) * z / rig.fx, (pt.v - rig.cy) * z / rig.fy, z};
}

/// Inverse extrinsic transform: returns R^T (p - T).
inline Eigen::Vector3d camera_to_lidar(const CameraRig& rig,
                                       const PointCam& p) {
  return rig.R.transpose() * (p.vec() - rig.T);
}

/// Drops the LiDAR up-axis coordinate.
inline PointBEV to_bev(const Eigen::Vector3d& p_lidar) {
  return {p_lidar.x(), p_lidar.y()};
}

/// Bottom center followed by the four bottom corners, counterclockwise when
/// viewed from above, starting at (+l/2, +w/2) in the box frame.
inline std::array<Eigen::Vector3d, 5> bottom_points_lidar(const Box3D& box) {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const double hl = 0.5 * box.length;
  const double hw = 0.5 * box.width;
  const std::array<std::array<double, 2>, 4> local{
      {{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}}};

  std::array<Eigen::Vector3d, 5> out;
  out[0] = box.center;
  for (int i = 0; i < 4; ++i) {
    const double x = local[i][0];
    const double y = local[i][1];
    out[i + 1] = box.center + Eigen::Vector3d(c * x - s * y, s * x + c * y, 0.0);
  }
  return out;
}

/// Model-derived BEV coordinates of a detection's five bottom points: the
/// bottom-center keypoint is lifted to the camera frame at the predicted
/// depth, taken to the LiDAR frame, and the corners are rebuilt there from
/// the predicted size and yaw.
inline std::array<PointBEV, 5> detection_bev_points(const CameraRig& rig,
                                                    const Detection& det) {
  const PointCam center_cam =
      image_to_camera(rig, det.keypoints_bottom[0], det.depth);
  Box3D box;
  box.center = camera_to_lidar(rig, center_cam);
  box.length = det.length;
  box.width = det.width;
  box.height = det.height;
  box.yaw = det.yaw;

  const auto pts = bottom_points_lidar(box);
  std::array<PointBEV, 5> out;
  for (int i = 0; i < 5; ++i) out[i] = to_bev(pts[i]);
  return out;
}

}  // namespace bevmine::geom
