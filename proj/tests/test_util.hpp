#pragma once

#include <vector>

#include "autocalib/camera.hpp"
#include "autocalib/epipolar.hpp"
#include "autocalib/rng.hpp"
#include "autocalib/types.hpp"

namespace autocalib::testutil {

inline Intrinsics simple_intrinsics(int width = 800, int height = 600,
                                    double f = 700.0) {
  Intrinsics intr;
  intr.fx = f;
  intr.fy = f;
  intr.cx = width / 2.0;
  intr.cy = height / 2.0;
  intr.width = width;
  intr.height = height;
  return intr;
}

struct TwoViewScene {
  Intrinsics intr;
  Pose pose_i;  // identity
  Pose pose_j;
  std::vector<Eigen::Vector3d> points;
  std::vector<Match> matches;
  Eigen::Matrix3d f_gt = Eigen::Matrix3d::Zero();
};

// Random points ahead of two cameras with a known relative pose; exact
// pinhole correspondences (no distortion unless set in intr).
inline TwoViewScene make_two_view(const Pose& pose_j, int n_points,
                                  uint64_t seed,
                                  Intrinsics intr = simple_intrinsics()) {
  TwoViewScene scene;
  scene.intr = intr;
  scene.pose_j = pose_j;
  Rng rng(seed);
  while (static_cast<int>(scene.matches.size()) < n_points) {
    const Eigen::Vector3d p(rng.uniform(-6.0, 6.0), rng.uniform(-4.0, 4.0),
                            rng.uniform(4.0, 30.0));
    Eigen::Vector2d pi, pj;
    try {
      pi = project(p, scene.pose_i, intr);
      pj = project(p, scene.pose_j, intr);
    } catch (const Error&) {
      continue;
    }
    if (pi.x() < 0 || pi.x() >= intr.width || pi.y() < 0 ||
        pi.y() >= intr.height || pj.x() < 0 || pj.x() >= intr.width ||
        pj.y() < 0 || pj.y() >= intr.height) {
      continue;
    }
    scene.points.push_back(p);
    scene.matches.push_back(
        Match{static_cast<long>(scene.matches.size()), pi, pj});
  }
  Eigen::Matrix3d k;
  k << intr.fx, 0.0, intr.cx, 0.0, intr.fy, intr.cy, 0.0, 0.0, 1.0;
  const Eigen::Matrix3d e =
      skew(pose_j.translation) * pose_j.rotation;  // pose_i = identity
  const Eigen::Matrix3d k_inv = k.inverse();
  scene.f_gt = k_inv.transpose() * e * k_inv;
  scene.f_gt /= scene.f_gt.norm();
  return scene;
}

// Angle-insensitive comparison of two fundamental matrices (unit scale).
inline double f_alignment(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  const Eigen::Matrix3d an = a / a.norm();
  const Eigen::Matrix3d bn = b / b.norm();
  double dot = 0.0;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) dot += an(r, c) * bn(r, c);
  }
  return std::abs(dot);
}

}  // namespace autocalib::testutil
