#pragma once

#include <string>
#include <vector>

#include "autocalib/types.hpp"

namespace autocalib {

// Apply radial distortion to a normalized image point:
//   p_d = (1 + k1 r^2 + k2 r^4) p_u.
Eigen::Vector2d distort(const Eigen::Vector2d& p_u, const Intrinsics& intr);

// Invert the distortion by fixed-point iteration p <- p_d / D(r(p)).
// Throws Error(kNonConvergent) if the iteration fails to reach `tol`.
Eigen::Vector2d undistort(const Eigen::Vector2d& p_d, const Intrinsics& intr,
                          int max_iters = 100, double tol = 1e-12);

// Pixel <-> normalized coordinate plumbing (no distortion applied).
Eigen::Vector2d pixel_to_normalized(const Eigen::Vector2d& px,
                                    const Intrinsics& intr);
Eigen::Vector2d normalized_to_pixel(const Eigen::Vector2d& n,
                                    const Intrinsics& intr);

// Undistort a pixel and return the normalized homogeneous direction (z = 1).
Eigen::Vector3d undistorted_ray(const Eigen::Vector2d& px,
                                const Intrinsics& intr);

// Full projection world -> pixel, distortion included.
// Throws Error(kBehindCamera) if the point has non-positive camera depth.
Eigen::Vector2d project(const Eigen::Vector3d& point_world, const Pose& pose,
                        const Intrinsics& intr);

// Per-pixel sampling positions mapping an undistorted target image back into
// the distorted source image.
struct RectificationMap {
  int width = 0;
  int height = 0;
  std::vector<Eigen::Vector2d> source;  // row-major, size width * height

  const Eigen::Vector2d& at(int x, int y) const {
    return source[static_cast<size_t>(y) * width + x];
  }
};

RectificationMap rectification_map(const Intrinsics& intr);

// Intrinsics JSON round trip. Keys: fx fy cx cy k1 k2 width height.
void save_intrinsics_json(const Intrinsics& intr, const std::string& path);
Intrinsics load_intrinsics_json(const std::string& path);

}  // namespace autocalib
