#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "autocalib/types.hpp"

namespace autocalib {

// One pixel correspondence between two frames.
struct Match {
  long track_id = -1;
  Eigen::Vector2d p_i = Eigen::Vector2d::Zero();
  Eigen::Vector2d p_j = Eigen::Vector2d::Zero();
};

struct FundamentalEstimate {
  Eigen::Matrix3d f = Eigen::Matrix3d::Zero();
  std::vector<int> inlier_ids;     // indices into the input match list
  double residual_rms = 0.0;       // Sampson RMS over inliers, pixels
  // Singular values of the normalized LS solution before rank-2
  // enforcement; used to detect unstable/degenerate geometry.
  Eigen::Vector3d singular_values = Eigen::Vector3d::Zero();
};

// Normalized 8-point algorithm over all input matches, rank-2 enforced,
// ||F||_F = 1, sign fixed. Throws kInsufficientMatches (< 8) or
// kDegenerateConfiguration (normalization collapses / null space unusable).
FundamentalEstimate estimate_fundamental(std::span<const Match> matches);

struct RansacOptions {
  double threshold_px = 1.0;
  int max_iters = 2000;
  uint64_t seed = 0;
  int min_consensus = 15;
  double confidence = 0.99;
};

// Seeded RANSAC around estimate_fundamental with Sampson distance scoring,
// adaptive early exit and a final refit on the consensus set. Throws
// kNoConsensus if the best consensus stays below min_consensus.
FundamentalEstimate ransac_fundamental(std::span<const Match> matches,
                                       const RansacOptions& options);
FundamentalEstimate ransac_fundamental(std::span<const Match> matches,
                                       double threshold_px, int max_iters,
                                       uint64_t seed);

// First-order (Sampson) distance in pixels for a pixel-coordinate F.
double sampson_distance(const Eigen::Matrix3d& f, const Eigen::Vector2d& p_i,
                        const Eigen::Vector2d& p_j);

// Right epipole: unit-norm null vector of F (F e = 0). For the left epipole
// pass F transposed. Throws kNotRankDeficient if F has no usable null space.
Eigen::Vector3d epipole(const Eigen::Matrix3d& f);

// E = K^T F K with the (s, s, 0) singular-value structure enforced.
Eigen::Matrix3d essential_from_fundamental(const Eigen::Matrix3d& f,
                                           const Intrinsics& intr);

// Relative pose (j <- i) from an essential matrix via the four-way
// decomposition and a cheirality vote over the matches. The translation is
// unit length. Throws kCheiralityAmbiguous if no candidate puts more than
// half of the matches in front of both cameras.
Pose recover_pose(const Eigen::Matrix3d& e, std::span<const Match> matches,
                  const Intrinsics& intr);

// Linear (DLT) triangulation of one correspondence from two posed cameras.
// Throws kInsufficientParallax when rays meet at less than min_parallax_deg.
Eigen::Vector3d triangulate(const Pose& pose_i, const Pose& pose_j,
                            const Intrinsics& intr, const Eigen::Vector2d& p_i,
                            const Eigen::Vector2d& p_j,
                            double min_parallax_deg = 1.0);

// Ray angle in degrees between the two viewing directions in world frame.
double ray_parallax_deg(const Pose& pose_i, const Pose& pose_j,
                        const Intrinsics& intr, const Eigen::Vector2d& p_i,
                        const Eigen::Vector2d& p_j);

// Text I/O, one match per line: track_id x_i y_i x_j y_j.
void save_match_list(std::span<const Match> matches, const std::string& path);
std::vector<Match> load_match_list(const std::string& path);

}  // namespace autocalib
