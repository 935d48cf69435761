#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "autocalib/bundle.hpp"
#include "autocalib/tracks.hpp"
#include "autocalib/turns.hpp"

namespace autocalib {

// Verified two-view geometry between two nearby frames of a sub-sequence.
struct SceneGraphEdge {
  int frame_i = 0;
  int frame_j = 0;
  Eigen::Matrix3d f = Eigen::Matrix3d::Zero();
  std::vector<Match> inliers;
};

struct SceneGraph {
  int first = 0;
  int last = 0;
  int center = 0;  // detected turn apex
  std::vector<int> frames;  // frames holding at least one observation
  std::vector<SceneGraphEdge> edges;
  TrackSet tracks;  // windowed copy backing registration and triangulation
};

struct SfmOptions {
  int max_pair_gap = 6;  // frame separation of candidate edges
  double ransac_threshold_px = 1.0;
  int ransac_max_iters = 2000;
  uint64_t seed = 0;
  int min_seed_points = 50;
  double min_seed_parallax_deg = 1.0;
  double pnp_threshold_px = 3.0;
  int pnp_max_iters = 1000;
  int ba_cadence = 3;  // refine every this many registrations
  // Landmark / observation admission gate while the intrinsics are still
  // rough, as a fraction of the image diagonal; tightened to mid_gate_px
  // once self-calibration has pulled the focal into place.
  double growth_gate_frac = 0.10;
  double mid_gate_px = 8.0;
  double min_point_parallax_deg = 1.0;
  // A reconstruction that never deviates from its starting heading by at
  // least this much cannot constrain the focal length (the error bound
  // diverges as rotation vanishes), so the turn is rejected.
  double min_total_rotation_rad = 0.15;
  double min_registered_fraction = 0.6;
  BaOptions ba;
};

// Pairwise-verified view graph over a sub-sequence window. Throws
// kEmptyGraph when fewer than two frames carry tracks or no pair reaches
// RANSAC consensus.
SceneGraph build_scene_graph(const TurnSubsequence& window,
                             const TrackSet& tracks,
                             const SfmOptions& options = {});

// Seeds a model from the edge maximizing measured relative rotation x
// inliers x median triangulation parallax: rotation is what makes the focal
// observable, and a seed committed to a straight stretch locks the whole
// model into a miscalibrated optimum. Throws kNoViablePair when every edge
// triangulates fewer than min_seed_points points or below
// min_seed_parallax_deg median parallax.
ReconstructionModel initialize_pair(const SceneGraph& graph,
                                    const Intrinsics& intr_seed,
                                    const SfmOptions& options = {});

// Registers the best unregistered frame (most visible landmarks first) via
// RANSAC resection, then appends its gated observations. Throws
// kNoRegistrableFrame when no remaining frame can be registered.
void register_next(ReconstructionModel& model, const SceneGraph& graph,
                   const SfmOptions& options = {});

// Triangulates tracks not yet in the model from their best-parallax pair of
// registered views; admission requires cheirality in every registered view
// and a median reprojection error within gate_px. Returns the number of
// landmarks added.
int admit_landmarks(ReconstructionModel& model, const SceneGraph& graph,
                    double gate_px, const SfmOptions& options = {});

// 2D-3D correspondence for camera resection.
struct PnpCorrespondence {
  long track_id = -1;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
};

struct PnpOptions {
  double threshold_px = 3.0;
  int max_iters = 1000;
  uint64_t seed = 0;
  int min_inliers = 6;
  double confidence = 0.99;
};

struct PnpResult {
  Pose pose;
  std::vector<int> inlier_ids;  // indices into the input list
};

// Six-point DLT resection inside RANSAC (adaptive iteration count) with a
// robust pose polish on the consensus set. Throws kInsufficientMatches
// (fewer than six usable correspondences) or kNoConsensus.
PnpResult solve_pnp_ransac(std::span<const PnpCorrespondence> corrs,
                           const Intrinsics& intr,
                           const PnpOptions& options = {});

// Cauchy-weighted Levenberg-Marquardt refinement of a single pose.
Pose refine_pose(const Pose& initial,
                 std::span<const PnpCorrespondence> corrs,
                 const Intrinsics& intr, double cauchy_scale_px = 2.0,
                 int max_iters = 20);

// Focal seed of 1.2 x max(w, h), principal point at the center, no
// distortion: the starting guess when nothing is known about the camera.
Intrinsics seed_intrinsics(int width, int height);

// Max heading deviation (radians) of any registered pose from the first
// registered pose; the observability measure behind the rotation gate.
double total_rotation(const ReconstructionModel& model);

// Full per-turn pipeline: scene graph, seed pair, incremental registration
// with periodic self-calibrating refinement, landmark admission, then the
// final stage1 ladder. Sub-sequences that cannot be reconstructed or cannot
// constrain the intrinsics (false-positive detections, straight segments)
// throw kTurnFailed wrapping the stage error.
ReconstructionModel calibrate_turn(const TurnSubsequence& window,
                                   const TrackSet& tracks,
                                   const Intrinsics& intr_seed,
                                   const SfmOptions& options = {});

}  // namespace autocalib
