#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "autocalib/types.hpp"

namespace autocalib {

// One image measurement of a triangulated landmark.
struct Observation {
  int frame = 0;
  long track_id = -1;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
};

// Metric reconstruction of one sub-sequence. Frames are global sequence
// indices, landmark keys are track ids. Observations stay sorted by
// (track, frame) so the optimizer can group them per landmark.
struct ReconstructionModel {
  Intrinsics intrinsics;
  std::map<int, Pose> poses;                  // frame -> world-to-camera
  std::map<long, Eigen::Vector3d> landmarks;  // track id -> world point
  std::vector<Observation> observations;
  // Gauge anchors: gauge_frame is frozen rigidly, scale_frame additionally
  // freezes its largest translation component to pin the global scale.
  int gauge_frame = -1;
  int scale_frame = -1;
};

void sort_observations(ReconstructionModel& model);

// Per-observation reprojection error in pixels, aligned with
// model.observations; +inf where the landmark falls behind the camera.
std::vector<double> reprojection_errors(const ReconstructionModel& model);

// RMS of the 2-D reprojection error norm over all observations (pixels).
double reprojection_rms(const ReconstructionModel& model);

// Drops observations with reprojection error above max_error_px (or behind
// the camera), then landmarks left with fewer than two observations.
void filter_observations(ReconstructionModel& model, double max_error_px);

enum class BaMode {
  kPoseOnly,  // poses + landmarks, intrinsics frozen
  kStage1,    // adds shared f (fx = fy) and k1, k2; principal point at center
  kStage2,    // all of fx, fy, cx, cy, k1, k2 free within bounds
};

// Box constraints on the intrinsics block. The defaults leave the focal and
// principal point effectively unconstrained and keep distortion in [-1, 1].
struct BaBounds {
  double f_min = 1.0;
  double f_max = 1e7;
  double cx_min = -1e7;
  double cx_max = 1e7;
  double cy_min = -1e7;
  double cy_max = 1e7;
  double k_min = -1.0;
  double k_max = 1.0;
};

struct BaOptions {
  int max_iterations = 200;
  double cost_change_tol = 1e-10;  // relative, per accepted step
  double gradient_tol = 1e-12;     // infinity norm of the robust gradient
  // Per-residual absolute cost floor (px^2). Noiseless problems bottom out
  // at double-precision noise where relative cost changes stay O(1); at or
  // below the floor the state counts as converged.
  double cost_floor = 1e-16;
  double init_lambda = 1e-4;
  double cauchy_scale_px = 2.0;  // rho(s) = c^2 log(1 + s / c^2)
  // When false, k1 and k2 are held at their current values in stage1/stage2
  // (their columns are masked out); used by experiments that isolate the
  // focal sensitivity from the focal-distortion trade-off.
  bool refine_distortion = true;
  BaBounds bounds;
};

struct BaSummary {
  bool converged = false;
  int iterations = 0;  // accepted steps
  double initial_cost = 0.0;
  double final_cost = 0.0;
  double final_rms_px = 0.0;  // unweighted, over all observations
  std::vector<double> cost_history;  // initial cost + each accepted cost
  std::string message;
};

// Robustified reprojection problem over one or more models sharing a single
// intrinsics block (taken from, and written back to, every model; the shared
// start value is models[0]). Local parameterization, in packing order:
// [intrinsics | pose blocks | landmarks], each pose as a rotation-log
// increment and a translation increment around the stored state. Gauge
// freezes are excluded from the packed vector. Constructing a stage1 problem
// rewrites each model's intrinsics to the tied form (fx = fy = mean, principal
// point at the image center) as part of the mode's contract.
class BundleProblem {
 public:
  BundleProblem(std::vector<ReconstructionModel*> models, BaMode mode,
                const BaOptions& options = {});

  int parameter_count() const { return parameter_count_; }
  int residual_count() const { return 2 * static_cast<int>(obs_.size()); }

  // Raw residuals (pixels, two rows per observation) at a local displacement
  // from the stored state; delta = 0 evaluates the stored state. Throws
  // kBehindCamera if a landmark reaches non-positive depth.
  Eigen::VectorXd residuals(const Eigen::VectorXd& delta) const;

  // Analytic Jacobian of residuals() at delta = 0.
  Eigen::MatrixXd dense_jacobian() const;

  // Total robust cost at delta; +inf when any landmark loses positive depth.
  double cost(const Eigen::VectorXd& delta) const;

  // Applies a local step to the stored state (intrinsics clamped to bounds)
  // and re-orthonormalizes the rotations.
  void apply(const Eigen::VectorXd& delta);

  // Levenberg-Marquardt with Schur elimination of the landmark blocks.
  // NotConverged is reported via the summary, not thrown. Throws
  // kSingularNormalEquations if the reduced system cannot be factorized.
  BaSummary solve();

  static int intrinsics_parameter_count(BaMode mode);

 private:
  struct PoseBlock {
    int model = 0;
    int frame = 0;
    std::array<int, 6> column;  // packed column per local dof, -1 if frozen
    int free_count = 0;
  };
  struct LandmarkBlock {
    int model = 0;
    long track = -1;
    int offset = 0;  // packed column of the first of its 3 parameters
  };
  struct ObsRef {
    int pose_block = 0;
    int landmark_block = 0;
    Eigen::Vector2d pixel;
  };

  Intrinsics trial_intrinsics(const Eigen::VectorXd& delta) const;
  Pose trial_pose(const PoseBlock& block, const Eigen::VectorXd& delta) const;
  Eigen::Vector3d trial_landmark(const LandmarkBlock& block,
                                 const Eigen::VectorXd& delta) const;

  std::vector<ReconstructionModel*> models_;
  BaMode mode_;
  BaOptions options_;
  std::vector<PoseBlock> pose_blocks_;
  std::vector<LandmarkBlock> landmark_blocks_;
  std::vector<ObsRef> obs_;
  int parameter_count_ = 0;
  int landmark_offset_ = 0;  // packed column where landmark blocks start
};

BaSummary bundle_adjust(ReconstructionModel& model, BaMode mode,
                        const BaOptions& options = {});
BaSummary bundle_adjust(std::vector<ReconstructionModel*> models, BaMode mode,
                        const BaOptions& options = {});

// Reprojection residual of one observation and (optionally) its Jacobian
// with respect to the pose's local [omega, t] update. Returns false for
// non-positive depth. Shared with pose-only refinement outside the bundle.
bool project_residual(const Pose& pose, const Eigen::Vector3d& x,
                      const Intrinsics& intr, const Eigen::Vector2d& pixel,
                      Eigen::Vector2d* residual,
                      Eigen::Matrix<double, 2, 6>* j_pose = nullptr);

}  // namespace autocalib
