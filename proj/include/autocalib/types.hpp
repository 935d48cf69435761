#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace autocalib {

enum class ErrorCode {
  kIo,
  kParse,
  kInvalidArgument,
  kBehindCamera,
  kNonConvergent,
  kDimensionMismatch,
  kInsufficientMatches,
  kDegenerateConfiguration,
  kNoConsensus,
  kNotRankDeficient,
  kCheiralityAmbiguous,
  kInsufficientParallax,
  kTooFewFrames,
  kEmptyGraph,
  kNoViablePair,
  kNoRegistrableFrame,
  kSingularNormalEquations,
  kTurnFailed,
  kAllTurnsFailed,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// Pinhole camera with two-term radial distortion. Distortion acts on
// normalized coordinates centered at the principal point.
struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  double k1 = 0.0;
  double k2 = 0.0;
  int width = 0;
  int height = 0;

  Eigen::Vector2d principal_point() const { return {cx, cy}; }
  double diagonal() const;
  void validate() const;  // throws Error(kInvalidArgument) on violations
};

// World-to-camera rigid transform: X_cam = rotation * X_world + translation.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d center() const {
    return -rotation.transpose() * translation;
  }
  Pose inverse() const {
    return {rotation.transpose(), -(rotation.transpose() * translation)};
  }
  // this * other: first apply other, then this.
  Pose compose(const Pose& other) const {
    return {rotation * other.rotation,
            rotation * other.translation + translation};
  }
  // Relative pose mapping camera `from` coordinates to `this` coordinates.
  Pose relative_to(const Pose& from) const {
    return compose(from.inverse());
  }
};

bool is_rotation_matrix(const Eigen::Matrix3d& r, double tol = 1e-6);

// Rodrigues exponential map and its inverse (angle * unit axis).
Eigen::Matrix3d rotation_exp(const Eigen::Vector3d& omega);
Eigen::Vector3d rotation_log(const Eigen::Matrix3d& r);

// Nearest rotation matrix in Frobenius norm (det +1).
Eigen::Matrix3d project_to_rotation(const Eigen::Matrix3d& m);

Eigen::Matrix3d skew(const Eigen::Vector3d& v);

}  // namespace autocalib
