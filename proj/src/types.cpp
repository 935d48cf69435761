#include "autocalib/types.hpp"

#include <cmath>

#include <Eigen/SVD>

namespace autocalib {

double Intrinsics::diagonal() const {
  return std::sqrt(static_cast<double>(width) * width +
                   static_cast<double>(height) * height);
}

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "image size must be positive");
  }
  if (!(cx > 0.0) || !(cx < width) || !(cy > 0.0) || !(cy < height)) {
    throw Error(ErrorCode::kInvalidArgument,
                "principal point must lie inside the image");
  }
  if (std::abs(k1) > 1.0 || std::abs(k2) > 1.0) {
    throw Error(ErrorCode::kInvalidArgument,
                "distortion coefficients out of range [-1, 1]");
  }
}

bool is_rotation_matrix(const Eigen::Matrix3d& r, double tol) {
  const double ortho = (r * r.transpose() - Eigen::Matrix3d::Identity())
                           .cwiseAbs()
                           .maxCoeff();
  return ortho < tol && std::abs(r.determinant() - 1.0) < tol;
}

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return s;
}

Eigen::Matrix3d rotation_exp(const Eigen::Vector3d& omega) {
  const double theta2 = omega.squaredNorm();
  const Eigen::Matrix3d s = skew(omega);
  if (theta2 < 1e-16) {
    return Eigen::Matrix3d::Identity() + s + 0.5 * s * s;
  }
  const double theta = std::sqrt(theta2);
  return Eigen::Matrix3d::Identity() + std::sin(theta) / theta * s +
         (1.0 - std::cos(theta)) / theta2 * s * s;
}

Eigen::Vector3d rotation_log(const Eigen::Matrix3d& r) {
  const double cos_theta =
      std::min(1.0, std::max(-1.0, (r.trace() - 1.0) * 0.5));
  const double theta = std::acos(cos_theta);
  const Eigen::Vector3d axis_raw(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0),
                                 r(1, 0) - r(0, 1));
  if (theta < 1e-8) {
    return 0.5 * axis_raw;
  }
  if (theta > 3.14159265358979323846 - 1e-4) {
    // Near pi the skew part vanishes; recover the axis from R + I.
    const Eigen::Matrix3d m = 0.5 * (r + Eigen::Matrix3d::Identity());
    Eigen::Vector3d axis(std::sqrt(std::max(0.0, m(0, 0))),
                         std::sqrt(std::max(0.0, m(1, 1))),
                         std::sqrt(std::max(0.0, m(2, 2))));
    int k = 0;
    m.diagonal().maxCoeff(&k);
    if (axis[k] < 1e-12) return Eigen::Vector3d::Zero();
    for (int i = 0; i < 3; ++i) {
      if (i != k && m(k, i) < 0.0) axis[i] = -axis[i];
    }
    axis.normalize();
    if (axis_raw.dot(axis) < 0.0) axis = -axis;
    return theta * axis;
  }
  return theta / (2.0 * std::sin(theta)) * axis_raw;
}

Eigen::Matrix3d project_to_rotation(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Eigen::Matrix3d u = svd.matrixU();
    u.col(2) = -u.col(2);
    r = u * svd.matrixV().transpose();
  }
  return r;
}

}  // namespace autocalib
