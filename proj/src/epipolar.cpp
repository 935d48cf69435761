#include "autocalib/epipolar.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

#include "autocalib/camera.hpp"
#include "autocalib/rng.hpp"

namespace autocalib {

namespace {

struct Normalization {
  Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
};

// Hartley normalization: centroid to origin, mean distance to sqrt(2).
Normalization normalize_points(std::span<const Match> matches, bool second,
                               std::vector<Eigen::Vector2d>* out) {
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (const Match& m : matches) {
    centroid += second ? m.p_j : m.p_i;
  }
  centroid /= static_cast<double>(matches.size());
  double mean_dist = 0.0;
  out->resize(matches.size());
  for (size_t k = 0; k < matches.size(); ++k) {
    (*out)[k] = (second ? matches[k].p_j : matches[k].p_i) - centroid;
    mean_dist += (*out)[k].norm();
  }
  mean_dist /= static_cast<double>(matches.size());
  if (mean_dist < 1e-9) {
    throw Error(ErrorCode::kDegenerateConfiguration,
                "estimate_fundamental: coincident points");
  }
  const double scale = std::sqrt(2.0) / mean_dist;
  for (auto& p : *out) p *= scale;
  Normalization n;
  n.t << scale, 0.0, -scale * centroid.x(),
         0.0, scale, -scale * centroid.y(),
         0.0, 0.0, 1.0;
  return n;
}

void fix_sign_and_scale(Eigen::Matrix3d* f) {
  const double norm = f->norm();
  if (norm < 1e-300) {
    throw Error(ErrorCode::kDegenerateConfiguration,
                "estimate_fundamental: zero solution");
  }
  *f /= norm;
  // Deterministic sign: largest-magnitude entry positive.
  int r = 0, c = 0;
  f->cwiseAbs().maxCoeff(&r, &c);
  if ((*f)(r, c) < 0.0) *f = -*f;
}

// Signed Sampson residual and its gradient with respect to the entries of f.
double sampson_residual(const Eigen::Matrix3d& f, const Eigen::Vector2d& p_i,
                        const Eigen::Vector2d& p_j, Eigen::Matrix3d* grad) {
  const Eigen::Vector3d xi(p_i.x(), p_i.y(), 1.0);
  const Eigen::Vector3d xj(p_j.x(), p_j.y(), 1.0);
  const Eigen::Vector3d fxi = f * xi;
  const Eigen::Vector3d ftxj = f.transpose() * xj;
  const double num = xj.dot(fxi);
  const double den_sq = fxi.head<2>().squaredNorm() + ftxj.head<2>().squaredNorm();
  const double den = std::sqrt(std::max(den_sq, 1e-300));
  if (grad != nullptr) {
    // d(num)/dF = xj xi^T; d(den)/dF via the four line coefficients.
    Eigen::Matrix3d dden = Eigen::Matrix3d::Zero();
    dden.row(0) += fxi(0) * xi.transpose();
    dden.row(1) += fxi(1) * xi.transpose();
    dden.col(0) += ftxj(0) * xj;
    dden.col(1) += ftxj(1) * xj;
    dden /= den;
    *grad = (xj * xi.transpose() * den - num * dden) / den_sq;
  }
  return num / den;
}

// Gauss-Newton polish of f minimizing the Cauchy-robustified Sampson cost
// over the selected matches (scale = the RANSAC threshold, so strays that
// slipped under it cannot tug the model). Optimizes the Hartley-normalized
// matrix for conditioning while the residuals stay in pixels; the result is
// rank-2 enforced and sign/scale fixed. Returns the pre-enforcement singular
// values of the normalized solution.
Eigen::Vector3d polish_fundamental(std::span<const Match> matches,
                                   std::span<const int> ids, double scale_px,
                                   Eigen::Matrix3d* f) {
  std::vector<Match> subset;
  subset.reserve(ids.size());
  for (int id : ids) subset.push_back(matches[id]);
  std::vector<Eigen::Vector2d> scratch;
  const Normalization ni = normalize_points(subset, false, &scratch);
  const Normalization nj = normalize_points(subset, true, &scratch);
  const Eigen::Matrix3d ti = ni.t, tj = nj.t;
  // f = tj^T fn ti  =>  fn = tj^-T f ti^-1.
  Eigen::Matrix3d fn =
      tj.transpose().inverse() * (*f) * ti.inverse();
  fn /= fn.norm();

  const double c2 = scale_px * scale_px;
  auto total_cost = [&](const Eigen::Matrix3d& fn_try) {
    const Eigen::Matrix3d f_px = tj.transpose() * fn_try * ti;
    double c = 0.0;
    for (const Match& m : subset) {
      const double s = sampson_residual(f_px, m.p_i, m.p_j, nullptr);
      c += 0.5 * c2 * std::log1p(s * s / c2);
    }
    return c;
  };

  double cost = total_cost(fn);
  for (int iter = 0; iter < 15; ++iter) {
    const Eigen::Matrix3d f_px = tj.transpose() * fn * ti;
    Eigen::Matrix<double, 9, 9> h = Eigen::Matrix<double, 9, 9>::Zero();
    Eigen::Matrix<double, 9, 1> g = Eigen::Matrix<double, 9, 1>::Zero();
    Eigen::Matrix3d grad_px;
    for (const Match& m : subset) {
      const double s = sampson_residual(f_px, m.p_i, m.p_j, &grad_px);
      const double w = 1.0 / (1.0 + s * s / c2);  // Cauchy IRLS weight
      // Chain rule through f_px = tj^T fn ti.
      const Eigen::Matrix3d grad_fn = tj * grad_px * ti.transpose();
      const Eigen::Map<const Eigen::Matrix<double, 9, 1>> row(grad_fn.data());
      h += w * row * row.transpose();
      g += w * row * s;
    }
    h.diagonal().array() += 1e-10 * h.trace();
    const Eigen::Matrix<double, 9, 1> delta = -h.ldlt().solve(g);
    bool accepted = false;
    double step = 1.0;
    for (int bt = 0; bt < 6; ++bt) {
      Eigen::Matrix3d fn_try = fn;
      Eigen::Map<Eigen::Matrix<double, 9, 1>>(fn_try.data()) += step * delta;
      fn_try /= fn_try.norm();
      const double c_try = total_cost(fn_try);
      if (c_try < cost) {
        const double rel = (cost - c_try) / std::max(cost, 1e-300);
        fn = fn_try;
        cost = c_try;
        accepted = rel > 1e-13;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      fn, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d singular_values = svd.singularValues();
  Eigen::Vector3d s = singular_values;
  s(2) = 0.0;
  const Eigen::Matrix3d fn_rank2 =
      svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
  *f = tj.transpose() * fn_rank2 * ti;
  fix_sign_and_scale(f);
  return singular_values;
}

}  // namespace

FundamentalEstimate estimate_fundamental(std::span<const Match> matches) {
  if (matches.size() < 8) {
    throw Error(ErrorCode::kInsufficientMatches,
                "estimate_fundamental: need at least 8 matches");
  }
  std::vector<Eigen::Vector2d> pi, pj;
  const Normalization ni = normalize_points(matches, false, &pi);
  const Normalization nj = normalize_points(matches, true, &pj);

  Eigen::MatrixXd a(matches.size(), 9);
  for (size_t k = 0; k < matches.size(); ++k) {
    const double xi = pi[k].x(), yi = pi[k].y();
    const double xj = pj[k].x(), yj = pj[k].y();
    a.row(static_cast<Eigen::Index>(k)) << xj * xi, xj * yi, xj,
        yj * xi, yj * yi, yj, xi, yi, 1.0;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd_a(a, Eigen::ComputeFullV);
  const Eigen::VectorXd fvec = svd_a.matrixV().col(8);
  Eigen::Matrix3d f_norm;
  f_norm << fvec(0), fvec(1), fvec(2),
            fvec(3), fvec(4), fvec(5),
            fvec(6), fvec(7), fvec(8);

  Eigen::JacobiSVD<Eigen::Matrix3d> svd_f(
      f_norm, Eigen::ComputeFullU | Eigen::ComputeFullV);
  FundamentalEstimate est;
  est.singular_values = svd_f.singularValues();
  Eigen::Vector3d s = svd_f.singularValues();
  s(2) = 0.0;
  Eigen::Matrix3d f_rank2 =
      svd_f.matrixU() * s.asDiagonal() * svd_f.matrixV().transpose();
  est.f = nj.t.transpose() * f_rank2 * ni.t;
  fix_sign_and_scale(&est.f);

  est.inlier_ids.resize(matches.size());
  double sum_sq = 0.0;
  for (size_t k = 0; k < matches.size(); ++k) {
    est.inlier_ids[k] = static_cast<int>(k);
    const double d = sampson_distance(est.f, matches[k].p_i, matches[k].p_j);
    sum_sq += d * d;
  }
  est.residual_rms = std::sqrt(sum_sq / static_cast<double>(matches.size()));
  return est;
}

double sampson_distance(const Eigen::Matrix3d& f, const Eigen::Vector2d& p_i,
                        const Eigen::Vector2d& p_j) {
  const Eigen::Vector3d xi(p_i.x(), p_i.y(), 1.0);
  const Eigen::Vector3d xj(p_j.x(), p_j.y(), 1.0);
  const Eigen::Vector3d fxi = f * xi;
  const Eigen::Vector3d ftxj = f.transpose() * xj;
  const double num = xj.dot(fxi);
  const double den2 = fxi.x() * fxi.x() + fxi.y() * fxi.y() +
                      ftxj.x() * ftxj.x() + ftxj.y() * ftxj.y();
  if (den2 < 1e-300) {
    return std::abs(num) < 1e-300 ? 0.0 : 1e30;
  }
  return std::abs(num) / std::sqrt(den2);
}

FundamentalEstimate ransac_fundamental(std::span<const Match> matches,
                                       const RansacOptions& options) {
  const int n = static_cast<int>(matches.size());
  if (n < 8) {
    throw Error(ErrorCode::kInsufficientMatches,
                "ransac_fundamental: need at least 8 matches");
  }
  Rng rng(mix_seed(options.seed, 0x46524153u));  // independent sampling stream

  std::vector<int> best_inliers;
  Eigen::Matrix3d best_f = Eigen::Matrix3d::Zero();
  double required_iters = options.max_iters;

  std::array<int, 8> sample{};
  std::vector<Match> subset(8);
  for (int iter = 0; iter < options.max_iters; ++iter) {
    if (iter >= required_iters && !best_inliers.empty()) break;
    // Rejection-sample 8 distinct indices.
    for (int k = 0; k < 8; ++k) {
      int idx;
      bool dup;
      do {
        idx = rng.index(n);
        dup = false;
        for (int m = 0; m < k; ++m) dup = dup || sample[m] == idx;
      } while (dup);
      sample[k] = idx;
      subset[k] = matches[idx];
    }
    Eigen::Matrix3d f;
    try {
      f = estimate_fundamental(subset).f;
    } catch (const Error&) {
      continue;  // degenerate minimal sample
    }
    std::vector<int> inliers;
    for (int k = 0; k < n; ++k) {
      if (sampson_distance(f, matches[k].p_i, matches[k].p_j) <=
          options.threshold_px) {
        inliers.push_back(k);
      }
    }
    if (inliers.size() > best_inliers.size()) {
      best_inliers = std::move(inliers);
      best_f = f;
      const double w =
          static_cast<double>(best_inliers.size()) / static_cast<double>(n);
      const double p_all = std::pow(w, 8.0);
      if (p_all >= 1.0 - 1e-12) {
        required_iters = iter + 1.0;
      } else {
        required_iters = std::min(
            static_cast<double>(options.max_iters),
            std::log(1.0 - options.confidence) / std::log(1.0 - p_all));
      }
    }
  }
  if (static_cast<int>(best_inliers.size()) < options.min_consensus) {
    throw Error(ErrorCode::kNoConsensus,
                "ransac_fundamental: consensus below minimum");
  }

  // Refit on the consensus set, then re-collect inliers (two rounds).
  FundamentalEstimate est;
  est.f = best_f;
  std::vector<int> inliers = std::move(best_inliers);
  std::vector<Match> subset_fit;
  for (int round = 0; round < 2; ++round) {
    subset_fit.clear();
    for (int id : inliers) subset_fit.push_back(matches[id]);
    FundamentalEstimate refit;
    try {
      refit = estimate_fundamental(subset_fit);
    } catch (const Error&) {
      break;  // keep the previous model
    }
    std::vector<int> next;
    for (int k = 0; k < n; ++k) {
      if (sampson_distance(refit.f, matches[k].p_i, matches[k].p_j) <=
          options.threshold_px) {
        next.push_back(k);
      }
    }
    if (static_cast<int>(next.size()) < options.min_consensus) break;
    est.f = refit.f;
    est.singular_values = refit.singular_values;
    inliers = std::move(next);
  }
  try {
    est.singular_values =
        polish_fundamental(matches, inliers, options.threshold_px, &est.f);
  } catch (const Error&) {
    // Keep the linear refit when the polish cannot run.
  }
  if (est.singular_values.isZero()) {
    // Refit never succeeded; fall back to the minimal-sample model's values.
    subset_fit.clear();
    for (int id : inliers) subset_fit.push_back(matches[id]);
    try {
      est.singular_values = estimate_fundamental(subset_fit).singular_values;
    } catch (const Error&) {
      throw Error(ErrorCode::kNoConsensus,
                  "ransac_fundamental: consensus set degenerate");
    }
  }
  est.inlier_ids = std::move(inliers);
  double sum_sq = 0.0;
  for (int id : est.inlier_ids) {
    const double d = sampson_distance(est.f, matches[id].p_i, matches[id].p_j);
    sum_sq += d * d;
  }
  est.residual_rms =
      std::sqrt(sum_sq / static_cast<double>(est.inlier_ids.size()));
  return est;
}

FundamentalEstimate ransac_fundamental(std::span<const Match> matches,
                                       double threshold_px, int max_iters,
                                       uint64_t seed) {
  RansacOptions options;
  options.threshold_px = threshold_px;
  options.max_iters = max_iters;
  options.seed = seed;
  return ransac_fundamental(matches, options);
}

Eigen::Vector3d epipole(const Eigen::Matrix3d& f) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(f, Eigen::ComputeFullV);
  const Eigen::Vector3d s = svd.singularValues();
  if (s(2) > 1e-6 * s(0)) {
    throw Error(ErrorCode::kNotRankDeficient,
                "epipole: matrix is not rank deficient");
  }
  Eigen::Vector3d e = svd.matrixV().col(2);
  // Deterministic sign: largest-magnitude component positive.
  int k = 0;
  e.cwiseAbs().maxCoeff(&k);
  if (e(k) < 0.0) e = -e;
  return e;
}

Eigen::Matrix3d essential_from_fundamental(const Eigen::Matrix3d& f,
                                           const Intrinsics& intr) {
  Eigen::Matrix3d k;
  k << intr.fx, 0.0, intr.cx,
       0.0, intr.fy, intr.cy,
       0.0, 0.0, 1.0;
  const Eigen::Matrix3d e_raw = k.transpose() * f * k;
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      e_raw, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sv = svd.singularValues();
  const double s = 0.5 * (sv(0) + sv(1));
  Eigen::Vector3d fixed(s, s, 0.0);
  return svd.matrixU() * fixed.asDiagonal() * svd.matrixV().transpose();
}

namespace {

// Plain two-view DLT in normalized coordinates, no gates. pose_i is assumed
// identity, pose_j maps i-coordinates to j-coordinates.
Eigen::Vector3d triangulate_normalized(const Pose& pose_j,
                                       const Eigen::Vector3d& ray_i,
                                       const Eigen::Vector3d& ray_j) {
  Eigen::Matrix<double, 3, 4> p0 = Eigen::Matrix<double, 3, 4>::Zero();
  p0.leftCols<3>() = Eigen::Matrix3d::Identity();
  Eigen::Matrix<double, 3, 4> p1;
  p1.leftCols<3>() = pose_j.rotation;
  p1.col(3) = pose_j.translation;

  Eigen::Matrix4d a;
  a.row(0) = ray_i.x() * p0.row(2) - p0.row(0);
  a.row(1) = ray_i.y() * p0.row(2) - p0.row(1);
  a.row(2) = ray_j.x() * p1.row(2) - p1.row(0);
  a.row(3) = ray_j.y() * p1.row(2) - p1.row(1);
  Eigen::JacobiSVD<Eigen::Matrix4d> svd(a, Eigen::ComputeFullV);
  const Eigen::Vector4d x = svd.matrixV().col(3);
  if (std::abs(x(3)) < 1e-12) {
    return Eigen::Vector3d::Constant(std::numeric_limits<double>::quiet_NaN());
  }
  return x.head<3>() / x(3);
}

}  // namespace

Pose recover_pose(const Eigen::Matrix3d& e, std::span<const Match> matches,
                  const Intrinsics& intr) {
  if (matches.size() < 5) {
    throw Error(ErrorCode::kInsufficientMatches,
                "recover_pose: need at least 5 matches");
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      e, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  Eigen::Matrix3d v = svd.matrixV();
  if (u.determinant() * v.determinant() < 0.0) {
    v = -v;  // flips the sign of E, which is defined up to scale
  }
  Eigen::Matrix3d w;
  w << 0.0, -1.0, 0.0,
       1.0, 0.0, 0.0,
       0.0, 0.0, 1.0;
  const Eigen::Matrix3d r1 = u * w * v.transpose();
  const Eigen::Matrix3d r2 = u * w.transpose() * v.transpose();
  const Eigen::Vector3d t = u.col(2);

  std::vector<Eigen::Vector3d> rays_i, rays_j;
  rays_i.reserve(matches.size());
  rays_j.reserve(matches.size());
  for (const Match& m : matches) {
    try {
      rays_i.push_back(undistorted_ray(m.p_i, intr));
      rays_j.push_back(undistorted_ray(m.p_j, intr));
    } catch (const Error&) {
      rays_i.push_back(Eigen::Vector3d::Zero());
      rays_j.push_back(Eigen::Vector3d::Zero());
    }
  }

  const std::array<Pose, 4> candidates = {
      Pose{r1, t}, Pose{r1, -t}, Pose{r2, t}, Pose{r2, -t}};
  int best = -1;
  int best_count = -1;
  for (int c = 0; c < 4; ++c) {
    int count = 0;
    for (size_t k = 0; k < matches.size(); ++k) {
      if (rays_i[k].isZero()) continue;
      const Eigen::Vector3d x =
          triangulate_normalized(candidates[c], rays_i[k], rays_j[k]);
      if (!x.allFinite()) continue;
      const double z_i = x.z();
      const double z_j =
          (candidates[c].rotation * x + candidates[c].translation).z();
      if (z_i > 0.0 && z_j > 0.0) ++count;
    }
    if (count > best_count) {
      best_count = count;
      best = c;
    }
  }
  if (best_count * 2 <= static_cast<int>(matches.size())) {
    throw Error(ErrorCode::kCheiralityAmbiguous,
                "recover_pose: no decomposition dominates the cheirality vote");
  }
  Pose pose = candidates[best];
  pose.rotation = project_to_rotation(pose.rotation);
  return pose;
}

double ray_parallax_deg(const Pose& pose_i, const Pose& pose_j,
                        const Intrinsics& intr, const Eigen::Vector2d& p_i,
                        const Eigen::Vector2d& p_j) {
  const Eigen::Vector3d di =
      (pose_i.rotation.transpose() * undistorted_ray(p_i, intr)).normalized();
  const Eigen::Vector3d dj =
      (pose_j.rotation.transpose() * undistorted_ray(p_j, intr)).normalized();
  const double c = std::min(1.0, std::max(-1.0, di.dot(dj)));
  return std::acos(c) * 180.0 / 3.14159265358979323846;
}

Eigen::Vector3d triangulate(const Pose& pose_i, const Pose& pose_j,
                            const Intrinsics& intr, const Eigen::Vector2d& p_i,
                            const Eigen::Vector2d& p_j,
                            double min_parallax_deg) {
  if (ray_parallax_deg(pose_i, pose_j, intr, p_i, p_j) < min_parallax_deg) {
    throw Error(ErrorCode::kInsufficientParallax,
                "triangulate: rays nearly parallel");
  }
  const Eigen::Vector3d ri = undistorted_ray(p_i, intr);
  const Eigen::Vector3d rj = undistorted_ray(p_j, intr);
  const Pose relative = pose_j.relative_to(pose_i);
  const Eigen::Vector3d x_in_i = triangulate_normalized(relative, ri, rj);
  if (!x_in_i.allFinite()) {
    throw Error(ErrorCode::kInsufficientParallax,
                "triangulate: point at infinity");
  }
  return pose_i.inverse().rotation * x_in_i + pose_i.center();
}

void save_match_list(std::span<const Match> matches, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot write " + path);
  }
  out.precision(17);
  for (const Match& m : matches) {
    out << m.track_id << " " << m.p_i.x() << " " << m.p_i.y() << " "
        << m.p_j.x() << " " << m.p_j.y() << "\n";
  }
}

std::vector<Match> load_match_list(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot read " + path);
  }
  std::vector<Match> matches;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    Match m;
    std::string extra;
    if (!(ss >> m.track_id >> m.p_i.x() >> m.p_i.y() >> m.p_j.x() >>
          m.p_j.y()) ||
        (ss >> extra)) {
      throw Error(ErrorCode::kParse,
                  path + ":" + std::to_string(line_no) + ": malformed match");
    }
    matches.push_back(m);
  }
  return matches;
}

}  // namespace autocalib
