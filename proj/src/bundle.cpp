#include "autocalib/bundle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <utility>

#include <Eigen/Cholesky>

namespace autocalib {
namespace {

constexpr double kMinDepth = 1e-9;
constexpr double kDiagFloor = 1e-12;
constexpr double kLambdaMin = 1e-12;
constexpr double kLambdaMax = 1e16;

struct ObsEval {
  Eigen::Vector2d residual;
  Eigen::Matrix<double, 2, 6> j_pose;      // d res / d [omega, t]
  Eigen::Matrix<double, 2, 3> j_landmark;  // d res / d X
  Eigen::Matrix<double, 2, 6> j_intr;      // first ni columns used
};

// Projection residual and (optionally) its analytic Jacobians. Returns false
// when the point has non-positive camera depth.
bool project_observation(const Pose& pose, const Eigen::Vector3d& x,
                         const Intrinsics& intr, BaMode mode,
                         const Eigen::Vector2d& pixel, bool want_jacobians,
                         ObsEval* out) {
  const Eigen::Vector3d rx = pose.rotation * x;
  const Eigen::Vector3d xc = rx + pose.translation;
  if (xc.z() <= kMinDepth) return false;
  const double inv_z = 1.0 / xc.z();
  const Eigen::Vector2d pn(xc.x() * inv_z, xc.y() * inv_z);
  const double r2 = pn.squaredNorm();
  const double d = 1.0 + r2 * (intr.k1 + r2 * intr.k2);
  const Eigen::Vector2d pd = d * pn;
  out->residual = Eigen::Vector2d(intr.fx * pd.x() + intr.cx - pixel.x(),
                                  intr.fy * pd.y() + intr.cy - pixel.y());
  if (!want_jacobians) return true;

  // d pd / d pn = D I + 2 (k1 + 2 k2 r^2) pn pn^T, rows scaled by (fx, fy).
  const double g = intr.k1 + 2.0 * intr.k2 * r2;
  Eigen::Matrix2d fa =
      d * Eigen::Matrix2d::Identity() + 2.0 * g * (pn * pn.transpose());
  fa.row(0) *= intr.fx;
  fa.row(1) *= intr.fy;
  Eigen::Matrix<double, 2, 3> c;
  c << inv_z, 0.0, -pn.x() * inv_z, 0.0, inv_z, -pn.y() * inv_z;
  const Eigen::Matrix<double, 2, 3> e = fa * c;  // d res / d xc

  out->j_pose.leftCols<3>() = -e * skew(rx);  // xc = exp(w) R x + t
  out->j_pose.rightCols<3>() = e;
  out->j_landmark = e * pose.rotation;

  out->j_intr.setZero();
  const double r4 = r2 * r2;
  switch (mode) {
    case BaMode::kPoseOnly:
      break;
    case BaMode::kStage1:  // columns: f, k1, k2
      out->j_intr(0, 0) = pd.x();
      out->j_intr(1, 0) = pd.y();
      out->j_intr(0, 1) = intr.fx * pn.x() * r2;
      out->j_intr(1, 1) = intr.fy * pn.y() * r2;
      out->j_intr(0, 2) = intr.fx * pn.x() * r4;
      out->j_intr(1, 2) = intr.fy * pn.y() * r4;
      break;
    case BaMode::kStage2:  // columns: fx, fy, cx, cy, k1, k2
      out->j_intr(0, 0) = pd.x();
      out->j_intr(1, 1) = pd.y();
      out->j_intr(0, 2) = 1.0;
      out->j_intr(1, 3) = 1.0;
      out->j_intr(0, 4) = intr.fx * pn.x() * r2;
      out->j_intr(1, 4) = intr.fy * pn.y() * r2;
      out->j_intr(0, 5) = intr.fx * pn.x() * r4;
      out->j_intr(1, 5) = intr.fy * pn.y() * r4;
      break;
  }
  return true;
}

// Zeroes the k1/k2 Jacobian columns; with a zero column, zero gradient and
// damped diagonal, the packed step for those entries is exactly zero.
void mask_distortion_columns(BaMode mode, ObsEval* eval) {
  const int k = mode == BaMode::kStage1 ? 1 : 4;
  eval->j_intr.col(k).setZero();
  eval->j_intr.col(k + 1).setZero();
}

double cauchy_cost(double squared_norm, double c2) {
  return 0.5 * c2 * std::log1p(squared_norm / c2);
}

double cauchy_weight(double squared_norm, double c2) {
  return 1.0 / (1.0 + squared_norm / c2);
}

}  // namespace

void sort_observations(ReconstructionModel& model) {
  std::stable_sort(model.observations.begin(), model.observations.end(),
                   [](const Observation& a, const Observation& b) {
                     return a.track_id != b.track_id ? a.track_id < b.track_id
                                                     : a.frame < b.frame;
                   });
}

std::vector<double> reprojection_errors(const ReconstructionModel& model) {
  std::vector<double> errors;
  errors.reserve(model.observations.size());
  ObsEval eval;
  for (const Observation& obs : model.observations) {
    auto pose = model.poses.find(obs.frame);
    auto landmark = model.landmarks.find(obs.track_id);
    if (pose == model.poses.end() || landmark == model.landmarks.end()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "observation references a missing pose or landmark");
    }
    if (project_observation(pose->second, landmark->second, model.intrinsics,
                            BaMode::kPoseOnly, obs.pixel, false, &eval)) {
      errors.push_back(eval.residual.norm());
    } else {
      errors.push_back(std::numeric_limits<double>::infinity());
    }
  }
  return errors;
}

double reprojection_rms(const ReconstructionModel& model) {
  if (model.observations.empty()) return 0.0;
  const std::vector<double> errors = reprojection_errors(model);
  double sum = 0.0;
  for (double e : errors) sum += e * e;
  return std::sqrt(sum / static_cast<double>(errors.size()));
}

void filter_observations(ReconstructionModel& model, double max_error_px) {
  const std::vector<double> errors = reprojection_errors(model);
  std::vector<Observation> kept;
  kept.reserve(model.observations.size());
  for (size_t i = 0; i < model.observations.size(); ++i) {
    if (errors[i] <= max_error_px) kept.push_back(model.observations[i]);
  }
  std::map<long, int> obs_per_track;
  for (const Observation& obs : kept) ++obs_per_track[obs.track_id];
  std::vector<Observation> surviving;
  surviving.reserve(kept.size());
  for (const Observation& obs : kept) {
    if (obs_per_track[obs.track_id] >= 2) surviving.push_back(obs);
  }
  for (auto it = model.landmarks.begin(); it != model.landmarks.end();) {
    auto count = obs_per_track.find(it->first);
    if (count == obs_per_track.end() || count->second < 2) {
      it = model.landmarks.erase(it);
    } else {
      ++it;
    }
  }
  model.observations = std::move(surviving);
}

int BundleProblem::intrinsics_parameter_count(BaMode mode) {
  switch (mode) {
    case BaMode::kPoseOnly:
      return 0;
    case BaMode::kStage1:
      return 3;
    case BaMode::kStage2:
      return 6;
  }
  return 0;
}

BundleProblem::BundleProblem(std::vector<ReconstructionModel*> models,
                             BaMode mode, const BaOptions& options)
    : models_(std::move(models)), mode_(mode), options_(options) {
  if (models_.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "no models to adjust");
  }
  for (ReconstructionModel* model : models_) {
    model->intrinsics.validate();
    if (model->poses.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "model has no poses");
    }
  }

  // The shared intrinsics block starts from models[0].
  Intrinsics shared = models_[0]->intrinsics;
  if (mode_ == BaMode::kStage1) {
    const double f = std::clamp(0.5 * (shared.fx + shared.fy),
                                options_.bounds.f_min, options_.bounds.f_max);
    shared.fx = f;
    shared.fy = f;
    shared.cx = 0.5 * shared.width;
    shared.cy = 0.5 * shared.height;
  }
  for (ReconstructionModel* model : models_) model->intrinsics = shared;

  int column = intrinsics_parameter_count(mode_);
  for (size_t m = 0; m < models_.size(); ++m) {
    ReconstructionModel* model = models_[m];
    // Resolve gauge anchors against the poses actually present.
    if (model->poses.find(model->gauge_frame) == model->poses.end()) {
      model->gauge_frame = model->poses.begin()->first;
    }
    if (model->scale_frame == model->gauge_frame ||
        model->poses.find(model->scale_frame) == model->poses.end()) {
      model->scale_frame = -1;
      for (const auto& [frame, pose] : model->poses) {
        if (frame != model->gauge_frame) {
          model->scale_frame = frame;
          break;
        }
      }
    }
    int scale_component = -1;
    if (model->scale_frame >= 0) {
      const Eigen::Vector3d& t = model->poses.at(model->scale_frame).translation;
      t.cwiseAbs().maxCoeff(&scale_component);
      scale_component += 3;  // translation dofs live in slots 3..5
    }

    std::map<int, int> pose_index;
    for (const auto& [frame, pose] : model->poses) {
      PoseBlock block;
      block.model = static_cast<int>(m);
      block.frame = frame;
      block.column.fill(-1);
      if (frame != model->gauge_frame) {
        for (int k = 0; k < 6; ++k) {
          if (frame == model->scale_frame && k == scale_component) continue;
          block.column[k] = column++;
          ++block.free_count;
        }
      }
      pose_index[frame] = static_cast<int>(pose_blocks_.size());
      pose_blocks_.push_back(block);
    }

    std::map<long, int> landmark_index;
    for (const auto& [track, point] : model->landmarks) {
      landmark_index[track] = static_cast<int>(landmark_blocks_.size());
      landmark_blocks_.push_back(
          {static_cast<int>(m), track, 0});  // offsets assigned below
    }

    for (const Observation& obs : model->observations) {
      auto pose = pose_index.find(obs.frame);
      auto landmark = landmark_index.find(obs.track_id);
      if (pose == pose_index.end() || landmark == landmark_index.end()) {
        throw Error(ErrorCode::kInvalidArgument,
                    "observation references a missing pose or landmark");
      }
      obs_.push_back({pose->second, landmark->second, obs.pixel});
    }
  }
  if (obs_.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "no observations to adjust");
  }

  landmark_offset_ = column;
  for (LandmarkBlock& block : landmark_blocks_) {
    block.offset = column;
    column += 3;
  }
  parameter_count_ = column;

  // Group residual rows by landmark so Schur elimination works on
  // contiguous ranges.
  std::stable_sort(obs_.begin(), obs_.end(),
                   [](const ObsRef& a, const ObsRef& b) {
                     return a.landmark_block != b.landmark_block
                                ? a.landmark_block < b.landmark_block
                                : a.pose_block < b.pose_block;
                   });
}

Intrinsics BundleProblem::trial_intrinsics(const Eigen::VectorXd& delta) const {
  Intrinsics intr = models_[0]->intrinsics;
  switch (mode_) {
    case BaMode::kPoseOnly:
      break;
    case BaMode::kStage1:
      intr.fx += delta[0];
      intr.fy = intr.fx;
      intr.k1 += delta[1];
      intr.k2 += delta[2];
      break;
    case BaMode::kStage2:
      intr.fx += delta[0];
      intr.fy += delta[1];
      intr.cx += delta[2];
      intr.cy += delta[3];
      intr.k1 += delta[4];
      intr.k2 += delta[5];
      break;
  }
  return intr;
}

Pose BundleProblem::trial_pose(const PoseBlock& block,
                               const Eigen::VectorXd& delta) const {
  const Pose& pose = models_[block.model]->poses.at(block.frame);
  if (block.free_count == 0) return pose;
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();
  Eigen::Vector3d dt = Eigen::Vector3d::Zero();
  for (int k = 0; k < 3; ++k) {
    if (block.column[k] >= 0) omega[k] = delta[block.column[k]];
    if (block.column[k + 3] >= 0) dt[k] = delta[block.column[k + 3]];
  }
  return {rotation_exp(omega) * pose.rotation, pose.translation + dt};
}

Eigen::Vector3d BundleProblem::trial_landmark(
    const LandmarkBlock& block, const Eigen::VectorXd& delta) const {
  return models_[block.model]->landmarks.at(block.track) +
         delta.segment<3>(block.offset);
}

Eigen::VectorXd BundleProblem::residuals(const Eigen::VectorXd& delta) const {
  if (delta.size() != parameter_count_) {
    throw Error(ErrorCode::kDimensionMismatch, "delta size mismatch");
  }
  const Intrinsics intr = trial_intrinsics(delta);
  std::vector<Pose> poses;
  poses.reserve(pose_blocks_.size());
  for (const PoseBlock& block : pose_blocks_) {
    poses.push_back(trial_pose(block, delta));
  }
  std::vector<Eigen::Vector3d> points;
  points.reserve(landmark_blocks_.size());
  for (const LandmarkBlock& block : landmark_blocks_) {
    points.push_back(trial_landmark(block, delta));
  }

  Eigen::VectorXd r(residual_count());
  ObsEval eval;
  for (size_t i = 0; i < obs_.size(); ++i) {
    if (!project_observation(poses[obs_[i].pose_block],
                             points[obs_[i].landmark_block], intr, mode_,
                             obs_[i].pixel, false, &eval)) {
      throw Error(ErrorCode::kBehindCamera, "landmark behind camera");
    }
    r.segment<2>(2 * static_cast<int>(i)) = eval.residual;
  }
  return r;
}

Eigen::MatrixXd BundleProblem::dense_jacobian() const {
  const int ni = intrinsics_parameter_count(mode_);
  Eigen::MatrixXd j =
      Eigen::MatrixXd::Zero(residual_count(), parameter_count_);
  ObsEval eval;
  for (size_t i = 0; i < obs_.size(); ++i) {
    const PoseBlock& pose_block = pose_blocks_[obs_[i].pose_block];
    const LandmarkBlock& lm_block = landmark_blocks_[obs_[i].landmark_block];
    const ReconstructionModel& model = *models_[pose_block.model];
    if (!project_observation(model.poses.at(pose_block.frame),
                             model.landmarks.at(lm_block.track),
                             models_[0]->intrinsics, mode_, obs_[i].pixel,
                             true, &eval)) {
      throw Error(ErrorCode::kBehindCamera, "landmark behind camera");
    }
    if (!options_.refine_distortion && ni > 0) {
      mask_distortion_columns(mode_, &eval);
    }
    const int row = 2 * static_cast<int>(i);
    j.block(row, 0, 2, ni) = eval.j_intr.leftCols(ni);
    for (int k = 0; k < 6; ++k) {
      if (pose_block.column[k] >= 0) {
        j.block<2, 1>(row, pose_block.column[k]) = eval.j_pose.col(k);
      }
    }
    j.block<2, 3>(row, lm_block.offset) = eval.j_landmark;
  }
  return j;
}

double BundleProblem::cost(const Eigen::VectorXd& delta) const {
  if (delta.size() != parameter_count_) {
    throw Error(ErrorCode::kDimensionMismatch, "delta size mismatch");
  }
  const Intrinsics intr = trial_intrinsics(delta);
  std::vector<Pose> poses;
  poses.reserve(pose_blocks_.size());
  for (const PoseBlock& block : pose_blocks_) {
    poses.push_back(trial_pose(block, delta));
  }
  std::vector<Eigen::Vector3d> points;
  points.reserve(landmark_blocks_.size());
  for (const LandmarkBlock& block : landmark_blocks_) {
    points.push_back(trial_landmark(block, delta));
  }

  const double c2 = options_.cauchy_scale_px * options_.cauchy_scale_px;
  double total = 0.0;
  ObsEval eval;
  for (const ObsRef& obs : obs_) {
    if (!project_observation(poses[obs.pose_block], points[obs.landmark_block],
                             intr, mode_, obs.pixel, false, &eval)) {
      return std::numeric_limits<double>::infinity();
    }
    total += cauchy_cost(eval.residual.squaredNorm(), c2);
  }
  return total;
}

void BundleProblem::apply(const Eigen::VectorXd& delta) {
  if (delta.size() != parameter_count_) {
    throw Error(ErrorCode::kDimensionMismatch, "delta size mismatch");
  }
  if (mode_ != BaMode::kPoseOnly) {
    Intrinsics intr = trial_intrinsics(delta);
    const BaBounds& b = options_.bounds;
    intr.fx = std::clamp(intr.fx, b.f_min, b.f_max);
    intr.fy = std::clamp(intr.fy, b.f_min, b.f_max);
    if (mode_ == BaMode::kStage1) intr.fy = intr.fx;
    intr.cx = std::clamp(intr.cx, b.cx_min, b.cx_max);
    intr.cy = std::clamp(intr.cy, b.cy_min, b.cy_max);
    if (options_.refine_distortion) {
      intr.k1 = std::clamp(intr.k1, b.k_min, b.k_max);
      intr.k2 = std::clamp(intr.k2, b.k_min, b.k_max);
    }
    for (ReconstructionModel* model : models_) model->intrinsics = intr;
  }

  for (const PoseBlock& block : pose_blocks_) {
    if (block.free_count == 0) continue;
    Pose pose = trial_pose(block, delta);
    pose.rotation = project_to_rotation(pose.rotation);
    models_[block.model]->poses.at(block.frame) = pose;
  }
  for (const LandmarkBlock& block : landmark_blocks_) {
    models_[block.model]->landmarks.at(block.track) =
        trial_landmark(block, delta);
  }
}

BaSummary BundleProblem::solve() {
  const int ni = intrinsics_parameter_count(mode_);
  const int reduced = landmark_offset_;
  const double c2 = options_.cauchy_scale_px * options_.cauchy_scale_px;

  BaSummary summary;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(parameter_count_);
  double current_cost = cost(zero);
  if (!std::isfinite(current_cost)) {
    throw Error(ErrorCode::kBehindCamera,
                "model starts with landmarks behind the camera");
  }
  summary.initial_cost = current_cost;
  summary.cost_history.push_back(current_cost);
  const double cost_floor = options_.cost_floor * residual_count();

  // Landmark ranges over the (landmark-grouped) observation list.
  const int lm_count = static_cast<int>(landmark_blocks_.size());
  std::vector<int> lm_start(lm_count + 1, 0);
  for (const ObsRef& obs : obs_) ++lm_start[obs.landmark_block + 1];
  for (int l = 0; l < lm_count; ++l) lm_start[l + 1] += lm_start[l];

  // Per-assembly storage reused across iterations.
  Eigen::MatrixXd s_raw(reduced, reduced);
  Eigen::VectorXd g_reduced(reduced);
  std::vector<Eigen::Matrix3d> lm_h(lm_count);
  std::vector<Eigen::Vector3d> lm_g(lm_count);
  std::vector<Eigen::Matrix<double, 6, 3>> w_pose(obs_.size());
  std::vector<Eigen::Matrix<double, 6, 3>> w_intr(lm_count);  // ni rows used

  double lambda = options_.init_lambda;
  std::string message = "max iterations";
  bool converged = false;
  bool stop = current_cost <= cost_floor;
  if (stop) {
    message = "cost floor reached";
    converged = true;
  }

  for (int iter = 0; iter < options_.max_iterations && !stop; ++iter) {
    // Assemble the weighted normal equations at the current state.
    s_raw.setZero();
    g_reduced.setZero();
    for (int l = 0; l < lm_count; ++l) {
      lm_h[l].setZero();
      lm_g[l].setZero();
      w_intr[l].setZero();
    }
    ObsEval eval;
    for (size_t i = 0; i < obs_.size(); ++i) {
      const ObsRef& obs = obs_[i];
      const PoseBlock& pose_block = pose_blocks_[obs.pose_block];
      const LandmarkBlock& lm_block = landmark_blocks_[obs.landmark_block];
      const ReconstructionModel& model = *models_[pose_block.model];
      if (!project_observation(model.poses.at(pose_block.frame),
                               model.landmarks.at(lm_block.track),
                               models_[0]->intrinsics, mode_, obs.pixel, true,
                               &eval)) {
        throw Error(ErrorCode::kBehindCamera, "landmark behind camera");
      }
      if (!options_.refine_distortion && ni > 0) {
        mask_distortion_columns(mode_, &eval);
      }
      const double w = cauchy_weight(eval.residual.squaredNorm(), c2);

      lm_h[obs.landmark_block].noalias() +=
          w * eval.j_landmark.transpose() * eval.j_landmark;
      lm_g[obs.landmark_block].noalias() +=
          w * eval.j_landmark.transpose() * eval.residual;
      w_pose[i].noalias() = w * eval.j_pose.transpose() * eval.j_landmark;
      if (ni > 0) {
        w_intr[obs.landmark_block].topRows(ni).noalias() +=
            w * eval.j_intr.leftCols(ni).transpose() * eval.j_landmark;
        s_raw.topLeftCorner(ni, ni).noalias() +=
            w * eval.j_intr.leftCols(ni).transpose() * eval.j_intr.leftCols(ni);
        g_reduced.head(ni).noalias() +=
            w * eval.j_intr.leftCols(ni).transpose() * eval.residual;
      }

      const Eigen::Matrix<double, 6, 6> hpp =
          w * eval.j_pose.transpose() * eval.j_pose;
      const Eigen::Matrix<double, 6, 1> gp =
          w * eval.j_pose.transpose() * eval.residual;
      for (int a = 0; a < 6; ++a) {
        const int ca = pose_block.column[a];
        if (ca < 0) continue;
        g_reduced[ca] += gp[a];
        for (int b = 0; b < 6; ++b) {
          if (pose_block.column[b] >= 0) {
            s_raw(ca, pose_block.column[b]) += hpp(a, b);
          }
        }
        if (ni > 0) {
          for (int k = 0; k < ni; ++k) {
            const double v =
                w * eval.j_intr.col(k).dot(eval.j_pose.col(a));
            s_raw(k, ca) += v;
            s_raw(ca, k) += v;
          }
        }
      }
    }

    double grad_inf = g_reduced.size() > 0 ? g_reduced.cwiseAbs().maxCoeff()
                                           : 0.0;
    for (int l = 0; l < lm_count; ++l) {
      grad_inf = std::max(grad_inf, lm_g[l].cwiseAbs().maxCoeff());
    }
    if (grad_inf < options_.gradient_tol) {
      message = "gradient tolerance reached";
      converged = true;
      break;
    }

    // Inner damping loop: retry with larger lambda until a step is accepted.
    while (true) {
      Eigen::MatrixXd s = s_raw;
      for (int k = 0; k < reduced; ++k) {
        s(k, k) += lambda * std::max(s_raw(k, k), kDiagFloor);
      }
      Eigen::VectorXd rhs = -g_reduced;

      std::vector<Eigen::Matrix3d> lm_inv(lm_count);
      for (int l = 0; l < lm_count; ++l) {
        Eigen::Matrix3d h = lm_h[l];
        for (int k = 0; k < 3; ++k) {
          h(k, k) += lambda * std::max(lm_h[l](k, k), kDiagFloor);
        }
        const Eigen::LLT<Eigen::Matrix3d> llt(h);
        if (llt.info() != Eigen::Success) {
          throw Error(ErrorCode::kSingularNormalEquations,
                      "landmark block not positive definite");
        }
        lm_inv[l] = llt.solve(Eigen::Matrix3d::Identity());
        const Eigen::Vector3d hg = lm_inv[l] * lm_g[l];

        const Eigen::Matrix<double, 6, 3> yi =
            w_intr[l] * lm_inv[l];  // ni rows used
        if (ni > 0) {
          rhs.head(ni).noalias() += yi.topRows(ni) * lm_g[l];
          s.topLeftCorner(ni, ni).noalias() -=
              yi.topRows(ni) * w_intr[l].topRows(ni).transpose();
        }
        for (int ia = lm_start[l]; ia < lm_start[l + 1]; ++ia) {
          const PoseBlock& block_a = pose_blocks_[obs_[ia].pose_block];
          if (block_a.free_count == 0) continue;
          const Eigen::Matrix<double, 6, 3> ya = w_pose[ia] * lm_inv[l];
          const Eigen::Matrix<double, 6, 1> ra = w_pose[ia] * hg;
          for (int a = 0; a < 6; ++a) {
            if (block_a.column[a] >= 0) rhs[block_a.column[a]] += ra[a];
          }
          if (ni > 0) {
            // Intrinsics-pose coupling: S[intr, a] -= Yi W_a^T (symmetric).
            const Eigen::Matrix<double, 6, 6> mi =
                yi * w_pose[ia].transpose();
            for (int k = 0; k < ni; ++k) {
              for (int a = 0; a < 6; ++a) {
                const int ca = block_a.column[a];
                if (ca < 0) continue;
                s(k, ca) -= mi(k, a);
                s(ca, k) -= mi(k, a);
              }
            }
          }
          for (int ib = lm_start[l]; ib < lm_start[l + 1]; ++ib) {
            const PoseBlock& block_b = pose_blocks_[obs_[ib].pose_block];
            if (block_b.free_count == 0) continue;
            const Eigen::Matrix<double, 6, 6> m =
                ya * w_pose[ib].transpose();
            for (int a = 0; a < 6; ++a) {
              const int ca = block_a.column[a];
              if (ca < 0) continue;
              for (int b = 0; b < 6; ++b) {
                const int cb = block_b.column[b];
                if (cb >= 0) s(ca, cb) -= m(a, b);
              }
            }
          }
        }
      }

      Eigen::VectorXd delta = Eigen::VectorXd::Zero(parameter_count_);
      if (reduced > 0) {
        const Eigen::LLT<Eigen::MatrixXd> llt(s);
        if (llt.info() != Eigen::Success) {
          throw Error(ErrorCode::kSingularNormalEquations,
                      "reduced camera system not positive definite");
        }
        delta.head(reduced) = llt.solve(rhs);
      }

      // Back-substitute the landmark updates.
      for (int l = 0; l < lm_count; ++l) {
        Eigen::Vector3d acc = lm_g[l];
        if (ni > 0) {
          acc.noalias() +=
              w_intr[l].topRows(ni).transpose() * delta.head(ni);
        }
        for (int ia = lm_start[l]; ia < lm_start[l + 1]; ++ia) {
          const PoseBlock& block = pose_blocks_[obs_[ia].pose_block];
          Eigen::Matrix<double, 6, 1> dp = Eigen::Matrix<double, 6, 1>::Zero();
          for (int a = 0; a < 6; ++a) {
            if (block.column[a] >= 0) dp[a] = delta[block.column[a]];
          }
          acc.noalias() += w_pose[ia].transpose() * dp;
        }
        delta.segment<3>(landmark_blocks_[l].offset) = -(lm_inv[l] * acc);
      }

      // Project the intrinsics step onto the bounds box.
      if (ni > 0) {
        const Intrinsics& intr = models_[0]->intrinsics;
        const BaBounds& b = options_.bounds;
        auto clamp_delta = [](double value, double d, double lo, double hi) {
          return std::clamp(value + d, lo, hi) - value;
        };
        if (mode_ == BaMode::kStage1) {
          delta[0] = clamp_delta(intr.fx, delta[0], b.f_min, b.f_max);
          if (options_.refine_distortion) {
            delta[1] = clamp_delta(intr.k1, delta[1], b.k_min, b.k_max);
            delta[2] = clamp_delta(intr.k2, delta[2], b.k_min, b.k_max);
          }
        } else {
          delta[0] = clamp_delta(intr.fx, delta[0], b.f_min, b.f_max);
          delta[1] = clamp_delta(intr.fy, delta[1], b.f_min, b.f_max);
          delta[2] = clamp_delta(intr.cx, delta[2], b.cx_min, b.cx_max);
          delta[3] = clamp_delta(intr.cy, delta[3], b.cy_min, b.cy_max);
          if (options_.refine_distortion) {
            delta[4] = clamp_delta(intr.k1, delta[4], b.k_min, b.k_max);
            delta[5] = clamp_delta(intr.k2, delta[5], b.k_min, b.k_max);
          }
        }
      }

      const double trial_cost = cost(delta);
      if (trial_cost < current_cost) {
        apply(delta);
        ++summary.iterations;
        summary.cost_history.push_back(trial_cost);
        const double relative =
            (current_cost - trial_cost) / std::max(current_cost, 1e-300);
        current_cost = trial_cost;
        lambda = std::max(lambda * 0.1, kLambdaMin);
        if (relative < options_.cost_change_tol) {
          message = "cost change tolerance reached";
          converged = true;
          stop = true;
        } else if (current_cost <= cost_floor) {
          message = "cost floor reached";
          converged = true;
          stop = true;
        }
        break;
      }
      // A rejected step whose cost matches the current cost to within the
      // tolerance means no representable improvement exists along the
      // damped direction: the state sits at the achievable floor.
      if (std::abs(trial_cost - current_cost) <=
          options_.cost_change_tol * std::max(current_cost, 1e-300)) {
        message = "cost change tolerance reached";
        converged = true;
        stop = true;
        break;
      }
      lambda *= 10.0;
      if (lambda > kLambdaMax) {
        message = "damping overflow, no acceptable step";
        stop = true;
        break;
      }
    }
  }

  summary.converged = converged;
  summary.final_cost = current_cost;
  summary.message = message;
  double rms = 0.0;
  for (const ReconstructionModel* model : models_) {
    for (double e : reprojection_errors(*model)) rms += e * e;
  }
  summary.final_rms_px = std::sqrt(rms / static_cast<double>(obs_.size()));
  return summary;
}

BaSummary bundle_adjust(ReconstructionModel& model, BaMode mode,
                        const BaOptions& options) {
  return bundle_adjust(std::vector<ReconstructionModel*>{&model}, mode,
                       options);
}

BaSummary bundle_adjust(std::vector<ReconstructionModel*> models, BaMode mode,
                        const BaOptions& options) {
  BundleProblem problem(std::move(models), mode, options);
  return problem.solve();
}

bool project_residual(const Pose& pose, const Eigen::Vector3d& x,
                      const Intrinsics& intr, const Eigen::Vector2d& pixel,
                      Eigen::Vector2d* residual,
                      Eigen::Matrix<double, 2, 6>* j_pose) {
  ObsEval eval;
  if (!project_observation(pose, x, intr, BaMode::kPoseOnly, pixel,
                           j_pose != nullptr, &eval)) {
    return false;
  }
  *residual = eval.residual;
  if (j_pose != nullptr) *j_pose = eval.j_pose;
  return true;
}

}  // namespace autocalib
