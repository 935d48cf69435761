#include "autocalib/calibrate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <thread>
#include <utility>

#include <Eigen/Geometry>

#include "autocalib/camera.hpp"
#include "autocalib/rng.hpp"

namespace autocalib {
namespace {

double median_of(std::vector<double> values) {
  const size_t n = values.size();
  if (n == 0) return 0.0;
  const size_t mid = n / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  double upper = values[mid];
  if (n % 2 == 1) return upper;
  std::nth_element(values.begin(), values.begin() + mid - 1,
                   values.begin() + mid);
  return 0.5 * (values[mid - 1] + upper);
}

int shared_frame_count(const ReconstructionModel& a,
                       const ReconstructionModel& b) {
  int count = 0;
  auto ia = a.poses.begin();
  auto ib = b.poses.begin();
  while (ia != a.poses.end() && ib != b.poses.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      ++count;
      ++ia;
      ++ib;
    }
  }
  return count;
}

// Folds `b` into `a`: a similarity transform aligning the shared camera
// centers maps b's poses and landmarks into a's frame, then a keeps its own
// blocks wherever the two overlap. Projections are invariant to the
// transform (camera-space points scale uniformly), so b's observations stay
// consistent.
void merge_into(ReconstructionModel& a, const ReconstructionModel& b) {
  std::vector<int> shared;
  for (const auto& [frame, pose] : b.poses) {
    if (a.poses.count(frame) > 0) shared.push_back(frame);
  }
  Eigen::Matrix3Xd src(3, shared.size());
  Eigen::Matrix3Xd dst(3, shared.size());
  for (size_t i = 0; i < shared.size(); ++i) {
    src.col(i) = b.poses.at(shared[i]).center();
    dst.col(i) = a.poses.at(shared[i]).center();
  }
  const Eigen::Matrix4d t = Eigen::umeyama(src, dst, true);
  const Eigen::Matrix3d sr = t.topLeftCorner<3, 3>();
  const double scale = std::cbrt(sr.determinant());
  const Eigen::Matrix3d rot = sr / scale;
  const Eigen::Vector3d shift = t.topRightCorner<3, 1>();

  for (const auto& [frame, pose] : b.poses) {
    if (a.poses.count(frame) > 0) continue;
    Pose mapped;
    mapped.rotation = project_to_rotation(pose.rotation * rot.transpose());
    mapped.translation = scale * pose.translation - mapped.rotation * shift;
    a.poses[frame] = mapped;
  }
  for (const auto& [track, point] : b.landmarks) {
    if (a.landmarks.count(track) > 0) continue;
    a.landmarks[track] = sr * point + shift;
  }
  std::set<std::pair<int, long>> seen;
  for (const Observation& obs : a.observations) {
    seen.insert({obs.frame, obs.track_id});
  }
  for (const Observation& obs : b.observations) {
    if (seen.insert({obs.frame, obs.track_id}).second) {
      a.observations.push_back(obs);
    }
  }
  sort_observations(a);
}

// Groups models transitively linked by >= min_shared_frames common frames
// and folds each group into its earliest member. Returns the merged models
// with the number of turns each one absorbed.
void merge_overlapping(std::vector<ReconstructionModel>& models,
                       std::vector<int>& turn_counts, int min_shared_frames) {
  const int n = static_cast<int>(models.size());
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&parent](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (shared_frame_count(models[i], models[j]) >= min_shared_frames) {
        parent[std::max(find(i), find(j))] = std::min(find(i), find(j));
      }
    }
  }
  std::vector<ReconstructionModel> merged;
  std::vector<int> counts;
  std::vector<int> slot(n, -1);
  for (int i = 0; i < n; ++i) {
    const int root = find(i);
    if (slot[root] < 0) {
      slot[root] = static_cast<int>(merged.size());
      merged.push_back(std::move(models[i]));
      counts.push_back(1);
    } else {
      merge_into(merged[slot[root]], models[i]);
      ++counts[slot[root]];
    }
  }
  models = std::move(merged);
  turn_counts = std::move(counts);
}

// Re-gates observations and drops models that no longer carry a usable
// reconstruction; turn_counts stays aligned.
void prune(std::vector<ReconstructionModel>& models,
           std::vector<int>& turn_counts, double gate_px) {
  std::vector<ReconstructionModel> kept;
  std::vector<int> counts;
  for (size_t i = 0; i < models.size(); ++i) {
    filter_observations(models[i], gate_px);
    if (models[i].poses.size() < 2 || models[i].landmarks.empty() ||
        models[i].observations.empty()) {
      continue;
    }
    kept.push_back(std::move(models[i]));
    counts.push_back(turn_counts[i]);
  }
  models = std::move(kept);
  turn_counts = std::move(counts);
}

std::vector<ReconstructionModel*> pointers(
    std::vector<ReconstructionModel>& models) {
  std::vector<ReconstructionModel*> ptrs;
  ptrs.reserve(models.size());
  for (ReconstructionModel& model : models) ptrs.push_back(&model);
  return ptrs;
}

}  // namespace

CalibrationResult merge_and_refine(std::vector<ReconstructionModel> models,
                                   const CalibrationOptions& options) {
  if (models.empty()) {
    throw Error(ErrorCode::kAllTurnsFailed,
                "no successful turn reconstructions to merge");
  }
  const int width = models[0].intrinsics.width;
  const int height = models[0].intrinsics.height;

  // Each turn votes with its own stage1 estimate; the medians warm-start
  // the joint solve.
  std::vector<double> fs, k1s, k2s;
  for (const ReconstructionModel& model : models) {
    fs.push_back(0.5 * (model.intrinsics.fx + model.intrinsics.fy));
    k1s.push_back(model.intrinsics.k1);
    k2s.push_back(model.intrinsics.k2);
  }
  std::vector<int> turn_counts;
  merge_overlapping(models, turn_counts, options.min_shared_frames);

  Intrinsics shared = models[0].intrinsics;
  shared.fx = shared.fy = median_of(fs);
  shared.cx = 0.5 * width;
  shared.cy = 0.5 * height;
  shared.k1 = median_of(k1s);
  shared.k2 = median_of(k2s);
  models[0].intrinsics = shared;

  bundle_adjust(pointers(models), BaMode::kStage1, options.sfm.ba);
  prune(models, turn_counts, options.mid_gate_px);
  if (models.empty()) {
    throw Error(ErrorCode::kAllTurnsFailed,
                "every turn model was filtered out in stage1");
  }

  const double f_stage1 = models[0].intrinsics.fx;
  BaOptions stage2 = options.sfm.ba;
  stage2.bounds.f_min = (1.0 - options.stage2_focal_band) * f_stage1;
  stage2.bounds.f_max = (1.0 + options.stage2_focal_band) * f_stage1;
  stage2.bounds.cx_min = (0.5 - 0.5 * options.stage2_pp_band) * width;
  stage2.bounds.cx_max = (0.5 + 0.5 * options.stage2_pp_band) * width;
  stage2.bounds.cy_min = (0.5 - 0.5 * options.stage2_pp_band) * height;
  stage2.bounds.cy_max = (0.5 + 0.5 * options.stage2_pp_band) * height;
  bundle_adjust(pointers(models), BaMode::kStage2, stage2);
  prune(models, turn_counts, options.final_inlier_px);
  if (models.empty()) {
    throw Error(ErrorCode::kAllTurnsFailed,
                "every turn model was filtered out in stage2");
  }
  bundle_adjust(pointers(models), BaMode::kStage2, stage2);

  CalibrationResult result;
  result.intrinsics = models[0].intrinsics;
  double sum = 0.0;
  size_t count = 0;
  for (const ReconstructionModel& model : models) {
    for (double e : reprojection_errors(model)) {
      sum += e * e;
      ++count;
    }
  }
  result.final_rms_px = count > 0 ? std::sqrt(sum / count) : 0.0;
  result.turns_used = std::accumulate(turn_counts.begin(), turn_counts.end(), 0);
  result.models = std::move(models);
  return result;
}

CalibrationResult calibrate_sequence(const TrackSet& tracks, int width,
                                     int height,
                                     const CalibrationOptions& options) {
  TrackSetMatchProvider provider(tracks);
  TurnDetectOptions detect = options.detect;
  detect.seed = mix_seed(options.seed, 0x7475726eull);
  const std::vector<TurnSubsequence> turns =
      detect_turns(provider, width, height, detect);
  if (turns.empty()) {
    throw Error(ErrorCode::kAllTurnsFailed, "no turn sub-sequences detected");
  }

  const Intrinsics intr_seed = seed_intrinsics(width, height);
  const int n = static_cast<int>(turns.size());
  std::vector<TurnStatus> statuses(n);
  std::vector<std::optional<ReconstructionModel>> models(n);
  auto run_window = [&](int i) {
    SfmOptions sfm = options.sfm;
    sfm.seed = mix_seed(options.seed, static_cast<uint64_t>(i) + 1);
    TurnStatus& status = statuses[i];
    status.turn = turns[i];
    try {
      ReconstructionModel model =
          calibrate_turn(turns[i], tracks, intr_seed, sfm);
      status.success = true;
      status.registered_frames = static_cast<int>(model.poses.size());
      status.rms_px = reprojection_rms(model);
      models[i] = std::move(model);
    } catch (const std::exception& e) {
      status.message = e.what();
    }
  };

  const int jobs = std::clamp(options.jobs, 1, n);
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) run_window(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> workers;
    workers.reserve(jobs);
    for (int j = 0; j < jobs; ++j) {
      workers.emplace_back([&] {
        for (int i = next++; i < n; i = next++) run_window(i);
      });
    }
    for (std::thread& worker : workers) worker.join();
  }

  std::vector<ReconstructionModel> successful;
  for (int i = 0; i < n; ++i) {
    if (models[i]) successful.push_back(std::move(*models[i]));
  }
  if (successful.empty()) {
    throw Error(ErrorCode::kAllTurnsFailed,
                std::to_string(n) + " turn window(s) detected, none could be "
                                    "reconstructed");
  }
  CalibrationResult result = merge_and_refine(std::move(successful), options);
  result.per_turn = std::move(statuses);
  return result;
}

FocalErrorBound focal_error_bound(double f, double h, double w, double r_y,
                                  double r_x) {
  if (f <= 0.0 || h <= 0.0 || w <= 0.0) {
    throw Error(ErrorCode::kInvalidArgument,
                "focal_error_bound needs positive focal and image size");
  }
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const double scale = 2.0 / std::max(h, w);
  FocalErrorBound bound;
  bound.dfx_px = r_y != 0.0 ? scale * f * f / (w * std::abs(r_y)) : kInf;
  bound.dfy_px = r_x != 0.0 ? scale * f * f / (h * std::abs(r_x)) : kInf;
  return bound;
}

namespace {

// Two views separated by a yaw of r_y and a short baseline, observing
// full-frame random points at road-scene depths. Poses and landmarks start
// at ground truth so the stage1 solve isolates how tightly the rotation
// pins the focal.
ReconstructionModel bound_pair_model(const Intrinsics& gt, double r_y,
                                     uint64_t seed) {
  ReconstructionModel model;
  model.intrinsics = gt;
  Pose b;
  b.rotation = rotation_exp(Eigen::Vector3d(0.0, r_y, 0.0));
  const Eigen::Vector3d center_b(0.4, 0.0, 0.6);
  b.translation = -(b.rotation * center_b);
  model.poses[0] = Pose{};
  model.poses[1] = b;
  model.gauge_frame = 0;
  model.scale_frame = 1;

  Rng rng(seed);
  long track = 0;
  for (int draws = 0; draws < 6000 && track < 400; ++draws) {
    const Eigen::Vector2d px(rng.uniform(0.0, gt.width),
                             rng.uniform(0.0, gt.height));
    const Eigen::Vector3d x =
        undistorted_ray(px, gt) * rng.uniform(8.0, 40.0);
    Eigen::Vector2d pa, pb;
    try {
      pa = project(x, model.poses[0], gt);
      pb = project(x, b, gt);
    } catch (const Error&) {
      continue;
    }
    if (pb.x() < 0.0 || pb.x() > gt.width - 1 || pb.y() < 0.0 ||
        pb.y() > gt.height - 1) {
      continue;
    }
    model.landmarks[track] = x;
    model.observations.push_back({0, track, pa});
    model.observations.push_back({1, track, pb});
    ++track;
  }
  sort_observations(model);
  return model;
}

}  // namespace

BoundReport verify_bound_empirically(const BoundSweepOptions& options) {
  std::vector<double> rotations = options.rotations;
  std::sort(rotations.begin(), rotations.end());
  if (options.include_zero) rotations.insert(rotations.begin(), 0.0);

  Intrinsics gt;
  gt.width = options.width;
  gt.height = options.height;
  gt.fx = gt.fy = options.focal;
  gt.cx = 0.5 * options.width;
  gt.cy = 0.5 * options.height;

  BoundReport report;
  for (size_t i = 0; i < rotations.size(); ++i) {
    const double r_y = rotations[i];
    BoundSample sample;
    sample.r_y = r_y;
    sample.degenerate = r_y == 0.0;
    sample.bound_px =
        focal_error_bound(options.focal, options.height, options.width, r_y,
                          r_y)
            .dfx_px;
    std::vector<double> errors;
    for (int trial = 0; trial < options.trials; ++trial) {
      ReconstructionModel model = bound_pair_model(
          gt, r_y, mix_seed(options.seed, i, static_cast<uint64_t>(trial)));
      model.intrinsics.fx = model.intrinsics.fy =
          options.focal_seed_scale * options.focal;
      BaOptions ba;
      ba.refine_distortion = false;
      try {
        bundle_adjust(model, BaMode::kStage1, ba);
        errors.push_back(std::abs(model.intrinsics.fx - options.focal));
      } catch (const Error&) {
        errors.push_back(std::abs(options.focal_seed_scale - 1.0) *
                         options.focal);
      }
    }
    sample.observed_px =
        std::max(median_of(errors), options.resolution_floor_px);
    report.samples.push_back(sample);
  }

  bool below = true;
  bool monotone = true;
  const BoundSample* prev = nullptr;
  for (const BoundSample& sample : report.samples) {
    if (sample.degenerate) continue;
    below = below && sample.observed_px < sample.bound_px;
    if (prev != nullptr) {
      monotone = monotone && sample.observed_px <= prev->observed_px;
    }
    prev = &sample;
  }
  report.all_below_bound = below;
  report.monotone_non_increasing = monotone;
  return report;
}

}  // namespace autocalib
