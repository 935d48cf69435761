#include "autocalib/reconstruction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "autocalib/camera.hpp"
#include "autocalib/rng.hpp"

namespace autocalib {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double median_of(std::vector<double> values) {
  const size_t n = values.size();
  if (n == 0) return 0.0;
  auto mid = values.begin() + n / 2;
  std::nth_element(values.begin(), mid, values.end());
  if (n % 2 == 1) return *mid;
  const double upper = *mid;
  return 0.5 * (*std::max_element(values.begin(), mid) + upper);
}

// Pixel reprojection error; +inf when the point falls behind the camera.
double reprojection_error(const Eigen::Vector3d& x, const Pose& pose,
                          const Intrinsics& intr,
                          const Eigen::Vector2d& pixel) {
  try {
    return (project(x, pose, intr) - pixel).norm();
  } catch (const Error&) {
    return kInf;
  }
}

double cauchy_cost(double squared_norm, double c2) {
  return 0.5 * c2 * std::log1p(squared_norm / c2);
}

// DLT resection from undistorted normalized rays (z = 1 dropped). Both
// domains are Hartley-normalized before the linear solve. Throws
// kDegenerateConfiguration on collapsed samples or a rank-deficient camera.
Pose dlt_resection(const std::vector<Eigen::Vector2d>& rays,
                   const std::vector<Eigen::Vector3d>& points) {
  const int n = static_cast<int>(rays.size());

  Eigen::Vector2d c2 = Eigen::Vector2d::Zero();
  Eigen::Vector3d c3 = Eigen::Vector3d::Zero();
  for (int i = 0; i < n; ++i) {
    c2 += rays[i];
    c3 += points[i];
  }
  c2 /= n;
  c3 /= n;
  double d2 = 0.0;
  double d3 = 0.0;
  for (int i = 0; i < n; ++i) {
    d2 += (rays[i] - c2).norm();
    d3 += (points[i] - c3).norm();
  }
  d2 /= n;
  d3 /= n;
  if (d2 < 1e-12 || d3 < 1e-12) {
    throw Error(ErrorCode::kDegenerateConfiguration,
                "resection sample collapsed");
  }
  const double s2 = std::sqrt(2.0) / d2;
  const double s3 = std::sqrt(3.0) / d3;

  Eigen::MatrixXd a(2 * n, 12);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d u = s2 * (rays[i] - c2);
    const Eigen::Vector3d x = s3 * (points[i] - c3);
    a.row(2 * i) << x.x(), x.y(), x.z(), 1, 0, 0, 0, 0, -u.x() * x.x(),
        -u.x() * x.y(), -u.x() * x.z(), -u.x();
    a.row(2 * i + 1) << 0, 0, 0, 0, x.x(), x.y(), x.z(), 1, -u.y() * x.x(),
        -u.y() * x.y(), -u.y() * x.z(), -u.y();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd p = svd.matrixV().col(11);
  Eigen::Matrix<double, 3, 4> hat;
  hat << p.segment<4>(0).transpose(), p.segment<4>(4).transpose(),
      p.segment<4>(8).transpose();

  Eigen::Matrix3d t2_inv = Eigen::Matrix3d::Identity();
  t2_inv(0, 0) = t2_inv(1, 1) = 1.0 / s2;
  t2_inv(0, 2) = c2.x();
  t2_inv(1, 2) = c2.y();
  Eigen::Matrix4d t3 = Eigen::Matrix4d::Identity();
  t3.topLeftCorner<3, 3>() *= s3;
  t3.topRightCorner<3, 1>() = -s3 * c3;

  const Eigen::Matrix<double, 3, 4> cam = t2_inv * hat * t3;
  const Eigen::Matrix3d m = cam.leftCols<3>();
  const double det = m.determinant();
  if (!std::isfinite(det) || std::abs(det) < 1e-30) {
    throw Error(ErrorCode::kDegenerateConfiguration,
                "rank-deficient resection");
  }
  // cbrt keeps the sign, so the same scale factor fixes both the projective
  // scale and the cheirality of the decomposition.
  const double lambda = std::cbrt(det);
  return {project_to_rotation(m / lambda), cam.col(3) / lambda};
}

}  // namespace

SceneGraph build_scene_graph(const TurnSubsequence& window,
                             const TrackSet& tracks,
                             const SfmOptions& options) {
  if (window.first > window.last) {
    throw Error(ErrorCode::kInvalidArgument, "inverted subsequence window");
  }
  SceneGraph graph;
  graph.first = window.first;
  graph.last = window.last;
  graph.center = std::clamp(window.center, window.first, window.last);

  for (const auto& [track_id, obs] : tracks.tracks()) {
    int inside = 0;
    for (const TrackObservation& o : obs) {
      if (o.frame >= window.first && o.frame <= window.last) ++inside;
    }
    if (inside < 2) continue;
    for (const TrackObservation& o : obs) {
      if (o.frame >= window.first && o.frame <= window.last) {
        graph.tracks.add(track_id, o.frame, o.position);
      }
    }
  }
  graph.tracks.set_frame_count(window.last + 1);

  std::set<int> frames;
  for (const auto& [track_id, obs] : graph.tracks.tracks()) {
    for (const TrackObservation& o : obs) frames.insert(o.frame);
  }
  graph.frames.assign(frames.begin(), frames.end());
  if (graph.frames.size() < 2) {
    throw Error(ErrorCode::kEmptyGraph,
                "subsequence has fewer than two tracked frames");
  }

  for (size_t i = 0; i < graph.frames.size(); ++i) {
    for (size_t j = i + 1; j < graph.frames.size(); ++j) {
      const int fi = graph.frames[i];
      const int fj = graph.frames[j];
      if (fj - fi > options.max_pair_gap) break;
      const std::vector<Match> matches = graph.tracks.matches_between(fi, fj);
      if (matches.size() < 8) continue;
      RansacOptions ransac;
      ransac.threshold_px = options.ransac_threshold_px;
      ransac.max_iters = options.ransac_max_iters;
      ransac.seed = mix_seed(options.seed, static_cast<uint64_t>(fi),
                             static_cast<uint64_t>(fj));
      FundamentalEstimate estimate;
      try {
        estimate = ransac_fundamental(matches, ransac);
      } catch (const Error&) {
        continue;  // degenerate or unstable pair; the graph just skips it
      }
      SceneGraphEdge edge;
      edge.frame_i = fi;
      edge.frame_j = fj;
      edge.f = estimate.f;
      edge.inliers.reserve(estimate.inlier_ids.size());
      for (int id : estimate.inlier_ids) edge.inliers.push_back(matches[id]);
      graph.edges.push_back(std::move(edge));
    }
  }
  if (graph.edges.empty()) {
    throw Error(ErrorCode::kEmptyGraph, "no verifiable frame pair");
  }
  return graph;
}

ReconstructionModel initialize_pair(const SceneGraph& graph,
                                    const Intrinsics& intr_seed,
                                    const SfmOptions& options) {
  struct Candidate {
    const SceneGraphEdge* edge = nullptr;
    Pose pose_j;
    std::vector<std::pair<const Match*, Eigen::Vector3d>> points;
    double score = -1.0;
  };
  Candidate best;

  const Pose identity;
  // A two-view estimate claiming more rotation than a vehicle can physically
  // turn between the frames is a RANSAC hallucination on a near-degenerate
  // (short-baseline) pair; seeding from it would poison the model.
  constexpr double kMaxRotationPerFrame = 0.12;
  const auto consider = [&](const SceneGraphEdge& edge) {
    Pose rel;
    try {
      const Eigen::Matrix3d e = essential_from_fundamental(edge.f, intr_seed);
      rel = recover_pose(e, edge.inliers, intr_seed);
    } catch (const Error&) {
      return;
    }
    const double rotation_rad = rotation_log(rel.rotation).norm();
    if (rotation_rad > kMaxRotationPerFrame * (edge.frame_j - edge.frame_i)) {
      return;
    }
    std::vector<std::pair<const Match*, Eigen::Vector3d>> points;
    std::vector<double> parallax;
    for (const Match& m : edge.inliers) {
      Eigen::Vector3d x;
      try {
        x = triangulate(identity, rel, intr_seed, m.p_i, m.p_j, 0.0);
      } catch (const Error&) {
        continue;
      }
      if (!x.allFinite() || x.z() <= 0.0) continue;
      if ((rel.rotation * x + rel.translation).z() <= 0.0) continue;
      points.emplace_back(&m, x);
      parallax.push_back(
          ray_parallax_deg(identity, rel, intr_seed, m.p_i, m.p_j));
    }
    // Viability counts every cheirality-positive triangulation; conditioning
    // is judged on the median parallax of the pair, not point by point, so a
    // close pair with many well-shared tracks is not starved by its far field.
    if (static_cast<int>(points.size()) < options.min_seed_points) return;
    const double med = median_of(parallax);
    if (med < options.min_seed_parallax_deg) return;
    // Rotation-first: a seed committed to a straight stretch locks the model
    // into a miscalibrated self-consistent optimum, so the measured relative
    // rotation (the quantity that makes the focal observable) leads the
    // score, weighted by triangulation support.
    const double score = rotation_rad * static_cast<double>(points.size()) * med;
    if (score > best.score) {
      best.edge = &edge;
      best.pose_j = rel;
      best.points = std::move(points);
      best.score = score;
    }
  };
  for (const SceneGraphEdge& edge : graph.edges) consider(edge);
  if (best.edge == nullptr) {
    throw Error(ErrorCode::kNoViablePair,
                "no pair triangulates enough points with parallax");
  }

  ReconstructionModel model;
  model.intrinsics = intr_seed;
  model.poses[best.edge->frame_i] = identity;
  model.poses[best.edge->frame_j] = best.pose_j;
  model.gauge_frame = best.edge->frame_i;
  model.scale_frame = best.edge->frame_j;

  const double gate_px = options.growth_gate_frac * intr_seed.diagonal();
  for (const auto& [match, x] : best.points) {
    // Landmarks, unlike viability counts, need per-point conditioning: a
    // low-parallax triangulation has unbounded depth variance.
    if (ray_parallax_deg(identity, best.pose_j, intr_seed, match->p_i,
                         match->p_j) < options.min_point_parallax_deg) {
      continue;
    }
    if (reprojection_error(x, identity, intr_seed, match->p_i) > gate_px ||
        reprojection_error(x, best.pose_j, intr_seed, match->p_j) > gate_px) {
      continue;
    }
    model.landmarks[match->track_id] = x;
    model.observations.push_back(
        {best.edge->frame_i, match->track_id, match->p_i});
    model.observations.push_back(
        {best.edge->frame_j, match->track_id, match->p_j});
  }
  sort_observations(model);
  return model;
}

void register_next(ReconstructionModel& model, const SceneGraph& graph,
                   const SfmOptions& options) {
  if (model.poses.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "model has no registered pose");
  }
  std::map<int, std::vector<PnpCorrespondence>> per_frame;
  for (const auto& [track_id, obs] : graph.tracks.tracks()) {
    const auto landmark = model.landmarks.find(track_id);
    if (landmark == model.landmarks.end()) continue;
    for (const TrackObservation& o : obs) {
      if (model.poses.count(o.frame)) continue;
      per_frame[o.frame].push_back({track_id, o.position, landmark->second});
    }
  }
  std::vector<int> candidates;
  for (const auto& [frame, corrs] : per_frame) {
    if (corrs.size() >= 6) candidates.push_back(frame);
  }
  if (candidates.empty()) {
    throw Error(ErrorCode::kNoRegistrableFrame,
                "no unregistered frame sees enough landmarks");
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&per_frame](int a, int b) {
                     return per_frame[a].size() > per_frame[b].size();
                   });

  const double gate_px =
      options.growth_gate_frac * model.intrinsics.diagonal();
  // The seed pair reprojects exactly even under a badly wrong focal seed
  // (the essential matrix inherits the fundamental's pixel consistency), so
  // the model RMS says nothing about three-view consistency until a third
  // camera joins. The first resection therefore gets the full growth gate;
  // afterwards the threshold tracks the model's error level with a floor of
  // the mid gate, since frontier frames feel residual miscalibration harder
  // than the already-adjusted interior.
  double threshold =
      std::max({options.pnp_threshold_px, options.mid_gate_px,
                2.5 * reprojection_rms(model)});
  if (model.poses.size() == 2) threshold = gate_px;
  threshold = std::min(threshold, gate_px);

  // Frontier frames of a still-miscalibrated model can sit beyond the tight
  // threshold while the periodic refinement is mid-correction; rather than
  // stall the march, retry everyone at escalating tolerances up to the
  // growth gate and let the next refinement absorb the slack.
  std::vector<double> ladder = {threshold, std::min(4.0 * threshold, gate_px),
                                gate_px};
  ladder.erase(std::unique(ladder.begin(), ladder.end()), ladder.end());
  for (double rung : ladder) {
    for (int frame : candidates) {
      const std::vector<PnpCorrespondence>& corrs = per_frame[frame];
      PnpOptions pnp;
      pnp.threshold_px = rung;
      pnp.max_iters = options.pnp_max_iters;
      pnp.seed =
          mix_seed(options.seed, static_cast<uint64_t>(frame), 0x505350);
      PnpResult result;
      try {
        result = solve_pnp_ransac(corrs, model.intrinsics, pnp);
      } catch (const Error&) {
        continue;
      }
      model.poses[frame] = result.pose;
      for (const PnpCorrespondence& c : corrs) {
        if (reprojection_error(c.point, result.pose, model.intrinsics,
                               c.pixel) <= gate_px) {
          model.observations.push_back({frame, c.track_id, c.pixel});
        }
      }
      sort_observations(model);
      return;
    }
  }
  throw Error(ErrorCode::kNoRegistrableFrame,
              "resection failed for every candidate frame");
}

int admit_landmarks(ReconstructionModel& model, const SceneGraph& graph,
                    double gate_px, const SfmOptions& options) {
  int admitted = 0;
  for (const auto& [track_id, obs] : graph.tracks.tracks()) {
    if (model.landmarks.count(track_id)) continue;
    std::vector<const TrackObservation*> registered;
    for (const TrackObservation& o : obs) {
      if (model.poses.count(o.frame)) registered.push_back(&o);
    }
    const int n = static_cast<int>(registered.size());
    if (n < 2) continue;

    // Best-parallax pair among the endpoints and a few nested pairs; wide
    // baselines triangulate well but the endpoints are not always widest.
    double best_parallax = -1.0;
    int best_a = 0;
    int best_b = 0;
    for (int k = 0; k <= 5; ++k) {
      const int a = k * (n - 1) / 12;
      const int b = (n - 1) - a;
      if (a >= b || (k > 0 && a == (k - 1) * (n - 1) / 12)) continue;
      const double parallax = ray_parallax_deg(
          model.poses.at(registered[a]->frame),
          model.poses.at(registered[b]->frame), model.intrinsics,
          registered[a]->position, registered[b]->position);
      if (parallax > best_parallax) {
        best_parallax = parallax;
        best_a = a;
        best_b = b;
      }
    }
    if (best_parallax < options.min_point_parallax_deg) continue;

    Eigen::Vector3d x;
    try {
      x = triangulate(model.poses.at(registered[best_a]->frame),
                      model.poses.at(registered[best_b]->frame),
                      model.intrinsics, registered[best_a]->position,
                      registered[best_b]->position,
                      options.min_point_parallax_deg);
    } catch (const Error&) {
      continue;
    }

    std::vector<double> errors;
    errors.reserve(registered.size());
    bool behind = false;
    for (const TrackObservation* o : registered) {
      const double err = reprojection_error(x, model.poses.at(o->frame),
                                            model.intrinsics, o->position);
      if (!std::isfinite(err)) {
        behind = true;
        break;
      }
      errors.push_back(err);
    }
    if (behind || median_of(errors) > gate_px) continue;

    std::vector<const TrackObservation*> kept;
    for (size_t i = 0; i < registered.size(); ++i) {
      if (errors[i] <= gate_px) kept.push_back(registered[i]);
    }
    if (kept.size() < 2) continue;
    model.landmarks[track_id] = x;
    for (const TrackObservation* o : kept) {
      model.observations.push_back({o->frame, track_id, o->position});
    }
    ++admitted;
  }
  if (admitted > 0) sort_observations(model);
  return admitted;
}

PnpResult solve_pnp_ransac(std::span<const PnpCorrespondence> corrs,
                           const Intrinsics& intr, const PnpOptions& options) {
  const int n = static_cast<int>(corrs.size());
  std::vector<int> usable;
  std::vector<Eigen::Vector2d> rays(corrs.size());
  for (int i = 0; i < n; ++i) {
    try {
      rays[i] = undistorted_ray(corrs[i].pixel, intr).head<2>();
      usable.push_back(i);
    } catch (const Error&) {
      // unrecoverable distortion inversion: unusable for the linear solve
    }
  }
  const int m = static_cast<int>(usable.size());
  if (m < 6) {
    throw Error(ErrorCode::kInsufficientMatches,
                "resection needs six usable correspondences");
  }

  const auto count_inliers = [&](const Pose& pose) {
    int count = 0;
    for (int i = 0; i < n; ++i) {
      if (reprojection_error(corrs[i].point, pose, intr, corrs[i].pixel) <=
          options.threshold_px) {
        ++count;
      }
    }
    return count;
  };

  Rng rng(options.seed);
  Pose best_pose;
  int best_count = 0;
  int iters_needed = options.max_iters;
  std::vector<Eigen::Vector2d> sample_rays(6);
  std::vector<Eigen::Vector3d> sample_points(6);
  for (int it = 0; it < iters_needed; ++it) {
    // Partial Fisher-Yates over the usable ids; reusing the permuted order
    // across iterations keeps each sample uniform without copies.
    for (int k = 0; k < 6; ++k) {
      std::swap(usable[k], usable[k + rng.index(m - k)]);
      sample_rays[k] = rays[usable[k]];
      sample_points[k] = corrs[usable[k]].point;
    }
    Pose pose;
    try {
      pose = dlt_resection(sample_rays, sample_points);
    } catch (const Error&) {
      continue;
    }
    const int count = count_inliers(pose);
    if (count <= best_count) continue;
    best_count = count;
    best_pose = pose;
    const double inlier_frac = static_cast<double>(count) / n;
    const double miss = 1.0 - std::pow(inlier_frac, 6);
    if (miss <= 1e-12) {
      iters_needed = it + 1;
    } else {
      const double needed = std::min(
          static_cast<double>(options.max_iters),
          std::ceil(std::log(1.0 - options.confidence) / std::log(miss)));
      iters_needed = std::max(it + 1, static_cast<int>(needed));
    }
  }
  if (best_count < options.min_inliers) {
    throw Error(ErrorCode::kNoConsensus, "resection consensus too small");
  }

  std::vector<PnpCorrespondence> consensus;
  consensus.reserve(best_count);
  for (int i = 0; i < n; ++i) {
    if (reprojection_error(corrs[i].point, best_pose, intr, corrs[i].pixel) <=
        options.threshold_px) {
      consensus.push_back(corrs[i]);
    }
  }
  const Pose refined =
      refine_pose(best_pose, consensus, intr, options.threshold_px);
  if (count_inliers(refined) >= best_count) best_pose = refined;

  PnpResult result;
  result.pose = best_pose;
  for (int i = 0; i < n; ++i) {
    if (reprojection_error(corrs[i].point, best_pose, intr, corrs[i].pixel) <=
        options.threshold_px) {
      result.inlier_ids.push_back(i);
    }
  }
  if (static_cast<int>(result.inlier_ids.size()) < options.min_inliers) {
    throw Error(ErrorCode::kNoConsensus, "resection consensus too small");
  }
  return result;
}

Pose refine_pose(const Pose& initial,
                 std::span<const PnpCorrespondence> corrs,
                 const Intrinsics& intr, double cauchy_scale_px,
                 int max_iters) {
  const double c2 = cauchy_scale_px * cauchy_scale_px;
  const auto total_cost = [&](const Pose& pose) {
    double cost = 0.0;
    for (const PnpCorrespondence& c : corrs) {
      Eigen::Vector2d r;
      if (!project_residual(pose, c.point, intr, c.pixel, &r)) return kInf;
      cost += cauchy_cost(r.squaredNorm(), c2);
    }
    return cost;
  };

  Pose pose = initial;
  double cost = total_cost(pose);
  if (!std::isfinite(cost)) return pose;
  double lambda = 1e-3;
  for (int it = 0; it < max_iters; ++it) {
    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    for (const PnpCorrespondence& c : corrs) {
      Eigen::Vector2d r;
      Eigen::Matrix<double, 2, 6> j;
      if (!project_residual(pose, c.point, intr, c.pixel, &r, &j)) continue;
      const double w = 1.0 / (1.0 + r.squaredNorm() / c2);
      h.noalias() += w * j.transpose() * j;
      g.noalias() += w * j.transpose() * r;
    }
    if (g.lpNorm<Eigen::Infinity>() < 1e-14) break;

    bool accepted = false;
    for (int attempt = 0; attempt < 8 && !accepted; ++attempt) {
      Eigen::Matrix<double, 6, 6> damped = h;
      damped.diagonal() += lambda * h.diagonal().cwiseMax(1e-12);
      const Eigen::LLT<Eigen::Matrix<double, 6, 6>> llt(damped);
      if (llt.info() != Eigen::Success) {
        lambda *= 10.0;
        continue;
      }
      const Eigen::Matrix<double, 6, 1> delta = llt.solve(-g);
      Pose trial{rotation_exp(delta.head<3>()) * pose.rotation,
                 pose.translation + delta.tail<3>()};
      const double trial_cost = total_cost(trial);
      if (trial_cost < cost) {
        trial.rotation = project_to_rotation(trial.rotation);
        pose = trial;
        cost = trial_cost;
        lambda = std::max(lambda * 0.1, 1e-12);
        accepted = true;
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted) break;
  }
  return pose;
}

Intrinsics seed_intrinsics(int width, int height) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "non-positive image size");
  }
  Intrinsics intr;
  intr.fx = intr.fy = 1.2 * std::max(width, height);
  intr.cx = 0.5 * width;
  intr.cy = 0.5 * height;
  intr.width = width;
  intr.height = height;
  return intr;
}

double total_rotation(const ReconstructionModel& model) {
  if (model.poses.empty()) return 0.0;
  const Eigen::Matrix3d r0 = model.poses.begin()->second.rotation;
  double max_angle = 0.0;
  for (const auto& [frame, pose] : model.poses) {
    max_angle = std::max(
        max_angle, rotation_log(pose.rotation * r0.transpose()).norm());
  }
  return max_angle;
}

ReconstructionModel calibrate_turn(const TurnSubsequence& window,
                                   const TrackSet& tracks,
                                   const Intrinsics& intr_seed,
                                   const SfmOptions& options) {
  try {
    const SceneGraph graph = build_scene_graph(window, tracks, options);
    ReconstructionModel model = initialize_pair(graph, intr_seed, options);

    const double gate_px = options.growth_gate_frac * intr_seed.diagonal();
    BaOptions mid_ba = options.ba;
    mid_ba.max_iterations = std::min(options.ba.max_iterations, 25);

    int registrations = 0;
    while (true) {
      try {
        register_next(model, graph, options);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kNoRegistrableFrame) break;
        throw;
      }
      ++registrations;
      admit_landmarks(model, graph, gate_px, options);
      if (registrations % options.ba_cadence == 0) {
        // Self-calibrating refinement: freeing the tied focal here is what
        // lets later resections run against consistent geometry.
        filter_observations(model, gate_px);
        bundle_adjust(model, BaMode::kStage1, mid_ba);
        filter_observations(model, gate_px);
        admit_landmarks(model, graph, gate_px, options);
      }
    }

    filter_observations(model, gate_px);
    bundle_adjust(model, BaMode::kStage1, options.ba);
    filter_observations(model, options.mid_gate_px);
    admit_landmarks(model, graph, options.mid_gate_px, options);
    bundle_adjust(model, BaMode::kStage1, options.ba);
    filter_observations(model, options.mid_gate_px);

    const double coverage = static_cast<double>(model.poses.size()) /
                            static_cast<double>(graph.frames.size());
    if (coverage < options.min_registered_fraction) {
      throw Error(ErrorCode::kTurnFailed,
                  "registered " + std::to_string(model.poses.size()) +
                      " of " + std::to_string(graph.frames.size()) +
                      " frames");
    }
    const double rotation = total_rotation(model);
    if (rotation < options.min_total_rotation_rad) {
      throw Error(ErrorCode::kTurnFailed,
                  "total rotation " + std::to_string(rotation) +
                      " rad leaves the focal unobservable");
    }
    return model;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kTurnFailed) throw;
    throw Error(ErrorCode::kTurnFailed,
                "turn at frame " + std::to_string(window.center) +
                    " failed: " + e.what());
  }
}

}  // namespace autocalib
