#include "autocalib/synth.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "autocalib/camera.hpp"
#include "autocalib/image.hpp"
#include "autocalib/rng.hpp"

namespace autocalib {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Integral of the raised-cosine rate profile up to phase s in [0, 1].
double bump_integral(double s) {
  return s - std::sin(2.0 * kPi * s) / (2.0 * kPi);
}

// Heading at (possibly fractional) frame time t.
double heading_at(const TrajectorySpec& spec, double t) {
  double psi = 0.0;
  for (const TurnEvent& turn : spec.turns) {
    const double start = turn.apex_frame - 0.5 * turn.duration;
    const double s = (t - start) / turn.duration;
    if (s <= 0.0) continue;
    psi += turn.total_yaw * bump_integral(std::min(1.0, s));
  }
  return psi;
}

// Speed at time t: the vehicle brakes into turns, dipping to
// speed * (1 - turn_slowdown) at the apex.
double speed_at(const TrajectorySpec& spec, double t) {
  double envelope = 0.0;
  for (const TurnEvent& turn : spec.turns) {
    const double s = (t - (turn.apex_frame - 0.5 * turn.duration)) /
                     turn.duration;
    if (s <= 0.0 || s >= 1.0) continue;
    envelope = std::max(envelope, 0.5 * (1.0 - std::cos(2.0 * kPi * s)));
  }
  return spec.speed * (1.0 - spec.turn_slowdown * envelope);
}

Eigen::Matrix3d rot_y(double a) {
  Eigen::Matrix3d r;
  r << std::cos(a), 0.0, std::sin(a),
       0.0, 1.0, 0.0,
       -std::sin(a), 0.0, std::cos(a);
  return r;
}

Eigen::Matrix3d rot_x(double a) {
  Eigen::Matrix3d r;
  r << 1.0, 0.0, 0.0,
       0.0, std::cos(a), -std::sin(a),
       0.0, std::sin(a), std::cos(a);
  return r;
}

}  // namespace

std::vector<Pose> generate_trajectory(const TrajectorySpec& spec,
                                      uint64_t seed) {
  if (spec.frame_count < 2) {
    throw Error(ErrorCode::kInvalidArgument,
                "generate_trajectory: need at least 2 frames");
  }
  Rng rng(mix_seed(seed, 0x7472616au));
  const double phase1 = rng.uniform(0.0, 2.0 * kPi);
  const double phase2 = rng.uniform(0.0, 2.0 * kPi);

  std::vector<Pose> poses(spec.frame_count);
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  for (int t = 0; t < spec.frame_count; ++t) {
    const double psi = heading_at(spec, t);
    const double pitch =
        spec.pitch_jitter * (std::sin(2.0 * kPi * t / 17.0 + phase1) +
                             0.6 * std::sin(2.0 * kPi * t / 41.0 + phase2));
    const Eigen::Matrix3d cam_to_world = rot_y(psi) * rot_x(pitch);
    poses[t].rotation = cam_to_world.transpose();
    poses[t].translation = -poses[t].rotation * position;
    // Advance along the midpoint heading at the midpoint speed.
    const double psi_mid = heading_at(spec, t + 0.5);
    position += speed_at(spec, t + 0.5) *
                Eigen::Vector3d(std::sin(psi_mid), 0.0, std::cos(psi_mid));
  }
  return poses;
}

std::vector<Eigen::Vector3d> generate_landmarks(int count,
                                                const CorridorSpec& corridor,
                                                const std::vector<Pose>& poses,
                                                double speed, uint64_t seed) {
  Rng rng(mix_seed(seed, 0x6c616e64u));
  std::vector<Eigen::Vector3d> landmarks;
  landmarks.reserve(count);
  const int n = static_cast<int>(poses.size());
  for (int i = 0; i < count; ++i) {
    // Anchor near a random frame; offsets reach backward so close-range
    // structure also flanks the first frames of the sequence. Reflecting
    // pre-roll anchors keeps the density at the start of the drive from
    // halving (a real recording starts mid-traffic, not at a scene edge).
    double t = rng.uniform(-30.0, n - 1.0);
    if (t < 0.0) t = -t;
    t = std::min(t, n - 1.0);
    const int t0 = static_cast<int>(t);
    const Eigen::Vector3d center = poses[t0].center();
    const Eigen::Matrix3d cam_to_world = poses[t0].rotation.transpose();
    const Eigen::Vector3d forward = cam_to_world.col(2);
    const Eigen::Vector3d right = cam_to_world.col(0);
    const double ahead = rng.uniform(-0.3 * corridor.visible_depth_max,
                                     0.75 * corridor.visible_depth_max) +
                         speed * (t - t0);
    const double side = (rng.uniform() < 0.5 ? -1.0 : 1.0) *
                        rng.uniform(corridor.lateral_min, corridor.lateral_max);
    double y;
    if (rng.uniform() < corridor.ground_fraction) {
      y = corridor.ground_y * rng.uniform(0.85, 1.0);
    } else {
      y = rng.uniform(corridor.wall_y_min, corridor.wall_y_max);
    }
    Eigen::Vector3d p = center + ahead * forward + side * right;
    p.y() = y;
    landmarks.push_back(p);
  }
  return landmarks;
}

TrackSet render_observations(const std::vector<Pose>& poses,
                             const std::vector<Eigen::Vector3d>& landmarks,
                             const Intrinsics& gt, const CorridorSpec& corridor,
                             double noise_px, double outlier_rate,
                             uint64_t seed) {
  gt.validate();
  TrackSet tracks;
  for (size_t l = 0; l < landmarks.size(); ++l) {
    for (size_t f = 0; f < poses.size(); ++f) {
      const Eigen::Vector3d pc =
          poses[f].rotation * landmarks[l] + poses[f].translation;
      if (pc.z() < corridor.visible_depth_min ||
          pc.z() > corridor.visible_depth_max) {
        continue;
      }
      Eigen::Vector2d px;
      try {
        px = project(landmarks[l], poses[f], gt);
      } catch (const Error&) {
        continue;
      }
      if (px.x() < 0.0 || px.x() >= gt.width || px.y() < 0.0 ||
          px.y() >= gt.height) {
        continue;
      }
      Rng obs_rng(mix_seed(seed, l, f));
      if (outlier_rate > 0.0 && obs_rng.uniform() < outlier_rate) {
        px.x() = obs_rng.uniform(0.0, gt.width - 1.0);
        px.y() = obs_rng.uniform(0.0, gt.height - 1.0);
      } else if (noise_px > 0.0) {
        px.x() += noise_px * obs_rng.normal();
        px.y() += noise_px * obs_rng.normal();
        if (px.x() < 0.0 || px.x() >= gt.width || px.y() < 0.0 ||
            px.y() >= gt.height) {
          continue;  // noise pushed the detection off the sensor
        }
      }
      tracks.add(static_cast<long>(l), static_cast<int>(f), px);
    }
  }
  tracks.prune_short_tracks();
  tracks.set_frame_count(static_cast<int>(poses.size()));
  return tracks;
}

void plant_default_turns(TrajectorySpec* spec, int count, uint64_t seed) {
  spec->turns.clear();
  if (count <= 0) return;
  Rng rng(mix_seed(seed, 0x7475726eu));
  const int margin = 38;
  const int span = spec->frame_count - 2 * margin;
  for (int i = 0; i < count; ++i) {
    TurnEvent turn;
    turn.apex_frame =
        margin + (count == 1 ? span / 2 : span * i / (count - 1));
    const double sign = (i % 2 == 0) ? 1.0 : -1.0;
    turn.total_yaw = sign * rng.uniform(1.2, 1.57);
    turn.duration = 22 + rng.index(3);
    spec->turns.push_back(turn);
  }
}

SyntheticScene generate_scene(const SceneSpec& spec) {
  SyntheticScene scene;
  scene.gt = spec.gt;
  scene.poses = generate_trajectory(spec.trajectory, spec.seed);
  scene.landmarks =
      generate_landmarks(spec.landmark_count, spec.corridor, scene.poses,
                         spec.trajectory.speed, mix_seed(spec.seed, 1));
  scene.tracks = render_observations(scene.poses, scene.landmarks, spec.gt,
                                     spec.corridor, spec.noise_px,
                                     spec.outlier_rate, mix_seed(spec.seed, 2));
  for (const TurnEvent& t : spec.trajectory.turns) {
    scene.turn_apices.push_back(t.apex_frame);
  }

  if (spec.dashboard.band_fraction > 0.0 && spec.dashboard.feature_count > 0) {
    Rng rng(mix_seed(spec.seed, 3));
    const double band_top =
        spec.gt.height * (1.0 - spec.dashboard.band_fraction);
    long next_id = static_cast<long>(spec.landmark_count);
    for (int i = 0; i < spec.dashboard.feature_count; ++i) {
      const double bx = rng.uniform(2.0, spec.gt.width - 3.0);
      const double by = rng.uniform(band_top + 1.0, spec.gt.height - 2.0);
      for (size_t f = 0; f < scene.poses.size(); ++f) {
        Rng obs_rng(mix_seed(spec.seed, 0xda5bu + i, f));
        const double jx = spec.dashboard.jitter_px * obs_rng.normal();
        const double jy = spec.dashboard.jitter_px * obs_rng.normal();
        scene.tracks.add(next_id, static_cast<int>(f), {bx + jx, by + jy});
      }
      ++next_id;
    }
  }
  return scene;
}

void save_scene_gt(const SyntheticScene& scene, const std::string& path) {
  nlohmann::ordered_json j;
  j["intrinsics"] = {
      {"fx", scene.gt.fx}, {"fy", scene.gt.fy}, {"cx", scene.gt.cx},
      {"cy", scene.gt.cy}, {"k1", scene.gt.k1}, {"k2", scene.gt.k2},
      {"width", scene.gt.width}, {"height", scene.gt.height}};
  j["turn_apices"] = scene.turn_apices;
  j["frame_count"] = static_cast<int>(scene.poses.size());
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot write " + path);
  }
  out << j.dump(2) << "\n";
}

Intrinsics load_scene_gt(const std::string& path,
                         std::vector<int>* turn_apices) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot read " + path);
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, path + ": " + e.what());
  }
  Intrinsics intr;
  try {
    const auto& ji = j.at("intrinsics");
    intr.fx = ji.at("fx").get<double>();
    intr.fy = ji.at("fy").get<double>();
    intr.cx = ji.at("cx").get<double>();
    intr.cy = ji.at("cy").get<double>();
    intr.k1 = ji.at("k1").get<double>();
    intr.k2 = ji.at("k2").get<double>();
    intr.width = ji.at("width").get<int>();
    intr.height = ji.at("height").get<int>();
    if (turn_apices && j.contains("turn_apices")) {
      *turn_apices = j.at("turn_apices").get<std::vector<int>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, path + ": " + e.what());
  }
  intr.validate();
  return intr;
}

void export_scene(const SyntheticScene& scene, const DashboardSpec& dashboard,
                  const std::string& dir) {
  std::filesystem::create_directories(dir);
  save_correspondences(scene.tracks, dir + "/tracks.txt");
  save_scene_gt(scene, dir + "/gt.json");
  if (dashboard.band_fraction > 0.0 && dashboard.feature_count > 0) {
    Image mask(scene.gt.width, scene.gt.height, 0);
    const int band_top = static_cast<int>(
        scene.gt.height * (1.0 - dashboard.band_fraction));
    for (int y = band_top; y < scene.gt.height; ++y) {
      for (int x = 0; x < scene.gt.width; ++x) {
        mask.at(x, y) = 255;
      }
    }
    write_pgm(mask, dir + "/ego_mask.pgm");
  }
}

}  // namespace autocalib
