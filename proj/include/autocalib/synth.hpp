#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "autocalib/tracks.hpp"
#include "autocalib/types.hpp"

namespace autocalib {

// One planted turn: raised-cosine yaw-rate bump integrating to total_yaw.
struct TurnEvent {
  int apex_frame = 0;
  double total_yaw = 0.0;  // radians, sign picks the direction
  int duration = 34;       // frames
};

struct TrajectorySpec {
  int frame_count = 300;
  double speed = 2.2;          // meters per frame on straight stretches
  double turn_slowdown = 0.5;  // fractional speed dip at a turn apex
  double pitch_jitter = 0.0;   // radians, amplitude of the seeded wobble
  std::vector<TurnEvent> turns;
};

// Landmarks flank the trajectory: corridor walls on both sides plus ground
// points. y points down; the camera travels at y = 0.
struct CorridorSpec {
  double lateral_min = 1.8;
  double lateral_max = 9.0;
  double wall_y_min = -3.5;    // above the camera
  double wall_y_max = 1.0;
  double ground_y = 1.6;       // below the camera
  double ground_fraction = 0.3;
  double visible_depth_min = 2.0;
  double visible_depth_max = 50.0;
};

// Static in-image features simulating a dashboard reflection band at the
// bottom of the frame.
struct DashboardSpec {
  double band_fraction = 0.0;  // of image height, 0 disables
  int feature_count = 0;
  double jitter_px = 0.15;
};

struct SceneSpec {
  Intrinsics gt;
  TrajectorySpec trajectory;
  CorridorSpec corridor;
  DashboardSpec dashboard;
  int landmark_count = 1100;
  double noise_px = 0.0;       // Gaussian pixel noise sigma
  double outlier_rate = 0.0;   // fraction of observations replaced
  uint64_t seed = 1;
};

struct SyntheticScene {
  Intrinsics gt;
  std::vector<Pose> poses;                  // world-to-camera per frame
  std::vector<Eigen::Vector3d> landmarks;   // world points, id = index
  TrackSet tracks;
  std::vector<int> turn_apices;
};

// Heading follows the planted yaw-rate bumps (closed-form integral);
// positions integrate the midpoint heading. Pitch jitter is seeded.
std::vector<Pose> generate_trajectory(const TrajectorySpec& spec,
                                      uint64_t seed);

std::vector<Eigen::Vector3d> generate_landmarks(int count,
                                                const CorridorSpec& corridor,
                                                const std::vector<Pose>& poses,
                                                double speed, uint64_t seed);

// Projects landmarks into every frame (distortion included), keeps
// observations with depth inside the corridor window and inside the image,
// applies seeded noise and uniform in-image outliers.
TrackSet render_observations(const std::vector<Pose>& poses,
                             const std::vector<Eigen::Vector3d>& landmarks,
                             const Intrinsics& gt, const CorridorSpec& corridor,
                             double noise_px, double outlier_rate,
                             uint64_t seed);

SyntheticScene generate_scene(const SceneSpec& spec);

// Places `count` evenly spaced alternating turns over the frame range.
void plant_default_turns(TrajectorySpec* spec, int count, uint64_t seed);

// Writes <dir>/tracks.txt, <dir>/gt.json and, when a dashboard band is
// configured, <dir>/ego_mask.pgm.
void export_scene(const SyntheticScene& scene, const DashboardSpec& dashboard,
                  const std::string& dir);

// Ground-truth sidecar (intrinsics + turn apices) I/O.
void save_scene_gt(const SyntheticScene& scene, const std::string& path);
Intrinsics load_scene_gt(const std::string& path,
                         std::vector<int>* turn_apices = nullptr);

}  // namespace autocalib
