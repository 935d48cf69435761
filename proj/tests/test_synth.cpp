#include "autocalib/synth.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include <gtest/gtest.h>

#include "autocalib/camera.hpp"
#include "autocalib/image.hpp"
#include "test_util.hpp"

using namespace autocalib;
using namespace autocalib::testutil;

namespace {

double heading_of(const Pose& pose) {
  const Eigen::Vector3d forward = pose.rotation.transpose().col(2);
  return std::atan2(forward.x(), forward.z());
}

SceneSpec base_spec() {
  SceneSpec spec;
  spec.gt = simple_intrinsics(800, 400, 700.0);
  spec.gt.cx = 398.0;
  spec.gt.cy = 203.0;
  spec.gt.k1 = -0.3;
  spec.gt.k2 = 0.1;
  spec.trajectory.frame_count = 120;
  spec.landmark_count = 400;
  spec.seed = 33;
  return spec;
}

}  // namespace

TEST(Trajectory, TurnIntegratesToTotalYaw) {
  TrajectorySpec spec;
  spec.frame_count = 100;
  spec.turns = {TurnEvent{50, 0.9, 30}};
  const std::vector<Pose> poses = generate_trajectory(spec, 1);
  ASSERT_EQ(poses.size(), 100u);
  EXPECT_NEAR(heading_of(poses[20]), 0.0, 1e-12);
  EXPECT_NEAR(heading_of(poses[90]), 0.9, 1e-9);
  // Half the yaw is done at the apex.
  EXPECT_NEAR(heading_of(poses[50]), 0.45, 1e-9);
}

TEST(Trajectory, StraightSegmentsDoNotRotate) {
  TrajectorySpec spec;
  spec.frame_count = 60;
  const std::vector<Pose> poses = generate_trajectory(spec, 2);
  for (int t = 1; t < 60; ++t) {
    const Pose rel = poses[t].relative_to(poses[t - 1]);
    EXPECT_LT(rotation_log(rel.rotation).norm(), 1e-12);
  }
}

TEST(Trajectory, SpeedIsMetersPerFrame) {
  TrajectorySpec spec;
  spec.frame_count = 80;
  spec.speed = 0.8;
  spec.turn_slowdown = 0.0;
  spec.turns = {TurnEvent{40, 1.2, 30}};
  const std::vector<Pose> poses = generate_trajectory(spec, 3);
  for (int t = 1; t < 80; ++t) {
    EXPECT_NEAR((poses[t].center() - poses[t - 1].center()).norm(), 0.8,
                1e-12);
  }
}

TEST(Trajectory, VehicleBrakesIntoTurns) {
  TrajectorySpec spec;
  spec.frame_count = 80;
  spec.speed = 0.8;
  spec.turn_slowdown = 0.5;
  spec.turns = {TurnEvent{40, 1.2, 30}};
  const std::vector<Pose> poses = generate_trajectory(spec, 3);
  double min_step = 1e9;
  for (int t = 1; t < 80; ++t) {
    const double step = (poses[t].center() - poses[t - 1].center()).norm();
    if (t <= 24 || t >= 57) {
      EXPECT_NEAR(step, 0.8, 1e-12);  // outside the bump: full speed
    } else {
      EXPECT_LT(step, 0.8 + 1e-12);
    }
    min_step = std::min(min_step, step);
  }
  // The apex dip reaches speed * (1 - slowdown).
  EXPECT_NEAR(min_step, 0.4, 0.002);
}

TEST(Trajectory, PitchJitterStaysBounded) {
  TrajectorySpec spec;
  spec.frame_count = 60;
  spec.pitch_jitter = 0.004;
  const std::vector<Pose> poses = generate_trajectory(spec, 4);
  double max_pitch = 0.0;
  for (const Pose& pose : poses) {
    const Eigen::Vector3d forward = pose.rotation.transpose().col(2);
    max_pitch = std::max(max_pitch, std::abs(std::asin(-forward.y())));
  }
  EXPECT_GT(max_pitch, 0.002);   // the wobble is actually there
  EXPECT_LT(max_pitch, 0.0075);  // and bounded by 1.6 * amplitude
}

TEST(Scene, ObservationsMatchProjectionExactly) {
  SceneSpec spec = base_spec();
  const SyntheticScene scene = generate_scene(spec);
  ASSERT_GT(scene.tracks.track_count(), 100u);
  for (const auto& [id, obs] : scene.tracks.tracks()) {
    for (const auto& o : obs) {
      const Eigen::Vector2d px =
          project(scene.landmarks[id], scene.poses[o.frame], scene.gt);
      EXPECT_LT((px - o.position).norm(), 1e-12);
    }
  }
}

TEST(Scene, VisibilityRespectsDepthWindowAndBounds) {
  SceneSpec spec = base_spec();
  const SyntheticScene scene = generate_scene(spec);
  for (const auto& [id, obs] : scene.tracks.tracks()) {
    for (const auto& o : obs) {
      const Eigen::Vector3d pc =
          scene.poses[o.frame].rotation * scene.landmarks[id] +
          scene.poses[o.frame].translation;
      EXPECT_GE(pc.z(), spec.corridor.visible_depth_min);
      EXPECT_LE(pc.z(), spec.corridor.visible_depth_max);
      EXPECT_GE(o.position.x(), 0.0);
      EXPECT_LT(o.position.x(), spec.gt.width);
      EXPECT_GE(o.position.y(), 0.0);
      EXPECT_LT(o.position.y(), spec.gt.height);
    }
  }
}

TEST(Scene, DeterministicForFixedSeed) {
  const SceneSpec spec = base_spec();
  const SyntheticScene a = generate_scene(spec);
  const SyntheticScene b = generate_scene(spec);
  ASSERT_EQ(a.tracks.track_count(), b.tracks.track_count());
  ASSERT_EQ(a.tracks.observation_count(), b.tracks.observation_count());
  for (const auto& [id, obs] : a.tracks.tracks()) {
    const auto& other = b.tracks.tracks().at(id);
    for (size_t k = 0; k < obs.size(); ++k) {
      EXPECT_EQ(obs[k].position, other[k].position);
    }
  }
  SceneSpec other_seed = spec;
  other_seed.seed = 34;
  const SyntheticScene c = generate_scene(other_seed);
  EXPECT_NE(a.tracks.observation_count(), c.tracks.observation_count());
}

TEST(Scene, NoiseHasRequestedScale) {
  SceneSpec spec = base_spec();
  spec.noise_px = 1.0;
  const SyntheticScene noisy = generate_scene(spec);
  double sum = 0.0;
  long count = 0;
  for (const auto& [id, obs] : noisy.tracks.tracks()) {
    if (id >= spec.landmark_count) continue;
    for (const auto& o : obs) {
      const Eigen::Vector2d clean =
          project(noisy.landmarks[id], noisy.poses[o.frame], noisy.gt);
      sum += (o.position - clean).norm();
      ++count;
    }
  }
  ASSERT_GT(count, 1000);
  const double mean = sum / count;
  // E|N(0, I2)| = sqrt(pi/2) ~ 1.2533 for sigma = 1.
  EXPECT_GT(mean, 1.0);
  EXPECT_LT(mean, 1.5);
}

TEST(Scene, OutlierRateRoughlyHonored) {
  SceneSpec spec = base_spec();
  spec.outlier_rate = 0.2;
  const SyntheticScene scene = generate_scene(spec);
  long far = 0, total = 0;
  for (const auto& [id, obs] : scene.tracks.tracks()) {
    for (const auto& o : obs) {
      const Eigen::Vector2d clean =
          project(scene.landmarks[id], scene.poses[o.frame], scene.gt);
      if ((o.position - clean).norm() > 5.0) ++far;
      ++total;
    }
  }
  const double rate = static_cast<double>(far) / total;
  EXPECT_GT(rate, 0.12);
  EXPECT_LT(rate, 0.26);
}

TEST(Scene, DashboardBandAddsStaticTracks) {
  SceneSpec spec = base_spec();
  spec.dashboard.band_fraction = 0.15;
  spec.dashboard.feature_count = 40;
  const SyntheticScene scene = generate_scene(spec);
  const double band_top = spec.gt.height * 0.85;
  int static_tracks = 0;
  for (const auto& [id, obs] : scene.tracks.tracks()) {
    if (id < spec.landmark_count) continue;
    ++static_tracks;
    EXPECT_EQ(obs.size(), static_cast<size_t>(spec.trajectory.frame_count));
    for (const auto& o : obs) {
      EXPECT_GT(o.position.y(), band_top - 1.0);
      // Static features barely move.
      EXPECT_LT((o.position - obs[0].position).norm(), 2.0);
    }
  }
  EXPECT_EQ(static_tracks, 40);
}

TEST(Scene, ExportAndSidecarRoundTrip) {
  SceneSpec spec = base_spec();
  spec.trajectory.turns = {TurnEvent{60, 1.0, 30}};
  spec.dashboard.band_fraction = 0.15;
  spec.dashboard.feature_count = 10;
  const SyntheticScene scene = generate_scene(spec);
  const std::string dir =
      (std::filesystem::temp_directory_path() / "autocalib_scene").string();
  export_scene(scene, spec.dashboard, dir);

  const TrackSet tracks = load_correspondences(dir + "/tracks.txt");
  EXPECT_EQ(tracks.track_count(), scene.tracks.track_count());
  std::vector<int> apices;
  const Intrinsics gt = load_scene_gt(dir + "/gt.json", &apices);
  EXPECT_EQ(gt.fx, spec.gt.fx);
  EXPECT_EQ(gt.k1, spec.gt.k1);
  ASSERT_EQ(apices.size(), 1u);
  EXPECT_EQ(apices[0], 60);
  const Image mask = read_pgm(dir + "/ego_mask.pgm");
  EXPECT_EQ(mask.width, spec.gt.width);
  EXPECT_GT(mask.at(400, 395), 0);
  EXPECT_EQ(mask.at(400, 100), 0);
  std::filesystem::remove_all(dir);
}

TEST(PlantDefaultTurns, SpacingAndAlternation) {
  TrajectorySpec spec;
  spec.frame_count = 300;
  plant_default_turns(&spec, 5, 9);
  ASSERT_EQ(spec.turns.size(), 5u);
  for (size_t i = 0; i < spec.turns.size(); ++i) {
    EXPECT_GE(spec.turns[i].apex_frame, 30);
    EXPECT_LE(spec.turns[i].apex_frame, 270);
    if (i > 0) {
      EXPECT_GE(spec.turns[i].apex_frame - spec.turns[i - 1].apex_frame, 40);
      EXPECT_LT(spec.turns[i].total_yaw * spec.turns[i - 1].total_yaw, 0.0);
    }
    EXPECT_GE(std::abs(spec.turns[i].total_yaw), 1.2);
    EXPECT_LE(std::abs(spec.turns[i].total_yaw), 1.57);
    EXPECT_GE(spec.turns[i].duration, 22);
    EXPECT_LE(spec.turns[i].duration, 24);
  }
}
