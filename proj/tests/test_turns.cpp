#include "autocalib/turns.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "autocalib/synth.hpp"
#include "test_util.hpp"

using namespace autocalib;
using namespace autocalib::testutil;

namespace {

SceneSpec small_scene_spec() {
  SceneSpec spec;
  spec.gt = simple_intrinsics(1000, 500, 700.0);
  spec.gt.cx = 502.0;
  spec.gt.cy = 251.0;
  spec.gt.k1 = -0.28;
  spec.gt.k2 = 0.10;
  spec.trajectory.frame_count = 170;
  spec.landmark_count = 700;
  spec.seed = 21;
  return spec;
}

}  // namespace

TEST(MedianFilter, Oracles) {
  EXPECT_EQ(median_filter({1.0, 5.0, 1.0}, 3),
            (std::vector<double>{1.0, 1.0, 1.0}));
  // A lone impulse cannot survive a window-29 median.
  std::vector<double> impulse(60, 0.0);
  impulse[30] = 10.0;
  const std::vector<double> out = median_filter(impulse, 29);
  for (double v : out) EXPECT_EQ(v, 0.0);
  // Window 1 is the identity.
  const std::vector<double> sig{3.0, 1.0, 4.0, 1.0, 5.0};
  EXPECT_EQ(median_filter(sig, 1), sig);
}

TEST(MedianFilter, EdgeReplication) {
  // Window 3 at the left edge sees {x0, x0, x1}.
  const std::vector<double> out = median_filter({5.0, 1.0, 1.0, 9.0}, 3);
  EXPECT_EQ(out[0], 5.0);
  EXPECT_EQ(out[3], 9.0);
}

TEST(MedianFilter, RejectsEvenWindow) {
  try {
    median_filter({1.0, 2.0}, 4);
    FAIL() << "expected kInvalidArgument";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
  EXPECT_THROW(median_filter({1.0}, 0), Error);
  EXPECT_THROW(median_filter({1.0}, -3), Error);
}

TEST(FindPeaks, ProminenceOracle) {
  const std::vector<Peak> peaks = find_peaks({0.0, 3.0, 1.0, 2.0, 0.0});
  ASSERT_EQ(peaks.size(), 2u);
  EXPECT_EQ(peaks[0].index, 1);
  EXPECT_DOUBLE_EQ(peaks[0].prominence, 3.0);
  EXPECT_EQ(peaks[1].index, 3);
  EXPECT_DOUBLE_EQ(peaks[1].prominence, 1.0);
}

TEST(FindPeaks, PlateauReportsLeftmostSample) {
  const std::vector<Peak> peaks = find_peaks({0.0, 2.0, 2.0, 2.0, 1.0, 0.0});
  ASSERT_EQ(peaks.size(), 1u);
  EXPECT_EQ(peaks[0].index, 1);
  EXPECT_DOUBLE_EQ(peaks[0].prominence, 2.0);
}

TEST(FindPeaks, NoInteriorMaximum) {
  EXPECT_TRUE(find_peaks({0.0, 1.0, 2.0, 3.0}).empty());
  EXPECT_TRUE(find_peaks({2.0, 2.0, 2.0}).empty());
  EXPECT_TRUE(find_peaks({}).empty());
}

TEST(FindPeaks, ProminenceStopsAtHigherGround) {
  // Peak at 3 (height 2) is fenced by the higher peak at 1; its prominence
  // is measured from the valley at index 2.
  const std::vector<Peak> peaks =
      find_peaks({0.0, 5.0, 1.0, 2.0, 1.5, 6.0, 0.0});
  ASSERT_EQ(peaks.size(), 3u);
  EXPECT_EQ(peaks[0].index, 1);
  EXPECT_DOUBLE_EQ(peaks[0].prominence, 4.0);  // valley right side min 1.0
  EXPECT_EQ(peaks[1].index, 3);
  // Bases: 1.0 on the left, 1.5 on the right; the higher one counts.
  EXPECT_DOUBLE_EQ(peaks[1].prominence, 0.5);
  EXPECT_EQ(peaks[2].index, 5);
  EXPECT_DOUBLE_EQ(peaks[2].prominence, 6.0);
}

TEST(SelectTurns, RanksByProminenceTieBreaksLowerIndex) {
  std::vector<Peak> peaks = {{10, 1.0}, {20, 3.0}, {30, 1.0}, {40, 2.0}};
  const std::vector<Peak> top = select_turns(peaks, 3);
  ASSERT_EQ(top.size(), 3u);
  // Kept: prominence 3.0 (20), 2.0 (40), then the tie at 1.0 -> index 10.
  EXPECT_EQ(top[0].index, 10);
  EXPECT_EQ(top[1].index, 20);
  EXPECT_EQ(top[2].index, 40);
  EXPECT_EQ(select_turns(peaks, 10).size(), 4u);
}

TEST(BuildSubsequences, WindowsAndClamping) {
  const std::vector<Peak> peaks = {{10, 1.0}, {100, 2.0}, {995, 3.0}};
  const std::vector<TurnSubsequence> subs = build_subsequences(peaks, 30, 1000);
  ASSERT_EQ(subs.size(), 3u);
  EXPECT_EQ(subs[0].first, 0);
  EXPECT_EQ(subs[0].last, 40);
  EXPECT_EQ(subs[1].center, 100);
  EXPECT_EQ(subs[1].first, 70);
  EXPECT_EQ(subs[1].last, 130);
  EXPECT_EQ(subs[1].last - subs[1].first + 1, 61);
  EXPECT_EQ(subs[2].first, 965);
  EXPECT_EQ(subs[2].last, 999);
  EXPECT_DOUBLE_EQ(subs[1].prominence, 2.0);
}

TEST(ComputePotentialTurns, TooFewFramesThrows) {
  TrackSet ts;
  ts.add(0, 0, {1.0, 1.0});
  ts.add(0, 1, {2.0, 2.0});
  const TrackSetMatchProvider provider(ts);
  TurnDetectOptions options;
  try {
    compute_potential_turns(provider, 800, 400, options);
    FAIL() << "expected kTooFewFrames";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTooFewFrames);
  }
}

TEST(ComputePotentialTurns, TurnFramesOutscoreStraightDriving) {
  SceneSpec spec = small_scene_spec();
  spec.trajectory.turns = {TurnEvent{85, 1.3, 24}};
  const SyntheticScene scene = generate_scene(spec);
  const TrackSetMatchProvider provider(scene.tracks);
  TurnDetectOptions options;
  options.seed = 5;
  const std::vector<TurnSignal> signal = compute_potential_turns(
      provider, spec.gt.width, spec.gt.height, options);
  ASSERT_EQ(signal.size(), 170u);
  EXPECT_FALSE(signal.front().valid);
  EXPECT_FALSE(signal.back().valid);
  double apex = 0.0, straight = 0.0;
  for (int t = 80; t <= 90; ++t) apex = std::max(apex, signal[t].magnitude);
  for (int t = 20; t <= 40; ++t) {
    straight = std::max(straight, signal[t].magnitude);
  }
  EXPECT_GT(apex, 0.03);
  EXPECT_GT(apex, 4.0 * straight);
}

TEST(DetectTurns, FindsPlantedTurns) {
  SceneSpec spec = small_scene_spec();
  spec.trajectory.frame_count = 240;
  spec.trajectory.turns = {TurnEvent{60, 1.3, 24}, TurnEvent{170, -1.4, 22}};
  const SyntheticScene scene = generate_scene(spec);
  const TrackSetMatchProvider provider(scene.tracks);
  TurnDetectOptions options;
  options.max_turns = 2;
  options.seed = 6;
  const std::vector<TurnSubsequence> turns =
      detect_turns(provider, spec.gt.width, spec.gt.height, options);
  ASSERT_EQ(turns.size(), 2u);
  EXPECT_LT(std::abs(turns[0].center - 60), 9);
  EXPECT_LT(std::abs(turns[1].center - 170), 9);
  EXPECT_EQ(turns[0].first, turns[0].center - 30);
  EXPECT_EQ(turns[0].last, turns[0].center + 30);
}

TEST(DetectTurns, StraightSceneYieldsNothing) {
  SceneSpec spec = small_scene_spec();
  spec.trajectory.frame_count = 120;
  spec.noise_px = 0.3;
  const SyntheticScene scene = generate_scene(spec);
  const TrackSetMatchProvider provider(scene.tracks);
  TurnDetectOptions options;
  options.seed = 8;
  EXPECT_TRUE(
      detect_turns(provider, spec.gt.width, spec.gt.height, options).empty());
}

TEST(TurnsIo, RoundTripAndParseError) {
  const std::vector<TurnSubsequence> turns = {{100, 70, 130, 0.375},
                                              {200, 170, 230, 0.25}};
  const std::string path =
      (std::filesystem::temp_directory_path() / "autocalib_turns.txt")
          .string();
  save_turns(turns, path);
  const std::vector<TurnSubsequence> back = load_turns(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].center, 100);
  EXPECT_EQ(back[0].first, 70);
  EXPECT_EQ(back[0].last, 130);
  EXPECT_DOUBLE_EQ(back[0].prominence, 0.375);
  {
    std::ofstream out(path);
    out << "1 2 3\n";
  }
  EXPECT_THROW(load_turns(path), Error);
  std::remove(path.c_str());
}
