#pragma once

#include <vector>

#include "autocalib/image.hpp"
#include "autocalib/tracks.hpp"

namespace autocalib {

struct Keypoint {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  double response = 0.0;
  std::vector<float> descriptor;  // 11x11 patch, zero-mean, unit norm
};

struct DetectOptions {
  int max_keypoints = 2000;
  int nms_radius = 5;
  int patch_radius = 5;       // 11x11 descriptor
  double harris_k = 0.04;
  double min_response = 1e-8;
};

// Harris corners with non-maximum suppression, strongest first. Keypoints
// inside the mask (if given) are discarded before ranking.
std::vector<Keypoint> detect_features(const Image& image,
                                      const EgoMask* mask = nullptr,
                                      const DetectOptions& options = {});

struct MatchOptions {
  double min_score = 0.8;   // NCC acceptance threshold
  double min_ratio = 1.05;  // best/second-best ratio
};

// Mutual-best NCC matching between two descriptor sets.
std::vector<IndexMatch> match_features(const std::vector<Keypoint>& a,
                                       const std::vector<Keypoint>& b,
                                       const MatchOptions& options = {});

// Convenience: full detect/match/link pipeline over an image sequence,
// matching each frame against up to `successor_window` following frames.
TrackSet track_sequence(const std::vector<Image>& frames,
                        const EgoMask* mask = nullptr,
                        int successor_window = 5,
                        const DetectOptions& detect = {},
                        const MatchOptions& match = {});

}  // namespace autocalib
