#pragma once

#include <map>
#include <string>
#include <vector>

#include "autocalib/epipolar.hpp"
#include "autocalib/image.hpp"
#include "autocalib/types.hpp"

namespace autocalib {

struct TrackObservation {
  int frame = 0;
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
};

// Multi-frame feature tracks. Each track has at most one observation per
// frame and at least two observations overall.
class TrackSet {
 public:
  // Throws kInvalidArgument on a duplicate (track, frame) observation.
  void add(long track_id, int frame, const Eigen::Vector2d& position);

  int frame_count() const { return frame_count_; }
  void set_frame_count(int n);  // may only grow

  size_t track_count() const { return tracks_.size(); }
  size_t observation_count() const;

  const std::map<long, std::vector<TrackObservation>>& tracks() const {
    return tracks_;
  }

  // Pixel correspondences between two frames, ordered by track id.
  std::vector<Match> matches_between(int frame_i, int frame_j) const;

  // Drops tracks with fewer than two observations.
  void prune_short_tracks();

 private:
  std::map<long, std::vector<TrackObservation>> tracks_;
  int frame_count_ = 0;
};

// Text I/O, one observation per line: track_id frame_index x y.
// Throws kIo / kParse (with line numbers). Tracks with a single surviving
// observation are dropped on load.
TrackSet load_correspondences(const std::string& path);
void save_correspondences(const TrackSet& tracks, const std::string& path);

// Binary mask; nonzero pixels are masked out (static vehicle parts).
struct EgoMask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> bitmap;

  bool masked(double x, double y) const;
  static EgoMask from_image(const Image& image);
};

// Removes observations falling inside the mask, then prunes short tracks.
TrackSet apply_mask(const TrackSet& tracks, const EgoMask& mask);

// Keeps frames with index % factor == 0 and renumbers them densely,
// simulating a lower capture rate.
TrackSet subsample(const TrackSet& tracks, int factor);

// Source of pairwise correspondences for turn detection.
class MatchProvider {
 public:
  virtual ~MatchProvider() = default;
  virtual int frame_count() const = 0;
  virtual std::vector<Match> matches(int frame_i, int frame_j) const = 0;
};

class TrackSetMatchProvider : public MatchProvider {
 public:
  explicit TrackSetMatchProvider(const TrackSet& tracks) : tracks_(tracks) {}
  int frame_count() const override { return tracks_.frame_count(); }
  std::vector<Match> matches(int frame_i, int frame_j) const override {
    return tracks_.matches_between(frame_i, frame_j);
  }

 private:
  const TrackSet& tracks_;
};

// Feature-index correspondence between two keypoint lists.
struct IndexMatch {
  int idx_i = -1;
  int idx_j = -1;
  double score = 0.0;
};

struct PairwiseMatches {
  int frame_i = 0;
  int frame_j = 0;
  std::vector<IndexMatch> matches;
};

// Union-find linking of pairwise matches into multi-frame tracks. A merge
// that would give a track two distinct features in one frame is refused, so
// the conflicting fragments survive separately (if still length >= 2).
TrackSet build_tracks(
    const std::vector<std::vector<Eigen::Vector2d>>& keypoints,
    const std::vector<PairwiseMatches>& pairs);

}  // namespace autocalib
