#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "autocalib/tracks.hpp"

namespace autocalib {

// Per-frame turn likelihood from triplet epipole geometry.
struct TurnSignal {
  int frame = 0;
  double magnitude = 0.0;  // relative epipole distance, 0 when invalid
  bool valid = false;      // false when every extraction in the triplet failed
};

struct TurnSubsequence {
  int center = 0;
  int first = 0;
  int last = 0;
  double prominence = 0.0;
};

struct TurnDetectOptions {
  int max_turns = 5;       // keep the most prominent peaks
  int half_window = 30;    // k: frames kept on each side of a turn center
  double ransac_threshold_px = 1.0;
  int ransac_max_iters = 2000;
  uint64_t seed = 0;
  // Filtered peaks below this magnitude are noise, not turns.
  double min_peak_magnitude = 0.015;
  // Pre-enforcement stability: reject F when sigma_2 < 10 * sigma_3.
  double stability_ratio = 10.0;
  // Epipoles farther than this (in diagonals) from the image center are
  // treated as failed extractions rather than turning evidence.
  double max_epipole_distance = 1.0;
};

// Epipole-distance signal over frame triplets (t-1, t, t+1); boundary frames
// are invalid. `width`/`height` give the image geometry (the image center
// stands in for the unknown principal point).
std::vector<TurnSignal> compute_potential_turns(const MatchProvider& provider,
                                                int width, int height,
                                                const TurnDetectOptions& options);

// Odd-window median filter with edge replication. Throws kInvalidArgument
// for even or non-positive windows.
std::vector<double> median_filter(const std::vector<double>& signal,
                                  int window);

// Local maxima (leftmost sample of plateaus) with topographic prominence.
struct Peak {
  int index = 0;
  double prominence = 0.0;
};
std::vector<Peak> find_peaks(const std::vector<double>& signal);

// Top max_turns peaks by prominence (ties keep the lower index), returned in
// increasing index order.
// Greedy prominence-ranked selection; peaks closer than min_separation to an
// already-selected one are skipped (ripples on a single turn's plateau).
std::vector<Peak> select_turns(const std::vector<Peak>& peaks, int max_turns,
                               int min_separation = 0);

// [center-k, center+k] windows clamped to [0, frame_count).
std::vector<TurnSubsequence> build_subsequences(const std::vector<Peak>& peaks,
                                                int half_window,
                                                int frame_count);

// Full Algorithm-1 pipeline: signal, median filter (window 2*floor(k/2)-1),
// peak selection, window construction.
std::vector<TurnSubsequence> detect_turns(const MatchProvider& provider,
                                          int width, int height,
                                          const TurnDetectOptions& options);

// Text I/O, one turn per line: center first last prominence.
void save_turns(const std::vector<TurnSubsequence>& turns,
                const std::string& path);
std::vector<TurnSubsequence> load_turns(const std::string& path);

}  // namespace autocalib
