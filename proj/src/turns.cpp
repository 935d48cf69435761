#include "autocalib/turns.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "autocalib/epipolar.hpp"
#include "autocalib/rng.hpp"

namespace autocalib {

namespace {

// Relative distance of one epipole from the image center, or -1 if this
// extraction fails one of the validity criteria.
double epipole_distance(const Eigen::Matrix3d& f, bool left, int width,
                        int height, double max_distance) {
  Eigen::Vector3d e;
  try {
    e = left ? epipole(Eigen::Matrix3d(f.transpose())) : epipole(f);
  } catch (const Error&) {
    return -1.0;
  }
  if (std::abs(e.z()) < 1e-8) {
    return -1.0;  // epipole at infinity
  }
  const double ex = e.x() / e.z();
  const double ey = e.y() / e.z();
  const double dx = ex - 0.5 * width;
  const double dy = ey - 0.5 * height;
  const double diag = std::sqrt(static_cast<double>(width) * width +
                                static_cast<double>(height) * height);
  const double d = std::sqrt(dx * dx + dy * dy) / diag;
  // An epipole this far out claims near-sideways translation; for forward
  // vehicle motion that is an unstable estimate, not a measurement.
  if (d > max_distance) return -1.0;
  return d;
}

}  // namespace

std::vector<TurnSignal> compute_potential_turns(
    const MatchProvider& provider, int width, int height,
    const TurnDetectOptions& options) {
  const int n = provider.frame_count();
  if (n < 3) {
    throw Error(ErrorCode::kTooFewFrames,
                "compute_potential_turns: need at least 3 frames");
  }
  std::vector<TurnSignal> signal(n);
  for (int t = 0; t < n; ++t) signal[t].frame = t;

  RansacOptions ransac;
  ransac.threshold_px = options.ransac_threshold_px;
  ransac.max_iters = options.ransac_max_iters;

  for (int t = 1; t + 1 < n; ++t) {
    const std::array<std::pair<int, int>, 3> pairs = {
        std::make_pair(t - 1, t), std::make_pair(t, t + 1),
        std::make_pair(t - 1, t + 1)};
    double sum = 0.0;
    int valid = 0;
    for (const auto& [i, j] : pairs) {
      const std::vector<Match> matches = provider.matches(i, j);
      if (matches.size() < 8) continue;
      ransac.seed = mix_seed(options.seed, static_cast<uint64_t>(i),
                             static_cast<uint64_t>(j));
      FundamentalEstimate est;
      try {
        est = ransac_fundamental(matches, ransac);
      } catch (const Error&) {
        continue;  // no consensus: extraction failed
      }
      const Eigen::Vector3d& s = est.singular_values;
      if (s(1) < options.stability_ratio * s(2)) {
        continue;  // nearly rank-1: unstable geometry
      }
      // Both epipoles contribute when extractable.
      const double d_right = epipole_distance(est.f, false, width, height,
                                              options.max_epipole_distance);
      const double d_left = epipole_distance(est.f, true, width, height,
                                             options.max_epipole_distance);
      if (d_right >= 0.0) {
        sum += d_right;
        ++valid;
      }
      if (d_left >= 0.0) {
        sum += d_left;
        ++valid;
      }
    }
    if (valid > 0) {
      signal[t].magnitude = sum / valid;
      signal[t].valid = true;
    }
  }
  return signal;
}

std::vector<double> median_filter(const std::vector<double>& signal,
                                  int window) {
  if (window <= 0 || window % 2 == 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "median_filter: window must be odd and positive");
  }
  if (signal.empty()) return {};
  const int n = static_cast<int>(signal.size());
  const int half = window / 2;
  std::vector<double> out(signal.size());
  std::vector<double> buf(window);
  for (int i = 0; i < n; ++i) {
    for (int k = -half; k <= half; ++k) {
      const int idx = std::clamp(i + k, 0, n - 1);  // edge replication
      buf[k + half] = signal[idx];
    }
    std::nth_element(buf.begin(), buf.begin() + half, buf.end());
    out[i] = buf[half];
  }
  return out;
}

std::vector<Peak> find_peaks(const std::vector<double>& signal) {
  const int n = static_cast<int>(signal.size());
  std::vector<Peak> peaks;
  for (int i = 1; i + 1 < n; ++i) {
    if (signal[i] <= signal[i - 1]) continue;
    // Walk right across any plateau; i is its leftmost sample.
    int j = i;
    while (j + 1 < n && signal[j + 1] == signal[i]) ++j;
    if (j + 1 >= n || signal[j + 1] >= signal[i]) continue;
    peaks.push_back(Peak{i, 0.0});
  }
  // Topographic prominence: height above the higher of the two deepest
  // valleys separating the peak from higher ground (or the signal border).
  for (Peak& p : peaks) {
    double left_min = signal[p.index];
    for (int k = p.index - 1; k >= 0; --k) {
      if (signal[k] > signal[p.index]) break;
      left_min = std::min(left_min, signal[k]);
    }
    double right_min = signal[p.index];
    for (int k = p.index + 1; k < n; ++k) {
      if (signal[k] > signal[p.index]) break;
      right_min = std::min(right_min, signal[k]);
    }
    p.prominence = signal[p.index] - std::max(left_min, right_min);
  }
  return peaks;
}

std::vector<Peak> select_turns(const std::vector<Peak>& peaks, int max_turns,
                               int min_separation) {
  std::vector<Peak> sorted = peaks;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Peak& a, const Peak& b) {
                     if (a.prominence != b.prominence) {
                       return a.prominence > b.prominence;
                     }
                     return a.index < b.index;
                   });
  // Greedy pick by prominence; twin ripples of one physical turn sit closer
  // than min_separation and would otherwise claim two slots.
  std::vector<Peak> taken;
  for (const Peak& p : sorted) {
    if (static_cast<int>(taken.size()) >= max_turns) break;
    bool crowded = false;
    for (const Peak& q : taken) {
      crowded = crowded || std::abs(p.index - q.index) < min_separation;
    }
    if (!crowded) taken.push_back(p);
  }
  std::sort(taken.begin(), taken.end(),
            [](const Peak& a, const Peak& b) { return a.index < b.index; });
  return taken;
}

std::vector<TurnSubsequence> build_subsequences(const std::vector<Peak>& peaks,
                                                int half_window,
                                                int frame_count) {
  std::vector<TurnSubsequence> out;
  out.reserve(peaks.size());
  for (const Peak& p : peaks) {
    TurnSubsequence s;
    s.center = p.index;
    s.first = std::max(0, p.index - half_window);
    s.last = std::min(frame_count - 1, p.index + half_window);
    s.prominence = p.prominence;
    out.push_back(s);
  }
  return out;
}

std::vector<TurnSubsequence> detect_turns(const MatchProvider& provider,
                                          int width, int height,
                                          const TurnDetectOptions& options) {
  const std::vector<TurnSignal> raw =
      compute_potential_turns(provider, width, height, options);
  std::vector<double> values(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    values[i] = raw[i].valid ? raw[i].magnitude : 0.0;
  }
  int window = 2 * (options.half_window / 2) - 1;
  window = std::max(1, std::min(window, static_cast<int>(values.size()) |
                                            1));  // odd, within signal
  const std::vector<double> filtered = median_filter(values, window);

  std::vector<Peak> peaks = find_peaks(filtered);
  peaks.erase(std::remove_if(peaks.begin(), peaks.end(),
                             [&](const Peak& p) {
                               return filtered[p.index] <
                                      options.min_peak_magnitude;
                             }),
              peaks.end());
  const std::vector<Peak> selected =
      select_turns(peaks, options.max_turns, options.half_window);
  return build_subsequences(selected, options.half_window,
                            static_cast<int>(values.size()));
}

void save_turns(const std::vector<TurnSubsequence>& turns,
                const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot write " + path);
  }
  out.precision(17);
  for (const TurnSubsequence& t : turns) {
    out << t.center << " " << t.first << " " << t.last << " " << t.prominence
        << "\n";
  }
}

std::vector<TurnSubsequence> load_turns(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot read " + path);
  }
  std::vector<TurnSubsequence> turns;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    TurnSubsequence t;
    std::string extra;
    if (!(ss >> t.center >> t.first >> t.last >> t.prominence) ||
        (ss >> extra)) {
      throw Error(ErrorCode::kParse,
                  path + ":" + std::to_string(line_no) + ": malformed turn");
    }
    turns.push_back(t);
  }
  return turns;
}

}  // namespace autocalib
