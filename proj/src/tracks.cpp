#include "autocalib/tracks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace autocalib {

void TrackSet::add(long track_id, int frame, const Eigen::Vector2d& position) {
  if (frame < 0) {
    throw Error(ErrorCode::kInvalidArgument, "negative frame index");
  }
  auto& obs = tracks_[track_id];
  auto it = std::lower_bound(
      obs.begin(), obs.end(), frame,
      [](const TrackObservation& o, int f) { return o.frame < f; });
  if (it != obs.end() && it->frame == frame) {
    throw Error(ErrorCode::kInvalidArgument,
                "duplicate observation for track " + std::to_string(track_id) +
                    " in frame " + std::to_string(frame));
  }
  obs.insert(it, TrackObservation{frame, position});
  frame_count_ = std::max(frame_count_, frame + 1);
}

void TrackSet::set_frame_count(int n) {
  frame_count_ = std::max(frame_count_, n);
}

size_t TrackSet::observation_count() const {
  size_t n = 0;
  for (const auto& [id, obs] : tracks_) n += obs.size();
  return n;
}

std::vector<Match> TrackSet::matches_between(int frame_i, int frame_j) const {
  std::vector<Match> result;
  for (const auto& [id, obs] : tracks_) {
    const TrackObservation* oi = nullptr;
    const TrackObservation* oj = nullptr;
    for (const auto& o : obs) {
      if (o.frame == frame_i) oi = &o;
      if (o.frame == frame_j) oj = &o;
    }
    if (oi && oj) {
      result.push_back(Match{id, oi->position, oj->position});
    }
  }
  return result;
}

void TrackSet::prune_short_tracks() {
  for (auto it = tracks_.begin(); it != tracks_.end();) {
    if (it->second.size() < 2) {
      it = tracks_.erase(it);
    } else {
      ++it;
    }
  }
}

TrackSet load_correspondences(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot read " + path);
  }
  TrackSet tracks;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    long track_id;
    int frame;
    double x, y;
    std::string extra;
    if (!(ss >> track_id >> frame >> x >> y) || (ss >> extra) || frame < 0) {
      throw Error(ErrorCode::kParse, path + ":" + std::to_string(line_no) +
                                         ": malformed correspondence");
    }
    try {
      tracks.add(track_id, frame, {x, y});
    } catch (const Error& e) {
      throw Error(ErrorCode::kParse,
                  path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  tracks.prune_short_tracks();
  return tracks;
}

void save_correspondences(const TrackSet& tracks, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot write " + path);
  }
  out.precision(17);
  for (const auto& [id, obs] : tracks.tracks()) {
    for (const auto& o : obs) {
      out << id << " " << o.frame << " " << o.position.x() << " "
          << o.position.y() << "\n";
    }
  }
}

bool EgoMask::masked(double x, double y) const {
  const int xi = static_cast<int>(std::lround(x));
  const int yi = static_cast<int>(std::lround(y));
  if (xi < 0 || xi >= width || yi < 0 || yi >= height) {
    return false;
  }
  return bitmap[static_cast<size_t>(yi) * width + xi] != 0;
}

EgoMask EgoMask::from_image(const Image& image) {
  EgoMask mask;
  mask.width = image.width;
  mask.height = image.height;
  mask.bitmap = image.pixels;
  return mask;
}

TrackSet apply_mask(const TrackSet& tracks, const EgoMask& mask) {
  TrackSet out;
  for (const auto& [id, obs] : tracks.tracks()) {
    for (const auto& o : obs) {
      if (!mask.masked(o.position.x(), o.position.y())) {
        out.add(id, o.frame, o.position);
      }
    }
  }
  out.prune_short_tracks();
  out.set_frame_count(tracks.frame_count());
  return out;
}

TrackSet subsample(const TrackSet& tracks, int factor) {
  if (factor < 1) {
    throw Error(ErrorCode::kInvalidArgument, "subsample factor must be >= 1");
  }
  if (factor == 1) return tracks;
  TrackSet out;
  for (const auto& [id, obs] : tracks.tracks()) {
    for (const auto& o : obs) {
      if (o.frame % factor == 0) {
        out.add(id, o.frame / factor, o.position);
      }
    }
  }
  out.prune_short_tracks();
  out.set_frame_count((tracks.frame_count() + factor - 1) / factor);
  return out;
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  std::vector<int> size;
  // Per-root map frame -> node, used to refuse conflicting merges.
  std::vector<std::unordered_map<int, int>> frames;

  explicit UnionFind(size_t n) : parent(n), size(n, 1), frames(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }

  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }

  // Merge the components of a and b unless they both already contain an
  // observation in the same frame with different nodes.
  bool merge(int a, int b) {
    int ra = find(a), rb = find(b);
    if (ra == rb) return true;
    if (frames[ra].size() < frames[rb].size()) std::swap(ra, rb);
    for (const auto& [frame, node] : frames[rb]) {
      auto it = frames[ra].find(frame);
      if (it != frames[ra].end() && it->second != node) {
        return false;
      }
    }
    for (const auto& [frame, node] : frames[rb]) {
      frames[ra].emplace(frame, node);
    }
    frames[rb].clear();
    parent[rb] = ra;
    size[ra] += size[rb];
    return true;
  }
};

}  // namespace

TrackSet build_tracks(
    const std::vector<std::vector<Eigen::Vector2d>>& keypoints,
    const std::vector<PairwiseMatches>& pairs) {
  const int n_frames = static_cast<int>(keypoints.size());
  std::vector<size_t> offset(keypoints.size() + 1, 0);
  for (size_t f = 0; f < keypoints.size(); ++f) {
    offset[f + 1] = offset[f] + keypoints[f].size();
  }
  UnionFind uf(offset.back());
  for (size_t f = 0; f < keypoints.size(); ++f) {
    for (size_t k = 0; k < keypoints[f].size(); ++k) {
      const int node = static_cast<int>(offset[f] + k);
      uf.frames[node][static_cast<int>(f)] = node;
    }
  }

  for (const PairwiseMatches& p : pairs) {
    if (p.frame_i < 0 || p.frame_i >= n_frames || p.frame_j < 0 ||
        p.frame_j >= n_frames || p.frame_i == p.frame_j) {
      throw Error(ErrorCode::kInvalidArgument, "build_tracks: bad frame pair");
    }
    for (const IndexMatch& m : p.matches) {
      const int a = static_cast<int>(offset[p.frame_i]) + m.idx_i;
      const int b = static_cast<int>(offset[p.frame_j]) + m.idx_j;
      uf.merge(a, b);
    }
  }

  // Components keyed by root, ordered by their smallest node id so track
  // numbering is deterministic.
  std::map<int, std::vector<int>> components;
  for (int node = 0; node < static_cast<int>(offset.back()); ++node) {
    components[uf.find(node)].push_back(node);
  }
  std::vector<std::vector<int>> ordered;
  for (auto& [root, nodes] : components) {
    if (nodes.size() >= 2) ordered.push_back(std::move(nodes));
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });

  TrackSet tracks;
  long next_id = 0;
  for (const auto& nodes : ordered) {
    for (int node : nodes) {
      const auto frame_it = std::upper_bound(offset.begin(), offset.end(),
                                             static_cast<size_t>(node));
      const int frame = static_cast<int>(frame_it - offset.begin()) - 1;
      const size_t idx = static_cast<size_t>(node) - offset[frame];
      tracks.add(next_id, frame, keypoints[frame][idx]);
    }
    ++next_id;
  }
  tracks.prune_short_tracks();
  tracks.set_frame_count(n_frames);
  return tracks;
}

}  // namespace autocalib
