#include "autocalib/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace autocalib {

namespace {

std::vector<float> gaussian_kernel(double sigma, int radius) {
  std::vector<float> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * i * i / (sigma * sigma));
    k[i + radius] = static_cast<float>(v);
    sum += v;
  }
  for (float& v : k) v = static_cast<float>(v / sum);
  return k;
}

// Separable convolution with replicated borders.
void blur_inplace(std::vector<float>* data, int w, int h,
                  const std::vector<float>& kernel) {
  const int radius = static_cast<int>(kernel.size() / 2);
  std::vector<float> tmp(data->size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0.f;
      for (int i = -radius; i <= radius; ++i) {
        const int xx = std::clamp(x + i, 0, w - 1);
        acc += kernel[i + radius] * (*data)[static_cast<size_t>(y) * w + xx];
      }
      tmp[static_cast<size_t>(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0.f;
      for (int i = -radius; i <= radius; ++i) {
        const int yy = std::clamp(y + i, 0, h - 1);
        acc += kernel[i + radius] * tmp[static_cast<size_t>(yy) * w + x];
      }
      (*data)[static_cast<size_t>(y) * w + x] = acc;
    }
  }
}

}  // namespace

std::vector<Keypoint> detect_features(const Image& image, const EgoMask* mask,
                                      const DetectOptions& options) {
  const int w = image.width, h = image.height;
  if (w < 16 || h < 16) return {};

  std::vector<float> ix(static_cast<size_t>(w) * h, 0.f);
  std::vector<float> iy(ix), ixx(ix), iyy(ix), ixy(ix);
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      const float gx = 0.5f * (image.at(x + 1, y) - image.at(x - 1, y));
      const float gy = 0.5f * (image.at(x, y + 1) - image.at(x, y - 1));
      const size_t i = static_cast<size_t>(y) * w + x;
      ix[i] = gx;
      iy[i] = gy;
      ixx[i] = gx * gx;
      iyy[i] = gy * gy;
      ixy[i] = gx * gy;
    }
  }
  const std::vector<float> kernel = gaussian_kernel(1.5, 3);
  blur_inplace(&ixx, w, h, kernel);
  blur_inplace(&iyy, w, h, kernel);
  blur_inplace(&ixy, w, h, kernel);

  std::vector<float> response(static_cast<size_t>(w) * h, 0.f);
  for (size_t i = 0; i < response.size(); ++i) {
    const double det = static_cast<double>(ixx[i]) * iyy[i] -
                       static_cast<double>(ixy[i]) * ixy[i];
    const double trace = static_cast<double>(ixx[i]) + iyy[i];
    response[i] =
        static_cast<float>(det - options.harris_k * trace * trace);
  }

  // Margin keeps the descriptor patch and gradient window inside the image.
  const int margin = options.patch_radius + 2;
  struct Candidate {
    int x, y;
    float response;
  };
  std::vector<Candidate> candidates;
  const int r = options.nms_radius;
  for (int y = margin; y < h - margin; ++y) {
    for (int x = margin; x < w - margin; ++x) {
      const size_t i = static_cast<size_t>(y) * w + x;
      const float v = response[i];
      if (v < options.min_response) continue;
      if (mask && mask->masked(x, y)) continue;
      bool is_max = true;
      for (int dy = -r; dy <= r && is_max; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -r; dx <= r; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int xx = x + dx;
          if (xx < 0 || xx >= w) continue;
          const float other = response[static_cast<size_t>(yy) * w + xx];
          // Ties go to the earlier pixel in raster order.
          if (other > v ||
              (other == v && (yy < y || (yy == y && xx < x)))) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) candidates.push_back({x, y, v});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) {
                     return a.response > b.response;
                   });
  if (static_cast<int>(candidates.size()) > options.max_keypoints) {
    candidates.resize(options.max_keypoints);
  }

  std::vector<Keypoint> keypoints;
  keypoints.reserve(candidates.size());
  const int pr = options.patch_radius;
  const int side = 2 * pr + 1;
  for (const Candidate& c : candidates) {
    Keypoint kp;
    kp.position = Eigen::Vector2d(c.x, c.y);
    kp.response = c.response;
    kp.descriptor.resize(static_cast<size_t>(side) * side);
    double mean = 0.0;
    for (int dy = -pr; dy <= pr; ++dy) {
      for (int dx = -pr; dx <= pr; ++dx) {
        mean += image.at(c.x + dx, c.y + dy);
      }
    }
    mean /= side * side;
    double norm_sq = 0.0;
    size_t k = 0;
    for (int dy = -pr; dy <= pr; ++dy) {
      for (int dx = -pr; dx <= pr; ++dx, ++k) {
        const double v = image.at(c.x + dx, c.y + dy) - mean;
        kp.descriptor[k] = static_cast<float>(v);
        norm_sq += v * v;
      }
    }
    if (norm_sq > 1e-12) {
      const float inv = static_cast<float>(1.0 / std::sqrt(norm_sq));
      for (float& v : kp.descriptor) v *= inv;
    } else {
      std::fill(kp.descriptor.begin(), kp.descriptor.end(), 0.f);
    }
    keypoints.push_back(std::move(kp));
  }
  return keypoints;
}

std::vector<IndexMatch> match_features(const std::vector<Keypoint>& a,
                                       const std::vector<Keypoint>& b,
                                       const MatchOptions& options) {
  if (a.empty() || b.empty()) return {};
  const size_t d = a[0].descriptor.size();
  Eigen::MatrixXf da(d, a.size()), db(d, b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    da.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::VectorXf>(
        a[i].descriptor.data(), static_cast<Eigen::Index>(d));
  }
  for (size_t j = 0; j < b.size(); ++j) {
    db.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::VectorXf>(
        b[j].descriptor.data(), static_cast<Eigen::Index>(d));
  }
  const Eigen::MatrixXf scores = da.transpose() * db;  // NCC, descriptors unit

  std::vector<int> best_row(b.size(), -1);
  std::vector<float> best_row_score(b.size(),
                                    -std::numeric_limits<float>::infinity());
  for (Eigen::Index j = 0; j < scores.cols(); ++j) {
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
      if (scores(i, j) > best_row_score[j]) {
        best_row_score[j] = scores(i, j);
        best_row[j] = static_cast<int>(i);
      }
    }
  }

  std::vector<IndexMatch> matches;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    int best_j = -1;
    float best = -std::numeric_limits<float>::infinity();
    float second = best;
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      const float s = scores(i, j);
      if (s > best) {
        second = best;
        best = s;
        best_j = static_cast<int>(j);
      } else if (s > second) {
        second = s;
      }
    }
    if (best_j < 0 || best < options.min_score) continue;
    if (best_row[best_j] != static_cast<int>(i)) continue;  // not mutual
    if (second > -1.f && best < options.min_ratio * second) continue;
    matches.push_back(
        IndexMatch{static_cast<int>(i), best_j, static_cast<double>(best)});
  }
  return matches;
}

TrackSet track_sequence(const std::vector<Image>& frames, const EgoMask* mask,
                        int successor_window, const DetectOptions& detect,
                        const MatchOptions& match) {
  std::vector<std::vector<Keypoint>> keypoints(frames.size());
  std::vector<std::vector<Eigen::Vector2d>> positions(frames.size());
  for (size_t f = 0; f < frames.size(); ++f) {
    keypoints[f] = detect_features(frames[f], mask, detect);
    positions[f].reserve(keypoints[f].size());
    for (const Keypoint& kp : keypoints[f]) positions[f].push_back(kp.position);
  }
  std::vector<PairwiseMatches> pairs;
  for (size_t i = 0; i < frames.size(); ++i) {
    for (size_t j = i + 1;
         j < frames.size() && j <= i + static_cast<size_t>(successor_window);
         ++j) {
      PairwiseMatches p;
      p.frame_i = static_cast<int>(i);
      p.frame_j = static_cast<int>(j);
      p.matches = match_features(keypoints[i], keypoints[j], match);
      if (!p.matches.empty()) pairs.push_back(std::move(p));
    }
  }
  return build_tracks(positions, pairs);
}

}  // namespace autocalib
