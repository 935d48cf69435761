#include "autocalib/camera.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace autocalib {

namespace {

double distortion_factor(double r2, const Intrinsics& intr) {
  return 1.0 + intr.k1 * r2 + intr.k2 * r2 * r2;
}

}  // namespace

Eigen::Vector2d distort(const Eigen::Vector2d& p_u, const Intrinsics& intr) {
  return distortion_factor(p_u.squaredNorm(), intr) * p_u;
}

Eigen::Vector2d undistort(const Eigen::Vector2d& p_d, const Intrinsics& intr,
                          int max_iters, double tol) {
  Eigen::Vector2d p = p_d;
  for (int i = 0; i < max_iters; ++i) {
    const double d = distortion_factor(p.squaredNorm(), intr);
    if (!(std::abs(d) > 1e-8)) {
      throw Error(ErrorCode::kNonConvergent,
                  "undistort: distortion factor collapsed to zero");
    }
    const Eigen::Vector2d next = p_d / d;
    const double step = (next - p).norm();
    p = next;
    if (step < tol) {
      return p;
    }
  }
  throw Error(ErrorCode::kNonConvergent,
              "undistort: fixed-point iteration did not converge");
}

Eigen::Vector2d pixel_to_normalized(const Eigen::Vector2d& px,
                                    const Intrinsics& intr) {
  return {(px.x() - intr.cx) / intr.fx, (px.y() - intr.cy) / intr.fy};
}

Eigen::Vector2d normalized_to_pixel(const Eigen::Vector2d& n,
                                    const Intrinsics& intr) {
  return {intr.fx * n.x() + intr.cx, intr.fy * n.y() + intr.cy};
}

Eigen::Vector3d undistorted_ray(const Eigen::Vector2d& px,
                                const Intrinsics& intr) {
  const Eigen::Vector2d n = undistort(pixel_to_normalized(px, intr), intr);
  return {n.x(), n.y(), 1.0};
}

Eigen::Vector2d project(const Eigen::Vector3d& point_world, const Pose& pose,
                        const Intrinsics& intr) {
  const Eigen::Vector3d pc = pose.rotation * point_world + pose.translation;
  if (!(pc.z() > 0.0)) {
    throw Error(ErrorCode::kBehindCamera, "project: point behind camera");
  }
  const Eigen::Vector2d n(pc.x() / pc.z(), pc.y() / pc.z());
  return normalized_to_pixel(distort(n, intr), intr);
}

RectificationMap rectification_map(const Intrinsics& intr) {
  intr.validate();
  RectificationMap map;
  map.width = intr.width;
  map.height = intr.height;
  map.source.resize(static_cast<size_t>(intr.width) * intr.height);
  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      const Eigen::Vector2d n =
          pixel_to_normalized(Eigen::Vector2d(x, y), intr);
      map.source[static_cast<size_t>(y) * intr.width + x] =
          normalized_to_pixel(distort(n, intr), intr);
    }
  }
  return map;
}

void save_intrinsics_json(const Intrinsics& intr, const std::string& path) {
  nlohmann::ordered_json j;
  j["fx"] = intr.fx;
  j["fy"] = intr.fy;
  j["cx"] = intr.cx;
  j["cy"] = intr.cy;
  j["k1"] = intr.k1;
  j["k2"] = intr.k2;
  j["width"] = intr.width;
  j["height"] = intr.height;
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot write " + path);
  }
  out << j.dump(2) << "\n";
}

Intrinsics load_intrinsics_json(const std::string& path) {
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
    intr.fx = j.at("fx").get<double>();
    intr.fy = j.at("fy").get<double>();
    intr.cx = j.at("cx").get<double>();
    intr.cy = j.at("cy").get<double>();
    intr.k1 = j.at("k1").get<double>();
    intr.k2 = j.at("k2").get<double>();
    intr.width = j.at("width").get<int>();
    intr.height = j.at("height").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, path + ": " + e.what());
  }
  intr.validate();
  return intr;
}

}  // namespace autocalib
