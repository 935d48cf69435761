#include "autocalib/camera.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "autocalib/image.hpp"
#include "autocalib/rng.hpp"

using namespace autocalib;

namespace {

Intrinsics kitti_intrinsics() {
  Intrinsics intr;
  intr.fx = 960.115;
  intr.fy = 954.891;
  intr.cx = 694.792;
  intr.cy = 240.355;
  intr.k1 = -0.363;
  intr.k2 = 0.151;
  intr.width = 1392;
  intr.height = 512;
  return intr;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST(Distort, MatchesClosedForm) {
  // r^2 = 0.25: factor = 1 - 0.363*0.25 + 0.151*0.0625 = 0.9186875.
  const Eigen::Vector2d p = distort({0.5, 0.0}, kitti_intrinsics());
  EXPECT_NEAR(p.x(), 0.45934375, 1e-12);
  EXPECT_NEAR(p.y(), 0.0, 1e-15);
}

TEST(Distort, OriginIsFixedPoint) {
  const Eigen::Vector2d p = distort({0.0, 0.0}, kitti_intrinsics());
  EXPECT_EQ(p.x(), 0.0);
  EXPECT_EQ(p.y(), 0.0);
}

TEST(Undistort, RoundTripRandomMonotonicModels) {
  Rng rng(42);
  int tested = 0;
  while (tested < 200) {
    Intrinsics intr = kitti_intrinsics();
    intr.k1 = rng.uniform(-0.5, 0.5);
    intr.k2 = rng.uniform(-0.5, 0.5);
    // Keep only models whose distortion is strictly monotonic on the
    // sampled radius range; outside it the inverse need not exist.
    bool monotonic = true;
    for (double r = 0.0; r <= 0.76; r += 0.01) {
      const double r2 = r * r;
      if (1.0 + 3.0 * intr.k1 * r2 + 5.0 * intr.k2 * r2 * r2 < 0.02) {
        monotonic = false;
        break;
      }
    }
    if (!monotonic) continue;
    ++tested;
    const double angle = rng.uniform(0.0, 6.28318530717958647692);
    const double radius = rng.uniform(0.0, 0.7);
    const Eigen::Vector2d p_u(radius * std::cos(angle),
                              radius * std::sin(angle));
    const Eigen::Vector2d p_d = distort(p_u, intr);
    const Eigen::Vector2d back = undistort(p_d, intr);
    EXPECT_LT((back - p_u).norm(), 1e-9)
        << "k1=" << intr.k1 << " k2=" << intr.k2 << " r=" << radius;
  }
}

TEST(Undistort, ThrowsWhenNoSolutionExists) {
  // k1 = -0.5 folds at r = sqrt(2/3): max distorted radius ~0.5443, so
  // 0.56 has no preimage and the iteration cannot settle.
  Intrinsics intr = kitti_intrinsics();
  intr.k1 = -0.5;
  intr.k2 = 0.0;
  try {
    undistort({0.56, 0.0}, intr);
    FAIL() << "expected kNonConvergent";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonConvergent);
  }
}

TEST(Project, PrincipalRay) {
  Intrinsics intr;
  intr.fx = 100.0;
  intr.fy = 110.0;
  intr.cx = 50.0;
  intr.cy = 40.0;
  intr.width = 100;
  intr.height = 80;
  const Eigen::Vector2d px = project({0.0, 0.0, 2.0}, Pose{}, intr);
  EXPECT_NEAR(px.x(), 50.0, 1e-12);
  EXPECT_NEAR(px.y(), 40.0, 1e-12);
}

TEST(Project, AppliesDistortion) {
  Intrinsics intr = kitti_intrinsics();
  // Normalized (0.5, 0) distorts to 0.45934375.
  const Eigen::Vector3d p(0.5 * 3.0, 0.0, 3.0);
  const Eigen::Vector2d px = project(p, Pose{}, intr);
  EXPECT_NEAR(px.x(), intr.fx * 0.45934375 + intr.cx, 1e-9);
  EXPECT_NEAR(px.y(), intr.cy, 1e-9);
}

TEST(Project, ThrowsBehindCamera) {
  Intrinsics intr = kitti_intrinsics();
  try {
    project({0.0, 0.0, -1.0}, Pose{}, intr);
    FAIL() << "expected kBehindCamera";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBehindCamera);
  }
}

TEST(Pose, ComposeInverseRoundTrip) {
  Pose a;
  a.rotation = rotation_exp({0.1, -0.2, 0.3});
  a.translation = {1.0, 2.0, -0.5};
  const Pose id = a.compose(a.inverse());
  EXPECT_LT((id.rotation - Eigen::Matrix3d::Identity()).norm(), 1e-12);
  EXPECT_LT(id.translation.norm(), 1e-12);

  Pose b;
  b.rotation = rotation_exp({-0.4, 0.05, 0.2});
  b.translation = {0.0, -1.0, 3.0};
  const Pose rel = b.relative_to(a);  // maps a-frame to b-frame
  const Pose back = rel.compose(a);
  EXPECT_LT((back.rotation - b.rotation).norm(), 1e-12);
  EXPECT_LT((back.translation - b.translation).norm(), 1e-12);
}

TEST(Rotation, ExpLogRoundTrip) {
  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    Eigen::Vector3d w(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                      rng.uniform(-1.0, 1.0));
    w *= rng.uniform(0.0, 3.0) / std::max(1e-12, w.norm());
    const Eigen::Matrix3d r = rotation_exp(w);
    EXPECT_TRUE(is_rotation_matrix(r, 1e-9));
    const Eigen::Vector3d back = rotation_log(r);
    EXPECT_LT((rotation_exp(back) - r).norm(), 1e-8) << "angle " << w.norm();
  }
  // Small-angle branch.
  const Eigen::Vector3d tiny(1e-10, -2e-10, 5e-11);
  EXPECT_LT((rotation_log(rotation_exp(tiny)) - tiny).norm(), 1e-15);
}

TEST(Rotation, ProjectToRotation) {
  const Eigen::Matrix3d r = rotation_exp({0.3, 0.1, -0.2});
  Eigen::Matrix3d noisy = r;
  noisy(0, 1) += 1e-4;
  noisy(2, 0) -= 2e-4;
  const Eigen::Matrix3d fixed = project_to_rotation(noisy);
  EXPECT_TRUE(is_rotation_matrix(fixed, 1e-12));
  EXPECT_LT((fixed - r).norm(), 1e-3);
}

TEST(RectificationMap, IdentityWithoutDistortion) {
  Intrinsics intr;
  intr.fx = 120.0;
  intr.fy = 115.0;
  intr.cx = 64.5;
  intr.cy = 48.5;
  intr.width = 128;
  intr.height = 96;
  const RectificationMap map = rectification_map(intr);
  ASSERT_EQ(map.width, 128);
  ASSERT_EQ(map.height, 96);
  for (int y = 0; y < map.height; y += 7) {
    for (int x = 0; x < map.width; x += 7) {
      EXPECT_NEAR(map.at(x, y).x(), x, 1e-9);
      EXPECT_NEAR(map.at(x, y).y(), y, 1e-9);
    }
  }
}

TEST(RectificationMap, PullsFromDistortedPosition) {
  Intrinsics intr;
  intr.fx = 100.0;
  intr.fy = 100.0;
  intr.cx = 64.0;
  intr.cy = 48.0;
  intr.k1 = -0.3;
  intr.width = 128;
  intr.height = 96;
  const RectificationMap map = rectification_map(intr);
  // Barrel distortion pulls samples toward the center.
  const Eigen::Vector2d s = map.at(120, 90);
  EXPECT_LT(s.x(), 120.0);
  EXPECT_LT(s.y(), 90.0);
  // Center is a fixed point.
  EXPECT_NEAR(map.at(64, 48).x(), 64.0, 1e-9);
  EXPECT_NEAR(map.at(64, 48).y(), 48.0, 1e-9);
}

TEST(RectifyImage, IdentityMapKeepsBytes) {
  Intrinsics intr;
  intr.fx = 100.0;
  intr.fy = 100.0;
  intr.cx = 32.0;
  intr.cy = 24.0;
  intr.width = 64;
  intr.height = 48;
  Image img(64, 48);
  Rng rng(3);
  for (auto& p : img.pixels) p = static_cast<uint8_t>(rng.below(256));
  const Image out = rectify_image(img, rectification_map(intr));
  EXPECT_EQ(out.pixels, img.pixels);
}

TEST(RectifyImage, SizeMismatchThrows) {
  Intrinsics intr;
  intr.fx = 100.0;
  intr.fy = 100.0;
  intr.cx = 32.0;
  intr.cy = 24.0;
  intr.width = 64;
  intr.height = 48;
  Image img(32, 48);
  try {
    rectify_image(img, rectification_map(intr));
    FAIL() << "expected kDimensionMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}

TEST(Pgm, RoundTrip) {
  Image img(33, 17);
  Rng rng(11);
  for (auto& p : img.pixels) p = static_cast<uint8_t>(rng.below(256));
  const std::string path = temp_path("autocalib_test_roundtrip.pgm");
  write_pgm(img, path);
  const Image back = read_pgm(path);
  EXPECT_EQ(back.width, img.width);
  EXPECT_EQ(back.height, img.height);
  EXPECT_EQ(back.pixels, img.pixels);
  std::remove(path.c_str());
}

TEST(Pgm, RejectsBadMagicAndTruncation) {
  const std::string path = temp_path("autocalib_test_bad.pgm");
  {
    std::ofstream out(path, std::ios::binary);
    out << "P6\n4 4\n255\n";
  }
  EXPECT_THROW(read_pgm(path), Error);
  {
    std::ofstream out(path, std::ios::binary);
    out << "P5\n4 4\n255\nab";  // 2 of 16 bytes
  }
  try {
    read_pgm(path);
    FAIL() << "expected kParse";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
  }
  EXPECT_THROW(read_pgm(temp_path("autocalib_no_such_file.pgm")), Error);
  std::remove(path.c_str());
}

TEST(Pgm, ParsesComments) {
  const std::string path = temp_path("autocalib_test_comment.pgm");
  {
    std::ofstream out(path, std::ios::binary);
    out << "P5\n# a comment\n2 2\n255\nabcd";
  }
  const Image img = read_pgm(path);
  EXPECT_EQ(img.width, 2);
  EXPECT_EQ(img.height, 2);
  EXPECT_EQ(img.at(0, 0), 'a');
  EXPECT_EQ(img.at(1, 1), 'd');
  std::remove(path.c_str());
}

TEST(Ssim, IdenticalImagesScoreOne) {
  Image img(40, 32);
  Rng rng(5);
  for (auto& p : img.pixels) p = static_cast<uint8_t>(rng.below(256));
  EXPECT_DOUBLE_EQ(ssim_mean(img, img), 1.0);
}

TEST(Ssim, ConstantImagesMatchClosedForm) {
  Image a(32, 32, 0);
  Image b(32, 32, 255);
  const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  const double expected = c1 / (255.0 * 255.0 + c1);
  EXPECT_NEAR(ssim_mean(a, b), expected, 1e-12);
}

TEST(Ssim, SizeMismatchThrows) {
  Image a(32, 32);
  Image b(32, 16);
  try {
    ssim_mean(a, b);
    FAIL() << "expected kDimensionMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}

TEST(IntrinsicsJson, RoundTrip) {
  const Intrinsics intr = kitti_intrinsics();
  const std::string path = temp_path("autocalib_test_intr.json");
  save_intrinsics_json(intr, path);
  const Intrinsics back = load_intrinsics_json(path);
  EXPECT_EQ(back.fx, intr.fx);
  EXPECT_EQ(back.fy, intr.fy);
  EXPECT_EQ(back.cx, intr.cx);
  EXPECT_EQ(back.cy, intr.cy);
  EXPECT_EQ(back.k1, intr.k1);
  EXPECT_EQ(back.k2, intr.k2);
  EXPECT_EQ(back.width, intr.width);
  EXPECT_EQ(back.height, intr.height);
  std::remove(path.c_str());
}

TEST(IntrinsicsJson, Errors) {
  const std::string path = temp_path("autocalib_test_intr_bad.json");
  EXPECT_THROW(load_intrinsics_json(temp_path("autocalib_nope.json")), Error);
  {
    std::ofstream out(path);
    out << "{ not json";
  }
  try {
    load_intrinsics_json(path);
    FAIL() << "expected kParse";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
  }
  {
    std::ofstream out(path);
    out << R"({"fx":-1,"fy":1,"cx":1,"cy":1,"k1":0,"k2":0,"width":2,"height":2})";
  }
  try {
    load_intrinsics_json(path);
    FAIL() << "expected kInvalidArgument";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
  std::remove(path.c_str());
}

TEST(Intrinsics, ValidateChecksRanges) {
  Intrinsics intr = kitti_intrinsics();
  EXPECT_NO_THROW(intr.validate());
  intr.k1 = -1.5;
  EXPECT_THROW(intr.validate(), Error);
  intr = kitti_intrinsics();
  intr.cx = 2000.0;
  EXPECT_THROW(intr.validate(), Error);
}

TEST(BilinearSample, InterpolatesAndZeroPads) {
  Image img(4, 4, 0);
  img.at(1, 1) = 100;
  img.at(2, 1) = 200;
  EXPECT_DOUBLE_EQ(bilinear_sample(img, 1.5, 1.0), 150.0);
  EXPECT_DOUBLE_EQ(bilinear_sample(img, -0.5, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(bilinear_sample(img, 3.5, 3.5), 0.0);
}
