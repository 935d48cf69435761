#include "autocalib/epipolar.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "autocalib/camera.hpp"
#include "autocalib/rng.hpp"
#include "test_util.hpp"

using namespace autocalib;
using namespace autocalib::testutil;

namespace {

Pose turning_pose() {
  Pose pose;
  pose.rotation = rotation_exp({0.0, 0.12, 0.0});
  pose.translation = -pose.rotation * Eigen::Vector3d(0.4, 0.0, 1.2);
  return pose;
}

}  // namespace

TEST(EstimateFundamental, RecoversGroundTruth) {
  const TwoViewScene scene = make_two_view(turning_pose(), 60, 101);
  const FundamentalEstimate est = estimate_fundamental(scene.matches);
  EXPECT_GT(f_alignment(est.f, scene.f_gt), 1.0 - 1e-8);
  EXPECT_LT(est.residual_rms, 1e-6);
  EXPECT_EQ(est.inlier_ids.size(), scene.matches.size());
  for (const Match& m : scene.matches) {
    EXPECT_LT(sampson_distance(est.f, m.p_i, m.p_j), 1e-6);
  }
  EXPECT_NEAR(est.f.norm(), 1.0, 1e-12);
}

TEST(EstimateFundamental, TooFewMatchesThrows) {
  const TwoViewScene scene = make_two_view(turning_pose(), 7, 102);
  try {
    estimate_fundamental(scene.matches);
    FAIL() << "expected kInsufficientMatches";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientMatches);
  }
}

TEST(EstimateFundamental, CoincidentPointsThrow) {
  std::vector<Match> matches(10);
  for (size_t k = 0; k < matches.size(); ++k) {
    matches[k] = Match{static_cast<long>(k), {100.0, 100.0}, {120.0, 90.0}};
  }
  try {
    estimate_fundamental(matches);
    FAIL() << "expected kDegenerateConfiguration";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateConfiguration);
  }
}

TEST(SampsonDistance, ZeroOnPerfectCorrespondence) {
  const TwoViewScene scene = make_two_view(turning_pose(), 20, 103);
  for (const Match& m : scene.matches) {
    EXPECT_LT(sampson_distance(scene.f_gt, m.p_i, m.p_j), 1e-8);
  }
  // A perturbed point registers its distance to the epipolar line, which
  // is positive but never exceeds the full perturbation.
  Match m = scene.matches[0];
  m.p_j.x() += 2.0;
  const double d = sampson_distance(scene.f_gt, m.p_i, m.p_j);
  EXPECT_GT(d, 0.02);
  EXPECT_LT(d, 2.002);
}

TEST(RansacFundamental, RejectsOutliers) {
  TwoViewScene scene = make_two_view(turning_pose(), 80, 104);
  Rng rng(9);
  // 30% gross outliers.
  std::vector<int> clean_ids;
  for (int k = 0; k < 80; ++k) {
    if (k % 10 < 3) {
      scene.matches[k].p_j =
          Eigen::Vector2d(rng.uniform(0.0, 800.0), rng.uniform(0.0, 600.0));
    } else {
      clean_ids.push_back(k);
    }
  }
  const FundamentalEstimate est =
      ransac_fundamental(scene.matches, 1.0, 2000, 7);
  EXPECT_GE(est.inlier_ids.size(), clean_ids.size() - 2);
  EXPECT_GT(f_alignment(est.f, scene.f_gt), 1.0 - 1e-6);
  // The robust refit can admit the odd outlier that falls inside the
  // threshold, so the model is near-exact rather than exact on clean
  // matches; "near" means far under the 1 px threshold.
  for (int id : clean_ids) {
    EXPECT_LT(
        sampson_distance(est.f, scene.matches[id].p_i, scene.matches[id].p_j),
        0.05);
  }
}

TEST(RansacFundamental, DeterministicForFixedSeed) {
  TwoViewScene scene = make_two_view(turning_pose(), 60, 105);
  Rng rng(10);
  for (int k = 0; k < 60; k += 4) {
    scene.matches[k].p_j =
        Eigen::Vector2d(rng.uniform(0.0, 800.0), rng.uniform(0.0, 600.0));
  }
  const FundamentalEstimate a = ransac_fundamental(scene.matches, 1.0, 500, 3);
  const FundamentalEstimate b = ransac_fundamental(scene.matches, 1.0, 500, 3);
  EXPECT_EQ(a.inlier_ids, b.inlier_ids);
  EXPECT_EQ((a.f - b.f).norm(), 0.0);
}

TEST(RansacFundamental, ConsensusBelowMinimumThrows) {
  const TwoViewScene scene = make_two_view(turning_pose(), 12, 106);
  try {
    ransac_fundamental(scene.matches, 1.0, 200, 1);
    FAIL() << "expected kNoConsensus";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoConsensus);
  }
}

TEST(Epipole, MatchesProjectedCameraCenter) {
  const Pose pose_j = turning_pose();
  const TwoViewScene scene = make_two_view(pose_j, 40, 107);
  const Eigen::Vector3d e = epipole(scene.f_gt);
  // The right epipole is the image of camera j's center in view i.
  Eigen::Matrix3d k;
  k << scene.intr.fx, 0.0, scene.intr.cx, 0.0, scene.intr.fy, scene.intr.cy,
      0.0, 0.0, 1.0;
  Eigen::Vector3d expected = k * pose_j.center();
  expected.normalize();
  EXPECT_LT(e.cross(expected).norm(), 1e-9);
  EXPECT_LT((scene.f_gt * e).norm(), 1e-9);
}

TEST(Epipole, FullRankThrows) {
  try {
    epipole(Eigen::Matrix3d::Identity());
    FAIL() << "expected kNotRankDeficient";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotRankDeficient);
  }
}

TEST(EssentialFromFundamental, HasTwinSingularValues) {
  const TwoViewScene scene = make_two_view(turning_pose(), 50, 108);
  const FundamentalEstimate est = estimate_fundamental(scene.matches);
  const Eigen::Matrix3d e = essential_from_fundamental(est.f, scene.intr);
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(e);
  const Eigen::Vector3d s = svd.singularValues();
  EXPECT_NEAR(s(0), s(1), 1e-9 * s(0));
  EXPECT_LT(s(2), 1e-9 * s(0));
  // E must align with [t]x R up to scale/sign.
  const Pose pose = turning_pose();
  const Eigen::Matrix3d e_gt = skew(pose.translation) * pose.rotation;
  EXPECT_GT(f_alignment(e, e_gt), 1.0 - 1e-6);
}

TEST(RecoverPose, FindsRotationAndTranslationDirection)
{
  const Pose pose_j = turning_pose();
  const TwoViewScene scene = make_two_view(pose_j, 60, 109);
  const FundamentalEstimate est = estimate_fundamental(scene.matches);
  const Eigen::Matrix3d e = essential_from_fundamental(est.f, scene.intr);
  const Pose recovered = recover_pose(e, scene.matches, scene.intr);
  EXPECT_LT(rotation_log(recovered.rotation * pose_j.rotation.transpose())
                .norm(),
            1e-6);
  const Eigen::Vector3d t_gt = pose_j.translation.normalized();
  EXPECT_GT(recovered.translation.normalized().dot(t_gt), 1.0 - 1e-9);
  EXPECT_NEAR(recovered.translation.norm(), 1.0, 1e-12);
}

TEST(RecoverPose, AmbiguousCheiralityThrows) {
  const TwoViewScene scene = make_two_view(turning_pose(), 40, 110);
  const Eigen::Matrix3d e =
      skew(turning_pose().translation) * turning_pose().rotation;
  // Random pixel pairs are inconsistent with any single camera pair.
  Rng rng(12);
  std::vector<Match> garbage(40);
  for (size_t k = 0; k < garbage.size(); ++k) {
    garbage[k] = Match{static_cast<long>(k),
                       {rng.uniform(0.0, 800.0), rng.uniform(0.0, 600.0)},
                       {rng.uniform(0.0, 800.0), rng.uniform(0.0, 600.0)}};
  }
  try {
    recover_pose(e, garbage, scene.intr);
    FAIL() << "expected kCheiralityAmbiguous";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCheiralityAmbiguous);
  }
}

TEST(Triangulate, ReprojectsExactly) {
  const Pose pose_j = turning_pose();
  const TwoViewScene scene = make_two_view(pose_j, 30, 111);
  for (size_t k = 0; k < scene.matches.size(); ++k) {
    const Eigen::Vector3d x =
        triangulate(scene.pose_i, pose_j, scene.intr, scene.matches[k].p_i,
                    scene.matches[k].p_j, 0.2);
    EXPECT_LT((x - scene.points[k]).norm(), 1e-6);
  }
}

TEST(Triangulate, LowParallaxThrows) {
  // Nearly identical cameras: rays are parallel.
  Pose pose_j;
  pose_j.translation = {1e-7, 0.0, 0.0};
  const Intrinsics intr = simple_intrinsics();
  try {
    triangulate(Pose{}, pose_j, intr, {400.0, 300.0}, {400.0, 300.0});
    FAIL() << "expected kInsufficientParallax";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientParallax);
  }
}

TEST(RayParallax, MatchesClosedForm) {
  // Cameras 1 m apart, both seeing a point 10 m ahead of the midpoint.
  const Intrinsics intr = simple_intrinsics();
  Pose pose_i;  // at origin
  Pose pose_j;
  pose_j.translation = {-1.0, 0.0, 0.0};  // center at (1, 0, 0)
  const Eigen::Vector3d p(0.5, 0.0, 10.0);
  const Eigen::Vector2d pi = project(p, pose_i, intr);
  const Eigen::Vector2d pj = project(p, pose_j, intr);
  const double expected =
      2.0 * std::atan(0.5 / 10.0) * 180.0 / 3.14159265358979323846;
  EXPECT_NEAR(ray_parallax_deg(pose_i, pose_j, intr, pi, pj), expected, 1e-6);
}

TEST(MatchList, RoundTripAndErrors) {
  const TwoViewScene scene = make_two_view(turning_pose(), 12, 112);
  const std::string path =
      (std::filesystem::temp_directory_path() / "autocalib_matches.txt")
          .string();
  save_match_list(scene.matches, path);
  const std::vector<Match> back = load_match_list(path);
  ASSERT_EQ(back.size(), scene.matches.size());
  for (size_t k = 0; k < back.size(); ++k) {
    EXPECT_EQ(back[k].track_id, scene.matches[k].track_id);
    EXPECT_EQ(back[k].p_i, scene.matches[k].p_i);
    EXPECT_EQ(back[k].p_j, scene.matches[k].p_j);
  }
  {
    std::ofstream out(path);
    out << "1 2.0 3.0 4.0\n";  // five fields required
  }
  try {
    load_match_list(path);
    FAIL() << "expected kParse";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
  }
  std::remove(path.c_str());
}
