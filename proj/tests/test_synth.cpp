#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numbers>

#include "lvcal/dataset.hpp"
#include "lvcal/error.hpp"
#include "lvcal/synth.hpp"

using namespace lvcal;

namespace {

ScenarioSpec clean_spec(std::uint64_t seed) {
  ScenarioSpec s;
  s.seed = seed;
  return s;
}

}  // namespace

TEST(Generate, DeterministicForFixedSeed) {
  ScenarioSpec spec = clean_spec(4);
  spec.point_noise_sigma = 0.01;
  spec.global_drift = Twist(Vec3::Constant(0.005), Vec3::Constant(0.05));
  const std::string a = canonical_dump(to_json(generate(spec)));
  const std::string b = canonical_dump(to_json(generate(spec)));
  EXPECT_EQ(a, b);
  spec.seed = 5;
  EXPECT_NE(a, canonical_dump(to_json(generate(spec))));
}

TEST(Generate, CleanObservationsRegisterOntoTruthKeypoints) {
  for (std::uint64_t seed : {1, 2}) {
    const Scenario s = generate(clean_spec(seed));
    ASSERT_TRUE(s.truth);
    const GroundTruth& g = *s.truth;
    double worst = 0.0;
    for (std::size_t i = 0; i < s.submaps.size(); ++i) {
      const Submap& sm = s.submaps[i];
      for (std::size_t k = 0; k < sm.observations.size(); ++k) {
        const KeypointObservation& o = sm.observations[k];
        // the laser profile plane is y = 0
        EXPECT_LT(std::abs(o.point_laser.y()), 1e-9);
        const Pose T = g.trajectories[i].pose_at(o.t);
        const Vec3 world = T * (g.extrinsic * o.point_laser);
        worst = std::max(worst, (world - g.keypoints[static_cast<std::size_t>(g.observation_keypoint[i][k])]).norm());
      }
    }
    EXPECT_LT(worst, 1e-9);
  }
}

TEST(Generate, CorrespondencesMatchTheSameKeypoint) {
  const Scenario s = generate(clean_spec(3));
  const GroundTruth& g = *s.truth;
  std::map<std::pair<int, int>, int> per_pair;
  for (const Correspondence& c : s.correspondences) {
    EXPECT_EQ(g.observation_keypoint[static_cast<std::size_t>(c.submap_a)][c.index_a],
              g.observation_keypoint[static_cast<std::size_t>(c.submap_b)][c.index_b]);
    ++per_pair[{c.submap_a, c.submap_b}];
  }
  const int n = s.spec->n_submaps;
  EXPECT_EQ(static_cast<int>(per_pair.size()), n * (n - 1) / 2);
  for (const auto& [pair, count] : per_pair) {
    EXPECT_LE(count, s.spec->keypoints_per_pair);
    EXPECT_GE(count, 20);
  }
}

TEST(Generate, RejectsInfeasibleSpecs) {
  ScenarioSpec s;
  s.motion = MotionMode::Planar;  // default amplitude is 10 deg
  EXPECT_THROW(
      {
        try {
          generate(s);
        } catch (const Error& e) {
          EXPECT_EQ(e.code(), ErrorCode::InfeasibleSpec);
          throw;
        }
      },
      Error);
  s = ScenarioSpec{};
  s.n_submaps = 1;
  EXPECT_THROW(generate(s), Error);
  s = ScenarioSpec{};
  s.outlier_fraction = 0.6;
  EXPECT_THROW(generate(s), Error);
}

TEST(Generate, PlanarMotionKeepsRollAndPitchZero) {
  ScenarioSpec spec = clean_spec(1);
  spec.motion = MotionMode::Planar;
  spec.motion_amplitude = 0.0;
  const Scenario s = generate(spec);
  for (const Trajectory& t : s.truth->trajectories) {
    for (const TimedPose& p : t.poses()) {
      // body down axis stays aligned with the navigation down axis
      EXPECT_NEAR(p.pose.rotation().matrix()(2, 2), 1.0, 1e-12);
    }
  }
}

TEST(InjectDrift, GlobalDriftIsRigidPerSubmap) {
  ScenarioSpec spec = clean_spec(6);
  spec.global_drift = Twist(Vec3::Constant(0.5 * std::numbers::pi / 180.0), Vec3::Constant(0.05));
  const Scenario s = generate(spec);
  const GroundTruth& g = *s.truth;
  for (std::size_t i = 0; i < s.submaps.size(); ++i) {
    const auto& m = s.submaps[i].trajectory.poses();
    const auto& t = g.trajectories[i].poses();
    ASSERT_EQ(m.size(), t.size());
    EXPECT_GT(g.global_drift[i].vector().norm(), 0.0);
    for (std::size_t k = 1; k < m.size(); ++k) {
      const Pose dm = between(m[0].pose, m[k].pose);
      const Pose dt = between(t[0].pose, t[k].pose);
      EXPECT_LT((dm.matrix() - dt.matrix()).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(InjectDrift, LocalRandomWalkGrowsWithSqrtSteps) {
  const double sigma = 0.002;
  double sum_sq = 0.0;
  double expected = 0.0;
  int samples = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    ScenarioSpec spec = clean_spec(seed);
    spec.n_submaps = 3;
    spec.keypoints_per_pair = 5;
    spec.local_drift.rho = Vec3::Constant(sigma);
    const Scenario s = generate(spec);
    for (std::size_t i = 0; i < s.submaps.size(); ++i) {
      const auto& m = s.submaps[i].trajectory.poses();
      const auto& t = s.truth->trajectories[i].poses();
      const std::size_t n = m.size() - 1;
      const Vec3 e = between(t[n].pose, m[n].pose).translation();
      sum_sq += e.squaredNorm() / 3.0;
      expected += static_cast<double>(n) * sigma * sigma;
      ++samples;
    }
  }
  const double rms = std::sqrt(sum_sq / samples);
  const double predicted = std::sqrt(expected / samples);
  EXPECT_NEAR(rms / predicted, 1.0, 0.2);
}

TEST(Corrupt, NoiseMatchesRequestedSigma) {
  const double sigma = 0.01;
  double sum_sq = 0.0;
  int n = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Scenario clean = generate(clean_spec(seed));
    const Scenario noisy = corrupt_correspondences(clean, sigma, 0.0);
    for (std::size_t i = 0; i < clean.submaps.size(); ++i) {
      for (std::size_t k = 0; k < clean.submaps[i].observations.size(); ++k) {
        const Vec3 d = noisy.submaps[i].observations[k].point_laser - clean.submaps[i].observations[k].point_laser;
        sum_sq += d.squaredNorm();
        n += 3;
      }
      EXPECT_LT((noisy.submaps[i].observations[0].covariance - sigma * sigma * Mat3::Identity()).norm(), 1e-18);
    }
  }
  EXPECT_NEAR(std::sqrt(sum_sq / n) / sigma, 1.0, 0.05);
}

TEST(Corrupt, IdentityWithoutNoiseOrOutliers) {
  const Scenario s = generate(clean_spec(2));
  const Scenario c = corrupt_correspondences(s, 0.0, 0.0);
  EXPECT_EQ(canonical_dump(to_json(s)), canonical_dump(to_json(c)));
}

TEST(Corrupt, OutliersAreLabelledAndMostlyGated) {
  const Scenario s = generate(clean_spec(7));
  const Scenario c = corrupt_correspondences(s, 0.01, 0.2);
  const GateStats& g = c.gate;
  EXPECT_EQ(g.inliers + g.outliers, static_cast<int>(s.correspondences.size()));
  EXPECT_EQ(g.outliers, static_cast<int>(std::llround(0.2 * static_cast<double>(s.correspondences.size()))));
  EXPECT_EQ(c.correspondences.size(), static_cast<std::size_t>(g.inliers + g.outliers - g.inliers_removed -
                                                                g.outliers_removed));
  ASSERT_EQ(c.truth->outlier.size(), c.correspondences.size());
  EXPECT_GE(g.outliers_removed, g.outliers * 9 / 10);
  EXPECT_LE(g.inliers_removed, g.inliers / 100);
  // every surviving inlier still matches the same keypoint
  for (std::size_t i = 0; i < c.correspondences.size(); ++i) {
    if (c.truth->outlier[i]) continue;
    const Correspondence& k = c.correspondences[i];
    EXPECT_EQ(c.truth->observation_keypoint[static_cast<std::size_t>(k.submap_a)][k.index_a],
              c.truth->observation_keypoint[static_cast<std::size_t>(k.submap_b)][k.index_b]);
  }
}

TEST(Corrupt, GateThresholdIsTheChiSquareQuantile) {
  // chi-square CDF with 3 dof in closed form
  const double x = gate_threshold();
  const double cdf = std::erf(std::sqrt(x / 2.0)) - std::sqrt(2.0 * x / std::numbers::pi) * std::exp(-x / 2.0);
  EXPECT_NEAR(cdf, 0.999, 1e-10);
}

TEST(Generate, MatchedNoiseFollowsDriftLevels) {
  ScenarioSpec spec = clean_spec(1);
  spec.local_drift.rho = Vec3::Constant(0.002);
  const Scenario s = generate(spec);
  EXPECT_NEAR(s.noise.relpose_sigma(3), 0.002 / std::sqrt(spec.dvl_period), 1e-15);
  EXPECT_NO_THROW(s.noise.validate());
}
