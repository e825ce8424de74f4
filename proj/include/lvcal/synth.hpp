#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "lvcal/factors.hpp"
#include "lvcal/scene.hpp"

namespace lvcal {

enum class MotionMode { Planar, Excited };

/// Laser-to-INS extrinsics used when a spec does not set one: an ENU-to-NED
/// principal rotation with a small mounting tilt and a forward lever arm.
Pose default_true_extrinsic();
/// 2 deg / 5 cm prior offset along fixed oblique axes.
Twist default_prior_offset();

struct ScenarioSpec {
  std::uint64_t seed = 1;
  int n_submaps = 8;
  int keypoints_per_pair = 30;
  MotionMode motion = MotionMode::Excited;
  double motion_amplitude = 0.17453292519943295;  // roll/pitch, rad
  Pose true_extrinsic = default_true_extrinsic();
  Twist prior_offset = default_prior_offset();
  double prior_sigma_phi = 0.017453292519943295;
  double prior_sigma_rho = 0.05;
  /// Per-axis standard deviations of the rigid per-submap drift.
  Twist global_drift;
  /// Per-axis standard deviations of one random-walk step (per DVL period).
  Twist local_drift;
  double point_noise_sigma = 0.0;
  double outlier_fraction = 0.0;

  double altitude = 8.0;
  double speed = 0.5;
  double dvl_period = 1.0;
  double half_swath = 0.4363323129985824;  // 25 deg
  double lateral_offset = 1.0;
  double depth_amplitude = 0.5;
  double seafloor_depth = 20.0;
  /// Keypoint field radius; 0 selects the swath half-width.
  double field_radius = 0.0;
  /// Poisson-disk spacing; 0 derives it from the field density.
  double keypoint_spacing = 0.0;
  /// Number of field keypoints; 0 selects 3 * keypoints_per_pair.
  int keypoint_count = 0;

  /// Throws InfeasibleSpec on violated invariants.
  void validate() const;
};

struct GateStats {
  int inliers = 0;
  int outliers = 0;
  int inliers_removed = 0;
  int outliers_removed = 0;
};

struct GroundTruth {
  Pose extrinsic;
  std::vector<Trajectory> trajectories;
  std::vector<Vec3> keypoints;
  /// keypoint index of every submap observation
  std::vector<std::vector<int>> observation_keypoint;
  /// one label per (kept) correspondence
  std::vector<bool> outlier;
  /// per-submap drift twist about the central position
  std::vector<Twist> global_drift;
};

struct Scenario {
  std::optional<ScenarioSpec> spec;
  std::vector<Submap> submaps;
  std::vector<Correspondence> correspondences;
  ExtrinsicPrior prior;
  NoiseParams noise;
  std::optional<GroundTruth> truth;
  GateStats gate;

  /// Measured DVL-INS trajectories, one per submap.
  std::vector<Trajectory> trajectories() const;
  std::vector<std::vector<KeypointObservation>> observations() const;

  /// Rebuilds the submaps from measured trajectories and observations and
  /// refreshes the observation copies held by the correspondences.
  void rebuild(const std::vector<Trajectory>& measured, const std::vector<std::vector<KeypointObservation>>& obs);
  void refresh_correspondences();
};

/// Deterministic for a fixed spec. Applies drift, noise and outliers as the
/// spec requests. Throws InfeasibleSpec.
Scenario generate(const ScenarioSpec& spec);

/// Replaces the measured trajectories by drifted copies of the ground truth.
Scenario inject_drift(const Scenario& scenario, bool global, bool local);

/// Gaussian noise on laser points, outlier rematching, then chi-square gating
/// against the prior extrinsic and measured poses.
Scenario corrupt_correspondences(const Scenario& scenario, double noise_sigma, double outlier_fraction);

/// 99.9% chi-square quantile with 3 degrees of freedom.
double gate_threshold();

/// Mahalanobis statistic used by the gate for one correspondence.
double gate_statistic(const Scenario& scenario, const Correspondence& corr);

}  // namespace lvcal
