#pragma once

#include <cstddef>
#include <vector>

#include "lvcal/lie.hpp"

namespace lvcal {

/// Isotropic keypoint standard deviation used when a dataset carries none.
inline constexpr double kDefaultKeypointSigma = 0.01;

inline Mat3 default_keypoint_covariance() {
  return Mat3::Identity() * kDefaultKeypointSigma * kDefaultKeypointSigma;
}

/// A navigation pose measurement T^{z_k w}_{a b_k} with its left-invariant
/// covariance.
struct TimedPose {
  double t = 0.0;
  Pose pose;
  Mat6 covariance = Mat6::Zero();
};

/// One contiguous section of the vehicle trajectory. Timestamps are strictly
/// increasing and there are at least two poses.
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(int id, std::vector<TimedPose> poses);

  int id() const { return id_; }
  const std::vector<TimedPose>& poses() const { return poses_; }
  std::size_t size() const { return poses_.size(); }
  double start_time() const { return poses_.front().t; }
  double end_time() const { return poses_.back().t; }
  bool contains(double t) const { return t >= start_time() && t <= end_time(); }

  /// On-manifold interpolation between the bracketing poses; exact at knots.
  /// Throws ObservationOutOfSpan outside [start, end] (never extrapolates).
  Pose pose_at(double t) const;
  /// Linear blend of the bracketing knot covariances.
  Mat6 covariance_at(double t) const;

 private:
  std::size_t segment(double t) const;

  int id_ = 0;
  std::vector<TimedPose> poses_;
};

struct KeypointObservation {
  double t = 0.0;
  Vec3 point_laser = Vec3::Zero();
  Mat3 covariance = default_keypoint_covariance();
};

/// A matched keypoint pair. index_a/index_b locate the observations inside
/// their submaps; obs_a/obs_b are copies of those observations.
struct Correspondence {
  int submap_a = 0;
  int submap_b = 0;
  std::size_t index_a = 0;
  std::size_t index_b = 0;
  KeypointObservation obs_a;
  KeypointObservation obs_b;
};

/// Tikhonov prior on the laser-to-INS extrinsics,
/// Sigma_0 = blkdiag(sigma_phi I, sigma_rho I)^2.
struct ExtrinsicPrior {
  Pose mean;
  double sigma_phi = 0.0;
  double sigma_rho = 0.0;

  ExtrinsicPrior() = default;
  ExtrinsicPrior(const Pose& mean_, double sigma_phi_, double sigma_rho_);

  Mat6 covariance() const;
};

/// A rigid point-cloud submap: a central pose plus precomputed offsets so that
/// central * offsets[k] is the vehicle pose when observation k was taken.
struct Submap {
  int id = 0;
  Trajectory trajectory;
  std::size_t central_index = 0;
  Pose central;
  std::vector<Pose> offsets;
  std::vector<KeypointObservation> observations;

  double central_time() const { return trajectory.poses()[central_index].t; }
  Pose vehicle_pose(std::size_t k) const { return central * offsets[k]; }
};

/// r^{pw}_a = T^{zw}_{ab} T^{sz}_{bl} [p; 1].
Vec3 register_point(const Pose& T_vehicle, const Pose& T_extrinsic, const Vec3& point_laser);

/// Per-trajectory crossing points. For every pair of trajectories the pair of
/// knots with minimum separation is found; a trajectory's crossing point is the
/// centroid of its own closest-approach knots. A lone trajectory uses its
/// middle knot.
std::vector<Vec3> crossing_points(const std::vector<Trajectory>& trajectories);

/// Index of the knot nearest to `point`; ties go to the earliest timestamp.
std::size_t nearest_pose_index(const Trajectory& traj, const Vec3& point);

/// Builds one submap around the knot nearest to `crossing_point`. Throws
/// ObservationOutOfSpan when an observation time is outside the trajectory.
Submap build_submap(const Trajectory& traj, std::vector<KeypointObservation> obs, const Vec3& crossing_point);

/// Builds all submaps, selecting central poses from the mutual crossings.
std::vector<Submap> build_submaps(const std::vector<Trajectory>& trajectories,
                                  const std::vector<std::vector<KeypointObservation>>& observations);

/// One world point per observation via central * offset * extrinsic.
std::vector<Vec3> world_keypoints(const Submap& submap, const Pose& extrinsic);

}  // namespace lvcal
