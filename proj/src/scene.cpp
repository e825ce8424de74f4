#include "lvcal/scene.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

#include "lvcal/error.hpp"

namespace lvcal {

Trajectory::Trajectory(int id, std::vector<TimedPose> poses) : id_(id), poses_(std::move(poses)) {
  if (poses_.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "trajectory " + std::to_string(id_) + " needs at least two poses");
  }
  for (std::size_t k = 1; k < poses_.size(); ++k) {
    if (!(poses_[k].t > poses_[k - 1].t)) {
      std::ostringstream os;
      os << "trajectory " << id_ << ": timestamps not strictly increasing at index " << k;
      throw Error(ErrorCode::InvalidArgument, os.str());
    }
  }
}

std::size_t Trajectory::segment(double t) const {
  if (!contains(t)) {
    std::ostringstream os;
    os << "time " << t << " outside trajectory " << id_ << " span [" << start_time() << ", " << end_time() << "]";
    throw Error(ErrorCode::ObservationOutOfSpan, os.str());
  }
  auto it = std::upper_bound(poses_.begin(), poses_.end(), t,
                             [](double value, const TimedPose& p) { return value < p.t; });
  const auto k = static_cast<std::size_t>(std::distance(poses_.begin(), it));
  return std::min(k, poses_.size() - 1) - 1;
}

Pose Trajectory::pose_at(double t) const {
  const std::size_t k = segment(t);
  const TimedPose& a = poses_[k];
  const TimedPose& b = poses_[k + 1];
  if (t == a.t) return a.pose;
  if (t == b.t) return b.pose;
  return interpolate(a.pose, b.pose, a.t, b.t, t);
}

Mat6 Trajectory::covariance_at(double t) const {
  const std::size_t k = segment(t);
  const TimedPose& a = poses_[k];
  const TimedPose& b = poses_[k + 1];
  const double alpha = (t - a.t) / (b.t - a.t);
  return (1.0 - alpha) * a.covariance + alpha * b.covariance;
}

ExtrinsicPrior::ExtrinsicPrior(const Pose& mean_, double sigma_phi_, double sigma_rho_)
    : mean(mean_), sigma_phi(sigma_phi_), sigma_rho(sigma_rho_) {
  if (!(sigma_phi > 0.0) || !(sigma_rho > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "extrinsic prior standard deviations must be positive");
  }
}

Mat6 ExtrinsicPrior::covariance() const {
  Vec6 d;
  d << Vec3::Constant(sigma_phi * sigma_phi), Vec3::Constant(sigma_rho * sigma_rho);
  return d.asDiagonal();
}

Vec3 register_point(const Pose& T_vehicle, const Pose& T_extrinsic, const Vec3& point_laser) {
  return T_vehicle * (T_extrinsic * point_laser);
}

std::vector<Vec3> crossing_points(const std::vector<Trajectory>& trajectories) {
  const std::size_t n = trajectories.size();
  std::vector<Vec3> sums(n, Vec3::Zero());
  std::vector<int> counts(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double best = std::numeric_limits<double>::infinity();
      Vec3 pi = Vec3::Zero();
      Vec3 pj = Vec3::Zero();
      for (const TimedPose& a : trajectories[i].poses()) {
        for (const TimedPose& b : trajectories[j].poses()) {
          const double d = (a.pose.translation() - b.pose.translation()).squaredNorm();
          if (d < best) {
            best = d;
            pi = a.pose.translation();
            pj = b.pose.translation();
          }
        }
      }
      sums[i] += pi;
      sums[j] += pj;
      ++counts[i];
      ++counts[j];
    }
  }
  std::vector<Vec3> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (counts[i] > 0) {
      out[i] = sums[i] / counts[i];
    } else {
      const auto& poses = trajectories[i].poses();
      out[i] = poses[poses.size() / 2].pose.translation();
    }
  }
  return out;
}

std::size_t nearest_pose_index(const Trajectory& traj, const Vec3& point) {
  std::size_t best_index = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const double d = (traj.poses()[k].pose.translation() - point).squaredNorm();
    if (d < best) {
      best = d;
      best_index = k;
    }
  }
  return best_index;
}

Submap build_submap(const Trajectory& traj, std::vector<KeypointObservation> obs, const Vec3& crossing_point) {
  Submap s;
  s.id = traj.id();
  s.trajectory = traj;
  s.central_index = nearest_pose_index(traj, crossing_point);
  s.central = traj.poses()[s.central_index].pose;
  s.offsets.reserve(obs.size());
  for (const KeypointObservation& o : obs) {
    s.offsets.push_back(between(s.central, traj.pose_at(o.t)));
  }
  s.observations = std::move(obs);
  return s;
}

std::vector<Submap> build_submaps(const std::vector<Trajectory>& trajectories,
                                  const std::vector<std::vector<KeypointObservation>>& observations) {
  if (observations.size() != trajectories.size()) {
    throw Error(ErrorCode::InvalidArgument, "one observation list per trajectory required");
  }
  const std::vector<Vec3> crossings = crossing_points(trajectories);
  std::vector<Submap> out;
  out.reserve(trajectories.size());
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    out.push_back(build_submap(trajectories[i], observations[i], crossings[i]));
  }
  return out;
}

std::vector<Vec3> world_keypoints(const Submap& submap, const Pose& extrinsic) {
  std::vector<Vec3> out;
  out.reserve(submap.observations.size());
  for (std::size_t k = 0; k < submap.observations.size(); ++k) {
    out.push_back(register_point(submap.vehicle_pose(k), extrinsic, submap.observations[k].point_laser));
  }
  return out;
}

}  // namespace lvcal
