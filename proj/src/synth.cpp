#include "lvcal/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <string>

#include <boost/math/distributions/chi_squared.hpp>

#include "lvcal/error.hpp"

namespace lvcal {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;
constexpr double kPointSigmaFloor = 1e-3;
constexpr double kPoseSigmaFloor = 1e-4;
constexpr double kPlanarLimit = 3.0 * kDeg;

constexpr double kRollPeriod = 17.0;
constexpr double kPitchPeriod = 30.0;
constexpr double kDepthPeriod = 40.0;
constexpr double kPassGap = 100.0;

using Rng = std::mt19937_64;

Rng make_rng(std::uint64_t seed, std::uint32_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), salt};
  return Rng(seq);
}

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

Vec6 gaussian(Rng& rng, const Vec6& sigma) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec6 v;
  for (int i = 0; i < 6; ++i) v(i) = sigma(i) * n(rng);
  return v;
}

Mat6 pose_floor() { return Mat6::Identity() * kPoseSigmaFloor * kPoseSigmaFloor; }

Mat3 point_covariance(double sigma) {
  const double s = std::max(sigma, kPointSigmaFloor);
  return Mat3::Identity() * s * s;
}

Rotation axis_rotation(int axis, double angle) {
  Vec3 v = Vec3::Zero();
  v(axis) = angle;
  return Rotation::exp(v);
}

struct Pass {
  double heading = 0.0;
  double lateral = 0.0;
  double t0 = 0.0;
  double roll_phase = 0.0;
  double pitch_phase = 0.0;
  double depth_phase = 0.0;
};

struct Geometry {
  double field_radius = 0.0;
  double half_length = 0.0;
  int knots = 0;
  double duration = 0.0;
};

Geometry geometry(const ScenarioSpec& spec) {
  Geometry g;
  g.field_radius = spec.field_radius > 0.0 ? spec.field_radius : spec.altitude * std::tan(spec.half_swath);
  // room for the footprint to lead/lag the vehicle under pitch
  const double lead = spec.altitude * std::tan(std::min(spec.motion_amplitude + 0.1, 1.2)) + 4.0;
  g.half_length = g.field_radius + lead;
  g.knots = static_cast<int>(std::ceil(2.0 * g.half_length / (spec.speed * spec.dvl_period))) + 1;
  g.duration = (g.knots - 1) * spec.dvl_period;
  return g;
}

Pose pass_pose(const ScenarioSpec& spec, const Geometry& g, const Pass& p, double tau) {
  const Vec3 dir(std::cos(p.heading), std::sin(p.heading), 0.0);
  const Vec3 perp(-std::sin(p.heading), std::cos(p.heading), 0.0);
  const double s = -g.half_length + spec.speed * tau;
  Vec3 r = s * dir + p.lateral * perp;
  r.z() = spec.seafloor_depth - spec.altitude +
          spec.depth_amplitude * std::sin(2.0 * kPi * tau / kDepthPeriod + p.depth_phase);
  const double a = spec.motion_amplitude;
  const double roll = a * std::sin(2.0 * kPi * tau / kRollPeriod + p.roll_phase);
  const double pitch = a * std::sin(2.0 * kPi * tau / kPitchPeriod + p.pitch_phase);
  const Rotation C = axis_rotation(2, p.heading) * axis_rotation(1, pitch) * axis_rotation(0, roll);
  return {C, r};
}

std::vector<Vec3> keypoint_field(const ScenarioSpec& spec, const Geometry& g, Rng& rng) {
  const int target = spec.keypoint_count > 0 ? spec.keypoint_count : 3 * spec.keypoints_per_pair;
  const double area = kPi * g.field_radius * g.field_radius;
  const double spacing = spec.keypoint_spacing > 0.0 ? spec.keypoint_spacing : 0.5 * std::sqrt(area / target);
  const double k1 = uniform(rng, 0.6, 1.0);
  const double k2 = uniform(rng, 0.6, 1.0);
  const double ph1 = uniform(rng, 0.0, 2.0 * kPi);
  const double ph2 = uniform(rng, 0.0, 2.0 * kPi);
  std::vector<Vec3> pts;
  for (int attempt = 0; attempt < 200 * target && static_cast<int>(pts.size()) < target; ++attempt) {
    const double rad = g.field_radius * std::sqrt(uniform(rng, 0.0, 1.0));
    const double ang = uniform(rng, 0.0, 2.0 * kPi);
    const double x = rad * std::cos(ang);
    const double y = rad * std::sin(ang);
    bool ok = true;
    for (const Vec3& q : pts) {
      if (std::hypot(q.x() - x, q.y() - y) < spacing) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    const double z = spec.seafloor_depth + 0.3 * std::sin(k1 * x + ph1) * std::cos(k2 * y + ph2);
    pts.emplace_back(x, y, z);
  }
  return pts;
}

struct Sighting {
  double t = 0.0;
  Vec3 point = Vec3::Zero();
};

// The time at which the laser profile plane (y_l = 0) sweeps over q, if it
// does so inside the swath.
std::optional<Sighting> sight(const Trajectory& traj, const Pose& X, const Vec3& q, double half_swath,
                              double step) {
  auto laser = [&](double t) { return (traj.pose_at(t) * X).inverse() * q; };
  double ta = traj.start_time();
  double fa = laser(ta).y();
  for (double tb = ta + step;; tb += step) {
    tb = std::min(tb, traj.end_time());
    const double fb = laser(tb).y();
    if (fa == 0.0 || (fa < 0.0) != (fb < 0.0)) {
      double lo = ta;
      double hi = tb;
      double flo = fa;
      for (int it = 0; it < 200 && hi - lo > 1e-12 && flo != 0.0; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = laser(mid).y();
        if ((fm < 0.0) == (flo < 0.0) && fm != 0.0) {
          lo = mid;
          flo = fm;
        } else {
          hi = mid;
        }
      }
      const double t = flo == 0.0 ? lo : 0.5 * (lo + hi);
      const Vec3 u = laser(t);
      if (u.z() < 0.0 && std::atan2(std::abs(u.x()), -u.z()) <= half_swath) return Sighting{t, u};
      return std::nullopt;
    }
    if (tb >= traj.end_time()) break;
    ta = tb;
    fa = fb;
  }
  return std::nullopt;
}

void add_floor(std::vector<Trajectory>& trajs) {
  for (Trajectory& tr : trajs) {
    std::vector<TimedPose> poses = tr.poses();
    for (TimedPose& p : poses) p.covariance += pose_floor();
    tr = Trajectory(tr.id(), std::move(poses));
  }
}

// Noise parameters consistent with what was injected into the measurements.
NoiseParams matched_noise(const Scenario& s, const ScenarioSpec& spec) {
  NoiseParams n;
  n.wnoa_psd = Mat6::Identity();
  Vec6 local = spec.local_drift.vector() / std::sqrt(spec.dvl_period);
  n.relpose_sigma = local.cwiseMax(kPoseSigmaFloor);
  double phi = std::max(spec.global_drift.phi.maxCoeff(), kPoseSigmaFloor);
  Vec3 rho = spec.global_drift.rho.cwiseMax(kPoseSigmaFloor);
  for (const Submap& sm : s.submaps) {
    const Mat6& c = sm.trajectory.poses()[sm.central_index].covariance;
    phi = std::max(phi, std::sqrt(c.diagonal().head<3>().maxCoeff()));
    rho = rho.cwiseMax(c.diagonal().tail<3>().cwiseSqrt());
  }
  n.submap_prior_sigma_phi = phi;
  n.submap_prior_sigma_rho = rho;
  return n;
}

}  // namespace

Pose default_true_extrinsic() {
  Mat3 enu_ned;
  enu_ned << 0, 1, 0, 1, 0, 0, 0, 0, -1;
  const Rotation tilt = Rotation::exp(Vec3(0.4, -0.6, 0.8) * kDeg);
  return {Rotation(enu_ned) * tilt, Vec3(-0.75, 0.02, 0.35)};
}

Twist default_prior_offset() {
  return {Vec3(1.0, -1.0, 0.5).normalized() * 2.0 * kDeg, Vec3(0.6, 0.64, -0.48).normalized() * 0.05};
}

void ScenarioSpec::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::InfeasibleSpec, why); };
  if (n_submaps < 2) fail("n_submaps must be at least 2");
  if (keypoints_per_pair < 2) fail("keypoints_per_pair must be at least 2");
  if (!(outlier_fraction >= 0.0 && outlier_fraction < 0.5)) fail("outlier_fraction must lie in [0, 0.5)");
  if (point_noise_sigma < 0.0 || global_drift.vector().minCoeff() < 0.0 || local_drift.vector().minCoeff() < 0.0) {
    fail("standard deviations must be non-negative");
  }
  if (!(prior_sigma_phi > 0.0) || !(prior_sigma_rho > 0.0)) fail("prior sigmas must be positive");
  if (motion_amplitude < 0.0) fail("motion_amplitude must be non-negative");
  if (motion == MotionMode::Planar && motion_amplitude > kPlanarLimit) fail("planar motion allows at most 3 deg");
  if (!(altitude > 0.0) || !(speed > 0.0) || !(dvl_period > 0.0)) fail("altitude, speed and dvl_period must be positive");
  if (!(half_swath > 0.0 && half_swath < kPi / 2)) fail("half_swath must lie in (0, 90) deg");
  if (lateral_offset < 0.0 || depth_amplitude < 0.0 || field_radius < 0.0 || keypoint_spacing < 0.0 ||
      keypoint_count < 0) {
    fail("geometry parameters must be non-negative");
  }
}

std::vector<Trajectory> Scenario::trajectories() const {
  std::vector<Trajectory> out;
  for (const Submap& s : submaps) out.push_back(s.trajectory);
  return out;
}

std::vector<std::vector<KeypointObservation>> Scenario::observations() const {
  std::vector<std::vector<KeypointObservation>> out;
  for (const Submap& s : submaps) out.push_back(s.observations);
  return out;
}

void Scenario::rebuild(const std::vector<Trajectory>& measured,
                       const std::vector<std::vector<KeypointObservation>>& obs) {
  submaps = build_submaps(measured, obs);
  refresh_correspondences();
}

void Scenario::refresh_correspondences() {
  for (Correspondence& c : correspondences) {
    if (c.submap_a < 0 || c.submap_b < 0 || c.submap_a >= static_cast<int>(submaps.size()) ||
        c.submap_b >= static_cast<int>(submaps.size()) || c.submap_a == c.submap_b) {
      throw Error(ErrorCode::InvalidArgument, "correspondence references an invalid submap pair");
    }
    const Submap& a = submaps[static_cast<std::size_t>(c.submap_a)];
    const Submap& b = submaps[static_cast<std::size_t>(c.submap_b)];
    if (c.index_a >= a.observations.size() || c.index_b >= b.observations.size()) {
      throw Error(ErrorCode::InvalidArgument, "correspondence observation index out of range");
    }
    c.obs_a = a.observations[c.index_a];
    c.obs_b = b.observations[c.index_b];
  }
}

namespace {

Scenario generate_clean(const ScenarioSpec& spec) {
  Rng rng = make_rng(spec.seed, 0);
  const Geometry g = geometry(spec);
  const std::vector<Vec3> field = keypoint_field(spec, g, rng);

  const int n = spec.n_submaps;
  std::vector<Trajectory> truth;
  for (int i = 0; i < n; ++i) {
    Pass p;
    p.heading = 2.0 * kPi * i / n + uniform(rng, -0.1, 0.1);
    p.lateral = uniform(rng, -spec.lateral_offset, spec.lateral_offset);
    p.t0 = i * (g.duration + kPassGap);
    p.roll_phase = uniform(rng, 0.0, 2.0 * kPi);
    p.pitch_phase = uniform(rng, 0.0, 2.0 * kPi);
    p.depth_phase = uniform(rng, 0.0, 2.0 * kPi);
    std::vector<TimedPose> knots;
    for (int k = 0; k < g.knots; ++k) {
      const double tau = k * spec.dvl_period;
      knots.push_back({p.t0 + tau, pass_pose(spec, g, p, tau), Mat6::Zero()});
    }
    truth.emplace_back(i, std::move(knots));
  }

  // which keypoints each pass sees, and when
  std::vector<std::map<int, Sighting>> seen(static_cast<std::size_t>(n));
  const double reach = spec.altitude * std::tan(spec.half_swath + spec.motion_amplitude + 0.1) + 1.0;
  for (int i = 0; i < n; ++i) {
    const Trajectory& tr = truth[static_cast<std::size_t>(i)];
    const Vec3 a = tr.poses().front().pose.translation();
    const Vec3 b = tr.poses().back().pose.translation();
    const Vec3 dir = (b - a).normalized();
    for (int q = 0; q < static_cast<int>(field.size()); ++q) {
      Vec3 d = field[static_cast<std::size_t>(q)] - a;
      d.z() = 0.0;
      const Vec3 flat_dir(dir.x(), dir.y(), 0.0);
      if ((d - d.dot(flat_dir.normalized()) * flat_dir.normalized()).norm() > reach) continue;
      if (auto s = sight(tr, spec.true_extrinsic, field[static_cast<std::size_t>(q)], spec.half_swath,
                         0.25 * spec.dvl_period)) {
        seen[static_cast<std::size_t>(i)][q] = *s;
      }
    }
  }

  // correspondences by ground-truth identity
  struct PairSel {
    int a, b;
    std::vector<int> keys;
  };
  std::vector<PairSel> pairs;
  std::vector<std::set<int>> used(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      std::vector<int> common;
      for (const auto& [q, s] : seen[static_cast<std::size_t>(i)]) {
        if (seen[static_cast<std::size_t>(j)].count(q)) common.push_back(q);
      }
      if (common.size() < 2) {
        throw Error(ErrorCode::InfeasibleSpec, "submaps " + std::to_string(i) + " and " + std::to_string(j) +
                                                   " share " + std::to_string(common.size()) + " keypoints");
      }
      std::shuffle(common.begin(), common.end(), rng);
      common.resize(std::min<std::size_t>(common.size(), static_cast<std::size_t>(spec.keypoints_per_pair)));
      std::sort(common.begin(), common.end());
      for (int q : common) {
        used[static_cast<std::size_t>(i)].insert(q);
        used[static_cast<std::size_t>(j)].insert(q);
      }
      pairs.push_back({i, j, std::move(common)});
    }
  }

  GroundTruth gt;
  gt.extrinsic = spec.true_extrinsic;
  gt.trajectories = truth;
  gt.keypoints = field;
  gt.global_drift.assign(static_cast<std::size_t>(n), Twist());
  std::vector<std::vector<KeypointObservation>> obs(static_cast<std::size_t>(n));
  std::vector<std::map<int, std::size_t>> slot(static_cast<std::size_t>(n));
  gt.observation_keypoint.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> order;
    for (int q : used[static_cast<std::size_t>(i)]) order.emplace_back(seen[static_cast<std::size_t>(i)][q].t, q);
    std::sort(order.begin(), order.end());
    for (const auto& [t, q] : order) {
      KeypointObservation o;
      o.t = t;
      o.point_laser = seen[static_cast<std::size_t>(i)][q].point;
      o.covariance = point_covariance(0.0);
      slot[static_cast<std::size_t>(i)][q] = obs[static_cast<std::size_t>(i)].size();
      obs[static_cast<std::size_t>(i)].push_back(o);
      gt.observation_keypoint[static_cast<std::size_t>(i)].push_back(q);
    }
  }

  Scenario s;
  s.spec = spec;
  for (const PairSel& p : pairs) {
    for (int q : p.keys) {
      Correspondence c;
      c.submap_a = p.a;
      c.submap_b = p.b;
      c.index_a = slot[static_cast<std::size_t>(p.a)][q];
      c.index_b = slot[static_cast<std::size_t>(p.b)][q];
      s.correspondences.push_back(c);
    }
  }
  gt.outlier.assign(s.correspondences.size(), false);

  const Pose prior_mean(spec.true_extrinsic.rotation() * Rotation::exp(-spec.prior_offset.phi),
                        spec.true_extrinsic.translation() - spec.prior_offset.rho);
  s.prior = ExtrinsicPrior(prior_mean, spec.prior_sigma_phi, spec.prior_sigma_rho);

  std::vector<Trajectory> measured = truth;
  add_floor(measured);
  s.rebuild(measured, obs);
  s.truth = std::move(gt);
  s.noise = matched_noise(s, spec);
  return s;
}

}  // namespace

Scenario inject_drift(const Scenario& scenario, bool global, bool local) {
  if (!scenario.truth) throw Error(ErrorCode::InvalidArgument, "drift injection needs ground truth");
  const ScenarioSpec spec = scenario.spec.value_or(ScenarioSpec{});
  Rng rng = make_rng(spec.seed, 1);
  Scenario out = scenario;
  GroundTruth& gt = *out.truth;

  const std::vector<Vec3> crossings = crossing_points(gt.trajectories);
  std::vector<Trajectory> measured;
  for (std::size_t i = 0; i < gt.trajectories.size(); ++i) {
    const std::vector<TimedPose>& tk = gt.trajectories[i].poses();
    std::vector<TimedPose> m = tk;
    for (TimedPose& p : m) p.covariance.setZero();

    if (local) {
      const Mat6 step = Mat6(spec.local_drift.vector().cwiseAbs2().asDiagonal());
      for (std::size_t k = 1; k < tk.size(); ++k) {
        const Pose delta = between(tk[k - 1].pose, tk[k].pose);
        const Vec6 w = gaussian(rng, spec.local_drift.vector());
        m[k].pose = m[k - 1].pose * delta * se3_exp(Twist::from_vector(w));
        const Mat6 A = adjoint(delta.inverse());
        m[k].covariance = A * m[k - 1].covariance * A.transpose() + step;
      }
    }

    gt.global_drift[i] = Twist();
    if (global) {
      const std::size_t c = nearest_pose_index(gt.trajectories[i], crossings[i]);
      const Pose P(Rotation(), tk[c].pose.translation());
      const Twist xi = Twist::from_vector(gaussian(rng, spec.global_drift.vector()));
      gt.global_drift[i] = xi;
      const Pose D = P * se3_exp(xi) * P.inverse();
      const Mat6 S = Mat6(spec.global_drift.vector().cwiseAbs2().asDiagonal());
      for (std::size_t k = 0; k < m.size(); ++k) {
        m[k].pose = D * m[k].pose;
        const Mat6 A = adjoint(tk[k].pose.inverse() * P);
        m[k].covariance += A * S * A.transpose();
      }
    }
    for (TimedPose& p : m) p.covariance = 0.5 * (p.covariance + p.covariance.transpose()) + pose_floor();
    measured.emplace_back(static_cast<int>(i), std::move(m));
  }
  out.rebuild(measured, scenario.observations());
  out.noise = matched_noise(out, spec);
  return out;
}

double gate_threshold() {
  static const double q = boost::math::quantile(boost::math::chi_squared(3.0), 0.999);
  return q;
}

double gate_statistic(const Scenario& s, const Correspondence& c) {
  const Submap& a = s.submaps[static_cast<std::size_t>(c.submap_a)];
  const Submap& b = s.submaps[static_cast<std::size_t>(c.submap_b)];
  const StateId ia{StateKind::VehiclePose, 0};
  const StateId ib{StateKind::VehiclePose, 1};
  const FactorEvaluation f =
      reprojection({a.vehicle_pose(c.index_a), Pose(), ia, c.obs_a}, {b.vehicle_pose(c.index_b), Pose(), ib, c.obs_b},
                   s.prior.mean);
  const Eigen::MatrixXd& FX = *f.jacobian(extrinsic_id());
  const Eigen::MatrixXd& Fa = *f.jacobian(ia);
  const Eigen::MatrixXd& Fb = *f.jacobian(ib);
  const Eigen::MatrixXd S = f.covariance + FX * s.prior.covariance() * FX.transpose() +
                            Fa * a.trajectory.covariance_at(c.obs_a.t) * Fa.transpose() +
                            Fb * b.trajectory.covariance_at(c.obs_b.t) * Fb.transpose();
  return f.residual.dot(S.ldlt().solve(f.residual));
}

Scenario corrupt_correspondences(const Scenario& scenario, double noise_sigma, double outlier_fraction) {
  if (!(outlier_fraction >= 0.0 && outlier_fraction < 0.5)) {
    throw Error(ErrorCode::InvalidArgument, "outlier_fraction must lie in [0, 0.5)");
  }
  if (noise_sigma < 0.0) throw Error(ErrorCode::InvalidArgument, "noise_sigma must be non-negative");
  Scenario out = scenario;
  if (noise_sigma == 0.0 && outlier_fraction == 0.0) return out;

  const std::uint64_t seed = scenario.spec ? scenario.spec->seed : 0;
  Rng rng = make_rng(seed, 2);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<std::vector<KeypointObservation>> obs = scenario.observations();
  for (auto& list : obs) {
    for (KeypointObservation& o : list) {
      if (noise_sigma > 0.0) o.point_laser += noise_sigma * Vec3(normal(rng), normal(rng), normal(rng));
      o.covariance = point_covariance(noise_sigma);
    }
  }
  for (std::size_t i = 0; i < obs.size(); ++i) out.submaps[i].observations = obs[i];

  std::vector<bool> outlier(out.correspondences.size(), false);
  if (out.truth && out.truth->outlier.size() == outlier.size()) outlier = out.truth->outlier;
  if (outlier_fraction > 0.0) {
    std::vector<std::size_t> idx(out.correspondences.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto count = static_cast<std::size_t>(std::llround(outlier_fraction * static_cast<double>(idx.size())));
    for (std::size_t n = 0; n < count; ++n) {
      Correspondence& c = out.correspondences[idx[n]];
      const std::size_t nb = out.submaps[static_cast<std::size_t>(c.submap_b)].observations.size();
      if (nb < 2) continue;
      std::size_t pick = std::uniform_int_distribution<std::size_t>(0, nb - 2)(rng);
      if (pick >= c.index_b) ++pick;
      c.index_b = pick;
      outlier[idx[n]] = true;
    }
  }
  out.refresh_correspondences();

  // chi-square gate against the prior extrinsic and measured poses
  const double threshold = gate_threshold();
  std::vector<Correspondence> kept;
  std::vector<bool> kept_labels;
  GateStats stats;
  for (std::size_t i = 0; i < out.correspondences.size(); ++i) {
    const bool is_out = outlier[i];
    (is_out ? stats.outliers : stats.inliers)++;
    if (gate_statistic(out, out.correspondences[i]) > threshold) {
      (is_out ? stats.outliers_removed : stats.inliers_removed)++;
      continue;
    }
    kept.push_back(out.correspondences[i]);
    kept_labels.push_back(is_out);
  }
  out.correspondences = std::move(kept);
  out.gate = stats;
  if (out.truth) out.truth->outlier = std::move(kept_labels);
  return out;
}

Scenario generate(const ScenarioSpec& spec) {
  spec.validate();
  Scenario s = generate_clean(spec);
  const bool global = spec.global_drift.vector().maxCoeff() > 0.0;
  const bool local = spec.local_drift.vector().maxCoeff() > 0.0;
  if (global || local) s = inject_drift(s, global, local);
  return corrupt_correspondences(s, spec.point_noise_sigma, spec.outlier_fraction);
}

}  // namespace lvcal
