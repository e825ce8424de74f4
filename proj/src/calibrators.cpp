#include "lvcal/calibrators.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

#include <Eigen/SparseCholesky>
#include <fmt/format.h>

#include "lvcal/error.hpp"

namespace lvcal {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;
constexpr double kMergeTolerance = 1e-9;
constexpr std::size_t kMinSubmaps = 6;
constexpr int kMinPairCorrespondences = 20;

StateId submap_state(int i) { return {StateKind::SubmapPose, i}; }
StateId vehicle_state(int i) { return {StateKind::VehiclePose, i}; }
StateId velocity_state(int i) { return {StateKind::Velocity, i}; }

bool not_extrinsic_prior(const FactorEvaluation& f) { return f.kind != FactorKind::ExtrinsicPrior; }

void check_inputs(const Scenario& s) {
  if (s.correspondences.empty()) throw Error(ErrorCode::InsufficientData, "no correspondences");
  for (std::size_t i = 0; i < s.submaps.size(); ++i) {
    if (s.submaps[i].id != static_cast<int>(i)) {
      throw Error(ErrorCode::InvalidArgument, "submap ids must equal their position");
    }
  }
  for (const Correspondence& c : s.correspondences) {
    const auto n = static_cast<int>(s.submaps.size());
    if (c.submap_a < 0 || c.submap_b < 0 || c.submap_a >= n || c.submap_b >= n || c.submap_a == c.submap_b) {
      throw Error(ErrorCode::InvalidArgument, "correspondence references an invalid submap pair");
    }
  }
}

std::vector<std::string> data_warnings(const Scenario& s) {
  std::vector<std::string> out;
  if (s.submaps.size() < kMinSubmaps) {
    out.push_back(fmt::format("only {} submaps; at least {} are recommended", s.submaps.size(), kMinSubmaps));
  }
  std::map<std::pair<int, int>, int> pairs;
  for (const Correspondence& c : s.correspondences) {
    ++pairs[{std::min(c.submap_a, c.submap_b), std::max(c.submap_a, c.submap_b)}];
  }
  for (const auto& [p, n] : pairs) {
    if (n < kMinPairCorrespondences) {
      out.push_back(fmt::format("submap pair ({}, {}) has {} correspondences; at least {} are recommended", p.first,
                                p.second, n, kMinPairCorrespondences));
    }
  }
  return out;
}

void record_observability(CalibrationResult& r, const Observability& o, const Pose& extrinsic) {
  r.solve_report.singular_values = o.singular_values;
  r.solve_report.unobservable_directions = o.unobservable_directions;
  for (const UnobservableDirection& d : o.unobservable_directions) {
    ObservabilityWarning w;
    w.state = d.state;
    w.ratio = d.ratio;
    w.rotation = d.direction.head<3>();
    w.translation = d.direction.tail<3>();
    std::string what = to_string(d.state);
    if (d.state.kind == StateKind::Extrinsic) {
      w.translation = extrinsic.rotation().matrix() * w.translation;
      w.rotation = extrinsic.rotation().matrix() * w.rotation;
      const bool translational = w.translation.norm() >= w.rotation.norm();
      const Vec3& v = translational ? w.translation : w.rotation;
      Eigen::Index axis = 0;
      v.cwiseAbs().maxCoeff(&axis);
      what = fmt::format("extrinsic {} along body axis {} (alignment {:.3f})",
                         translational ? "translation" : "rotation", axis + 1, std::abs(v(axis)) / v.norm());
    }
    w.message = fmt::format("unobservable direction: {}; singular value ratio {:.2e}", what, d.ratio);
    r.observability.push_back(std::move(w));
  }
}

void finish(CalibrationResult& r, const ExtrinsicPrior& prior) {
  r.delta_phi = (prior.mean.rotation().inverse() * r.extrinsic.rotation()).log();
  r.delta_r = r.extrinsic.translation() - prior.mean.translation();
  for (const ObservabilityWarning& w : r.observability) r.warnings.push_back(w.message);
}

Pose initial_extrinsic(const Scenario& s, const CalibrationOptions& o) {
  return o.initial_extrinsic.value_or(s.prior.mean);
}

Submap moved_submap(const Submap& s, const Pose& central) {
  Submap out = s;
  const Pose correction = central * s.central.inverse();
  std::vector<TimedPose> poses = s.trajectory.poses();
  for (TimedPose& p : poses) p.pose = correction * p.pose;
  poses[s.central_index].pose = central;
  out.trajectory = Trajectory(s.trajectory.id(), std::move(poses));
  out.central = central;
  return out;
}

}  // namespace

std::vector<double> merged_node_times(const Submap& submap) {
  std::vector<std::pair<double, bool>> all;  // (time, is_knot)
  for (const TimedPose& p : submap.trajectory.poses()) all.emplace_back(p.t, true);
  for (const KeypointObservation& o : submap.observations) all.emplace_back(o.t, false);
  std::sort(all.begin(), all.end());
  std::vector<double> out;
  std::vector<bool> knot;
  for (const auto& [t, is_knot] : all) {
    if (!out.empty() && t - out.back() < kMergeTolerance) {
      if (is_knot && !knot.back()) {
        out.back() = t;
        knot.back() = true;
      }
      continue;
    }
    out.push_back(t);
    knot.push_back(is_knot);
  }
  return out;
}

CalibrationResult calibrate_alg1(const Scenario& s, const CalibrationOptions& options) {
  check_inputs(s);
  CalibrationResult r;
  r.algorithm = 1;
  r.warnings = data_warnings(s);

  StateVector x;
  x.add(extrinsic_id(), initial_extrinsic(s, options));
  Problem p;
  const ExtrinsicPrior prior = s.prior;
  p.factors.push_back([prior](const StateVector& st) { return extrinsic_prior(st.pose(extrinsic_id()), prior); });
  for (const Correspondence& c : s.correspondences) {
    const Pose T1 = s.submaps[static_cast<std::size_t>(c.submap_a)].vehicle_pose(c.index_a);
    const Pose T2 = s.submaps[static_cast<std::size_t>(c.submap_b)].vehicle_pose(c.index_b);
    p.factors.push_back(
        [c, T1, T2](const StateVector& st) { return reprojection_fixed(c, T1, T2, st.pose(extrinsic_id())); });
  }

  SolveResult sol = solve(p, x, options.solver);
  r.extrinsic = sol.states.pose(extrinsic_id());
  r.solve_report = sol.report;
  const auto evals = evaluate(p, sol.states);
  record_observability(r, observability_report(stacked_jacobian(evals, sol.states, not_extrinsic_prior), x.ordering()),
                       r.extrinsic);
  finish(r, s.prior);
  return r;
}

CalibrationResult calibrate_alg2(const Scenario& s, const CalibrationOptions& options) {
  check_inputs(s);
  if (s.submaps.size() < 2) throw Error(ErrorCode::InsufficientData, "Algorithm 2 needs at least two submaps");
  s.noise.validate();
  CalibrationResult r;
  r.algorithm = 2;
  r.warnings = data_warnings(s);

  StateVector x;
  x.add(extrinsic_id(), initial_extrinsic(s, options));
  std::vector<int> order(s.submaps.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return s.submaps[static_cast<std::size_t>(a)].central_time() < s.submaps[static_cast<std::size_t>(b)].central_time();
  });
  for (int i : order) x.add(submap_state(i), s.submaps[static_cast<std::size_t>(i)].central);

  Problem p;
  const ExtrinsicPrior prior = s.prior;
  p.factors.push_back([prior](const StateVector& st) { return extrinsic_prior(st.pose(extrinsic_id()), prior); });
  const Mat6 sigma_i = s.noise.submap_prior_covariance();
  for (const Submap& sm : s.submaps) {
    const Pose mean = sm.central;
    const int id = sm.id;
    p.factors.push_back([mean, sigma_i, id](const StateVector& st) {
      return pose_prior(st.pose(submap_state(id)), mean, sigma_i, submap_state(id));
    });
  }
  // factors only read the submaps; share them instead of copying per factor
  auto submaps = std::make_shared<const std::vector<Submap>>(s.submaps);
  for (const Correspondence& c : s.correspondences) {
    p.factors.push_back([c, submaps](const StateVector& st) {
      const Submap& a = (*submaps)[static_cast<std::size_t>(c.submap_a)];
      const Submap& b = (*submaps)[static_cast<std::size_t>(c.submap_b)];
      return reprojection_submap(c, a, st.pose(submap_state(a.id)), b, st.pose(submap_state(b.id)),
                                 st.pose(extrinsic_id()));
    });
  }

  SolveResult sol = solve(p, x, options.solver);
  r.extrinsic = sol.states.pose(extrinsic_id());
  r.solve_report = sol.report;
  const auto evals = evaluate(p, sol.states);
  record_observability(r, observability_report(stacked_jacobian(evals, sol.states, not_extrinsic_prior), x.ordering()),
                       r.extrinsic);

  std::vector<Submap> posterior;
  for (const Submap& sm : s.submaps) posterior.push_back(moved_submap(sm, sol.states.pose(submap_state(sm.id))));
  r.posterior_submaps = std::move(posterior);
  finish(r, s.prior);
  return r;
}

CalibrationResult calibrate_alg3(const Scenario& s, const CalibrationOptions& options) {
  check_inputs(s);
  s.noise.validate();
  CalibrationResult r;
  r.algorithm = 3;
  r.warnings = data_warnings(s);

  struct Chain {
    std::vector<double> times;
    int base = 0;
    std::vector<int> knot_node;
    std::vector<int> obs_node;
    int link_base = 0;
  };
  std::vector<Chain> chains(s.submaps.size());
  int nodes = 0;
  int links = 0;
  for (std::size_t i = 0; i < s.submaps.size(); ++i) {
    const Submap& sm = s.submaps[i];
    Chain& ch = chains[i];
    ch.times = merged_node_times(sm);
    ch.base = nodes;
    ch.link_base = links;
    auto node_of = [&](double t) {
      auto it = std::lower_bound(ch.times.begin(), ch.times.end(), t - kMergeTolerance);
      if (it == ch.times.end() || std::abs(*it - t) >= kMergeTolerance) {
        throw Error(ErrorCode::InvalidArgument, "node lookup failed");
      }
      return ch.base + static_cast<int>(it - ch.times.begin());
    };
    for (const TimedPose& p : sm.trajectory.poses()) ch.knot_node.push_back(node_of(p.t));
    for (const KeypointObservation& o : sm.observations) ch.obs_node.push_back(node_of(o.t));
    nodes += static_cast<int>(ch.times.size());
    links += static_cast<int>(ch.times.size()) - 1;
  }

  StateVector x;
  x.add(extrinsic_id(), initial_extrinsic(s, options));
  std::vector<Pose> measured(static_cast<std::size_t>(nodes));
  std::vector<double> node_time(static_cast<std::size_t>(nodes));
  for (std::size_t i = 0; i < s.submaps.size(); ++i) {
    for (std::size_t k = 0; k < chains[i].times.size(); ++k) {
      const int n = chains[i].base + static_cast<int>(k);
      node_time[static_cast<std::size_t>(n)] = chains[i].times[k];
      measured[static_cast<std::size_t>(n)] = s.submaps[i].trajectory.pose_at(chains[i].times[k]);
      x.add(vehicle_state(n), measured[static_cast<std::size_t>(n)]);
    }
  }
  for (std::size_t i = 0; i < s.submaps.size(); ++i) {
    for (std::size_t k = 0; k + 1 < chains[i].times.size(); ++k) {
      const auto n = static_cast<std::size_t>(chains[i].base) + k;
      const double dt = node_time[n + 1] - node_time[n];
      x.add(velocity_state(chains[i].link_base + static_cast<int>(k)),
            se3_log(between(measured[n], measured[n + 1])) * (1.0 / dt));
    }
  }

  Problem p;
  const ExtrinsicPrior prior = s.prior;
  p.factors.push_back([prior](const StateVector& st) { return extrinsic_prior(st.pose(extrinsic_id()), prior); });
  const Mat6 psd = s.noise.wnoa_psd;
  const Vec6 relpose_sigma = s.noise.relpose_sigma;
  for (std::size_t i = 0; i < s.submaps.size(); ++i) {
    const Submap& sm = s.submaps[i];
    const Chain& ch = chains[i];
    for (std::size_t k = 0; k < sm.trajectory.size(); ++k) {
      const TimedPose m = sm.trajectory.poses()[k];
      const int n = ch.knot_node[k];
      p.factors.push_back([m, n](const StateVector& st) { return pose_prior(st.pose(vehicle_state(n)), m, n); });
    }
    for (std::size_t k = 0; k + 1 < ch.times.size(); ++k) {
      const int a = ch.base + static_cast<int>(k);
      const int b = a + 1;
      const int v = ch.link_base + static_cast<int>(k);
      const double dt = ch.times[k + 1] - ch.times[k];
      const Pose ma = measured[static_cast<std::size_t>(a)];
      const Pose mb = measured[static_cast<std::size_t>(b)];
      const Mat6 R = relative_pose_covariance(relpose_sigma, dt);
      p.factors.push_back([=](const StateVector& st) {
        return relative_pose_error(st.pose(vehicle_state(a)), st.pose(vehicle_state(b)), ma, mb, R, a, b);
      });
      p.factors.push_back([=](const StateVector& st) {
        return wnoa_error(st.pose(vehicle_state(a)), st.pose(vehicle_state(b)), st.velocity(velocity_state(v)), dt, psd,
                          a, b, v);
      });
    }
  }
  for (const Correspondence& c : s.correspondences) {
    const int na = chains[static_cast<std::size_t>(c.submap_a)].obs_node[c.index_a];
    const int nb = chains[static_cast<std::size_t>(c.submap_b)].obs_node[c.index_b];
    p.factors.push_back([c, na, nb](const StateVector& st) {
      return reprojection({st.pose(vehicle_state(na)), Pose(), vehicle_state(na), c.obs_a},
                          {st.pose(vehicle_state(nb)), Pose(), vehicle_state(nb), c.obs_b}, st.pose(extrinsic_id()));
    });
  }

  SolverOptions so = options.solver;
  so.ordering = Ordering::Amd;
  SolveResult sol = solve(p, x, so);
  r.extrinsic = sol.states.pose(extrinsic_id());
  r.solve_report = sol.report;

  // extrinsic observability from the Schur complement of the normal matrix
  std::vector<FactorEvaluation> evals = evaluate(p, sol.states);
  evals.erase(std::remove_if(evals.begin(), evals.end(), [](const auto& f) { return !not_extrinsic_prior(f); }),
              evals.end());
  const SparseMatrix N = assemble(evals, sol.states).normal;
  const Eigen::Index rest = N.rows() - 6;
  const SparseMatrix Nrr = N.bottomRightCorner(rest, rest);
  const Eigen::MatrixXd Nrx = N.bottomLeftCorner(rest, 6);
  Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> llt(Nrr);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::IndefiniteSystem, "nuisance block is not positive definite");
  const Eigen::MatrixXd Z = llt.solve(Nrx);
  const Eigen::MatrixXd S = Eigen::MatrixXd(N.topLeftCorner(6, 6)) - Nrx.transpose() * Z;
  record_observability(r, observability_report_normal(S, {extrinsic_id()}), r.extrinsic);

  std::vector<Submap> posterior;
  for (std::size_t i = 0; i < s.submaps.size(); ++i) {
    const Submap& sm = s.submaps[i];
    const Chain& ch = chains[i];
    std::vector<TimedPose> poses = sm.trajectory.poses();
    for (std::size_t k = 0; k < poses.size(); ++k) poses[k].pose = sol.states.pose(vehicle_state(ch.knot_node[k]));
    Submap out = sm;
    out.trajectory = Trajectory(sm.trajectory.id(), std::move(poses));
    out.central = out.trajectory.poses()[sm.central_index].pose;
    for (std::size_t k = 0; k < sm.observations.size(); ++k) {
      out.offsets[k] = between(out.central, sol.states.pose(vehicle_state(ch.obs_node[k])));
    }
    posterior.push_back(std::move(out));
  }
  r.posterior_submaps = std::move(posterior);
  finish(r, s.prior);
  return r;
}

CalibrationResult calibrate(int algorithm, const Scenario& scenario, const CalibrationOptions& options) {
  switch (algorithm) {
    case 1: return calibrate_alg1(scenario, options);
    case 2: return calibrate_alg2(scenario, options);
    case 3: return calibrate_alg3(scenario, options);
    default: throw Error(ErrorCode::InvalidArgument, "algorithm must be 1, 2 or 3");
  }
}

UpdateSummary summarize_update(const Pose& extrinsic, const ExtrinsicPrior& prior) {
  UpdateSummary u;
  const Vec3 dphi = (prior.mean.rotation().inverse() * extrinsic.rotation()).log();
  u.delta_phi_deg = dphi * kRadToDeg;
  u.rotation_deg = dphi.norm() * kRadToDeg;
  u.translation_cm = (extrinsic.translation() - prior.mean.translation()) * 100.0;
  return u;
}

std::string report_update(const CalibrationResult& result, const ExtrinsicPrior& prior) {
  const UpdateSummary u = summarize_update(result.extrinsic, prior);
  // round first so tiny negatives print as 0.00, not -0.00
  auto cents = [](double v) { return std::round(v * 100.0) / 100.0 + 0.0; };
  std::ostringstream os;
  os << fmt::format("algorithm: {}\n", result.algorithm);
  os << fmt::format("|dphi|: {:.2f} deg\n", cents(u.rotation_deg));
  os << fmt::format("dr: ({:.2f}, {:.2f}, {:.2f}) cm\n", cents(u.translation_cm.x()), cents(u.translation_cm.y()),
                    cents(u.translation_cm.z()));
  os << fmt::format("iterations: {}\n", result.solve_report.iterations);
  os << fmt::format("converged: {}\n", result.solve_report.converged ? "yes" : "no");
  if (result.observability.empty()) {
    os << "observability: all directions observable\n";
  } else {
    for (const ObservabilityWarning& w : result.observability) os << "warning: " << w.message << '\n';
  }
  for (const std::string& w : result.warnings) {
    if (w.rfind("unobservable", 0) != 0) os << "warning: " << w << '\n';
  }
  return os.str();
}

ExtrinsicError extrinsic_error(const Pose& estimate, const Pose& truth) {
  return {(truth.rotation().inverse() * estimate.rotation()).log().norm() * kRadToDeg,
          (estimate.translation() - truth.translation()).norm()};
}

}  // namespace lvcal
