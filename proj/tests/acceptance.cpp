// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <fmt/format.h>

#include "lvcal/calibrators.hpp"
#include "lvcal/dataset.hpp"
#include "lvcal/metrics.hpp"
#include "support/oracles.hpp"

#ifndef LVCAL_CLI_PATH
#error "LVCAL_CLI_PATH must name the lvcal executable"
#endif

using namespace lvcal;
using namespace lvcal::testing;
namespace fs = std::filesystem;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

// ------------------------------------------------------------------ 1
Outcome lie_core() {
  Rng rng(101);
  double round_trip = 0, series = 0, odot_err = 0, symmetry = 0, fd_left = 0, fd_right = 0;
  const double h = 1e-6;
  for (int i = 0; i < 1000; ++i) {
    const Twist xi = random_twist(rng, 0.0, 2.5, 2.0);
    const Pose T = se3_exp(xi);
    round_trip = std::max(round_trip, (se3_log(T).vector() - xi.vector()).cwiseAbs().maxCoeff());
    series = std::max(series, max_abs(T.matrix() - series_exp(wedge_matrix(xi.vector()))));

    const Vec3 r = random_unit(rng) * uniform(rng, 0, 5);
    const Vec4 u(r.x(), r.y(), r.z(), 1.0);
    odot_err = std::max(odot_err, max_abs(wedge(xi) * u - odot(u) * xi.vector()));

    const Mat6 Jl = se3_jacobian(xi, Side::Left);
    const Mat6 Jr = se3_jacobian(xi, Side::Right);
    symmetry = std::max(symmetry, max_abs(Jr - se3_jacobian(-xi, Side::Left)));

    const Mat4 e_minus = series_exp(wedge_matrix(-xi.vector()));
    Mat6 fl, fr;
    for (int c = 0; c < 6; ++c) {
      Vec6 d = Vec6::Zero();
      d(c) = h;
      const Mat4 ep = series_exp(wedge_matrix(xi.vector() + d));
      const Mat4 em = series_exp(wedge_matrix(xi.vector() - d));
      fl.col(c) = (numeric_log(ep * e_minus) - numeric_log(em * e_minus)) / (2 * h);
      fr.col(c) = (numeric_log(e_minus * ep) - numeric_log(e_minus * em)) / (2 * h);
    }
    fd_left = std::max(fd_left, relative_error(Jl, fl));
    fd_right = std::max(fd_right, relative_error(Jr, fr));
  }
  Outcome o;
  o.pass = round_trip < 1e-10 && series < 1e-10 && odot_err < 1e-14 && symmetry < 1e-12 && fd_left < 1e-6 &&
           fd_right < 1e-6;
  o.detail = fmt::format("round trip {:.1e}, odot {:.1e}, symmetry {:.1e}, fd left {:.1e}, fd right {:.1e}",
                         round_trip, odot_err, symmetry, fd_left, fd_right);
  return o;
}

// ------------------------------------------------------------------ 2
KeypointObservation random_obs(Rng& rng) {
  KeypointObservation o;
  o.point_laser = Vec3(uniform(rng, -4, 4), uniform(rng, -0.1, 0.1), uniform(rng, 3, 8));
  Mat3 A;
  for (int i = 0; i < 9; ++i) A(i) = uniform(rng, -0.01, 0.01);
  o.covariance = A * A.transpose() + Mat3::Identity() * 1e-5;
  return o;
}

Outcome factor_jacobians() {
  Rng rng(202);
  std::map<std::string, double> worst;
  auto track = [&](const std::string& name, const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& fd) {
    worst[name] = std::max(worst[name], relative_error(analytic, fd));
  };
  for (int i = 0; i < 100; ++i) {
    Correspondence c;
    c.submap_a = 0;
    c.submap_b = 1;
    c.obs_a = random_obs(rng);
    c.obs_b = random_obs(rng);
    const Pose X = random_pose(rng, 3.0, 1.0);

    {  // reprojection against fixed poses
      const Pose T1 = random_pose(rng, 3.0, 20.0), T2 = random_pose(rng, 3.0, 20.0);
      const FactorEvaluation f = reprojection_fixed(c, T1, T2, X);
      track("reprojection", *f.jacobian(extrinsic_id()),
            fd_pose([&](const Pose& p) { return reprojection_fixed(c, T1, T2, p).residual; }, X));
    }
    {  // reprojection with submap poses
      Submap a, b;
      a.id = 0;
      b.id = 1;
      a.central = random_pose(rng, 2.5, 20.0);
      b.central = random_pose(rng, 2.5, 20.0);
      a.offsets = {random_pose(rng, 0.5, 5.0)};
      b.offsets = {random_pose(rng, 0.5, 5.0)};
      a.observations = {c.obs_a};
      b.observations = {c.obs_b};
      const Pose T1 = a.central, T2 = b.central;
      const FactorEvaluation f = reprojection_submap(c, a, T1, b, T2, X);
      track("submap reprojection",
            (Eigen::MatrixXd(3, 18) << *f.jacobian(extrinsic_id()), *f.jacobian({StateKind::SubmapPose, 0}),
             *f.jacobian({StateKind::SubmapPose, 1}))
                .finished(),
            (Eigen::MatrixXd(3, 18) << fd_pose([&](const Pose& p) {
              return reprojection_submap(c, a, T1, b, T2, p).residual;
            }, X),
             fd_pose([&](const Pose& p) { return reprojection_submap(c, a, p, b, T2, X).residual; }, T1),
             fd_pose([&](const Pose& p) { return reprojection_submap(c, a, T1, b, p, X).residual; }, T2))
                .finished());
    }
    {  // extrinsic prior
      const ExtrinsicPrior prior(random_pose(rng), 0.02, 0.05);
      const Pose Xp = prior.mean * se3_exp(random_twist(rng, 0.0, 2.0, 1.0));
      track("extrinsic prior", *extrinsic_prior(Xp, prior).jacobian(extrinsic_id()),
            fd_pose([&](const Pose& p) { return extrinsic_prior(p, prior).residual; }, Xp));
    }
    {  // pose prior
      const TimedPose m{0.0, random_pose(rng), Mat6::Identity() * 0.01};
      const Pose T = m.pose * se3_exp(random_twist(rng, 0.0, 2.0, 1.0));
      track("pose prior", *pose_prior(T, m, 4).jacobian({StateKind::VehiclePose, 4}),
            fd_pose([&](const Pose& p) { return pose_prior(p, m, 4).residual; }, T));
    }
    {  // WNOA
      const Mat6 psd = Mat6::Identity() * 0.1;
      const Pose A = random_pose(rng, 2.5, 10.0);
      const Twist w = random_twist(rng, 0.0, 1.0, 1.0);
      const double dt = uniform(rng, 0.1, 2.0);
      const Pose B = A * se3_exp(w * dt) * se3_exp(random_twist(rng, 0.0, 1.0, 0.5));
      const FactorEvaluation f = wnoa_error(A, B, w, dt, psd, 0, 1, 0);
      track("wnoa",
            (Eigen::MatrixXd(6, 18) << *f.jacobian({StateKind::VehiclePose, 0}),
             *f.jacobian({StateKind::VehiclePose, 1}), *f.jacobian({StateKind::Velocity, 0}))
                .finished(),
            (Eigen::MatrixXd(6, 18) << fd_pose([&](const Pose& p) {
              return wnoa_error(p, B, w, dt, psd, 0, 1, 0).residual;
            }, A),
             fd_pose([&](const Pose& p) { return wnoa_error(A, p, w, dt, psd, 0, 1, 0).residual; }, B),
             fd_twist([&](const Twist& v) { return wnoa_error(A, B, v, dt, psd, 0, 1, 0).residual; }, w))
                .finished());
    }
    {  // relative pose
      const Mat6 R = relative_pose_covariance(Vec6::Constant(0.05), 0.5);
      const Pose M1 = random_pose(rng, 2.5, 10.0);
      const Pose M2 = M1 * se3_exp(random_twist(rng, 0.0, 1.0, 1.0));
      const Pose A = M1 * se3_exp(random_twist(rng, 0.0, 0.7, 0.5));
      const Pose B = M2 * se3_exp(random_twist(rng, 0.0, 0.7, 0.5));
      const FactorEvaluation f = relative_pose_error(A, B, M1, M2, R, 0, 1);
      track("relative pose",
            (Eigen::MatrixXd(6, 12) << *f.jacobian({StateKind::VehiclePose, 0}),
             *f.jacobian({StateKind::VehiclePose, 1}))
                .finished(),
            (Eigen::MatrixXd(6, 12) << fd_pose([&](const Pose& p) {
              return relative_pose_error(p, B, M1, M2, R, 0, 1).residual;
            }, A),
             fd_pose([&](const Pose& p) { return relative_pose_error(A, p, M1, M2, R, 0, 1).residual; }, B))
                .finished());
    }
  }
  Outcome o{true, ""};
  for (const auto& [name, err] : worst) {
    o.pass = o.pass && err < 1e-6;
    o.detail += fmt::format("{}{} {:.1e}", o.detail.empty() ? "" : ", ", name, err);
  }
  return o;
}

// ------------------------------------------------------------------ helpers
// Prior centred on the truth; the solver starts from the 2 deg / 5 cm offset.
std::pair<Scenario, CalibrationOptions> truth_centred(std::uint64_t seed) {
  ScenarioSpec spec;
  spec.seed = seed;
  Scenario s = generate(spec);
  s.prior = ExtrinsicPrior(s.truth->extrinsic, s.prior.sigma_phi, s.prior.sigma_rho);
  CalibrationOptions o;
  const Twist off = default_prior_offset();
  o.initial_extrinsic =
      Pose(s.truth->extrinsic.rotation() * Rotation::exp(-off.phi), s.truth->extrinsic.translation() - off.rho);
  return {s, o};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double sv_ratio(const std::vector<double>& sv) {
  return *std::min_element(sv.begin(), sv.end()) / *std::max_element(sv.begin(), sv.end());
}

Scenario planar(std::uint64_t seed) {
  ScenarioSpec spec;
  spec.seed = seed;
  spec.motion = MotionMode::Planar;
  spec.motion_amplitude = 0.0;
  return generate(spec);
}

// ------------------------------------------------------------------ 3
Outcome noiseless_alg1() {
  auto [s, opt] = truth_centred(1);
  const auto t0 = std::chrono::steady_clock::now();
  const CalibrationResult r = calibrate_alg1(s, opt);
  const double t = seconds_since(t0);
  const ExtrinsicError e = extrinsic_error(r.extrinsic, s.truth->extrinsic);
  Outcome o;
  o.pass = e.rotation_deg < 1e-3 && e.translation_m < 1e-4 && r.solve_report.final_cost < 1e-16 &&
           r.solve_report.iterations < 20 && t < 10.0;
  o.detail = fmt::format("rotation {:.1e} deg, translation {:.1e} m, cost {:.1e}, {} iterations, {:.2f} s",
                         e.rotation_deg, e.translation_m, r.solve_report.final_cost, r.solve_report.iterations, t);
  return o;
}

// ------------------------------------------------------------------ 4
Outcome observability() {
  const Scenario flat = planar(1);
  const CalibrationResult rp = calibrate_alg1(flat);
  const double ratio_planar = sv_ratio(rp.solve_report.singular_values);
  double alignment = 0.0;
  for (const ObservabilityWarning& w : rp.observability) {
    if (w.state != extrinsic_id()) continue;
    const Vec6 d = (Vec6() << w.rotation, w.translation).finished();
    alignment = std::max(alignment, std::abs(d(5)) / d.norm());
  }
  const CalibrationResult re = calibrate_alg1(generate(ScenarioSpec{}));
  const double ratio_excited = sv_ratio(re.solve_report.singular_values);
  Outcome o;
  o.pass = ratio_planar < 1e-8 && alignment > 0.99 && ratio_excited > 1e-4;
  o.detail = fmt::format("planar ratio {:.1e}, body-axis-3 alignment {:.4f}, excited ratio {:.1e}", ratio_planar,
                         alignment, ratio_excited);
  return o;
}

// ------------------------------------------------------------------ 5
Outcome tikhonov() {
  bool ok = true;
  double worst = 0.0;
  int runs = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Scenario s = planar(seed);
    for (int alg = 1; alg <= 3; ++alg) {
      const CalibrationResult r = calibrate(alg, s);
      const Vec3 body = s.prior.mean.rotation().matrix() * r.delta_r;
      worst = std::max(worst, std::abs(body.z()) / s.prior.sigma_rho);
      ok = ok && r.solve_report.converged;
      ++runs;
    }
  }
  Outcome o;
  o.pass = ok && worst <= 3.0;
  o.detail = fmt::format("{} runs converged: {}, worst |dr_3| = {:.3f} sigma", runs, ok ? "yes" : "no", worst);
  return o;
}

// ------------------------------------------------------------------ 6
Outcome drift_correction() {
  double worst_ratio = 0.0, worst_time = 0.0;
  int alg2_better = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto t0 = std::chrono::steady_clock::now();
    ScenarioSpec spec;
    spec.seed = seed;
    spec.global_drift = Twist(Vec3::Constant(0.5 * kDeg), Vec3::Constant(0.05));
    spec.point_noise_sigma = 0.01;
    const Scenario s = generate(spec);
    const CalibrationResult r1 = calibrate_alg1(s);
    const CalibrationResult r2 = calibrate_alg2(s);
    const double m0 = point_disparity(registered_submaps(s.submaps, s.prior.mean)).median;
    const double m1 = point_disparity(registered_submaps(s.submaps, r1.extrinsic)).median;
    const double m2 = point_disparity(registered_submaps(*r2.posterior_submaps, r2.extrinsic)).median;
    worst_ratio = std::max(worst_ratio, m2 / m0);
    alg2_better += m2 <= m1 ? 1 : 0;
    worst_time = std::max(worst_time, seconds_since(t0));
  }
  Outcome o;
  o.pass = worst_ratio <= 0.2 && alg2_better == 10 && worst_time < 60.0;
  o.detail = fmt::format("worst posterior/prior median {:.3f}, Alg 2 <= Alg 1 on {}/10, slowest seed {:.2f} s",
                         worst_ratio, alg2_better, worst_time);
  return o;
}

// ------------------------------------------------------------------ 7
Outcome local_drift() {
  int wins = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    ScenarioSpec spec;
    spec.seed = seed;
    spec.local_drift.rho = Vec3::Constant(0.002);
    const Scenario s = generate(spec);
    const ExtrinsicError e2 = extrinsic_error(calibrate_alg2(s).extrinsic, s.truth->extrinsic);
    const ExtrinsicError e3 = extrinsic_error(calibrate_alg3(s).extrinsic, s.truth->extrinsic);
    const bool win = e3.rotation_deg < e2.rotation_deg && e3.translation_m < e2.translation_m;
    wins += win ? 1 : 0;
    per_seed += win ? '+' : '-';
  }
  return {wins >= 8, fmt::format("Alg 3 better on {}/10 seeds [{}]", wins, per_seed)};
}

// ------------------------------------------------------------------ 8
Outcome reduction() {
  auto [s, opt] = truth_centred(2);
  const double tol = 1e-7;
  const Pose x1 = calibrate_alg1(s, opt).extrinsic;
  const Pose x2 = calibrate_alg2(s, opt).extrinsic;
  const Pose x3 = calibrate_alg3(s, opt).extrinsic;
  double worst = 0.0;
  for (const auto& [a, b] : {std::pair{x1, x2}, std::pair{x1, x3}, std::pair{x2, x3}}) {
    const ExtrinsicError e = extrinsic_error(a, b);
    worst = std::max({worst, e.rotation_deg * kDeg, e.translation_m});
  }
  return {worst < tol, fmt::format("largest pairwise difference {:.1e} (rad or m), limit {:.0e}", worst, tol)};
}

// ------------------------------------------------------------------ 9
Outcome disparity_oracle() {
  Rng rng(909);
  int exact = 0;
  std::size_t largest = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const int sets = std::uniform_int_distribution<int>(2, 8)(rng);
    std::vector<PointSet> s(static_cast<std::size_t>(sets));
    std::size_t total = 0;
    for (PointSet& p : s) {
      const int n = std::uniform_int_distribution<int>(1, 2000 / sets)(rng);
      for (int i = 0; i < n; ++i) p.emplace_back(uniform(rng, -10, 10), uniform(rng, -10, 10), uniform(rng, -2, 2));
      total += p.size();
    }
    largest = std::max(largest, total);
    // O(n^2) oracle
    std::vector<double> ref;
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (const Vec3& p : s[i]) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < s.size(); ++j) {
          if (j == i) continue;
          for (const Vec3& q : s[j]) {
            const double dx = p.x() - q.x(), dy = p.y() - q.y(), dz = p.z() - q.z();
            best = std::min(best, dx * dx + dy * dy + dz * dz);
          }
        }
        ref.push_back(std::sqrt(best));
      }
    }
    exact += point_disparity(s).per_point == ref ? 1 : 0;
  }
  return {exact == 20, fmt::format("{}/20 instances bitwise equal (largest {} points)", exact, largest)};
}

// ------------------------------------------------------------------ 10
Outcome gating() {
  long outliers = 0, outliers_removed = 0, inliers = 0, inliers_removed = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    ScenarioSpec spec;
    spec.seed = seed;
    spec.keypoint_spacing = 1.0;
    spec.field_radius = 6.0;
    spec.point_noise_sigma = 0.01;
    spec.outlier_fraction = 0.2;
    const GateStats g = generate(spec).gate;
    outliers += g.outliers;
    outliers_removed += g.outliers_removed;
    inliers += g.inliers;
    inliers_removed += g.inliers_removed;
  }
  const double removal = static_cast<double>(outliers_removed) / static_cast<double>(outliers);
  const double loss = static_cast<double>(inliers_removed) / static_cast<double>(inliers);
  return {removal >= 0.95 && loss <= 0.01,
          fmt::format("outliers removed {:.2f}% of {}, inliers lost {:.3f}% of {}", 100 * removal, outliers,
                      100 * loss, inliers)};
}

// ------------------------------------------------------------------ 11
int shell(const std::string& dir, const std::string& args) {
  const std::string cmd = fmt::format("cd '{}' && '{}' {} > cli.log 2>&1", dir, LVCAL_CLI_PATH, args);
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome cli_pipeline() {
  const fs::path root = fs::temp_directory_path() / "lvcal_acceptance_cli";
  fs::remove_all(root);
  bool exits_ok = true;
  std::vector<fs::path> dirs{root / "a", root / "b"};
  for (const fs::path& d : dirs) {
    fs::create_directories(d);
    std::ofstream(d / "spec.json") << R"({"seed": 11, "point_noise_sigma": 0.01, "global_drift": [0.005, 0.005, 0.005, 0.03, 0.03, 0.03]})";
    for (const std::string& args :
         {std::string("simulate --spec spec.json --out data.json"),
          std::string("calibrate --alg 2 --data data.json --out result.json"),
          std::string("evaluate --data data.json --extrinsic result.json --out disparity.csv"),
          std::string("report --result result.json")}) {
      exits_ok = exits_ok && shell(d.string(), args) == 0;
    }
  }
  bool same = true;
  for (const char* f : {"data.json", "result.json", "disparity.csv", "disparity.stats.json"}) {
    same = same && slurp(dirs[0] / f) == slurp(dirs[1] / f) && !slurp(dirs[0] / f).empty();
  }
  bool echoed = false;
  try {
    const Json cfg = Json::parse(slurp(dirs[0] / "result.json"))["config"];
    std::set<std::string> keys;
    for (const auto& [k, v] : cfg.items()) keys.insert(k);
    const std::set<std::string> expected{"algorithm",       "config_file",    "cost_tolerance",   "damping_decrease",
                                         "damping_increase", "data",          "huber_threshold",  "initial_damping",
                                         "max_iterations",   "max_rejections", "ordering",        "parallel",
                                         "update_tolerance"};
    echoed = keys == expected;
  } catch (const std::exception&) {
    echoed = false;
  }
  fs::remove_all(root);
  return {exits_ok && same && echoed, fmt::format("exit codes {}, outputs identical across runs: {}, config echoed: {}",
                                                  exits_ok ? "all 0" : "non-zero", same ? "yes" : "no",
                                                  echoed ? "yes" : "no")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"lie-core suite", lie_core},
      {"factor Jacobian suite", factor_jacobians},
      {"noiseless recovery (Alg 1)", noiseless_alg1},
      {"planar observability", observability},
      {"Tikhonov bound", tikhonov},
      {"Alg 2 drift correction", drift_correction},
      {"Alg 3 vs Alg 2 under local drift", local_drift},
      {"reduction consistency", reduction},
      {"disparity oracle", disparity_oracle},
      {"outlier gating", gating},
      {"end-to-end CLI", cli_pipeline},
  };
  int failed = 0;
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double t = seconds_since(t0);
    failed += o.pass ? 0 : 1;
    std::printf("criterion %2zu %s  %-34s %s (%.2f s)\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str(), t);
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed in %.1f s\n", criteria.size() - static_cast<std::size_t>(failed),
              criteria.size(), seconds_since(start));
  return failed == 0 ? 0 : 1;
}
