// Serial reference vs OpenMP paths: factor evaluation, full solves, disparity.

#include <benchmark/benchmark.h>

#include <random>

#include "lvcal/calibrators.hpp"
#include "lvcal/metrics.hpp"

using namespace lvcal;

namespace {

const Scenario& scenario() {
  static const Scenario s = [] {
    ScenarioSpec spec;
    spec.seed = 4;
    spec.keypoints_per_pair = 60;
    spec.point_noise_sigma = 0.01;
    spec.global_drift = Twist(Vec3::Constant(0.005), Vec3::Constant(0.05));
    return generate(spec);
  }();
  return s;
}

// Extrinsic plus one pose per submap, reprojection terms on every match.
struct SubmapProblem {
  Problem problem;
  StateVector states;
};

const SubmapProblem& submap_problem() {
  static const SubmapProblem p = [] {
    const Scenario& s = scenario();
    SubmapProblem out;
    out.states.add(extrinsic_id(), s.prior.mean);
    for (const Submap& m : s.submaps) out.states.add({StateKind::SubmapPose, m.id}, m.central);
    out.problem.factors.push_back([&s](const StateVector& x) { return extrinsic_prior(x.pose(extrinsic_id()), s.prior); });
    for (const Correspondence& c : s.correspondences) {
      out.problem.factors.push_back([&s, c](const StateVector& x) {
        const Submap& a = s.submaps[static_cast<std::size_t>(c.submap_a)];
        const Submap& b = s.submaps[static_cast<std::size_t>(c.submap_b)];
        return reprojection_submap(c, a, x.pose({StateKind::SubmapPose, a.id}), b,
                                   x.pose({StateKind::SubmapPose, b.id}), x.pose(extrinsic_id()));
      });
    }
    return out;
  }();
  return p;
}

void BM_EvaluateSerial(benchmark::State& st) {
  const SubmapProblem& p = submap_problem();
  for (auto _ : st) benchmark::DoNotOptimize(evaluate_serial(p.problem, p.states));
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(p.problem.factors.size()));
}
BENCHMARK(BM_EvaluateSerial)->Unit(benchmark::kMicrosecond);

void BM_EvaluateParallel(benchmark::State& st) {
  const SubmapProblem& p = submap_problem();
  for (auto _ : st) benchmark::DoNotOptimize(evaluate(p.problem, p.states));
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(p.problem.factors.size()));
}
BENCHMARK(BM_EvaluateParallel)->Unit(benchmark::kMicrosecond);

// arg 0: serial, 1: OpenMP
void BM_CalibrateAlg2(benchmark::State& st) {
  CalibrationOptions o;
  o.solver.parallel = st.range(0) == 1;
  for (auto _ : st) benchmark::DoNotOptimize(calibrate_alg2(scenario(), o));
}
BENCHMARK(BM_CalibrateAlg2)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

std::vector<PointSet> random_sets(int per_set) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  std::vector<PointSet> sets(8);
  for (PointSet& s : sets) {
    for (int i = 0; i < per_set; ++i) s.emplace_back(u(rng), u(rng), 0.05 * u(rng));
  }
  return sets;
}

void BM_DisparityBruteForce(benchmark::State& st) {
  const std::vector<PointSet> sets = random_sets(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(point_disparity_brute_force(sets));
}
BENCHMARK(BM_DisparityBruteForce)->Arg(250)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_DisparityKdTree(benchmark::State& st) {
  const std::vector<PointSet> sets = random_sets(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(point_disparity(sets));
}
BENCHMARK(BM_DisparityKdTree)->Arg(250)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
