#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lvcal/solver.hpp"
#include "lvcal/synth.hpp"

namespace lvcal {

struct CalibrationOptions {
  SolverOptions solver;
  /// Starting point for the extrinsic; the prior mean when absent.
  std::optional<Pose> initial_extrinsic;
};

/// Describes a near-null direction in reporting terms.
struct ObservabilityWarning {
  StateId state;
  double ratio = 0.0;
  /// Rotational and translational parts; for the extrinsic the translational
  /// part is resolved in the body frame.
  Vec3 rotation = Vec3::Zero();
  Vec3 translation = Vec3::Zero();
  std::string message;
};

struct CalibrationResult {
  int algorithm = 0;
  Pose extrinsic;
  /// log(C_prior^T C*) and r* - r_prior.
  Vec3 delta_phi = Vec3::Zero();
  Vec3 delta_r = Vec3::Zero();
  SolveReport solve_report;
  std::vector<ObservabilityWarning> observability;
  std::optional<std::vector<Submap>> posterior_submaps;
  std::vector<std::string> warnings;
};

CalibrationResult calibrate_alg1(const Scenario& scenario, const CalibrationOptions& options = {});
CalibrationResult calibrate_alg2(const Scenario& scenario, const CalibrationOptions& options = {});
CalibrationResult calibrate_alg3(const Scenario& scenario, const CalibrationOptions& options = {});
CalibrationResult calibrate(int algorithm, const Scenario& scenario, const CalibrationOptions& options = {});

/// Extrinsic update relative to the prior, in the reporting convention.
struct UpdateSummary {
  double rotation_deg = 0.0;
  Vec3 delta_phi_deg = Vec3::Zero();
  Vec3 translation_cm = Vec3::Zero();
};

UpdateSummary summarize_update(const Pose& extrinsic, const ExtrinsicPrior& prior);

/// Human-readable report: |dphi| in degrees, dr in centimetres, iterations
/// and observability flags.
std::string report_update(const CalibrationResult& result, const ExtrinsicPrior& prior);

/// Rotation (deg) and translation (m) distance between two extrinsics.
struct ExtrinsicError {
  double rotation_deg = 0.0;
  double translation_m = 0.0;
};
ExtrinsicError extrinsic_error(const Pose& estimate, const Pose& truth);

/// Merged node times for one submap's Alg 3 chain: DVL times and observation
/// times, sorted, with |dt| < 1e-9 collapsed.
std::vector<double> merged_node_times(const Submap& submap);

}  // namespace lvcal
