#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "lvcal/factors.hpp"

namespace lvcal {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Solver states in block order. Blocks are 6-dimensional. Kinds must be added
/// as extrinsic, then poses, then velocities; callers add poses in time order.
class StateVector {
 public:
  void add(const StateId& id, const Pose& pose);
  void add(const StateId& id, const Twist& velocity);

  const std::vector<StateId>& ordering() const { return ordering_; }
  std::size_t size() const { return ordering_.size(); }
  int dimension() const { return static_cast<int>(6 * ordering_.size()); }
  bool contains(const StateId& id) const { return index_.count(id) > 0; }

  /// Block index of `id`; throws UnknownStateId.
  std::size_t block(const StateId& id) const;
  const Pose& pose(const StateId& id) const;
  const Twist& velocity(const StateId& id) const;
  void set(const StateId& id, const Pose& pose);

  /// Poses: T <- T exp(-d^); velocities: w <- w - d. Throws BlockMismatch.
  StateVector updated(const Eigen::VectorXd& delta) const;

 private:
  struct Entry {
    StateId id;
    Pose pose;
    Twist velocity;
  };
  void push(Entry e);
  const Entry& entry(const StateId& id) const;

  std::vector<StateId> ordering_;
  std::vector<Entry> entries_;
  std::map<StateId, std::size_t> index_;
};

StateVector apply_update(const StateVector& states, const Eigen::VectorXd& delta);

using FactorFn = std::function<FactorEvaluation(const StateVector&)>;

struct Problem {
  std::vector<FactorFn> factors;
};

/// Evaluates every factor; OpenMP-parallel, output order matches input order.
std::vector<FactorEvaluation> evaluate(const Problem& problem, const StateVector& states);
std::vector<FactorEvaluation> evaluate_serial(const Problem& problem, const StateVector& states);

struct Assembly {
  SparseMatrix normal;
  Eigen::VectorXd gradient;
  double cost = 0.0;
};

/// Huber loss on the whitened residual norm of reprojection factors.
struct RobustLoss {
  double threshold = 1.0;
};

/// F^T W F, F^T W e and 1/2 sum e^T W e. Throws UnknownStateId.
Assembly assemble(const std::vector<FactorEvaluation>& factors, const StateVector& layout,
                  const std::optional<RobustLoss>& loss = std::nullopt);

enum class Ordering { Natural, Amd };

/// Solves (N + damping diag(N)) d = -g. Throws IndefiniteSystem.
Eigen::VectorXd step(const SparseMatrix& normal, const Eigen::VectorXd& gradient, double damping,
                     Ordering ordering = Ordering::Natural);

struct UnobservableDirection {
  StateId state;
  Vec6 direction;
  double ratio = 0.0;
  Eigen::VectorXd full;
};

struct Observability {
  std::vector<double> singular_values;
  std::vector<UnobservableDirection> unobservable_directions;
  double ratio() const;
};

inline constexpr double kObservabilityThreshold = 1e-8;

/// From a stacked weighted Jacobian whose columns follow `layout`.
Observability observability_report(const Eigen::MatrixXd& jacobian, const std::vector<StateId>& layout,
                                   double threshold = kObservabilityThreshold);
/// From a normal matrix F^T W F; singular values are sqrt of its eigenvalues.
Observability observability_report_normal(const Eigen::MatrixXd& normal, const std::vector<StateId>& layout,
                                          double threshold = kObservabilityThreshold);

/// Rows L^T F for every factor accepted by `keep`, with W = L L^T.
Eigen::MatrixXd stacked_jacobian(const std::vector<FactorEvaluation>& factors, const StateVector& layout,
                                 const std::function<bool(const FactorEvaluation&)>& keep);

struct SolverOptions {
  int max_iterations = 100;
  double update_tolerance = 1e-8;
  double cost_tolerance = 1e-10;
  double initial_damping = 1e-6;
  double damping_up = 10.0;
  double damping_down = 3.0;
  int max_rejections = 10;
  Ordering ordering = Ordering::Natural;
  std::optional<RobustLoss> loss;
  bool parallel = true;
};

struct SolveReport {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  bool converged = false;
  std::string termination;
  std::vector<double> cost_history;
  std::vector<double> singular_values;
  std::vector<UnobservableDirection> unobservable_directions;
};

struct SolveResult {
  StateVector states;
  SolveReport report;
};

/// Levenberg-Marquardt. Throws DivergenceDetected after max_rejections
/// consecutive rejected steps.
SolveResult solve(const Problem& problem, const StateVector& initial, const SolverOptions& options = {});

}  // namespace lvcal
