#include "lvcal/solver.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <Eigen/SparseCholesky>

#include "lvcal/error.hpp"

namespace lvcal {

namespace {

int kind_rank(StateKind k) {
  switch (k) {
    case StateKind::Extrinsic: return 0;
    case StateKind::SubmapPose:
    case StateKind::VehiclePose: return 1;
    case StateKind::Velocity: return 2;
  }
  return 3;
}

// Whitening scale for the robust loss: W is multiplied by w, cost uses rho.
struct Robust {
  double w = 1.0;
  double cost = 0.0;
};

Robust robust_terms(const FactorEvaluation& f, const std::optional<RobustLoss>& loss) {
  const double s = f.cost();
  if (!loss || f.kind != FactorKind::Reprojection) return {1.0, 0.5 * s};
  const double r = std::sqrt(s);
  const double k = loss->threshold;
  if (r <= k) return {1.0, 0.5 * s};
  return {k / r, k * r - 0.5 * k * k};
}

Observability from_svd(const Eigen::VectorXd& sv, const Eigen::MatrixXd& V, const std::vector<StateId>& layout,
                       double threshold) {
  Observability out;
  out.singular_values.assign(sv.data(), sv.data() + sv.size());
  if (sv.size() == 0) return out;
  const double smax = sv(0);
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    const double ratio = smax > 0.0 ? sv(i) / smax : 0.0;
    if (ratio >= threshold) continue;
    const Eigen::VectorXd v = V.col(i);
    std::size_t best = 0;
    double best_norm = -1.0;
    for (std::size_t b = 0; b < layout.size(); ++b) {
      const double n = v.segment<6>(static_cast<Eigen::Index>(6 * b)).norm();
      if (n > best_norm) {
        best_norm = n;
        best = b;
      }
    }
    out.unobservable_directions.push_back(
        {layout[best], v.segment<6>(static_cast<Eigen::Index>(6 * best)), ratio, v});
  }
  return out;
}

template <typename Solver>
Eigen::VectorXd factor_and_solve(const SparseMatrix& A, const Eigen::VectorXd& rhs) {
  Solver llt(A);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::IndefiniteSystem, "normal matrix is not positive definite");
  }
  Eigen::VectorXd x = llt.solve(rhs);
  if (llt.info() != Eigen::Success || !x.allFinite()) {
    throw Error(ErrorCode::IndefiniteSystem, "linear solve failed");
  }
  return x;
}

}  // namespace

void StateVector::push(Entry e) {
  if (index_.count(e.id)) throw Error(ErrorCode::InvalidArgument, "duplicate state " + to_string(e.id));
  if (!entries_.empty() && kind_rank(e.id.kind) < kind_rank(entries_.back().id.kind)) {
    throw Error(ErrorCode::InvalidArgument, "state " + to_string(e.id) + " breaks the block ordering");
  }
  index_[e.id] = entries_.size();
  ordering_.push_back(e.id);
  entries_.push_back(std::move(e));
}

void StateVector::add(const StateId& id, const Pose& pose) {
  if (id.kind == StateKind::Velocity) throw Error(ErrorCode::InvalidArgument, "velocity state needs a twist");
  push({id, pose, Twist()});
}

void StateVector::add(const StateId& id, const Twist& velocity) {
  if (id.kind != StateKind::Velocity) throw Error(ErrorCode::InvalidArgument, "pose state needs a pose");
  push({id, Pose(), velocity});
}

std::size_t StateVector::block(const StateId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw Error(ErrorCode::UnknownStateId, to_string(id));
  return it->second;
}

const StateVector::Entry& StateVector::entry(const StateId& id) const { return entries_[block(id)]; }

const Pose& StateVector::pose(const StateId& id) const { return entry(id).pose; }
const Twist& StateVector::velocity(const StateId& id) const { return entry(id).velocity; }

void StateVector::set(const StateId& id, const Pose& pose) { entries_[block(id)].pose = pose; }

StateVector StateVector::updated(const Eigen::VectorXd& delta) const {
  if (delta.size() != dimension()) {
    throw Error(ErrorCode::BlockMismatch, "update has " + std::to_string(delta.size()) + " entries, expected " +
                                              std::to_string(dimension()));
  }
  StateVector out = *this;
  for (std::size_t b = 0; b < entries_.size(); ++b) {
    const Vec6 d = delta.segment<6>(static_cast<Eigen::Index>(6 * b));
    Entry& e = out.entries_[b];
    if (e.id.kind == StateKind::Velocity) {
      e.velocity = Twist::from_vector(e.velocity.vector() - d);
    } else {
      e.pose = e.pose * se3_exp(Twist::from_vector(-d));
    }
  }
  return out;
}

StateVector apply_update(const StateVector& states, const Eigen::VectorXd& delta) { return states.updated(delta); }

std::vector<FactorEvaluation> evaluate_serial(const Problem& problem, const StateVector& states) {
  std::vector<FactorEvaluation> out;
  out.reserve(problem.factors.size());
  for (const FactorFn& f : problem.factors) out.push_back(f(states));
  return out;
}

std::vector<FactorEvaluation> evaluate(const Problem& problem, const StateVector& states) {
  const auto n = static_cast<std::ptrdiff_t>(problem.factors.size());
  std::vector<FactorEvaluation> out(problem.factors.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 32)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = problem.factors[static_cast<std::size_t>(i)](states);
    } catch (...) {
#pragma omp critical(lvcal_evaluate_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

Assembly assemble(const std::vector<FactorEvaluation>& factors, const StateVector& layout,
                  const std::optional<RobustLoss>& loss) {
  const int n = layout.dimension();
  Assembly a;
  a.gradient = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::Triplet<double>> triplets;
  std::vector<std::size_t> blocks;
  for (const FactorEvaluation& f : factors) {
    const Robust rb = robust_terms(f, loss);
    a.cost += rb.cost;
    const Eigen::MatrixXd W = rb.w * f.weight;
    const Eigen::VectorXd We = W * f.residual;
    blocks.clear();
    for (const auto& [id, J] : f.jacobians) {
      if (J.rows() != f.rows() || J.cols() != 6) {
        throw Error(ErrorCode::BlockMismatch, "Jacobian block for " + to_string(id) + " has the wrong shape");
      }
      blocks.push_back(layout.block(id));
    }
    for (std::size_t i = 0; i < f.jacobians.size(); ++i) {
      const Eigen::MatrixXd& Ji = f.jacobians[i].second;
      const auto oi = static_cast<Eigen::Index>(6 * blocks[i]);
      a.gradient.segment<6>(oi) += Ji.transpose() * We;
      const Eigen::MatrixXd JiW = Ji.transpose() * W;
      for (std::size_t j = 0; j < f.jacobians.size(); ++j) {
        const auto oj = static_cast<Eigen::Index>(6 * blocks[j]);
        const Mat6 B = JiW * f.jacobians[j].second;
        for (int r = 0; r < 6; ++r) {
          for (int c = 0; c < 6; ++c) triplets.emplace_back(oi + r, oj + c, B(r, c));
        }
      }
    }
  }
  a.normal.resize(n, n);
  a.normal.setFromTriplets(triplets.begin(), triplets.end());
  // exact symmetry; triplet sums can differ in the last bit between (i,j) and (j,i)
  SparseMatrix sym = SparseMatrix(a.normal.transpose());
  a.normal = 0.5 * (a.normal + sym);
  return a;
}

Eigen::VectorXd step(const SparseMatrix& normal, const Eigen::VectorXd& gradient, double damping, Ordering ordering) {
  if (normal.rows() != gradient.size()) throw Error(ErrorCode::BlockMismatch, "normal/gradient size mismatch");
  if (damping < 0.0) throw Error(ErrorCode::InvalidArgument, "damping must be non-negative");
  if (gradient.size() == 0) return gradient;
  SparseMatrix A = normal;
  if (damping > 0.0) {
    for (int i = 0; i < A.rows(); ++i) A.coeffRef(i, i) *= (1.0 + damping);
  }
  if (ordering == Ordering::Amd) {
    return factor_and_solve<Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>>(A, -gradient);
  }
  return factor_and_solve<Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::NaturalOrdering<int>>>(A,
                                                                                                        -gradient);
}

double Observability::ratio() const {
  if (singular_values.empty() || !(singular_values.front() > 0.0)) return 0.0;
  return singular_values.back() / singular_values.front();
}

Observability observability_report(const Eigen::MatrixXd& jacobian, const std::vector<StateId>& layout,
                                   double threshold) {
  if (jacobian.cols() != static_cast<Eigen::Index>(6 * layout.size())) {
    throw Error(ErrorCode::BlockMismatch, "Jacobian columns do not match the layout");
  }
  if (jacobian.rows() < jacobian.cols()) {
    // pad so the SVD yields a full set of right singular vectors
    Eigen::MatrixXd padded = Eigen::MatrixXd::Zero(jacobian.cols(), jacobian.cols());
    padded.topRows(jacobian.rows()) = jacobian;
    return observability_report(padded, layout, threshold);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(jacobian, Eigen::ComputeThinV);
  return from_svd(svd.singularValues(), svd.matrixV(), layout, threshold);
}

Observability observability_report_normal(const Eigen::MatrixXd& normal, const std::vector<StateId>& layout,
                                          double threshold) {
  if (normal.cols() != static_cast<Eigen::Index>(6 * layout.size()) || normal.rows() != normal.cols()) {
    throw Error(ErrorCode::BlockMismatch, "normal matrix does not match the layout");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (normal + normal.transpose()));
  const Eigen::Index n = normal.rows();
  Eigen::VectorXd sv(n);
  Eigen::MatrixXd V(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    // eigenvalues ascend; reverse into descending singular values
    sv(i) = std::sqrt(std::max(es.eigenvalues()(n - 1 - i), 0.0));
    V.col(i) = es.eigenvectors().col(n - 1 - i);
  }
  return from_svd(sv, V, layout, threshold);
}

Eigen::MatrixXd stacked_jacobian(const std::vector<FactorEvaluation>& factors, const StateVector& layout,
                                 const std::function<bool(const FactorEvaluation&)>& keep) {
  Eigen::Index rows = 0;
  for (const FactorEvaluation& f : factors) {
    if (keep(f)) rows += f.rows();
  }
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(rows, layout.dimension());
  Eigen::Index r = 0;
  for (const FactorEvaluation& f : factors) {
    if (!keep(f)) continue;
    const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(f.weight).matrixL();
    for (const auto& [id, Jb] : f.jacobians) {
      J.block(r, static_cast<Eigen::Index>(6 * layout.block(id)), f.rows(), 6) += L.transpose() * Jb;
    }
    r += f.rows();
  }
  return J;
}

SolveResult solve(const Problem& problem, const StateVector& initial, const SolverOptions& options) {
  auto run = [&](const StateVector& s) {
    return options.parallel ? evaluate(problem, s) : evaluate_serial(problem, s);
  };

  SolveResult result{initial, {}};
  SolveReport& rep = result.report;
  Assembly a = assemble(run(initial), initial, options.loss);
  rep.initial_cost = a.cost;
  rep.final_cost = a.cost;
  rep.cost_history.push_back(a.cost);

  double lambda = options.initial_damping;
  int rejections = 0;
  while (rep.iterations < options.max_iterations) {
    ++rep.iterations;
    Eigen::VectorXd delta;
    try {
      delta = step(a.normal, a.gradient, lambda, options.ordering);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::IndefiniteSystem) throw;
      if (++rejections >= options.max_rejections) throw;
      lambda *= options.damping_up;
      continue;
    }
    if (delta.size() == 0) {
      rep.converged = true;
      rep.termination = "update below tolerance";
      break;
    }
    // a step under the tolerance is still taken when it does not raise the cost
    const bool small = delta.lpNorm<Eigen::Infinity>() < options.update_tolerance;

    StateVector candidate = result.states.updated(delta);
    std::optional<Assembly> next;
    try {
      next = assemble(run(candidate), candidate, options.loss);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::AngleNearPi && e.code() != ErrorCode::SingularWeight) throw;
    }

    if (small) {
      if (next && std::isfinite(next->cost) && next->cost <= a.cost) {
        result.states = std::move(candidate);
        a = std::move(*next);
        rep.final_cost = a.cost;
        rep.cost_history.push_back(a.cost);
      }
      rep.converged = true;
      rep.termination = "update below tolerance";
      break;
    }
    if (next && std::isfinite(next->cost) && next->cost <= a.cost) {
      const double decrease = a.cost > 0.0 ? (a.cost - next->cost) / a.cost : 0.0;
      result.states = std::move(candidate);
      a = std::move(*next);
      rep.final_cost = a.cost;
      rep.cost_history.push_back(a.cost);
      lambda /= options.damping_down;
      rejections = 0;
      if (decrease < options.cost_tolerance) {
        rep.converged = true;
        rep.termination = "relative cost decrease below tolerance";
        break;
      }
    } else {
      lambda *= options.damping_up;
      if (++rejections >= options.max_rejections) {
        throw Error(ErrorCode::DivergenceDetected,
                    "cost increased for " + std::to_string(rejections) + " consecutive damping escalations");
      }
    }
  }
  if (!rep.converged) rep.termination = "iteration limit";
  return result;
}

}  // namespace lvcal
