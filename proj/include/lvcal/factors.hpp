#pragma once

#include <compare>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "lvcal/lie.hpp"
#include "lvcal/scene.hpp"

namespace lvcal {

enum class StateKind { Extrinsic, SubmapPose, VehiclePose, Velocity };

struct StateId {
  StateKind kind = StateKind::Extrinsic;
  int index = 0;

  auto operator<=>(const StateId&) const = default;
};

std::string to_string(const StateId& id);

inline StateId extrinsic_id() { return {StateKind::Extrinsic, 0}; }

enum class FactorKind { Reprojection, ExtrinsicPrior, PosePrior, Wnoa, RelativePose };

/// Linearized error term e(x_bar exp(-d^)) ~ e_bar + sum_s F_s d_s with
/// weight W = covariance^-1.
struct FactorEvaluation {
  FactorKind kind = FactorKind::Reprojection;
  Eigen::VectorXd residual;
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd weight;
  std::vector<std::pair<StateId, Eigen::MatrixXd>> jacobians;
  /// Reprojection only: noise mapping blocks for the two keypoints.
  std::optional<std::pair<Mat3, Mat3>> g_blocks;

  int rows() const { return static_cast<int>(residual.size()); }
  /// Jacobian block for `id`, or nullptr.
  const Eigen::MatrixXd* jacobian(const StateId& id) const;
  double cost() const { return residual.dot(weight * residual); }
};

struct NoiseParams {
  Mat6 wnoa_psd = Mat6::Identity();
  Vec6 relpose_sigma = Vec6::Ones();
  double submap_prior_sigma_phi = 0.01;
  Vec3 submap_prior_sigma_rho = Vec3::Constant(0.1);

  /// Throws InvalidArgument unless every parameter is strictly positive (definite).
  void validate() const;
  Mat6 submap_prior_covariance() const;
};

/// G1 R1 G1^T + G2 R2 G2^T, symmetrized.
Mat3 propagate_point_covariance(const Mat3& G1, const Mat3& G2, const Mat3& R1, const Mat3& R2);

/// Symmetric inverse of a covariance; throws SingularWeight when it is not
/// positive definite.
Eigen::MatrixXd information(const Eigen::MatrixXd& covariance);

/// One side of a reprojection term: the vehicle pose is state * offset, where
/// `state` is optional (absent means the pose is a fixed parameter).
struct ReprojectionSide {
  Pose pose;
  Pose offset;
  std::optional<StateId> state;
  KeypointObservation obs;
};

/// e = H(T1 O1 X u1 - T2 O2 X u2) with Jacobians on X and on any free T.
FactorEvaluation reprojection(const ReprojectionSide& a, const ReprojectionSide& b, const Pose& extrinsic);

FactorEvaluation reprojection_fixed(const Correspondence& corr, const Pose& T1, const Pose& T2, const Pose& extrinsic);

/// Submap poses are the states SubmapPose(sub.id); offsets come from the
/// submaps at corr.index_a / corr.index_b.
FactorEvaluation reprojection_submap(const Correspondence& corr, const Submap& sub1, const Submap& sub2,
                                     const Pose& extrinsic);
/// As above with explicit current submap poses (the solver's iterates).
FactorEvaluation reprojection_submap(const Correspondence& corr, const Submap& sub1, const Pose& T1,
                                     const Submap& sub2, const Pose& T2, const Pose& extrinsic);

/// log(T_bar^-1 T_meas) with F = J_l^-1, P = G Sigma G^T, G = -J_r^-1.
FactorEvaluation pose_prior(const Pose& T, const Pose& measured, const Mat6& covariance, const StateId& state,
                            FactorKind kind = FactorKind::PosePrior);

FactorEvaluation extrinsic_prior(const Pose& extrinsic, const ExtrinsicPrior& prior);
FactorEvaluation pose_prior(const Pose& T_k, const TimedPose& measured, int index);

/// Q_k for a link of length dt (first-order discretization).
Mat6 wnoa_covariance(const Mat6& psd, double dt);
/// R_k for a link of length dt; relpose_sigma is a density per sqrt(second).
Mat6 relative_pose_covariance(const Vec6& sigma, double dt);

/// e = log(T_k^-1 T_km1 exp(dt w^)). Velocities follow the same minus
/// convention as poses: w = w_bar - d.
FactorEvaluation wnoa_error(const Pose& T_km1, const Pose& T_k, const Twist& omega_km1, double dt,
                            const Mat6& psd, int index_km1, int index_k, int velocity_index);

/// e = log(T_k^-1 T_km1 meas_km1^-1 meas_k).
FactorEvaluation relative_pose_error(const Pose& T_km1, const Pose& T_k, const Pose& meas_km1, const Pose& meas_k,
                                     const Mat6& covariance, int index_km1, int index_k);

}  // namespace lvcal
