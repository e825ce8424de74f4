#include "lvcal/factors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "lvcal/error.hpp"

namespace lvcal {

namespace {

Mat6 jl_inv(const Twist& e) { return se3_jacobian_inverse(e, Side::Left); }
Mat6 jr_inv(const Twist& e) { return se3_jacobian_inverse(e, Side::Right); }

FactorEvaluation finish(FactorEvaluation f, const Eigen::MatrixXd& covariance) {
  f.covariance = 0.5 * (covariance + covariance.transpose());
  f.weight = information(f.covariance);
  return f;
}

// Shared by the WNOA and relative-pose terms: e = log(T_k^-1 T_km1 Xi).
struct LinkError {
  Twist e;
  Mat6 F_km1;
  Mat6 F_k;
};

LinkError link_error(const Pose& T_km1, const Pose& T_k, const Pose& Xi) {
  LinkError out;
  out.e = left_invariant_error(T_k, T_km1 * Xi);
  const Mat6 Jr_inv = jr_inv(out.e);
  out.F_k = jl_inv(out.e);
  out.F_km1 = -Jr_inv * adjoint(Xi.inverse());
  return out;
}

}  // namespace

std::string to_string(const StateId& id) {
  switch (id.kind) {
    case StateKind::Extrinsic: return "extrinsic";
    case StateKind::SubmapPose: return "submap_pose[" + std::to_string(id.index) + "]";
    case StateKind::VehiclePose: return "vehicle_pose[" + std::to_string(id.index) + "]";
    case StateKind::Velocity: return "velocity[" + std::to_string(id.index) + "]";
  }
  return "unknown";
}

const Eigen::MatrixXd* FactorEvaluation::jacobian(const StateId& id) const {
  for (const auto& [sid, J] : jacobians) {
    if (sid == id) return &J;
  }
  return nullptr;
}

void NoiseParams::validate() const {
  Eigen::SelfAdjointEigenSolver<Mat6> es(0.5 * (wnoa_psd + wnoa_psd.transpose()));
  if (!(es.eigenvalues().minCoeff() > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "wnoa_psd must be positive definite");
  }
  if (!(relpose_sigma.minCoeff() > 0.0)) throw Error(ErrorCode::InvalidArgument, "relpose_sigma must be positive");
  if (!(submap_prior_sigma_phi > 0.0) || !(submap_prior_sigma_rho.minCoeff() > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "submap prior sigmas must be positive");
  }
}

Mat6 NoiseParams::submap_prior_covariance() const {
  Vec6 d;
  d << Vec3::Constant(submap_prior_sigma_phi), submap_prior_sigma_rho;
  return d.cwiseAbs2().asDiagonal();
}

Mat3 propagate_point_covariance(const Mat3& G1, const Mat3& G2, const Mat3& R1, const Mat3& R2) {
  const Mat3 M = G1 * R1 * G1.transpose() + G2 * R2 * G2.transpose();
  return 0.5 * (M + M.transpose());
}

Eigen::MatrixXd information(const Eigen::MatrixXd& covariance) {
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  const double scale = covariance.diagonal().cwiseAbs().maxCoeff();
  if (llt.info() != Eigen::Success || !(scale > 0.0) ||
      llt.matrixLLT().diagonal().minCoeff() <= 1e-12 * std::sqrt(scale)) {
    throw Error(ErrorCode::SingularWeight, "covariance is not positive definite");
  }
  Eigen::MatrixXd W = llt.solve(Eigen::MatrixXd::Identity(covariance.rows(), covariance.cols()));
  return 0.5 * (W + W.transpose());
}

FactorEvaluation reprojection(const ReprojectionSide& a, const ReprojectionSide& b, const Pose& extrinsic) {
  const Pose V1 = a.pose * a.offset;
  const Pose V2 = b.pose * b.offset;
  const Vec3 x1 = extrinsic * a.obs.point_laser;  // vehicle-frame points
  const Vec3 x2 = extrinsic * b.obs.point_laser;

  FactorEvaluation f;
  f.kind = FactorKind::Reprojection;
  f.residual = V1 * x1 - V2 * x2;

  const Mat3 C1 = V1.rotation().matrix() * extrinsic.rotation().matrix();
  const Mat3 C2 = V2.rotation().matrix() * extrinsic.rotation().matrix();
  // H T u^odot = [-C r^x, C] for a rotation C, point r
  auto h_odot = [](const Mat3& C, const Vec3& r) {
    Eigen::Matrix<double, 3, 6> m;
    m << -C * hat(r), C;
    return m;
  };
  f.jacobians.emplace_back(extrinsic_id(),
                           h_odot(C2, b.obs.point_laser) - h_odot(C1, a.obs.point_laser));
  if (a.state) f.jacobians.emplace_back(*a.state, -h_odot(a.pose.rotation().matrix(), a.offset * x1));
  if (b.state) f.jacobians.emplace_back(*b.state, h_odot(b.pose.rotation().matrix(), b.offset * x2));

  const Mat3 G1 = C1;
  const Mat3 G2 = -C2;
  f.g_blocks = std::make_pair(G1, G2);
  return finish(std::move(f), propagate_point_covariance(G1, G2, a.obs.covariance, b.obs.covariance));
}

FactorEvaluation reprojection_fixed(const Correspondence& corr, const Pose& T1, const Pose& T2, const Pose& extrinsic) {
  return reprojection({T1, Pose(), std::nullopt, corr.obs_a}, {T2, Pose(), std::nullopt, corr.obs_b}, extrinsic);
}

FactorEvaluation reprojection_submap(const Correspondence& corr, const Submap& sub1, const Submap& sub2,
                                     const Pose& extrinsic) {
  return reprojection_submap(corr, sub1, sub1.central, sub2, sub2.central, extrinsic);
}

FactorEvaluation reprojection_submap(const Correspondence& corr, const Submap& sub1, const Pose& T1,
                                     const Submap& sub2, const Pose& T2, const Pose& extrinsic) {
  if (corr.submap_a != sub1.id || corr.submap_b != sub2.id) {
    throw Error(ErrorCode::InvalidArgument, "correspondence does not reference the given submaps");
  }
  if (corr.index_a >= sub1.offsets.size() || corr.index_b >= sub2.offsets.size()) {
    throw Error(ErrorCode::InvalidArgument, "correspondence observation index out of range");
  }
  return reprojection({T1, sub1.offsets[corr.index_a], StateId{StateKind::SubmapPose, sub1.id}, corr.obs_a},
                      {T2, sub2.offsets[corr.index_b], StateId{StateKind::SubmapPose, sub2.id}, corr.obs_b},
                      extrinsic);
}

FactorEvaluation pose_prior(const Pose& T, const Pose& measured, const Mat6& covariance, const StateId& state,
                            FactorKind kind) {
  const Twist e = left_invariant_error(T, measured);
  const Mat6 G = -jr_inv(e);
  FactorEvaluation f;
  f.kind = kind;
  f.residual = e.vector();
  f.jacobians.emplace_back(state, jl_inv(e));
  return finish(std::move(f), G * covariance * G.transpose());
}

FactorEvaluation extrinsic_prior(const Pose& extrinsic, const ExtrinsicPrior& prior) {
  return pose_prior(extrinsic, prior.mean, prior.covariance(), extrinsic_id(), FactorKind::ExtrinsicPrior);
}

FactorEvaluation pose_prior(const Pose& T_k, const TimedPose& measured, int index) {
  return pose_prior(T_k, measured.pose, measured.covariance, {StateKind::VehiclePose, index});
}

Mat6 wnoa_covariance(const Mat6& psd, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorCode::NonpositiveDt, "WNOA link needs dt > 0");
  return dt * psd;
}

Mat6 relative_pose_covariance(const Vec6& sigma, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorCode::NonpositiveDt, "relative-pose link needs dt > 0");
  return Mat6((dt * sigma.cwiseAbs2()).asDiagonal());
}

FactorEvaluation wnoa_error(const Pose& T_km1, const Pose& T_k, const Twist& omega_km1, double dt,
                            const Mat6& psd, int index_km1, int index_k, int velocity_index) {
  const Mat6 Q = wnoa_covariance(psd, dt);
  const Twist step = omega_km1 * dt;
  const LinkError link = link_error(T_km1, T_k, se3_exp(step));
  FactorEvaluation f;
  f.kind = FactorKind::Wnoa;
  f.residual = link.e.vector();
  f.jacobians.emplace_back(StateId{StateKind::VehiclePose, index_km1}, link.F_km1);
  f.jacobians.emplace_back(StateId{StateKind::VehiclePose, index_k}, link.F_k);
  f.jacobians.emplace_back(StateId{StateKind::Velocity, velocity_index},
                           -jr_inv(link.e) * se3_jacobian(step, Side::Right) * dt);
  return finish(std::move(f), Q);
}

FactorEvaluation relative_pose_error(const Pose& T_km1, const Pose& T_k, const Pose& meas_km1, const Pose& meas_k,
                                     const Mat6& covariance, int index_km1, int index_k) {
  const LinkError link = link_error(T_km1, T_k, between(meas_km1, meas_k));
  FactorEvaluation f;
  f.kind = FactorKind::RelativePose;
  f.residual = link.e.vector();
  f.jacobians.emplace_back(StateId{StateKind::VehiclePose, index_km1}, link.F_km1);
  f.jacobians.emplace_back(StateId{StateKind::VehiclePose, index_k}, link.F_k);
  return finish(std::move(f), covariance);
}

}  // namespace lvcal
