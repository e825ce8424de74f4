#include "lvcal/lie.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "lvcal/error.hpp"

namespace lvcal {

namespace {

// Coefficients of the SO(3)/SE(3) closed forms as functions of the angle.
struct AngleCoefficients {
  double a;  // sin(t)/t
  double b;  // (1 - cos t)/t^2
  double c;  // (t - sin t)/t^3
  double d;  // (t^2 + 2 cos t - 2)/(2 t^4)
  double e;  // (2t - 3 sin t + t cos t)/(2 t^5)
};

AngleCoefficients coefficients(double t) {
  AngleCoefficients k{};
  const double t2 = t * t;
  if (t < kSmallAngle) {
    const double t4 = t2 * t2;
    const double t6 = t4 * t2;
    k.a = 1.0 - t2 / 6.0 + t4 / 120.0 - t6 / 5040.0;
    k.b = 0.5 - t2 / 24.0 + t4 / 720.0 - t6 / 40320.0;
    k.c = 1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0 - t6 / 362880.0;
    k.d = 1.0 / 24.0 - t2 / 720.0 + t4 / 40320.0 - t6 / 3628800.0;
    k.e = 1.0 / 120.0 - t2 / 2520.0 + t4 / 120960.0 - t6 / 9979200.0;
    return k;
  }
  const double s = std::sin(t);
  const double co = std::cos(t);
  const double half = std::sin(0.5 * t);
  k.a = s / t;
  k.b = 2.0 * half * half / t2;
  k.c = (t - s) / (t2 * t);
  k.d = (t2 - 4.0 * half * half) / (2.0 * t2 * t2);
  k.e = (2.0 * t - 3.0 * s + t * co) / (2.0 * t2 * t2 * t);
  return k;
}

// 1/t^2 - (1 + cos t)/(2 t sin t)
double inverse_jacobian_coefficient(double t) {
  if (t < kSmallAngle) {
    const double t2 = t * t;
    return 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0 + t2 * t2 * t2 / 1209600.0;
  }
  return 1.0 / (t * t) - (1.0 + std::cos(t)) / (2.0 * t * std::sin(t));
}

void check_branch(double angle) {
  if (angle > std::numbers::pi - kLogBranchMargin) {
    std::ostringstream os;
    os << "rotation angle " << angle << " rad is within " << kLogBranchMargin << " of pi";
    throw Error(ErrorCode::AngleNearPi, os.str());
  }
}

// Q block of the SE(3) left Jacobian (translational row, rotational column).
Mat3 q_block(const Vec3& phi, const Vec3& rho) {
  const double t = phi.norm();
  const AngleCoefficients k = coefficients(t);
  const Mat3 P = hat(phi);
  const Mat3 R = hat(rho);
  const Mat3 PR = P * R;
  const Mat3 RP = R * P;
  const Mat3 PRP = P * RP;
  return 0.5 * R + k.c * (PR + RP + PRP) + k.d * (P * PR + RP * P - 3.0 * PRP) +
         k.e * (PRP * P + P * PRP);
}

}  // namespace

Mat3 hat(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Vec3 vee(const Mat3& m) { return {m(2, 1), m(0, 2), m(1, 0)}; }

Mat4 wedge(const Twist& xi) {
  Mat4 m = Mat4::Zero();
  m.topLeftCorner<3, 3>() = hat(xi.phi);
  m.topRightCorner<3, 1>() = xi.rho;
  return m;
}

Twist vee(const Mat4& m) { return {vee(Mat3(m.topLeftCorner<3, 3>())), m.topRightCorner<3, 1>()}; }

Rotation Rotation::checked(const Mat3& m, double tol) {
  const double orth = (m.transpose() * m - Mat3::Identity()).norm();
  const double det = m.determinant();
  if (!(orth <= tol) || !(std::abs(det - 1.0) <= tol)) {
    std::ostringstream os;
    os << "||C^T C - I|| = " << orth << ", det C = " << det << " (tolerance " << tol << ")";
    throw Error(ErrorCode::NonOrthonormalRotation, os.str());
  }
  return Rotation(m);
}

Rotation Rotation::exp(const Vec3& phi) {
  const AngleCoefficients k = coefficients(phi.norm());
  const Mat3 P = hat(phi);
  return Rotation(Mat3::Identity() + k.a * P + k.b * P * P);
}

Vec3 Rotation::log() const {
  const double cos_t = std::clamp(0.5 * (m_.trace() - 1.0), -1.0, 1.0);
  const Vec3 v = 0.5 * vee(Mat3(m_ - m_.transpose()));
  const double sin_t = v.norm();
  const double t = std::atan2(sin_t, cos_t);
  check_branch(t);
  if (t < kSmallAngle) {
    const double t2 = t * t;
    return (1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0 + 31.0 * t2 * t2 * t2 / 15120.0) * v;
  }
  if (t < 2.5) {
    return (t / sin_t) * v;
  }
  // sin t is small here; recover the axis from the symmetric part instead.
  const Mat3 S = 0.5 * (m_ + m_.transpose()) - cos_t * Mat3::Identity();
  Eigen::Index col = 0;
  S.diagonal().maxCoeff(&col);
  Vec3 axis = S.col(col).normalized();
  if (axis.dot(v) < 0.0) axis = -axis;
  return t * axis;
}

Rotation Rotation::normalized() const {
  Eigen::JacobiSVD<Mat3> svd(m_, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 U = svd.matrixU();
  const Mat3& V = svd.matrixV();
  if ((U * V.transpose()).determinant() < 0.0) U.col(2) = -U.col(2);
  return Rotation(U * V.transpose());
}

double Rotation::orthonormality_error() const {
  return (m_.transpose() * m_ - Mat3::Identity()).norm();
}

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = C_.matrix();
  m.topRightCorner<3, 1>() = r_;
  return m;
}

Pose Pose::inverse() const {
  const Mat3 Ct = C_.matrix().transpose();
  return {Rotation(Ct), -Ct * r_};
}

Mat3 so3_left_jacobian(const Vec3& phi) {
  const AngleCoefficients k = coefficients(phi.norm());
  const Mat3 P = hat(phi);
  return Mat3::Identity() + k.b * P + k.c * P * P;
}

Mat3 so3_left_jacobian_inverse(const Vec3& phi) {
  const double t = phi.norm();
  check_branch(t);
  const Mat3 P = hat(phi);
  return Mat3::Identity() - 0.5 * P + inverse_jacobian_coefficient(t) * P * P;
}

Pose se3_exp(const Twist& xi) {
  return {Rotation::exp(xi.phi), so3_left_jacobian(xi.phi) * xi.rho};
}

Twist se3_log(const Pose& T) {
  const Vec3 phi = T.rotation().log();
  return {phi, so3_left_jacobian_inverse(phi) * T.translation()};
}

Mat46 odot(const Vec4& u) {
  Mat46 m = Mat46::Zero();
  m.topLeftCorner<3, 3>() = -hat(u.head<3>());
  m.topRightCorner<3, 3>() = u(3) * Mat3::Identity();
  return m;
}

Mat6 se3_jacobian(const Twist& xi, Side side) {
  const Twist x = side == Side::Left ? xi : -xi;
  const Mat3 J = so3_left_jacobian(x.phi);
  Mat6 out = Mat6::Zero();
  out.topLeftCorner<3, 3>() = J;
  out.bottomRightCorner<3, 3>() = J;
  out.bottomLeftCorner<3, 3>() = q_block(x.phi, x.rho);
  return out;
}

Mat6 se3_jacobian_inverse(const Twist& xi, Side side) {
  const Twist x = side == Side::Left ? xi : -xi;
  const Mat3 Ji = so3_left_jacobian_inverse(x.phi);
  Mat6 out = Mat6::Zero();
  out.topLeftCorner<3, 3>() = Ji;
  out.bottomRightCorner<3, 3>() = Ji;
  out.bottomLeftCorner<3, 3>() = -Ji * q_block(x.phi, x.rho) * Ji;
  return out;
}

Mat6 adjoint(const Pose& T) {
  const Mat3& C = T.rotation().matrix();
  Mat6 out = Mat6::Zero();
  out.topLeftCorner<3, 3>() = C;
  out.bottomRightCorner<3, 3>() = C;
  out.bottomLeftCorner<3, 3>() = hat(T.translation()) * C;
  return out;
}

Pose interpolate(const Pose& T_k, const Pose& T_k1, double t_k, double t_k1, double t_i) {
  if (!(t_k < t_k1) || !(t_i >= t_k) || !(t_i <= t_k1)) {
    std::ostringstream os;
    os << "t_i = " << t_i << " outside [" << t_k << ", " << t_k1 << "]";
    throw Error(ErrorCode::OutOfInterval, os.str());
  }
  if (t_i == t_k) return T_k;
  const double alpha = (t_i - t_k) / (t_k1 - t_k);
  const Twist rel = se3_log(between(T_k, T_k1));
  return T_k * se3_exp(rel * alpha);
}

Pose between(const Pose& a, const Pose& b) {
  // a^-1 a is not bitwise identity in floating point.
  if (a.rotation().matrix() == b.rotation().matrix() && a.translation() == b.translation()) {
    return Pose::identity();
  }
  return a.inverse() * b;
}

Twist left_invariant_error(const Pose& T, const Pose& T_tilde) { return se3_log(between(T, T_tilde)); }

}  // namespace lvcal
