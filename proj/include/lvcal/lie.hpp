#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace lvcal {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat46 = Eigen::Matrix<double, 4, 6>;
using Mat36 = Eigen::Matrix<double, 3, 6>;

/// Angles at or beyond pi - kLogBranchMargin are rejected by every logarithm.
inline constexpr double kLogBranchMargin = 1e-6;

/// Below this angle the closed-form coefficients of exp/log/Jacobians are
/// replaced by their Taylor series.
inline constexpr double kSmallAngle = 0.05;

Mat3 hat(const Vec3& v);
Vec3 vee(const Mat3& m);

/// Element of the Lie algebra se(3). Component order is fixed project-wide:
/// rotational block first, translational block second, i.e.
/// xi = [phi; rho] and xi^ = [phi^x rho; 0 0].
struct Twist {
  Vec3 phi = Vec3::Zero();
  Vec3 rho = Vec3::Zero();

  Twist() = default;
  Twist(const Vec3& phi_, const Vec3& rho_) : phi(phi_), rho(rho_) {}

  static Twist from_vector(const Vec6& v) { return {v.head<3>(), v.tail<3>()}; }
  Vec6 vector() const {
    Vec6 v;
    v << phi, rho;
    return v;
  }

  Twist operator-() const { return {-phi, -rho}; }
  Twist operator*(double s) const { return {phi * s, rho * s}; }
  Twist operator+(const Twist& o) const { return {phi + o.phi, rho + o.rho}; }
  Twist operator-(const Twist& o) const { return {phi - o.phi, rho - o.rho}; }
};

Mat4 wedge(const Twist& xi);
Twist vee(const Mat4& m);

/// Direction cosine matrix. Construction from a raw matrix does not project;
/// use checked() to validate or normalized() to project onto SO(3).
class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}
  explicit Rotation(const Mat3& m) : m_(m) {}

  /// Throws NonOrthonormalRotation when ||C^T C - I||_F or |det C - 1| exceeds tol.
  static Rotation checked(const Mat3& m, double tol = 1e-9);

  static Rotation exp(const Vec3& phi);
  /// Principal-branch logarithm; throws AngleNearPi near pi.
  Vec3 log() const;

  /// Nearest rotation in the Frobenius sense (polar decomposition).
  Rotation normalized() const;
  double orthonormality_error() const;

  const Mat3& matrix() const { return m_; }
  Rotation inverse() const { return Rotation(m_.transpose()); }
  Rotation operator*(const Rotation& o) const { return Rotation(m_ * o.m_); }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }

 private:
  Mat3 m_;
};

class Pose {
 public:
  Pose() = default;
  Pose(const Rotation& C, const Vec3& r) : C_(C), r_(r) {}

  static Pose identity() { return {}; }
  static Pose from_matrix(const Mat4& m) { return {Rotation(m.topLeftCorner<3, 3>()), m.topRightCorner<3, 1>()}; }

  const Rotation& rotation() const { return C_; }
  const Vec3& translation() const { return r_; }
  Mat4 matrix() const;

  Pose inverse() const;
  Pose operator*(const Pose& o) const { return {C_ * o.C_, C_.matrix() * o.r_ + r_}; }
  /// Transforms a point: C r + t.
  Vec3 operator*(const Vec3& p) const { return C_.matrix() * p + r_; }

  Pose normalized() const { return {C_.normalized(), r_}; }

 private:
  Rotation C_;
  Vec3 r_ = Vec3::Zero();
};

// SO(3) Jacobians (left); right Jacobians follow from J_r(phi) = J_l(-phi).
Mat3 so3_left_jacobian(const Vec3& phi);
Mat3 so3_left_jacobian_inverse(const Vec3& phi);

Pose se3_exp(const Twist& xi);
/// Principal-branch logarithm; throws AngleNearPi when the rotation angle is
/// within kLogBranchMargin of pi.
Twist se3_log(const Pose& T);

/// u^odot for homogeneous u = [r; eta]: [-r^x  eta*I; 0 0] so that xi^ u = u^odot xi.
Mat46 odot(const Vec4& u);
inline Mat46 odot(const Vec3& r) { return odot(Vec4(r.x(), r.y(), r.z(), 1.0)); }

enum class Side { Left, Right };

Mat6 se3_jacobian(const Twist& xi, Side side);
Mat6 se3_jacobian_inverse(const Twist& xi, Side side);

/// Ad(T) such that T exp(xi^) T^-1 = exp((Ad(T) xi)^).
Mat6 adjoint(const Pose& T);

/// T_k exp(alpha log(T_k^-1 T_k1)), alpha = (t_i - t_k) / (t_k1 - t_k).
/// Throws OutOfInterval when t_i is outside [t_k, t_k1] or t_k >= t_k1.
Pose interpolate(const Pose& T_k, const Pose& T_k1, double t_k, double t_k1, double t_i);

/// a^-1 b, returning the exact identity when a and b are bitwise equal.
Pose between(const Pose& a, const Pose& b);

/// log(T^-1 T_tilde)^vee; exactly zero when T == T_tilde.
Twist left_invariant_error(const Pose& T, const Pose& T_tilde);

}  // namespace lvcal
