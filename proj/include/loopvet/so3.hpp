#pragma once

// Rotation algebra on SO(3): hat/vee, exponential and logarithm maps, the
// geodesic angle to the identity, first-order composition of isotropic
// rotation uncertainty, and noisy sampling in exponential coordinates.

#include <Eigen/Core>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <utility>

namespace loopvet::so3 {

using Matrix3 = Eigen::Matrix3d;
using Vector3 = Eigen::Vector3d;

/// Row-major 3x3 special orthogonal matrix (the measurement payload).
using RotationMatrix = Eigen::Matrix3d;
/// Axis-angle exponential coordinates, radians.
using TangentVector = Eigen::Vector3d;

/// Deterministic generator used everywhere randomness is needed.
using Rng = std::mt19937_64;

inline constexpr double kSmallAngle = 1e-7;
inline constexpr double kSkewTolerance = 1e-8;
inline constexpr double kOrthoTolerance = 1e-9;

/// Isotropic covariance sigma_sq * I3.
struct IsotropicGaussian {
  double sigma_sq = 0.0;
};

struct UncertainRotation {
  RotationMatrix mean = RotationMatrix::Identity();
  IsotropicGaussian noise{};
};

inline Matrix3 hat(const TangentVector& v) {
  Matrix3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

inline TangentVector vee(const Matrix3& m) {
  if ((m + m.transpose()).norm() >= kSkewTolerance) {
    throw std::invalid_argument("vee: matrix is not skew-symmetric");
  }
  return {0.5 * (m(2, 1) - m(1, 2)), 0.5 * (m(0, 2) - m(2, 0)),
          0.5 * (m(1, 0) - m(0, 1))};
}

namespace detail {
// vee of the antisymmetric part, without the skew check.
inline Vector3 axial(const Matrix3& r) {
  return {0.5 * (r(2, 1) - r(1, 2)), 0.5 * (r(0, 2) - r(2, 0)),
          0.5 * (r(1, 0) - r(0, 1))};
}

inline double half_trace_cos(const Matrix3& r) {
  return std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
}
}  // namespace detail

/// Rodrigues formula; Taylor expansion below kSmallAngle.
inline RotationMatrix exp_so3(const TangentVector& v) {
  const double theta = v.norm();
  const Matrix3 k = hat(v);
  if (theta < kSmallAngle) {
    return Matrix3::Identity() + k + 0.5 * k * k;
  }
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Matrix3::Identity() + a * k + b * k * k;
}

/// Rotation angle in [0, pi]. Evaluates arccos((tr R - 1) / 2) through atan2
/// with the sine recovered from the antisymmetric part, which keeps full
/// precision near 0 and pi.
inline double geodesic_angle(const RotationMatrix& r) {
  const double c = detail::half_trace_cos(r);
  const double s = detail::axial(r).norm();
  return std::atan2(s, c);
}

/// Principal logarithm, norm in [0, pi]. At (or very near) angle pi the axis is
/// recovered from the symmetric part; the sign there is arbitrary.
inline TangentVector log_so3(const RotationMatrix& r) {
  const Vector3 ax = detail::axial(r);
  const double c = detail::half_trace_cos(r);
  const double s = ax.norm();
  const double theta = std::atan2(s, c);

  if (theta < kSmallAngle) {
    // theta / (2 sin theta) * (R - R^T)^vee ~ (1 + theta^2 / 6) * axial
    return (1.0 + theta * theta / 6.0) * ax;
  }
  if (std::numbers::pi - theta > 1e-4) {
    return (theta / s) * ax;
  }

  // (R + R^T) / 2 = cos(theta) I + (1 - cos(theta)) a a^T
  const Matrix3 sym = 0.5 * (r + r.transpose());
  const Matrix3 aat = (sym - c * Matrix3::Identity()) / (1.0 - c);
  int col = 0;
  aat.diagonal().maxCoeff(&col);
  Vector3 axis = aat.col(col) / std::sqrt(std::max(aat(col, col), 1e-300));
  axis.normalize();
  if (axis.dot(ax) < 0.0) axis = -axis;
  return theta * axis;
}

/// Composition under isotropic noise: means multiply, variances add.
inline UncertainRotation compose_uncertain(const RotationMatrix& r2, IsotropicGaussian g2,
                                           const RotationMatrix& r1, IsotropicGaussian g1) {
  return {r2 * r1, {g2.sigma_sq + g1.sigma_sq}};
}

inline bool is_rotation(const Matrix3& r, double tol = kOrthoTolerance) {
  if (!r.allFinite()) return false;
  return (r * r.transpose() - Matrix3::Identity()).norm() <= tol &&
         std::abs(r.determinant() - 1.0) <= tol;
}

/// Nearest rotation in Frobenius norm (polar factor with det fixed to +1).
inline RotationMatrix project_to_so3(const Matrix3& m) {
  Eigen::JacobiSVD<Matrix3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3 u = svd.matrixU();
  const Matrix3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) = -u.col(2);
  return u * v.transpose();
}

inline TangentVector sample_gaussian_tangent(double sigma, Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  const double x = n01(rng);
  const double y = n01(rng);
  const double z = n01(rng);
  return sigma * TangentVector(x, y, z);
}

/// exp(hat(eps)) * R with eps ~ N(0, sigma^2 I3).
inline RotationMatrix sample_noisy_rotation(const RotationMatrix& r, double sigma, Rng& rng) {
  if (sigma < 0.0) throw std::invalid_argument("sample_noisy_rotation: sigma < 0");
  if (sigma == 0.0) return r;
  return exp_so3(sample_gaussian_tangent(sigma, rng)) * r;
}

inline RotationMatrix sample_noisy_rotation(const RotationMatrix& r, double sigma,
                                            std::uint64_t seed) {
  Rng rng(seed);
  return sample_noisy_rotation(r, sigma, rng);
}

inline Vector3 random_unit_vector(Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  for (;;) {
    const double x = n01(rng);
    const double y = n01(rng);
    const double z = n01(rng);
    const Vector3 v(x, y, z);
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

/// Random axis, angle uniform in [lo, hi].
inline RotationMatrix sample_rotation_in_band(double lo, double hi, Rng& rng) {
  const Vector3 axis = random_unit_vector(rng);
  std::uniform_real_distribution<double> mag(lo, hi);
  const double angle = lo == hi ? lo : mag(rng);
  return exp_so3(angle * axis);
}

}  // namespace loopvet::so3
