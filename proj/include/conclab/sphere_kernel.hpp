#pragma once

// Closed-form spherical integrals.
//
// Every kernel here is the value of an integral over the uniform probability
// measure sigma on S^{n-1} that depends on its arguments only through the
// correlation t = cos(rho) between two directions. The Gaussian polar formula
//
//   E_gamma f = C_{n,p} * E_sigma f       (f p-homogeneous)
//
// reduces each of them to a planar Gaussian integral.

#include "conclab/error.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace conclab {

using std::numbers::pi;

/// Correlation between two directions, t = (x.y)/(|x||y|).
///
/// Values within 1e-9 of [-1, 1] are clamped (rounding in a normalized dot
/// product); anything further out, or NaN, is a data error.
class Correlation {
 public:
  static constexpr double kSlack = 1e-9;

  explicit Correlation(double t) : t_(checked(t)) {}

  double value() const { return t_; }
  operator double() const { return t_; }

  static double checked(double t) {
    if (std::isnan(t)) throw DataError("correlation is NaN");
    if (std::abs(t) > 1.0 + kSlack) throw DataError("correlation " + std::to_string(t) + " outside [-1, 1]");
    return std::clamp(t, -1.0, 1.0);
  }

 private:
  double t_;
};

/// log C_{n,p}, C_{n,p} = n 2^{p/2-1} Gamma((n+p)/2) / Gamma((n+2)/2).
inline double log_cnp(int n, double p) {
  if (n < 1) throw DomainError("dimension must be >= 1");
  if (!(p >= 0.0)) throw DomainError("cnp needs p >= 0");
  // Gamma((n+p)/2) / Gamma((n+2)/2) as a single ratio keeps full relative
  // precision at large n, where separate log-Gamma values lose ~log(n) digits.
  const double ratio = p == 2.0 ? 1.0 : boost::math::tgamma_delta_ratio(0.5 * (n + p), 0.5 * (2.0 - p));
  return std::log(static_cast<double>(n)) + (0.5 * p - 1.0) * std::numbers::ln2 + std::log(ratio);
}

/// Gaussian-to-sphere conversion constant for p-homogeneous functions.
inline double cnp(int n, double p) {
  if (p == 0.0 || p == 2.0) {
    if (n < 1) throw DomainError("dimension must be >= 1");
    return p == 0.0 ? 1.0 : static_cast<double>(n);
  }
  return std::exp(log_cnp(n, p));
}

/// phi(t) = (pi - arccos t) t + sqrt(1 - t^2).
inline double phi(Correlation t) {
  const double x = t.value();
  if (x == 1.0) return pi;
  if (x == -1.0) return 0.0;
  return (pi - std::acos(x)) * x + std::sqrt((1.0 - x) * (1.0 + x));
}

/// Taylor polynomial of phi at 0 through order 2 or 4.
inline double phi_poly(double t, int order) {
  if (order != 2 && order != 4) throw DomainError("phi_poly order must be 2 or 4");
  const double t2 = t * t;
  double v = 1.0 + 0.5 * pi * t + 0.5 * t2;
  if (order == 4) v += t2 * t2 / 24.0;
  return v;
}

/// psi(t) = pi - arccos t.
inline double psi(Correlation t) {
  const double x = t.value();
  if (x == 1.0) return pi;
  if (x == -1.0) return 0.0;
  return pi - std::acos(x);
}

/// Cubic Taylor coefficient of psi at 0 (that of arcsin).
inline constexpr double kPsiCubicCoefficient = 1.0 / 6.0;

/// Taylor polynomial of psi at 0 through order 1 or 3. The cubic coefficient
/// can be overridden to probe the sensitivity of the expansion checks.
inline double psi_poly(double t, int order, double cubic = kPsiCubicCoefficient) {
  if (order != 1 && order != 3) throw DomainError("psi_poly order must be 1 or 3");
  double v = 0.5 * pi + t;
  if (order == 3) v += cubic * t * t * t;
  return v;
}

/// E_sigma (theta.eta)_+ for a unit eta; equals 1 / (sqrt(2 pi) C_{n,1}).
inline double kernel_plus1(int n) {
  return std::exp(-0.5 * std::log(2.0 * pi) - log_cnp(n, 1.0));
}

/// E_sigma (theta.eta)_+ (theta.xi)_+ for unit eta, xi with eta.xi = t.
inline double kernel_plus2(Correlation t, int n) {
  if (n < 1) throw DomainError("dimension must be >= 1");
  return phi(t) / (2.0 * pi * n);
}

/// sigma(theta.x >= 0, theta.y >= 0) = (pi - arccos t) / (2 pi).
inline double kernel_halfspace(Correlation t) { return psi(t) / (2.0 * pi); }

/// E_sigma (theta.eta)^3 (theta.xi)^3 = (9t + 6t^3) / C_{n,6}.
inline double kernel_cube3(Correlation t, int n) {
  if (n < 1) throw DomainError("dimension must be >= 1");
  const double x = t.value();
  // C_{n,6} = n (n+2) (n+4)
  const double c6 = static_cast<double>(n) * (n + 2.0) * (n + 4.0);
  return (9.0 * x + 6.0 * x * x * x) / c6;
}

/// Three-term large-n expansion 1/n + 1/(2n^2) + 1/(8n^3) of C_{n,1}^{-2}.
inline double cn1_inv_sq_series(int n) {
  if (n < 1) throw DomainError("dimension must be >= 1");
  const double x = 1.0 / n;
  return x + 0.5 * x * x + 0.125 * x * x * x;
}

/// Normalizing constant of the density Omega_n / sqrt(1 - (theta1.theta2)^2)
/// of two randomly rotated points of the equatorial S^{n-2}.
inline double omega_n(int n) {
  if (n < 3) throw DomainError("omega_n needs n >= 3");
  const double ratio = boost::math::tgamma_delta_ratio(0.5 * (n - 1), 0.5);
  return 0.5 * (n - 2) * ratio * ratio;
}

/// Per-dimension cache of the constants the pair sums need.
class SphericalConstants {
 public:
  explicit SphericalConstants(int n)
      : n_(n), plus1_(kernel_plus1(n)), inv_c6_(1.0 / (static_cast<double>(n) * (n + 2.0) * (n + 4.0))) {
    // 2 pi n kernel_plus1^2 = n / C_{n,1}^2
    centered_offset_ = 2.0 * pi * n * plus1_ * plus1_;
  }

  int dimension() const { return n_; }
  double cnp(double p) const { return conclab::cnp(n_, p); }
  double plus1() const { return plus1_; }
  double inv_c6() const { return inv_c6_; }
  /// phi(t) - centered_offset() is 2 pi n (kernel_plus2(t) - kernel_plus1^2).
  double centered_offset() const { return centered_offset_; }
  double omega() const { return omega_n(n_); }

 private:
  int n_;
  double plus1_;
  double inv_c6_;
  double centered_offset_;
};

}  // namespace conclab
