#pragma once

// Finite-difference spherical derivatives of smooth 1-homogeneous functions,
// Monte Carlo checks of the second-order spherical integral identity and the
// random-rotation density, and numerical checks of the kernel expansions.

#include "conclab/error.hpp"
#include "conclab/halfspace.hpp"
#include "conclab/parallel.hpp"
#include "conclab/rng.hpp"
#include "conclab/sphere_kernel.hpp"

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/beta.hpp>

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace conclab {

/// A C^2 function on R^n \ {0} with f(tx) = t f(x) for t > 0.
class HomogeneousTestFunction {
 public:
  HomogeneousTestFunction(std::string family, int n, std::function<double(const Vector&)> f)
      : family_(std::move(family)), n_(n), f_(std::move(f)) {}

  /// f(x) = x . a
  static HomogeneousTestFunction linear(const Vector& a) {
    return {"linear", static_cast<int>(a.size()), [a](const Vector& x) { return x.dot(a); }};
  }

  /// f(x) = |x|, constant on the sphere.
  static HomogeneousTestFunction norm(int n) {
    return {"norm", n, [](const Vector& x) { return x.norm(); }};
  }

  /// f(x) = (x . a)(x . b) / |x|
  static HomogeneousTestFunction bilinear(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw DomainError("bilinear vectors differ in dimension");
    return {"bilinear", static_cast<int>(a.size()), [a, b](const Vector& x) { return x.dot(a) * x.dot(b) / x.norm(); }};
  }

  /// f(x) = (x . a)^2 / |x|, even.
  static HomogeneousTestFunction quadratic(const Vector& a) {
    auto f = bilinear(a, a);
    f.family_ = "quadratic";
    return f;
  }

  /// f(x) = Sum_i c_i (x . a_i)^2 / |x| with a_i the columns of `directions`.
  static HomogeneousTestFunction quadratic_mixture(const Vector& c, const Matrix& directions) {
    if (c.size() != directions.cols()) throw DomainError("mixture weights do not match directions");
    return {"quadratic-mixture", static_cast<int>(directions.rows()), [c, directions](const Vector& x) {
              const Vector proj = directions.transpose() * x;
              return c.dot(proj.cwiseAbs2()) / x.norm();
            }};
  }

  double operator()(const Vector& x) const { return f_(x); }
  const std::string& family() const { return family_; }
  int dimension() const { return n_; }

 private:
  std::string family_;
  int n_;
  std::function<double(const Vector&)> f_;
};

inline constexpr double kDefaultFdStep = 1e-4;

namespace detail {
inline void check_fd_step(double h) {
  if (!(h >= 1e-6 && h <= 1e-2)) throw DomainError("finite-difference step must lie in [1e-6, 1e-2]");
}

inline Matrix tangent_projector(const Vector& theta) {
  return Matrix::Identity(theta.size(), theta.size()) - theta * theta.transpose();
}
}  // namespace detail

/// Central-difference Euclidean gradient.
inline Vector euclidean_grad_fd(const HomogeneousTestFunction& f, const Vector& x, double h = kDefaultFdStep) {
  detail::check_fd_step(h);
  const auto n = x.size();
  Vector g(n);
  Vector y = x;
  for (Eigen::Index i = 0; i < n; ++i) {
    y[i] = x[i] + h;
    const double up = f(y);
    y[i] = x[i] - h;
    const double down = f(y);
    y[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Central-difference Euclidean Hessian, symmetrized.
inline Matrix euclidean_hessian_fd(const HomogeneousTestFunction& f, const Vector& x, double h = kDefaultFdStep) {
  detail::check_fd_step(h);
  const auto n = x.size();
  Matrix hess(n, n);
  const double f0 = f(x);
  Vector y = x;
  for (Eigen::Index i = 0; i < n; ++i) {
    y[i] = x[i] + h;
    const double up = f(y);
    y[i] = x[i] - h;
    const double down = f(y);
    y[i] = x[i];
    hess(i, i) = (up - 2.0 * f0 + down) / (h * h);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      y[i] = x[i] + h;
      y[j] = x[j] + h;
      const double pp = f(y);
      y[j] = x[j] - h;
      const double pm = f(y);
      y[i] = x[i] - h;
      const double mm = f(y);
      y[j] = x[j] + h;
      const double mp = f(y);
      y[i] = x[i];
      y[j] = x[j];
      hess(i, j) = hess(j, i) = (pp - pm - mp + mm) / (4.0 * h * h);
    }
  }
  return 0.5 * (hess + hess.transpose());
}

/// P grad f(theta), P the projection onto theta-perp.
inline Vector spherical_grad_fd(const HomogeneousTestFunction& f, const Vector& theta, double h = kDefaultFdStep) {
  const Vector g = euclidean_grad_fd(f, theta, h);
  return g - g.dot(theta) * theta;
}

/// P (f''(theta) - (grad f(theta) . theta) Id) P.
inline Matrix spherical_hessian_from(const Vector& theta, const Vector& grad, const Matrix& hess) {
  const Matrix p = detail::tangent_projector(theta);
  const auto n = theta.size();
  Matrix s = p * (hess - grad.dot(theta) * Matrix::Identity(n, n)) * p;
  return 0.5 * (s + s.transpose());
}

inline Matrix spherical_hessian_fd(const HomogeneousTestFunction& f, const Vector& theta, double h = kDefaultFdStep) {
  return spherical_hessian_from(theta, euclidean_grad_fd(f, theta, h), euclidean_hessian_fd(f, theta, h));
}

// ---------------------------------------------------------------------------
// Monte Carlo checks

/// A Monte Carlo comparison of two sides evaluated on common sample points.
struct IdentityCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double difference = 0.0;
  double std_err = 0.0;
  std::size_t samples = 0;
  bool pass = false;
};

namespace detail {
/// Per-point values computed on fixed 4096-point blocks of uniform sphere
/// points; block b draws from the stream (seed, calculus, offset + b).
template <std::size_t K, class Fn>
std::array<std::vector<double>, K> sphere_sample_values(int n, std::size_t m, std::uint64_t seed, std::uint64_t offset,
                                                        Fn&& fn) {
  const std::size_t blocks = (m + kMcBlock - 1) / kMcBlock;
  using Block = std::array<std::vector<double>, K>;
  auto parts = map_chunks<Block>(blocks, [&](std::size_t b) {
    const std::size_t len = std::min(kMcBlock, m - b * kMcBlock);
    CounterRng rng(seed, StreamDomain::calculus, offset + b);
    Block out;
    for (auto& v : out) v.resize(len);
    for (std::size_t j = 0; j < len; ++j) {
      const auto vals = fn(rng);
      for (std::size_t k = 0; k < K; ++k) out[k][j] = vals[k];
    }
    return out;
  });
  std::array<std::vector<double>, K> all;
  for (auto& v : all) v.reserve(m);
  for (auto& p : parts)
    for (std::size_t k = 0; k < K; ++k) all[k].insert(all[k].end(), p[k].begin(), p[k].end());
  return all;
}

inline std::vector<double> difference(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return d;
}
}  // namespace detail

/// E ||f''_S||_HS^2 against
///   E ||f''||_HS^2 - (n-1)(E f)^2 - (n-1) Var f + 2 E |grad_S f|^2.
/// Since (n-1)((E f)^2 + Var f) = (n-1) E f^2, both sides are means of
/// per-point quantities and the difference has a plain standard error.
inline IdentityCheck check_second_order_identity(const HomogeneousTestFunction& f, std::size_t num_samples,
                                                 std::uint64_t seed, double h = kDefaultFdStep) {
  if (num_samples < 2) throw DomainError("need at least 2 samples");
  const int n = f.dimension();
  auto vals = detail::sphere_sample_values<2>(n, num_samples, seed, 0, [&](CounterRng& rng) {
    const Vector theta = uniform_sphere_point(n, rng);
    const Vector g = euclidean_grad_fd(f, theta, h);
    const Matrix hess = euclidean_hessian_fd(f, theta, h);
    const Matrix hs = spherical_hessian_from(theta, g, hess);
    const Vector gs = g - g.dot(theta) * theta;
    const double v = f(theta);
    return std::array<double, 2>{hs.squaredNorm(), hess.squaredNorm() - (n - 1.0) * v * v + 2.0 * gs.squaredNorm()};
  });
  IdentityCheck out;
  out.samples = num_samples;
  out.lhs = sample_mean(vals[0]).mean;
  out.rhs = sample_mean(vals[1]).mean;
  const auto diff = sample_mean(detail::difference(vals[0], vals[1]));
  out.difference = diff.mean;
  out.std_err = diff.std_err;
  // Finite-difference noise floor for functions where both sides vanish pointwise.
  const double floor = 1e-6 * (1.0 + std::abs(out.lhs));
  out.pass = std::abs(out.difference) <= 4.0 * out.std_err + floor;
  return out;
}

struct PoincareReport {
  double variance = 0.0;
  /// E ||f''_S||_HS^2 / (2 n (n + 2))
  double bound = 0.0;
  double ratio = 0.0;
  /// Standard error of variance - bound on common samples.
  double std_err = 0.0;
  std::size_t samples = 0;
  bool pass = false;
};

/// Var f <= E ||f''_S||_HS^2 / (2n(n+2)) for even f.
inline PoincareReport second_order_poincare_check(const HomogeneousTestFunction& f, std::size_t num_samples,
                                                  std::uint64_t seed, double h = kDefaultFdStep) {
  if (num_samples < 2) throw DomainError("need at least 2 samples");
  const int n = f.dimension();
  const double scale = 1.0 / (2.0 * n * (n + 2.0));
  auto vals = detail::sphere_sample_values<2>(n, num_samples, seed, 1u << 30, [&](CounterRng& rng) {
    const Vector theta = uniform_sphere_point(n, rng);
    return std::array<double, 2>{f(theta), scale * spherical_hessian_fd(f, theta, h).squaredNorm()};
  });
  PoincareReport rep;
  rep.samples = num_samples;
  const double mean = sample_mean(vals[0]).mean;
  std::vector<double> centered_sq(num_samples);
  for (std::size_t i = 0; i < num_samples; ++i) centered_sq[i] = (vals[0][i] - mean) * (vals[0][i] - mean);
  rep.variance = sample_mean(centered_sq).mean;
  rep.bound = sample_mean(vals[1]).mean;
  const auto diff = sample_mean(detail::difference(centered_sq, vals[1]));
  rep.std_err = diff.std_err;
  const double floor = 1e-8 * (1.0 + rep.bound);
  rep.ratio = rep.bound > floor ? rep.variance / rep.bound : 0.0;
  rep.pass = diff.mean <= 4.0 * rep.std_err + floor;
  return rep;
}

struct LemmaRandReport {
  int n = 0;
  double omega = 0.0;
  /// Omega E[1 / sqrt(1 - t^2)], t = theta1 . theta2, targeting 1.
  double normalization = 0.0;
  double normalization_se = 0.0;
  /// Omega E[t^2 / sqrt(1 - t^2)] against 1 / (n - 1).
  double second_moment = 0.0;
  double second_moment_se = 0.0;
  double second_moment_target = 0.0;
  std::size_t samples = 0;
  /// n = 3: the weight has infinite variance and the estimates are unreliable.
  bool flagged = false;
  /// |normalization - 1| <= 1%
  bool normalization_pass = false;
  /// |normalization - 1| <= 4 standard errors
  bool normalization_se_pass = false;
  bool moment_pass = false;
};

/// Reweighting independent uniform pairs on S^{n-1} by Omega_n / sqrt(1 - t^2)
/// gives the law of the correlation of two uniform points on S^{n-2}.
/// `omega_scale` multiplies Omega_n (sensitivity probe).
inline LemmaRandReport check_lemma_rand(int n, std::size_t num_samples, std::uint64_t seed, double omega_scale = 1.0) {
  if (n < 3) throw DomainError("pair reweighting check needs n >= 3");
  if (num_samples < 2) throw DomainError("need at least 2 samples");
  LemmaRandReport rep;
  rep.n = n;
  rep.samples = num_samples;
  rep.flagged = n == 3;
  rep.omega = omega_scale * omega_n(n);
  auto vals = detail::sphere_sample_values<2>(n, num_samples, seed, 1ull << 40, [&](CounterRng& rng) {
    const Vector a = uniform_sphere_point(n, rng);
    const Vector b = uniform_sphere_point(n, rng);
    const double t = Correlation::checked(a.dot(b));
    const double s = std::sqrt((1.0 - t) * (1.0 + t));
    const double w = s > 0.0 ? rep.omega / s : 0.0;
    return std::array<double, 2>{w, w * t * t};
  });
  const auto norm = sample_mean(vals[0]);
  const auto mom = sample_mean(vals[1]);
  rep.normalization = norm.mean;
  rep.normalization_se = norm.std_err;
  rep.second_moment = mom.mean;
  rep.second_moment_se = mom.std_err;
  rep.second_moment_target = 1.0 / (n - 1.0);
  rep.normalization_pass = std::abs(rep.normalization - 1.0) <= 0.01;
  rep.normalization_se_pass = std::abs(rep.normalization - 1.0) <= 4.0 * rep.normalization_se;
  rep.moment_pass = std::abs(rep.second_moment - rep.second_moment_target) <= 4.0 * rep.second_moment_se;
  return rep;
}

/// Omega_n Int_{-1}^{1} (1 - t^2)^{(n-3)/2} / sqrt(1 - t^2) dt / B(1/2, (n-1)/2),
/// which should be 1; evaluated by Gauss-Kronrod after t = sin u.
inline double omega_quadrature_normalization(int n) {
  const double exponent = n - 3.0;
  auto integrand = [exponent](double u) { return std::pow(std::cos(u), exponent); };
  const double integral =
      boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, -0.5 * pi, 0.5 * pi, 15, 1e-14);
  return omega_n(n) * integral / boost::math::beta(0.5, 0.5 * (n - 1));
}

// ---------------------------------------------------------------------------
// Expansion checks

/// sup over a grid of 0.02 <= |t| <= limit of |phi(t) - phi_poly(t, 4)| / t^6.
inline double phi_quartic_remainder(double limit = 0.5, int points = 2000) {
  double worst = 0.0;
  for (int i = 0; i <= points; ++i) {
    const double t = 0.02 + (limit - 0.02) * i / points;
    for (double s : {t, -t}) {
      const double r = std::abs(phi(Correlation(s)) - phi_poly(s, 4)) / std::pow(s, 6);
      worst = std::max(worst, r);
    }
  }
  return worst;
}

/// sup over a grid of 0.02 <= |t| <= limit of |psi(t) - psi_poly(t, 3, cubic)| / |t|^5.
inline double psi_cubic_remainder(double cubic = kPsiCubicCoefficient, double limit = 0.5, int points = 2000) {
  double worst = 0.0;
  for (int i = 0; i <= points; ++i) {
    const double t = 0.02 + (limit - 0.02) * i / points;
    for (double s : {t, -t}) {
      const double r = std::abs(psi(Correlation(s)) - psi_poly(s, 3, cubic)) / std::pow(std::abs(s), 5);
      worst = std::max(worst, r);
    }
  }
  return worst;
}

/// Cubic Taylor coefficient of psi at 0, psi'''(0)/6, from Richardson-extrapolated
/// central differences.
inline double measured_psi_cubic_coefficient(double h = 0.02) {
  auto third = [](double step) {
    auto f = [](double t) { return psi(Correlation(t)); };
    return (f(2 * step) - 2 * f(step) + 2 * f(-step) - f(-2 * step)) / (2 * step * step * step);
  };
  const double d = (4.0 * third(0.5 * h) - third(h)) / 3.0;
  return d / 6.0;
}

/// max over n in [n_lo, n_hi] of |C_{n,1}^{-2} - series(n)| n^4.
inline double cn1_series_error_scaled(int n_lo = 8, int n_hi = 4096) {
  double worst = 0.0;
  for (int n = n_lo; n <= n_hi; ++n) {
    const double c = cnp(n, 1.0);
    const double n2 = static_cast<double>(n) * n;
    worst = std::max(worst, std::abs(1.0 / (c * c) - cn1_inv_sq_series(n)) * n2 * n2);
  }
  return worst;
}

}  // namespace conclab
