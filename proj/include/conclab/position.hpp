#pragma once

// L^p-isotropic positions: Cov_p(S mu) proportional to the identity for
// S in SL_n, found by a damped fixed point with backtracking on
// J(S) = Int |S x|^p dmu.

#include "conclab/error.hpp"
#include "conclab/measure.hpp"
#include "conclab/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace conclab {

struct IsotropyCheck {
  bool isotropic = false;
  /// || n Cov_p / Tr Cov_p - Id ||_op, invariant under dilation.
  double residual = 0.0;
  /// || Cov_p / Z_p - Id ||_op as measured, without removing the scale.
  double raw_residual = 0.0;
};

namespace detail {
inline double op_norm_sym(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline Matrix normalize_det1(const Matrix& a) {
  const double det = a.determinant();
  if (!(det > 0.0)) throw DegenerateSupport("transform lost orientation or rank");
  return a / std::pow(det, 1.0 / static_cast<double>(a.rows()));
}

/// M^{-s} for symmetric positive definite M, with an eigenvalue floor of
/// 1e-14 * lambda_max.
inline Matrix spd_power(const Matrix& m, double s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  const Vector& lam = es.eigenvalues();
  const double top = lam.maxCoeff();
  if (!(top > 0.0) || lam.minCoeff() < 1e-14 * top)
    throw DegenerateSupport("support lies in a hyperplane (covariance is singular)");
  return es.eigenvectors() * lam.array().pow(-s).matrix().asDiagonal() * es.eigenvectors().transpose();
}

inline void check_p(double p) {
  if (!(p > 0.0 && p < 4.0)) throw DomainError("L^p positioning is supported for 0 < p < 4");
}
}  // namespace detail

inline IsotropyCheck is_lp_isotropic(const DiscreteMeasure& mu, double p, double tol) {
  if (!(p > 0.0)) throw DomainError("p must be positive");
  const Matrix c = covp(mu, p);
  const double n = mu.dimension();
  const Matrix id = Matrix::Identity(mu.dimension(), mu.dimension());
  IsotropyCheck out;
  out.residual = detail::op_norm_sym(c * (n / c.trace()) - id);
  out.raw_residual = detail::op_norm_sym(c / z_p(mu, p) - id);
  out.isotropic = out.residual <= tol;
  return out;
}

/// Int |S x|^p dmu.
inline double position_objective(const DiscreteMeasure& mu, const Matrix& s, double p) {
  const Matrix y = mu.atoms() * s.transpose();
  return (mu.weights().array() * y.rowwise().norm().array().pow(p)).sum();
}

struct PositionResult {
  double p = 0.0;
  /// det 1; acts on the centered measure.
  Matrix transform;
  /// Center of mass removed before positioning.
  Vector center;
  double residual = 0.0;
  std::size_t iterations = 0;
  std::vector<double> objective_trace;
  /// a with Cov_p(a S mu) = Z_p(a S mu) Id exactly.
  double dilation = 1.0;
  bool converged = false;
};

struct PositionOptions {
  double tol = 1e-8;
  std::size_t max_iter = 500;
  double damping = 1.0;
  /// Throw NonConvergence when max_iter is reached.
  bool throw_on_failure = true;
};

namespace detail {
inline double lp_dilation(const DiscreteMeasure& nu, double p) {
  const Matrix c = covp(nu, p);
  return std::sqrt(nu.dimension() * z_p(nu, p) / c.trace());
}
}  // namespace detail

inline PositionResult lp_isotropic_position(const DiscreteMeasure& mu, double p, const PositionOptions& opt = {}) {
  detail::check_p(p);
  if (!(opt.damping > 0.0 && opt.damping <= 1.0)) throw DomainError("damping must lie in (0, 1]");
  const int n = mu.dimension();
  PositionResult res;
  res.p = p;
  res.center = mu.center();
  const DiscreteMeasure base = mu.translated(-res.center);
  Matrix s = Matrix::Identity(n, n);
  double objective = position_objective(base, s, p);
  res.objective_trace.push_back(objective);

  for (;;) {
    const DiscreteMeasure nu = base.transformed(s);
    const Matrix c = covp(nu, p);
    const Matrix m = c * (static_cast<double>(n) / c.trace());
    res.residual = detail::op_norm_sym(m - Matrix::Identity(n, n));
    if (res.residual <= opt.tol) {
      res.converged = true;
      break;
    }
    if (res.iterations >= opt.max_iter) break;

    Eigen::SelfAdjointEigenSolver<Matrix> es(m);
    const double top = es.eigenvalues().maxCoeff();
    if (es.eigenvalues().minCoeff() < 1e-14 * top)
      throw DegenerateSupport("support lies in a hyperplane (Cov_p is singular)");

    double eta = opt.damping;
    bool accepted = false;
    while (eta > 1e-12) {
      const Matrix step =
          es.eigenvectors() * es.eigenvalues().array().pow(-0.5 * eta).matrix().asDiagonal() * es.eigenvectors().transpose();
      const Matrix candidate = detail::normalize_det1(step * s);
      const double value = position_objective(base, candidate, p);
      if (value <= objective * (1.0 + 1e-12)) {
        s = candidate;
        objective = value;
        accepted = true;
        break;
      }
      eta *= 0.5;
    }
    ++res.iterations;
    res.objective_trace.push_back(objective);
    if (!accepted) break;
  }

  res.transform = s;
  res.dilation = detail::lp_dilation(base.transformed(s), p);
  if (!res.converged && opt.throw_on_failure)
    throw NonConvergence("L^p position did not reach tol " + std::to_string(opt.tol) + " (residual " +
                         std::to_string(res.residual) + " after " + std::to_string(res.iterations) + " iterations)");
  return res;
}

/// The centered measure carried to its position, scaled so Cov_p = Z_p Id.
inline DiscreteMeasure positioned_measure(const DiscreteMeasure& mu, const PositionResult& r) {
  return mu.translated(-r.center).transformed(r.dilation * r.transform);
}

/// p = 2: whitening of the centered measure, det-normalized.
inline PositionResult isotropic_position(const DiscreteMeasure& mu) {
  const int n = mu.dimension();
  PositionResult res;
  res.p = 2.0;
  res.center = mu.center();
  const DiscreteMeasure base = mu.translated(-res.center);
  res.transform = detail::normalize_det1(detail::spd_power(covp(base, 2.0), 0.5));
  const DiscreteMeasure nu = base.transformed(res.transform);
  const Matrix c = covp(nu, 2.0);
  res.residual = detail::op_norm_sym(c * (static_cast<double>(n) / c.trace()) - Matrix::Identity(n, n));
  res.objective_trace = {position_objective(base, Matrix::Identity(n, n), 2.0), position_objective(nu, Matrix::Identity(n, n), 2.0)};
  res.iterations = 1;
  res.dilation = detail::lp_dilation(nu, 2.0);
  res.converged = true;
  return res;
}

/// Positions two random GL images of mu and returns the largest relative
/// spread of singular values of Q = (S1 A1)(S2 A2)^{-1} over the trials.
inline double uniqueness_check(const DiscreteMeasure& mu, double p, std::size_t trials, std::uint64_t seed,
                               const PositionOptions& opt = {}) {
  detail::check_p(p);
  const int n = mu.dimension();
  double worst = 0.0;
  for (std::size_t k = 0; k < trials; ++k) {
    CounterRng rng(seed, StreamDomain::transform, k);
    const Matrix a1 = random_gl(n, rng);
    const Matrix a2 = random_gl(n, rng);
    const auto r1 = lp_isotropic_position(mu.transformed(a1), p, opt);
    const auto r2 = lp_isotropic_position(mu.transformed(a2), p, opt);
    const Matrix q = (r1.transform * a1) * (r2.transform * a2).inverse();
    const Vector sv = Eigen::JacobiSVD<Matrix>(q).singularValues();
    const double mean = sv.mean();
    worst = std::max(worst, (sv.array() - mean).abs().maxCoeff() / mean);
  }
  return worst;
}

/// Smallest relative objective change (J(S') - J(S)) / J(S) over random
/// SL_n perturbations S' = (Id + eps K) S, det-renormalized. A position is a
/// local minimum when this is not meaningfully negative.
inline double perturbation_gap(const DiscreteMeasure& mu, const PositionResult& r, std::size_t trials, double eps,
                               std::uint64_t seed) {
  const int n = mu.dimension();
  const DiscreteMeasure base = mu.translated(-r.center);
  const double j0 = position_objective(base, r.transform, r.p);
  double worst = std::numeric_limits<double>::infinity();
  CounterRng rng(seed, StreamDomain::transform, 1u << 20);
  std::normal_distribution<double> gauss;
  for (std::size_t k = 0; k < trials; ++k) {
    Matrix kmat(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) kmat(i, j) = gauss(rng);
    kmat /= kmat.norm();
    const Matrix sp = detail::normalize_det1((Matrix::Identity(n, n) + eps * kmat) * r.transform);
    worst = std::min(worst, (position_objective(base, sp, r.p) - j0) / j0);
  }
  return worst;
}

struct ProximityReport {
  /// ||T||_op and ||T^{-1}||_op for T carrying the L^1 image to unit covariance.
  double t_norm = 0.0;
  double t_inv_norm = 0.0;
  /// sqrt(n) Z_1 of the L^1-isotropic image.
  double sqrt_n_z1 = 0.0;
  PositionResult l1;
};

inline ProximityReport proximity_report(const DiscreteMeasure& mu, const PositionOptions& opt = {}) {
  ProximityReport rep;
  rep.l1 = lp_isotropic_position(mu, 1.0, opt);
  const DiscreteMeasure nu = positioned_measure(mu, rep.l1);
  const Matrix cov = covp(nu.centered(), 2.0);
  const Matrix t = detail::spd_power(cov, 0.5);
  const Vector sv = Eigen::JacobiSVD<Matrix>(t).singularValues();
  rep.t_norm = sv.maxCoeff();
  rep.t_inv_norm = 1.0 / sv.minCoeff();
  rep.sqrt_n_z1 = std::sqrt(static_cast<double>(mu.dimension())) * z_p(nu, 1.0);
  return rep;
}

}  // namespace conclab
