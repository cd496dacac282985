#pragma once

// The half-space functional F(theta) = Sum w_i (x_i . theta)_+ on the sphere:
// pointwise evaluation, exact spherical statistics from the pair kernels,
// Monte Carlo statistics, and Orlicz / central moment norms.

#include "conclab/error.hpp"
#include "conclab/measure.hpp"
#include "conclab/parallel.hpp"
#include "conclab/rng.hpp"
#include "conclab/sphere_kernel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace conclab {

namespace detail {
inline void check_direction(const DiscreteMeasure& mu, const Vector& theta) {
  if (theta.size() != mu.dimension()) throw DomainError("direction dimension mismatch");
  if (std::abs(theta.norm() - 1.0) > 1e-9) throw DomainError("direction is not a unit vector");
}
}  // namespace detail

inline double eval_F(const DiscreteMeasure& mu, const Vector& theta) {
  detail::check_direction(mu, theta);
  const Vector proj = mu.atoms() * theta;
  return (mu.weights().array() * proj.array().max(0.0)).sum();
}

/// Sum of w_i x_i over the open half-space {x . theta > 0}.
inline Vector grad_F(const DiscreteMeasure& mu, const Vector& theta) {
  detail::check_direction(mu, theta);
  const Vector proj = mu.atoms() * theta;
  const Vector mask = (proj.array() > 0.0).cast<double>() * mu.weights().array();
  return mu.atoms().transpose() * mask;
}

inline Vector grad_S_F(const DiscreteMeasure& mu, const Vector& theta) {
  Vector g = grad_F(mu, theta);
  g -= g.dot(theta) * theta;
  return g;
}

// ---------------------------------------------------------------------------
// Statistics

struct FStatsErrors {
  double mean_F = 0.0;
  double second_moment_F = 0.0;
  double var_F = 0.0;
  double grad_sq = 0.0;
  double grad_s_sq = 0.0;
};

struct FStats {
  double mean_F = 0.0;
  double second_moment_F = 0.0;
  double var_F = 0.0;
  /// E |grad F|^2
  double grad_sq = 0.0;
  /// E |grad_S F|^2
  double grad_s_sq = 0.0;
  std::string method;
  std::optional<FStatsErrors> mc_std_err;
  std::size_t samples = 0;
  /// Set when a tiny negative variance from cancellation was clipped to 0.
  bool var_clipped = false;
};

inline constexpr double kNegativeVarianceSlack = 1e-12;

namespace detail {
inline double clip_nonnegative(double v, const char* what, bool& clipped) {
  if (v >= 0.0) return v;
  if (v > -kNegativeVarianceSlack) {
    clipped = true;
    return 0.0;
  }
  throw Error(std::string(what) + " is negative beyond tolerance: " + std::to_string(v));
}

/// phi(t) - 1 - pi t / 2 = t asin(t) + sqrt(1 - t^2) - 1, written to avoid
/// cancellation for small t.
inline double phi_excess(double t) {
  const double s = std::sqrt((1.0 - t) * (1.0 + t));
  return t * std::asin(t) - t * t / (1.0 + s);
}

/// n / C_{n,1}^2 - 1 without cancellation.
inline double centered_offset_excess(int n) { return std::expm1(std::log(static_cast<double>(n)) - 2.0 * log_cnp(n, 1.0)); }
}  // namespace detail

/// Exact statistics from O(N^2) kernel sums. The variance is assembled as
///   2 pi n Var = Sum w w |x||y| g(t) + (pi/2) |c|^2 - (n/C^2 - 1) (Sum w|x|)^2
/// with g = phi - 1 - pi t/2, which keeps the cancellation at O(1/n) terms.
inline FStats stats_exact(const DiscreteMeasure& mu, std::size_t cap = kDefaultPairCap) {
  const int n = mu.dimension();
  const auto sums = pair_sum<3>(
      mu,
      [](double dot, double t, double ri, double rj) {
        const double rr = ri * rj;
        return std::array<double, 3>{rr * phi(Correlation(t)), rr * detail::phi_excess(t), dot * psi(Correlation(t))};
      },
      cap);
  const double two_pi_n = 2.0 * pi * n;
  const double first = weighted_sum(mu.weights(), mu.norms());
  const double c2 = mu.center().squaredNorm();

  FStats s;
  s.method = "exact-kernel";
  s.mean_F = kernel_plus1(n) * first;
  s.second_moment_F = sums[0] / two_pi_n;
  s.grad_sq = sums[2] / (2.0 * pi);
  const double var = (sums[1] + 0.5 * pi * c2 - detail::centered_offset_excess(n) * first * first) / two_pi_n;
  s.var_F = detail::clip_nonnegative(var, "var_F", s.var_clipped);
  s.grad_s_sq = detail::clip_nonnegative(s.grad_sq - s.second_moment_F, "grad_s_sq", s.var_clipped);
  return s;
}

/// Exact statistics of the uniform measure on {-1,1}^n in O(n): the
/// correlation of two vertices depends only on their Hamming distance k.
inline FStats cube_stats_exact(int n) {
  if (n < 1) throw DomainError("dimension must be >= 1");
  const auto pmf = binomial_half_pmf(n);
  CompensatedSum phi_sum, excess_sum, grad_sum;
  for (int k = 0; k <= n; ++k) {
    const double p = pmf[static_cast<std::size_t>(k)];
    const double t = static_cast<double>(n - 2 * k) / n;
    const Correlation c(t);
    phi_sum.add(p * phi(c));
    excess_sum.add(p * detail::phi_excess(t));
    grad_sum.add(p * (n - 2.0 * k) * psi(c));
  }
  FStats s;
  s.method = "hamming-exact";
  s.mean_F = std::sqrt(static_cast<double>(n)) * kernel_plus1(n);
  s.second_moment_F = phi_sum.value() / (2.0 * pi);
  s.grad_sq = grad_sum.value() / (2.0 * pi);
  const double var = (excess_sum.value() - detail::centered_offset_excess(n)) / (2.0 * pi);
  s.var_F = detail::clip_nonnegative(var, "var_F", s.var_clipped);
  s.grad_s_sq = detail::clip_nonnegative(s.grad_sq - s.second_moment_F, "grad_s_sq", s.var_clipped);
  return s;
}

// ---------------------------------------------------------------------------
// Monte Carlo

inline constexpr std::size_t kMcBlock = 4096;

/// Per-direction values of F and |grad_S F|^2 at m uniform sphere points.
struct FSamples {
  std::vector<double> f;
  std::vector<double> grad_s_sq;
  std::vector<double> grad_sq;
};

/// Draws m directions in fixed blocks of 4096; block b uses the stream
/// (seed, sphere_mc, b), so the samples do not depend on the thread count.
inline FSamples sample_F(const DiscreteMeasure& mu, std::size_t m, std::uint64_t seed) {
  const int n = mu.dimension();
  const std::size_t blocks = (m + kMcBlock - 1) / kMcBlock;
  constexpr Eigen::Index kBatch = 256;
  const Matrix& x = mu.atoms();
  const Vector& w = mu.weights();

  auto parts = map_chunks<FSamples>(blocks, [&](std::size_t b) {
    const std::size_t len = std::min(kMcBlock, m - b * kMcBlock);
    CounterRng rng(seed, StreamDomain::sphere_mc, b);
    Matrix theta(n, static_cast<Eigen::Index>(len));
    for (Eigen::Index j = 0; j < theta.cols(); ++j) theta.col(j) = uniform_sphere_point(n, rng);
    FSamples out;
    out.f.resize(len);
    out.grad_s_sq.resize(len);
    out.grad_sq.resize(len);
    Matrix proj, mask, grads;
    for (Eigen::Index j0 = 0; j0 < theta.cols(); j0 += kBatch) {
      const Eigen::Index nb = std::min(kBatch, theta.cols() - j0);
      const auto th = theta.middleCols(j0, nb);
      proj.noalias() = x * th;
      mask = (proj.array() > 0.0).cast<double>().matrix();
      const Eigen::RowVectorXd fvals = w.transpose() * proj.cwiseMax(0.0);
      mask = mask.array().colwise() * w.array();
      grads.noalias() = x.transpose() * mask;
      for (Eigen::Index j = 0; j < nb; ++j) {
        const double g2 = grads.col(j).squaredNorm();
        const double radial = grads.col(j).dot(th.col(j));
        const auto idx = static_cast<std::size_t>(j0 + j);
        out.f[idx] = fvals[j];
        out.grad_sq[idx] = g2;
        out.grad_s_sq[idx] = std::max(g2 - radial * radial, 0.0);
      }
    }
    return out;
  });

  FSamples all;
  all.f.reserve(m);
  all.grad_s_sq.reserve(m);
  all.grad_sq.reserve(m);
  for (auto& p : parts) {
    all.f.insert(all.f.end(), p.f.begin(), p.f.end());
    all.grad_s_sq.insert(all.grad_s_sq.end(), p.grad_s_sq.begin(), p.grad_s_sq.end());
    all.grad_sq.insert(all.grad_sq.end(), p.grad_sq.begin(), p.grad_sq.end());
  }
  return all;
}

/// Mean and its standard error.
struct SampleMean {
  double mean = 0.0;
  double std_err = 0.0;
};

inline SampleMean sample_mean(const std::vector<double>& v) {
  const auto m = static_cast<double>(v.size());
  CompensatedSum s;
  for (double x : v) s.add(x);
  const double mean = s.value() / m;
  CompensatedSum ss;
  for (double x : v) ss.add((x - mean) * (x - mean));
  const double var = v.size() > 1 ? ss.value() / (m - 1.0) : 0.0;
  return {mean, std::sqrt(var / m)};
}

/// Population variance (1/m) Sum (x - mean)^2 with a delete-one jackknife
/// standard error.
inline SampleMean sample_variance(const std::vector<double>& v) {
  const std::size_t count = v.size();
  if (count < 2) throw DomainError("variance needs at least 2 samples");
  const auto m = static_cast<double>(count);
  CompensatedSum s;
  for (double x : v) s.add(x);
  const double mean = s.value() / m;
  CompensatedSum ss;
  for (double x : v) ss.add((x - mean) * (x - mean));
  const double total = ss.value();
  const double var = total / m;
  // Leaving out sample i: SS_(i) = SS - d_i^2 m/(m-1), variance SS_(i)/(m-1).
  CompensatedSum jmean;
  std::vector<double> loo(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double d = v[i] - mean;
    loo[i] = (total - d * d * m / (m - 1.0)) / (m - 1.0);
    jmean.add(loo[i]);
  }
  const double jbar = jmean.value() / m;
  CompensatedSum jss;
  for (double l : loo) jss.add((l - jbar) * (l - jbar));
  return {var, std::sqrt((m - 1.0) / m * jss.value())};
}

inline std::vector<double> squares(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [](double x) { return x * x; });
  return out;
}

inline FStats stats_from_samples(const FSamples& s) {
  const auto mean = sample_mean(s.f);
  const auto second = sample_mean(squares(s.f));
  const auto var = sample_variance(s.f);
  const auto gsq = sample_mean(s.grad_sq);
  const auto gssq = sample_mean(s.grad_s_sq);
  FStats out;
  out.method = "monte-carlo";
  out.samples = s.f.size();
  out.mean_F = mean.mean;
  out.second_moment_F = second.mean;
  out.var_F = var.mean;
  out.grad_sq = gsq.mean;
  out.grad_s_sq = gssq.mean;
  out.mc_std_err = FStatsErrors{mean.std_err, second.std_err, var.std_err, gsq.std_err, gssq.std_err};
  return out;
}

inline FStats stats_mc(const DiscreteMeasure& mu, std::size_t num_samples, std::uint64_t seed) {
  if (num_samples < 2) throw DomainError("stats_mc needs at least 2 samples");
  return stats_from_samples(sample_F(mu, num_samples, seed));
}

// ---------------------------------------------------------------------------
// Third moment

/// n^2 Int (E (X.theta)^3)^2 dsigma(theta) from the kernel
/// |x|^3|y|^3 (9t + 6t^3) / C_{n,6} = (9 (x.y)|x|^2|y|^2 + 6 (x.y)^3) / C_{n,6}.
inline double third_moment_variance_exact(const DiscreteMeasure& mu, std::size_t cap = kDefaultPairCap) {
  const int n = mu.dimension();
  const auto sum = pair_sum<1>(
      mu,
      [](double dot, double, double ri, double rj) {
        const double r2 = ri * ri * rj * rj;
        return std::array<double, 1>{9.0 * dot * r2 + 6.0 * dot * dot * dot};
      },
      cap);
  const double c6 = static_cast<double>(n) * (n + 2.0) * (n + 4.0);
  return static_cast<double>(n) * n * sum[0] / c6;
}

/// Monte Carlo estimate of the same quantity with its standard error.
inline SampleMean third_moment_variance_mc(const DiscreteMeasure& mu, std::size_t m, std::uint64_t seed) {
  const int n = mu.dimension();
  const std::size_t blocks = (m + kMcBlock - 1) / kMcBlock;
  auto parts = map_chunks<std::vector<double>>(blocks, [&](std::size_t b) {
    const std::size_t len = std::min(kMcBlock, m - b * kMcBlock);
    CounterRng rng(seed, StreamDomain::sphere_mc, b);
    Matrix theta(n, static_cast<Eigen::Index>(len));
    for (Eigen::Index j = 0; j < theta.cols(); ++j) theta.col(j) = uniform_sphere_point(n, rng);
    const Matrix proj = mu.atoms() * theta;
    const Eigen::RowVectorXd third = mu.weights().transpose() * proj.array().cube().matrix();
    std::vector<double> out(len);
    for (std::size_t j = 0; j < len; ++j) out[j] = static_cast<double>(n) * n * third[static_cast<Eigen::Index>(j)] * third[static_cast<Eigen::Index>(j)];
    return out;
  });
  std::vector<double> all;
  all.reserve(m);
  for (auto& p : parts) all.insert(all.end(), p.begin(), p.end());
  return sample_mean(all);
}

// ---------------------------------------------------------------------------
// Orlicz and central moment norms

struct OrliczEstimate {
  int alpha_index = 1;
  /// Centered norm t*: mean exp((|f - mean f| / t*)^alpha) = 2.
  double value = 0.0;
  std::size_t samples = 0;
  /// mean exp(...) - 2 at the returned value.
  double residual = 0.0;
  bool degenerate = false;
  /// Same estimate without centering.
  double uncentered_value = 0.0;
};

namespace detail {
struct OrliczRoot {
  double value = 0.0;
  double residual = 0.0;
  bool degenerate = false;
};

inline OrliczRoot orlicz_root(const std::vector<double>& dev, int alpha) {
  double top = 0.0;
  for (double d : dev) top = std::max(top, d);
  if (top == 0.0) return {0.0, 0.0, true};
  auto excess = [&](double t) {
    CompensatedSum s;
    for (double d : dev) {
      const double term = std::exp(std::pow(d / t, alpha));
      if (std::isinf(term)) return term;
      s.add(term);
    }
    return s.value() / static_cast<double>(dev.size()) - 2.0;
  };
  double lo = top / 40.0;
  double hi = top * 40.0;
  if (!(excess(lo) > 0.0) || !(excess(hi) < 0.0)) throw NonConvergence("Orlicz bracket has no sign change");
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (excess(mid) > 0.0 ? lo : hi) = mid;
  }
  const double t = 0.5 * (lo + hi);
  return {t, excess(t), false};
}
}  // namespace detail

/// Empirical psi_alpha Orlicz norm (alpha = 1 or 2) of f - mean f by bisection.
inline OrliczEstimate orlicz_norm(const std::vector<double>& samples, int alpha_index) {
  if (alpha_index != 1 && alpha_index != 2) throw DomainError("alpha_index must be 1 or 2");
  if (samples.size() < 100) throw DomainError("orlicz_norm needs at least 100 samples");
  const double mean = sample_mean(samples).mean;
  std::vector<double> dev(samples.size()), raw(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    dev[i] = std::abs(samples[i] - mean);
    raw[i] = std::abs(samples[i]);
  }
  OrliczEstimate est;
  est.alpha_index = alpha_index;
  est.samples = samples.size();
  const auto centered = detail::orlicz_root(dev, alpha_index);
  est.value = centered.value;
  est.residual = centered.residual;
  est.degenerate = centered.degenerate;
  est.uncentered_value = detail::orlicz_root(raw, alpha_index).value;
  return est;
}

struct MomentNorm {
  double p = 0.0;
  double value = 0.0;
};

/// Central L^p norms (mean |f - mean f|^p)^{1/p} over a common sample set.
inline std::vector<MomentNorm> central_moment_norms(const std::vector<double>& samples, const std::vector<double>& p_list) {
  if (samples.empty()) throw DomainError("no samples");
  const double mean = sample_mean(samples).mean;
  std::vector<MomentNorm> out;
  for (double p : p_list) {
    if (!(p >= 1.0)) throw DomainError("moment norms need p >= 1");
    CompensatedSum s;
    for (double x : samples) {
      const double d = x - mean;
      s.add(p == 2.0 ? d * d : std::pow(std::abs(d), p));
    }
    out.push_back({p, std::pow(s.value() / static_cast<double>(samples.size()), 1.0 / p)});
  }
  return out;
}

inline std::vector<MomentNorm> moment_norms(const DiscreteMeasure& mu, const std::vector<double>& p_list,
                                            std::size_t num_samples, std::uint64_t seed) {
  return central_moment_norms(sample_F(mu, num_samples, seed).f, p_list);
}

}  // namespace conclab
