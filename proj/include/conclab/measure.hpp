#pragma once

// Discrete probability measures on R^n and their moment functionals.

#include "conclab/error.hpp"
#include "conclab/parallel.hpp"
#include "conclab/rng.hpp"
#include "conclab/sphere_kernel.hpp"

#include <Eigen/Dense>

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace conclab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Default atom cap for O(N^2) pair sums.
inline constexpr std::size_t kDefaultPairCap = 100000;

/// N weighted atoms in R^n. Rows of atoms() are the atoms. Immutable.
class DiscreteMeasure {
 public:
  static constexpr double kMinAtomNorm = 1e-12;
  /// Weight sums within this distance of 1 are taken as-is.
  static constexpr double kExactWeightSlack = 1e-12;
  /// Weight sums within this distance of 1 are renormalized; beyond, rejected.
  static constexpr double kRenormalizeSlack = 1e-6;

  DiscreteMeasure(Matrix atoms, Vector weights) : atoms_(std::move(atoms)), weights_(std::move(weights)) {
    if (atoms_.rows() == 0) throw DataError("measure has no atoms");
    if (atoms_.cols() == 0) throw DataError("measure has dimension 0");
    if (weights_.size() != atoms_.rows()) throw DataError("weight count does not match atom count");
    if (!atoms_.allFinite()) throw DataError("non-finite atom coordinate");
    if (!weights_.allFinite()) throw DataError("non-finite weight");
    if ((weights_.array() < 0.0).any()) throw DataError("negative weight");
    const double total = weights_.sum();
    if (std::abs(total - 1.0) > kRenormalizeSlack)
      throw DataError("weight sum " + std::to_string(total) + " differs from 1 by more than 1e-6");
    if (std::abs(total - 1.0) > kExactWeightSlack) weights_ /= total;
    squared_norms_ = atoms_.rowwise().squaredNorm();
    norms_ = squared_norms_.cwiseSqrt();
    for (Eigen::Index i = 0; i < norms_.size(); ++i)
      if (norms_[i] < kMinAtomNorm) throw DataError("atom " + std::to_string(i) + " lies at the origin");
  }

  static DiscreteMeasure uniform(Matrix atoms) {
    const auto count = atoms.rows();
    if (count == 0) throw DataError("measure has no atoms");
    return DiscreteMeasure(std::move(atoms), Vector::Constant(count, 1.0 / static_cast<double>(count)));
  }

  int dimension() const { return static_cast<int>(atoms_.cols()); }
  std::size_t size() const { return static_cast<std::size_t>(atoms_.rows()); }
  const Matrix& atoms() const { return atoms_; }
  const Vector& weights() const { return weights_; }
  const Vector& norms() const { return norms_; }
  const Vector& squared_norms() const { return squared_norms_; }

  /// Push-forward under x -> T x.
  DiscreteMeasure transformed(const Matrix& t) const {
    if (t.rows() != t.cols() || t.cols() != atoms_.cols()) throw DomainError("transform shape mismatch");
    return DiscreteMeasure(atoms_ * t.transpose(), weights_);
  }

  DiscreteMeasure translated(const Vector& shift) const {
    if (shift.size() != atoms_.cols()) throw DomainError("shift dimension mismatch");
    Matrix moved = atoms_.rowwise() + shift.transpose();
    return DiscreteMeasure(std::move(moved), weights_);
  }

  Vector center() const { return atoms_.transpose() * weights_; }

  /// Copy with the center of mass moved to the origin.
  DiscreteMeasure centered() const { return translated(-center()); }

 private:
  Matrix atoms_;
  Vector weights_;
  Vector norms_;
  Vector squared_norms_;
};

// ---------------------------------------------------------------------------
// Pair sums

namespace detail {
inline constexpr Eigen::Index kPairTile = 128;
}

/// Sum_i Sum_j w_i w_j k(x_i.x_j, t_ij, |x_i|, |x_j|) for a kernel returning
/// K components, t_ij the checked correlation (exactly 1 on the diagonal).
/// Tiles of the Gram matrix are formed by GEMM; the upper triangle of tiles is
/// visited (off-diagonal tiles count twice), one chunk per row tile, and chunk
/// results are folded in order.
template <std::size_t K, class Kernel>
std::array<double, K> pair_sum(const DiscreteMeasure& mu, Kernel&& kernel, std::size_t cap = kDefaultPairCap) {
  if (mu.size() > cap) throw CapExceeded(mu.size(), cap);
  const Matrix& x = mu.atoms();
  const Vector& w = mu.weights();
  const Vector& r = mu.norms();
  const Vector& r2 = mu.squared_norms();
  const Eigen::Index count = x.rows();
  const Eigen::Index tiles = (count + detail::kPairTile - 1) / detail::kPairTile;

  using Partial = std::array<double, K>;
  auto partials = map_chunks<Partial>(static_cast<std::size_t>(tiles), [&](std::size_t chunk) {
    std::array<CompensatedSum, K> acc{};
    const Eigen::Index i0 = static_cast<Eigen::Index>(chunk) * detail::kPairTile;
    const Eigen::Index ni = std::min(detail::kPairTile, count - i0);
    Matrix gram;
    for (Eigen::Index tj = static_cast<Eigen::Index>(chunk); tj < tiles; ++tj) {
      const Eigen::Index j0 = tj * detail::kPairTile;
      const Eigen::Index nj = std::min(detail::kPairTile, count - j0);
      gram.noalias() = x.middleRows(i0, ni) * x.middleRows(j0, nj).transpose();
      const double factor = (j0 == i0) ? 1.0 : 2.0;
      for (Eigen::Index a = 0; a < ni; ++a) {
        std::array<double, K> row{};
        const double ra = r[i0 + a];
        const double r2a = r2[i0 + a];
        for (Eigen::Index b = 0; b < nj; ++b) {
          const double dot = gram(a, b);
          // Correlations from squared norms are exact for integer lattices;
          // near t = 1 the arccos kernels amplify rounding to sqrt(eps).
          const double t = (i0 + a == j0 + b) ? 1.0 : Correlation::checked(dot / std::sqrt(r2a * r2[j0 + b]));
          const auto v = kernel(dot, t, ra, r[j0 + b]);
          const double ww = w[j0 + b];
          for (std::size_t c = 0; c < K; ++c) row[c] += ww * v[c];
        }
        const double wa = factor * w[i0 + a];
        for (std::size_t c = 0; c < K; ++c) acc[c].add(wa * row[c]);
      }
    }
    Partial out{};
    for (std::size_t c = 0; c < K; ++c) out[c] = acc[c].value();
    return out;
  });

  std::array<CompensatedSum, K> total{};
  for (const auto& p : partials)
    for (std::size_t c = 0; c < K; ++c) total[c].add(p[c]);
  std::array<double, K> out{};
  for (std::size_t c = 0; c < K; ++c) out[c] = total[c].value();
  return out;
}

// ---------------------------------------------------------------------------
// Moments

inline Vector center_of_mass(const DiscreteMeasure& mu) { return mu.center(); }

/// Cov_p(mu) = Sum w_i |x_i|^{p-2} x_i x_i^T, accumulated in fixed row chunks.
inline Matrix covp(const DiscreteMeasure& mu, double p) {
  if (!(p > 0.0)) throw DomainError("covp needs p > 0");
  constexpr Eigen::Index kChunk = 4096;
  const Matrix& x = mu.atoms();
  const Eigen::Index count = x.rows();
  const Eigen::Index chunks = (count + kChunk - 1) / kChunk;
  const Vector scaled = (mu.weights().array() * mu.norms().array().pow(p - 2.0)).matrix();
  auto partials = map_chunks<Matrix>(static_cast<std::size_t>(chunks), [&](std::size_t c) {
    const Eigen::Index i0 = static_cast<Eigen::Index>(c) * kChunk;
    const Eigen::Index len = std::min(kChunk, count - i0);
    const auto block = x.middleRows(i0, len);
    Matrix part = block.transpose() * scaled.segment(i0, len).asDiagonal() * block;
    return part;
  });
  Matrix total = Matrix::Zero(mu.dimension(), mu.dimension());
  for (const auto& part : partials) total += part;
  return 0.5 * (total + total.transpose());
}

inline Matrix cov1(const DiscreteMeasure& mu) { return covp(mu, 1.0); }

/// Sum_i w_i v_i with compensation; the weighted first moment feeds
/// cancellation-sensitive variance formulas.
inline double weighted_sum(const Vector& w, const Vector& v) {
  CompensatedSum s;
  for (Eigen::Index i = 0; i < w.size(); ++i) s.add(w[i] * v[i]);
  return s.value();
}

/// Z_{p,mu} = Sum w_i |x_i|^{p-2}.
inline double z_p(const DiscreteMeasure& mu, double p) {
  if (!(p > 0.0)) throw DomainError("z_p needs p > 0");
  return weighted_sum(mu.weights(), mu.norms().array().pow(p - 2.0).matrix());
}

/// Sum w_i |x_i|^p.
inline double absolute_moment(const DiscreteMeasure& mu, double p) {
  return weighted_sum(mu.weights(), mu.norms().array().pow(p).matrix());
}

/// Normalization scale alpha = Tr Cov_1 / sqrt(n) (Cov_1 = alpha/sqrt(n) Id
/// when scalar).
inline double moment_alpha(const DiscreteMeasure& mu) {
  return weighted_sum(mu.weights(), mu.norms()) / std::sqrt(static_cast<double>(mu.dimension()));
}

/// Double integrals Int Int (x.y)^k / (|x|^{k-1} |y|^{k-1}) for k = 2, 4, 6.
struct PairMoments {
  double second = 0.0;
  double fourth = 0.0;
  double sixth = 0.0;
};

inline PairMoments pair_moments(const DiscreteMeasure& mu, std::size_t cap = kDefaultPairCap) {
  const auto sums = pair_sum<3>(
      mu,
      [](double, double t, double ri, double rj) {
        const double rr = ri * rj;
        const double t2 = t * t;
        const double t4 = t2 * t2;
        return std::array<double, 3>{rr * t2, rr * t4, rr * t4 * t2};
      },
      cap);
  return {sums[0], sums[1], sums[2]};
}

/// beta = (n / alpha^2) Int Int (x.y)^4 / (|x|^3 |y|^3).
inline double moment_beta(const DiscreteMeasure& mu, std::size_t cap = kDefaultPairCap) {
  const double n = mu.dimension();
  const double alpha = moment_alpha(mu);
  return n / (alpha * alpha) * pair_moments(mu, cap).fourth;
}

/// delta = (n^2 / alpha^2) Int Int (x.y)^6 / (|x|^5 |y|^5).
inline double moment_delta(const DiscreteMeasure& mu, std::size_t cap = kDefaultPairCap) {
  const double n = mu.dimension();
  const double alpha = moment_alpha(mu);
  return n * n / (alpha * alpha) * pair_moments(mu, cap).sixth;
}

struct MomentReport {
  double center_norm = 0.0;
  double alpha = 0.0;
  double p = 1.0;
  double z_p = 0.0;
  double beta = 0.0;
  double delta = 0.0;
  /// n (beta - 3)
  double gamma_excess = 0.0;
  /// sqrt(n) |center of mass|
  double kappa = 0.0;
  /// | n ||Cov_1||_HS^2 - (Tr Cov_1)^2 |
  double lambda = 0.0;
  /// Tr Cov_1 / sqrt(n)
  double zeta = 0.0;
  /// n Int Int (x.y)^4/(|x|^3|y|^3), without the alpha normalization
  double beta_unnormalized = 0.0;
};

inline MomentReport prop6_report(const DiscreteMeasure& mu, double p = 1.0, std::size_t cap = kDefaultPairCap) {
  const double n = mu.dimension();
  const double sqrt_n = std::sqrt(n);
  MomentReport rep;
  const Vector c = mu.center();
  rep.center_norm = c.norm();
  rep.kappa = sqrt_n * rep.center_norm;
  const Matrix c1 = cov1(mu);
  const double trace = c1.trace();
  rep.lambda = std::abs(n * c1.squaredNorm() - trace * trace);
  rep.zeta = trace / sqrt_n;
  rep.alpha = moment_alpha(mu);
  rep.p = p;
  rep.z_p = z_p(mu, p);
  const PairMoments pm = pair_moments(mu, cap);
  const double a2 = rep.alpha * rep.alpha;
  rep.beta = n / a2 * pm.fourth;
  rep.delta = n * n / a2 * pm.sixth;
  rep.gamma_excess = n * (rep.beta - 3.0);
  rep.beta_unnormalized = n * pm.fourth;
  return rep;
}

/// E (sum_i X_i)^4 and E (sum_i X_i)^6 for X uniform on {-1,1}^n, computed
/// from the Hamming-distance profile: sum_i X_i = n - 2k with probability
/// binom(n,k) 2^{-n}.
struct CubeMomentSums {
  double fourth = 0.0;
  double sixth = 0.0;
};

/// Binomial(n, 1/2) probabilities. Pascal's rule with halving is exact while
/// the coefficients fit in 53 bits (n <= 56) and loses only a few ulps up to
/// n = 2048; larger n use log-Gamma and renormalize.
inline std::vector<double> binomial_half_pmf(int n) {
  if (n < 0) throw DomainError("negative binomial size");
  std::vector<double> pmf(static_cast<std::size_t>(n) + 1, 0.0);
  if (n <= 2048) {
    pmf[0] = 1.0;
    for (int m = 1; m <= n; ++m) {
      for (int k = m; k >= 1; --k)
        pmf[static_cast<std::size_t>(k)] = 0.5 * (pmf[static_cast<std::size_t>(k)] + pmf[static_cast<std::size_t>(k - 1)]);
      pmf[0] *= 0.5;
    }
    return pmf;
  }
  const double log_norm = std::lgamma(n + 1.0) - n * std::numbers::ln2;
  CompensatedSum total;
  for (int k = 0; k <= n; ++k) {
    pmf[static_cast<std::size_t>(k)] = std::exp(log_norm - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0));
    total.add(pmf[static_cast<std::size_t>(k)]);
  }
  const double s = total.value();
  for (double& v : pmf) v /= s;
  return pmf;
}

inline CubeMomentSums cube_moment_sums(int n) {
  const auto pmf = binomial_half_pmf(n);
  CompensatedSum s4, s6;
  for (int k = 0; k <= n; ++k) {
    const double m = n - 2.0 * k;
    const double m2 = m * m;
    s4.add(pmf[static_cast<std::size_t>(k)] * m2 * m2);
    s6.add(pmf[static_cast<std::size_t>(k)] * m2 * m2 * m2);
  }
  return {s4.value(), s6.value()};
}

// ---------------------------------------------------------------------------
// Constructors and samplers

/// Uniform measure on the 2^n vertices of {-1,1}^n.
inline DiscreteMeasure cube_measure(int n, int max_enumeration = 20) {
  if (n < 1) throw DomainError("dimension must be >= 1");
  if (n > max_enumeration)
    throw DomainError("cube of dimension " + std::to_string(n) + " is too large to enumerate (limit " +
                      std::to_string(max_enumeration) + ")");
  const Eigen::Index count = Eigen::Index{1} << n;
  Matrix atoms(count, n);
  for (Eigen::Index v = 0; v < count; ++v)
    for (int j = 0; j < n; ++j) atoms(v, j) = ((v >> j) & 1) ? -1.0 : 1.0;
  return DiscreteMeasure::uniform(std::move(atoms));
}

/// Uniform measure on {+-e_1, ..., +-e_n}.
inline DiscreteMeasure cross_polytope_measure(int n) {
  if (n < 1) throw DomainError("dimension must be >= 1");
  Matrix atoms = Matrix::Zero(2 * n, n);
  for (int j = 0; j < n; ++j) {
    atoms(2 * j, j) = 1.0;
    atoms(2 * j + 1, j) = -1.0;
  }
  return DiscreteMeasure::uniform(std::move(atoms));
}

inline DiscreteMeasure point_mass(const Vector& x) {
  Matrix atoms = x.transpose();
  return DiscreteMeasure(std::move(atoms), Vector::Ones(1));
}

/// N i.i.d. uniform vertices of {-1,1}^n, kept with repetitions.
inline DiscreteMeasure sample_cube_subset(int n, std::size_t count, CounterRng& rng) {
  if (n < 1 || count < 1) throw DomainError("cube subset needs n >= 1 and N >= 1");
  Matrix atoms(static_cast<Eigen::Index>(count), n);
  std::uint64_t bits = 0;
  int left = 0;
  for (Eigen::Index i = 0; i < atoms.rows(); ++i)
    for (int j = 0; j < n; ++j) {
      if (left == 0) {
        bits = rng();
        left = 64;
      }
      atoms(i, j) = (bits & 1u) ? 1.0 : -1.0;
      bits >>= 1;
      --left;
    }
  return DiscreteMeasure::uniform(std::move(atoms));
}

namespace detail {
template <class Dist>
DiscreteMeasure sample_product(int n, std::size_t count, CounterRng& rng, Dist dist) {
  if (n < 1 || count < 1) throw DomainError("sampler needs n >= 1 and N >= 1");
  Matrix atoms(static_cast<Eigen::Index>(count), n);
  for (Eigen::Index i = 0; i < atoms.rows(); ++i) {
    for (int j = 0; j < n; ++j) atoms(i, j) = dist(rng);
    if (atoms.row(i).norm() < DiscreteMeasure::kMinAtomNorm) --i;  // redraw
  }
  return DiscreteMeasure::uniform(std::move(atoms));
}
}  // namespace detail

/// Standard Gaussian sample.
inline DiscreteMeasure sample_gaussian(int n, std::size_t count, CounterRng& rng) {
  return detail::sample_product(n, count, rng, std::normal_distribution<double>());
}

/// Product of Laplace(1) coordinates, density exp(-|t|)/2 (variance 2).
inline DiscreteMeasure sample_laplace_product(int n, std::size_t count, CounterRng& rng) {
  std::exponential_distribution<double> expo(1.0);
  auto laplace = [expo](CounterRng& g) mutable {
    const double magnitude = expo(g);
    return (g() & 1u) ? magnitude : -magnitude;
  };
  return detail::sample_product(n, count, rng, laplace);
}

/// Uniform on [-1, 1]^n (variance 1/3 per coordinate).
inline DiscreteMeasure sample_uniform_cube(int n, std::size_t count, CounterRng& rng) {
  return detail::sample_product(n, count, rng, std::uniform_real_distribution<double>(-1.0, 1.0));
}

/// Images of one atom under `count` Haar-random rotations.
inline DiscreteMeasure random_orbit(const Vector& x, std::size_t count, CounterRng& rng) {
  const int n = static_cast<int>(x.size());
  const double r = x.norm();
  if (r < DiscreteMeasure::kMinAtomNorm) throw DataError("orbit seed lies at the origin");
  Matrix atoms(static_cast<Eigen::Index>(count), n);
  // A Haar rotation applied to a fixed vector is a uniform point of radius |x|.
  for (Eigen::Index i = 0; i < atoms.rows(); ++i) atoms.row(i) = r * uniform_sphere_point(n, rng).transpose();
  return DiscreteMeasure::uniform(std::move(atoms));
}

// ---------------------------------------------------------------------------
// CSV serialization: header `weight,x1,...,xn`, one atom per line.

namespace detail {
inline std::string format_double17(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(std::string_view field, std::size_t line_no) {
  double v = 0.0;
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size())
    throw DataError("line " + std::to_string(line_no) + ": cannot parse '" + std::string(field) + "'");
  if (!std::isfinite(v)) throw DataError("line " + std::to_string(line_no) + ": non-finite entry");
  return v;
}
}  // namespace detail

inline void write_measure_csv(std::ostream& out, const DiscreteMeasure& mu) {
  out << "weight";
  for (int j = 1; j <= mu.dimension(); ++j) out << ",x" << j;
  out << '\n';
  for (Eigen::Index i = 0; i < mu.atoms().rows(); ++i) {
    out << detail::format_double17(mu.weights()[i]);
    for (int j = 0; j < mu.dimension(); ++j) out << ',' << detail::format_double17(mu.atoms()(i, j));
    out << '\n';
  }
}

inline DiscreteMeasure read_measure_csv(std::istream& in, std::optional<int> expected_dim = std::nullopt) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty measure file");
  const auto header = detail::split_commas(line);
  if (header.size() < 2 || header[0] != "weight") throw DataError("header must be weight,x1,...,xn");
  const int n = static_cast<int>(header.size()) - 1;
  for (int j = 1; j <= n; ++j)
    if (header[static_cast<std::size_t>(j)] != "x" + std::to_string(j))
      throw DataError("header column " + std::to_string(j + 1) + " must be x" + std::to_string(j));
  if (expected_dim && *expected_dim != n)
    throw DataError("dimension mismatch: file has " + std::to_string(n) + ", expected " +
                    std::to_string(*expected_dim));

  std::vector<double> weights;
  std::vector<double> coords;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_commas(line);
    if (fields.size() != header.size())
      throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " fields, found " + std::to_string(fields.size()));
    weights.push_back(detail::parse_double(fields[0], line_no));
    for (int j = 1; j <= n; ++j) coords.push_back(detail::parse_double(fields[static_cast<std::size_t>(j)], line_no));
  }
  const auto count = static_cast<Eigen::Index>(weights.size());
  if (count == 0) throw DataError("measure file has no atoms");
  Matrix atoms = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(coords.data(), count, n);
  Vector w = Eigen::Map<Vector>(weights.data(), count);
  return DiscreteMeasure(std::move(atoms), std::move(w));
}

inline DiscreteMeasure load_measure(const std::string& path, std::optional<int> expected_dim = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open measure file " + path);
  return read_measure_csv(in, expected_dim);
}

inline void save_measure(const std::string& path, const DiscreteMeasure& mu) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write measure file " + path);
  write_measure_csv(out, mu);
}

}  // namespace conclab
