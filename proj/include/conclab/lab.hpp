#pragma once

// Scenario runners behind the conclab command line. Each scenario turns an
// ExperimentSpec into a RunReport of rows and assertions.

#include "conclab/halfspace.hpp"
#include "conclab/measure.hpp"
#include "conclab/position.hpp"
#include "conclab/report.hpp"
#include "conclab/sphere_kernel.hpp"
#include "conclab/spherical_calculus.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace conclab::lab {

struct ExperimentSpec {
  std::string scenario;
  /// Empty: scenario default.
  std::vector<int> n_list;
  std::optional<std::size_t> samples;
  std::uint64_t seed = 1;
  std::vector<double> p_list;
  std::optional<double> tol;
  std::string out;
  std::string format = "json";
  unsigned threads = 0;
  std::string measure_path;
  std::vector<std::string> families;
  std::optional<std::size_t> seeds;
  double delta = 0.5;
  std::optional<std::size_t> atoms;
  /// Sensitivity probes for the identity suite.
  double omega_scale = 1.0;
  double psi_cubic = kPsiCubicCoefficient;
};

inline const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names = {"cube-scan", "subset",   "thm5",     "identities",
                                                 "third-moment", "moments", "position", "var"};
  return names;
}

inline const std::vector<std::string>& family_names() {
  static const std::vector<std::string> names = {"gaussian",    "laplace",        "uniform-cube", "cube",
                                                 "cube-subset", "cross-polytope", "shifted-cube", "point-mass"};
  return names;
}

inline bool is_log_concave_family(const std::string& f) {
  return f == "gaussian" || f == "laplace" || f == "uniform-cube";
}

namespace detail {

inline bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

inline std::int64_t as_int(std::size_t v) { return static_cast<std::int64_t>(v); }

inline std::string p_label(double p) { return format_number(p); }

inline std::uint64_t stream_id(std::size_t family, int n, std::size_t replicate) {
  return (static_cast<std::uint64_t>(family) << 48) | (static_cast<std::uint64_t>(n) << 24) | replicate;
}

inline std::size_t family_index(const std::string& f) {
  const auto& names = family_names();
  return static_cast<std::size_t>(std::find(names.begin(), names.end(), f) - names.begin());
}

inline DiscreteMeasure make_family(const std::string& family, int n, std::size_t atoms, CounterRng& rng) {
  if (family == "gaussian") return sample_gaussian(n, atoms, rng);
  if (family == "laplace") return sample_laplace_product(n, atoms, rng);
  if (family == "uniform-cube") return sample_uniform_cube(n, atoms, rng);
  if (family == "cube") return cube_measure(n);
  if (family == "cube-subset") return sample_cube_subset(n, atoms, rng);
  if (family == "cross-polytope") return cross_polytope_measure(n);
  Vector e1 = Vector::Zero(n);
  e1[0] = 1.0;
  if (family == "shifted-cube") return cube_measure(n).translated(0.5 * e1);
  if (family == "point-mass") return point_mass(e1);
  throw DomainError("unknown family: " + family);
}

/// True when the measure is invariant under x -> -x (atoms and weights).
inline bool is_symmetric(const DiscreteMeasure& mu) {
  const Matrix& x = mu.atoms();
  const Vector& w = mu.weights();
  const Eigen::Index count = x.rows();
  auto sorted = [&](double sign) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(count));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double u = sign * x(a, j), v = sign * x(b, j);
        if (u != v) return u < v;
      }
      return w[a] < w[b];
    });
    return idx;
  };
  const auto plus = sorted(1.0), minus = sorted(-1.0);
  for (std::size_t k = 0; k < plus.size(); ++k) {
    if (w[plus[k]] != w[minus[k]]) return false;
    if (x.row(plus[k]) != -x.row(minus[k])) return false;
  }
  return true;
}

inline double slope_loglog(const std::vector<double>& xs, const std::vector<double>& ys) {
  const std::size_t k = xs.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < k; ++i) {
    mx += std::log(xs[i]);
    my += std::log(ys[i]);
  }
  mx /= k;
  my /= k;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double dx = std::log(xs[i]) - mx;
    sxy += dx * (std::log(ys[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Kernel Monte Carlo check

struct KernelMcResult {
  std::string kernel;
  int n = 0;
  std::size_t pairs = 0;
  std::size_t samples = 0;
  /// Largest |MC mean - kernel| / standard error over the pairs.
  double max_z = 0.0;
  double worst_t = 0.0;
};

/// Sphere averages of (x.th)_+(y.th)_+, 1{x.th > 0, y.th > 0} and
/// (x.th)^3 (y.th)^3 for unit pairs with correlations spread over
/// [-0.98, 0.98], against kernel_plus2, kernel_halfspace and kernel_cube3.
inline std::vector<KernelMcResult> kernel_mc_check(int n, std::size_t pairs, std::size_t m, std::uint64_t seed) {
  if (n < 2) throw DomainError("kernel check needs n >= 2");
  if (pairs < 2 || m < 2) throw DomainError("kernel check needs at least 2 pairs and 2 samples");
  const auto P = static_cast<Eigen::Index>(pairs);
  CounterRng rng(seed, StreamDomain::calculus, static_cast<std::uint64_t>(n));
  Matrix v(n, 2 * P);
  std::vector<double> ts(pairs);
  for (Eigen::Index k = 0; k < P; ++k) {
    const Vector x = uniform_sphere_point(n, rng);
    Vector u = uniform_sphere_point(n, rng);
    u -= u.dot(x) * x;
    u.normalize();
    const double t = -0.98 + 1.96 * static_cast<double>(k) / static_cast<double>(P - 1);
    v.col(k) = x;
    v.col(P + k) = t * x + std::sqrt(1.0 - t * t) * u;
    ts[static_cast<std::size_t>(k)] = Correlation::checked(v.col(k).dot(v.col(P + k)));
  }

  const std::size_t blocks = (m + kMcBlock - 1) / kMcBlock;
  auto parts = map_chunks<std::vector<double>>(blocks, [&](std::size_t b) {
    const std::size_t len = std::min(kMcBlock, m - b * kMcBlock);
    CounterRng r(seed, StreamDomain::sphere_mc, b);
    Matrix theta(static_cast<Eigen::Index>(len), n);
    for (Eigen::Index i = 0; i < theta.rows(); ++i) theta.row(i) = uniform_sphere_point(n, r).transpose();
    const Matrix proj = theta * v;
    std::vector<double> acc(static_cast<std::size_t>(6 * P), 0.0);
    for (Eigen::Index k = 0; k < P; ++k) {
      double s[3] = {0, 0, 0}, q[3] = {0, 0, 0};
      for (Eigen::Index i = 0; i < proj.rows(); ++i) {
        const double a = proj(i, k), c = proj(i, P + k);
        const double vals[3] = {std::max(a, 0.0) * std::max(c, 0.0), (a > 0.0 && c > 0.0) ? 1.0 : 0.0,
                                a * a * a * c * c * c};
        for (int j = 0; j < 3; ++j) {
          s[j] += vals[j];
          q[j] += vals[j] * vals[j];
        }
      }
      for (int j = 0; j < 3; ++j) {
        acc[static_cast<std::size_t>(6 * k + j)] = s[j];
        acc[static_cast<std::size_t>(6 * k + 3 + j)] = q[j];
      }
    }
    return acc;
  });

  std::vector<CompensatedSum> tot(static_cast<std::size_t>(6 * P));
  for (const auto& part : parts)
    for (std::size_t i = 0; i < part.size(); ++i) tot[i].add(part[i]);

  const char* names[3] = {"kernel_plus2", "kernel_halfspace", "kernel_cube3"};
  std::vector<KernelMcResult> out;
  for (int j = 0; j < 3; ++j) {
    KernelMcResult res{names[j], n, pairs, m, 0.0, 0.0};
    for (Eigen::Index k = 0; k < P; ++k) {
      const double t = ts[static_cast<std::size_t>(k)];
      const double mean = tot[static_cast<std::size_t>(6 * k + j)].value() / static_cast<double>(m);
      const double second = tot[static_cast<std::size_t>(6 * k + 3 + j)].value() / static_cast<double>(m);
      const double se = std::sqrt(std::max(second - mean * mean, 0.0) / static_cast<double>(m));
      const Correlation c(t);
      const double target = j == 0 ? kernel_plus2(c, n) : j == 1 ? kernel_halfspace(c) : kernel_cube3(c, n);
      const double z = std::abs(mean - target) / se;
      if (z > res.max_z) {
        res.max_z = z;
        res.worst_t = t;
      }
    }
    out.push_back(res);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validation

inline void validate(const ExperimentSpec& spec) {
  if (!detail::contains(scenario_names(), spec.scenario)) throw DomainError("unknown scenario: " + spec.scenario);
  for (int n : spec.n_list)
    if (n < 1) throw DomainError("dimensions must be >= 1");
  if (spec.samples && *spec.samples < 100) throw DomainError("--samples must be >= 100");
  if (spec.format != "json" && spec.format != "csv") throw DomainError("--format must be csv or json");
  if (spec.tol && !(*spec.tol > 0.0)) throw DomainError("--tol must be positive");
  if (spec.threads > 1024) throw DomainError("--threads must be <= 1024");
  if (!(spec.delta > 0.0) || !std::isfinite(spec.delta)) throw DomainError("--delta must be positive");
  if (spec.seeds && *spec.seeds < 1) throw DomainError("--seeds must be >= 1");
  if (spec.atoms && *spec.atoms < 1) throw DomainError("--atoms must be >= 1");
  if (!(spec.omega_scale > 0.0) || !std::isfinite(spec.omega_scale)) throw DomainError("omega scale must be positive");
  if (!std::isfinite(spec.psi_cubic)) throw DomainError("psi cubic coefficient must be finite");
  for (const auto& f : spec.families)
    if (!detail::contains(family_names(), f)) throw DomainError("unknown family: " + f);
  if (!spec.measure_path.empty()) {
    std::ifstream probe(spec.measure_path);
    if (!probe) throw DataError("cannot open measure file: " + spec.measure_path);
  }

  const std::string& s = spec.scenario;
  if (s == "position") {
    for (double p : spec.p_list) conclab::detail::check_p(p);
  } else if (s == "thm5" || s == "moments") {
    for (double p : spec.p_list)
      if (!(p >= 1.0) || !std::isfinite(p)) throw DomainError("moment norms need finite p >= 1");
  } else if (!spec.p_list.empty()) {
    throw DomainError("--p is not used by scenario " + s);
  }
  if (s == "thm5") {
    for (const auto& f : spec.families)
      if (!is_log_concave_family(f)) throw DomainError("scenario thm5 takes families gaussian, laplace and uniform-cube");
  }
  if (s == "cube-scan" || s == "subset" || s == "identities") {
    if (!spec.measure_path.empty()) throw DomainError("--measure is not used by scenario " + s);
  }
  if (s == "subset") {
    if (spec.n_list.size() > 1) throw DomainError("subset takes a single --n");
    const int n = spec.n_list.empty() ? 10 : spec.n_list.front();
    const double planned = spec.atoms ? static_cast<double>(*spec.atoms) : std::round(std::pow(n, 2.0 + spec.delta));
    if (planned > static_cast<double>(kDefaultPairCap)) throw CapExceeded(static_cast<std::size_t>(planned), kDefaultPairCap);
  }
  if (s == "cube-scan" || s == "moments") {
    for (int n : spec.n_list)
      if (n > 100000) throw DomainError("cube dimensions are limited to 100000");
  }
  if ((s == "var" || s == "third-moment" || s == "position") && !spec.measure_path.empty() && spec.families.size() > 0)
    throw DomainError("give either --measure or --family, not both");
}

// ---------------------------------------------------------------------------
// Scenarios

namespace detail {

inline double cube_n2_variance() { return 0.125 + 0.25 / pi - 2.0 / (pi * pi); }

inline RunReport run_cube_scan(const ExperimentSpec& spec) {
  RunReport r;
  r.columns = {"n", "var_F", "n2_var_F", "n3_var_F", "beta", "beta_target", "delta", "mean_F", "grad_s_sq"};
  const std::vector<int> ns =
      spec.n_list.empty() ? std::vector<int>{1, 2, 4, 8, 16, 32, 64, 128, 256, 512} : spec.n_list;
  const double anchor = 16.0 * 16.0 * 16.0 * cube_stats_exact(16).var_F;
  r.extras["n3_var_F_at_16"] = anchor;

  double worst_beta = 0.0, worst_sixth = 0.0, lo = INFINITY, hi = 0.0;
  bool scaled = false;
  for (int n : ns) {
    const FStats s = cube_stats_exact(n);
    const CubeMomentSums m = cube_moment_sums(n);
    const double nd = n;
    const double beta = m.fourth / (nd * nd);
    const double target = 3.0 - 2.0 / nd;
    const double sixth = nd + 15.0 * nd * (nd - 1) + 15.0 * nd * (nd - 1) * (nd - 2);
    worst_beta = std::max(worst_beta, std::abs(beta - target) / target);
    worst_sixth = std::max(worst_sixth, std::abs(m.sixth - sixth) / sixth);
    const double n3 = nd * nd * nd * s.var_F;
    r.add_row({std::int64_t{n}, s.var_F, nd * nd * s.var_F, n3, beta, target, m.sixth / (nd * nd * nd), s.mean_F,
               s.grad_s_sq});
    if (n >= 4) {
      scaled = true;
      lo = std::min(lo, n3 / anchor);
      hi = std::max(hi, n3 / anchor);
    }
    if (n == 1) r.expect("n1_zero_variance", s.var_F <= 1e-15, s.var_F, 1e-15);
    if (n == 2) {
      const double exact = cube_n2_variance();
      const double rel = std::abs(s.var_F - exact) / exact;
      r.expect("n2_closed_form", rel <= 1e-12, rel, 1e-12, "1/8 + 1/(4 pi) - 2/pi^2");
    }
  }
  r.expect("beta_exact", worst_beta <= 1e-12, worst_beta, 1e-12, "max relative error against 3 - 2/n");
  r.expect("sixth_moment_exact", worst_sixth <= 1e-12, worst_sixth, 1e-12,
           "max relative error against n + 15n(n-1) + 15n(n-1)(n-2)");
  if (scaled) {
    r.expect("n3_scaling_upper", hi <= 2.0, hi, 2.0, "max n^3 var_F relative to n = 16");
    r.expect("n3_scaling_lower", lo >= 0.5, lo, 0.5, "min n^3 var_F relative to n = 16");
  }
  return r;
}

inline RunReport run_subset(const ExperimentSpec& spec) {
  RunReport r;
  r.columns = {"role",  "n",      "replicate", "atoms", "var_F", "n2_var_F",          "alpha",
               "beta",  "kappa",  "lambda",    "zeta",  "below_calibrated", "regular"};
  const int n = spec.n_list.empty() ? 10 : spec.n_list.front();
  const int n_cal = 6;
  const std::size_t seeds = spec.seeds.value_or(20);
  const auto atoms = spec.atoms.value_or(static_cast<std::size_t>(std::llround(std::pow(n, 2.0 + spec.delta))));
  const auto atoms_cal = static_cast<std::size_t>(std::llround(std::pow(n_cal, 2.0 + spec.delta)));

  struct Outcome {
    double var = 0.0;
    MomentReport m;
  };
  auto replicate = [&](int dim, std::size_t count, std::uint64_t stream) {
    CounterRng rng(spec.seed, StreamDomain::sampler, stream);
    const DiscreteMeasure mu = sample_cube_subset(dim, count, rng);
    return Outcome{stats_exact(mu).var_F, prop6_report(mu)};
  };

  double constant = 0.0;
  std::vector<Outcome> cal;
  for (std::size_t i = 0; i < seeds; ++i) {
    cal.push_back(replicate(n_cal, atoms_cal, (1ull << 32) + i));
    constant = std::max(constant, n_cal * n_cal * cal.back().var);
  }
  auto regular = [](const MomentReport& m) {
    return m.kappa <= 1.0 && m.lambda <= 1.0 && std::abs(m.zeta - 1.0) <= 1e-12;
  };
  for (std::size_t i = 0; i < seeds; ++i) {
    const auto& o = cal[i];
    r.add_row({std::string("calibration"), std::int64_t{n_cal}, as_int(i), as_int(atoms_cal), o.var,
               n_cal * n_cal * o.var, o.m.alpha, o.m.beta, o.m.kappa, o.m.lambda, o.m.zeta, Cell{}, regular(o.m)});
  }

  std::size_t below = 0, good = 0;
  double max_beta = 0.0;
  for (std::size_t i = 0; i < seeds; ++i) {
    const Outcome o = replicate(n, atoms, i);
    const double scaled = static_cast<double>(n) * n * o.var;
    const bool ok = scaled <= constant;
    below += ok;
    good += regular(o.m);
    max_beta = std::max(max_beta, o.m.beta);
    r.add_row({std::string("run"), std::int64_t{n}, as_int(i), as_int(atoms), o.var, scaled, o.m.alpha, o.m.beta,
               o.m.kappa, o.m.lambda, o.m.zeta, ok, regular(o.m)});
  }
  const double need = 0.95;
  const double frac = static_cast<double>(below) / static_cast<double>(seeds);
  const double frac6 = static_cast<double>(good) / static_cast<double>(seeds);
  r.expect("calibrated_variance_bound", frac >= need, frac, need, "fraction of replicates with n^2 var_F <= constant");
  r.expect("kappa_lambda_zeta", frac6 >= need, frac6, need, "fraction with kappa, lambda <= 1 and zeta = 1");
  if (atoms == 1) {
    r.assertions.push_back({"single_atom_beta", Status::warn, max_beta, static_cast<double>(n) * n,
                            "a single atom makes beta = n^2"});
  }
  r.extras["calibration_n"] = n_cal;
  r.extras["calibration_atoms"] = atoms_cal;
  r.extras["calibrated_constant"] = constant;
  r.extras["atoms"] = atoms;
  r.extras["delta"] = spec.delta;
  return r;
}

inline RunReport run_logconcave_scan(const ExperimentSpec& spec) {
  RunReport r;
  const std::vector<std::string> families =
      spec.families.empty() ? std::vector<std::string>{"gaussian", "laplace", "uniform-cube"} : spec.families;
  const std::vector<int> ns = spec.n_list.empty() ? std::vector<int>{8, 16, 32, 64} : spec.n_list;
  const std::vector<double> ps = spec.p_list.empty() ? std::vector<double>{1, 2, 3, 4} : spec.p_list;
  const std::size_t m = spec.samples.value_or(100000);

  r.columns = {"family", "n", "atoms", "iterations", "position_residual", "mean_F", "mean_oracle", "mean_se", "l2_norm"};
  for (double p : ps) r.columns.push_back("n_lp_over_p_" + p_label(p));
  for (auto c : {"psi1", "n_psi1", "psi1_uncentered"}) r.columns.push_back(c);

  for (const auto& fam : families) {
    std::vector<double> xs, l2s, npsi;
    for (int n : ns) {
      const auto atoms = spec.atoms.value_or(static_cast<std::size_t>(4) * n * n);
      const auto stream = stream_id(family_index(fam), n, 0);
      CounterRng rng(spec.seed, StreamDomain::sampler, stream);
      const DiscreteMeasure raw = make_family(fam, n, atoms, rng);
      const PositionResult pos = lp_isotropic_position(raw, 1.0, {.tol = spec.tol.value_or(1e-8)});
      const DiscreteMeasure nu = positioned_measure(raw, pos);
      const FSamples fs = sample_F(nu, m, derive_seed(spec.seed, stream));
      const SampleMean mean = sample_mean(fs.f);
      const double oracle = kernel_plus1(n) * weighted_sum(nu.weights(), nu.norms());
      const double l2 = central_moment_norms(fs.f, {2.0}).front().value;
      const auto norms = central_moment_norms(fs.f, ps);
      const OrliczEstimate o = orlicz_norm(fs.f, 1);

      std::vector<Cell> row = {fam,         std::int64_t{n}, as_int(atoms), as_int(pos.iterations), pos.residual,
                               mean.mean,   oracle,          mean.std_err,  l2};
      for (const auto& nm : norms) row.push_back(n * nm.value / nm.p);
      row.push_back(o.value);
      row.push_back(n * o.value);
      row.push_back(o.uncentered_value);
      r.add_row(std::move(row));

      xs.push_back(n);
      l2s.push_back(l2);
      npsi.push_back(n * o.value);
      r.expect_agree("mean_oracle_" + fam + "_n" + std::to_string(n), mean.mean, oracle, mean.std_err, 0.0,
                     "MC mean of F against kernel_plus1(n) E|X|");
    }
    if (xs.size() >= 2) {
      const double slope = slope_loglog(xs, l2s);
      r.expect("l2_slope_" + fam, slope >= -1.25 && slope <= -0.75, slope, -1.0,
               "log-log slope of ||F - EF||_2 against n, within [-1.25, -0.75]");
      const double worst = *std::max_element(npsi.begin(), npsi.end()) / npsi.front();
      r.expect("n_psi1_bounded_" + fam, worst <= 2.0, worst, 2.0, "max n psi_1 relative to the first dimension");
    }
  }
  r.extras["mc_samples"] = m;
  return r;
}

inline void identity_row(RunReport& r, const std::string& check, int n, double value, double target, double se,
                         bool pass, const std::string& detail = {}) {
  r.add_row({check, std::int64_t{n}, value, target, se, std::string(pass ? "pass" : "fail")});
  r.expect(check, pass, value, target, detail);
}

inline RunReport run_identities(const ExperimentSpec& spec) {
  RunReport r;
  r.columns = {"check", "n", "value", "target", "std_err", "status"};
  const std::size_t m = spec.samples.value_or(100000);
  const std::size_t m_kernel = spec.samples.value_or(1000000);
  const std::uint64_t seed = spec.seed;

  for (int n : {3, 8, 32}) {
    for (const auto& k : kernel_mc_check(n, 50, m_kernel, derive_seed(seed, 10 + n)))
      identity_row(r, k.kernel + "_n" + std::to_string(n), n, k.max_z, 4.0, 0.0, k.max_z <= 4.0,
                   "max z-score over 50 pairs");
  }

  CounterRng rng(seed, StreamDomain::calculus, 0);
  auto gaussian = [&](int n) {
    std::normal_distribution<double> g;
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = g(rng);
    return v;
  };
  {
    const auto f = HomogeneousTestFunction::bilinear(gaussian(6), gaussian(6));
    const auto c = check_second_order_identity(f, m, derive_seed(seed, 1));
    identity_row(r, "second_order_identity_bilinear", 6, c.lhs, c.rhs, c.std_err, c.pass);
  }
  {
    const auto f = HomogeneousTestFunction::linear(gaussian(5));
    const auto c = check_second_order_identity(f, m, derive_seed(seed, 2));
    identity_row(r, "second_order_identity_linear", 5, c.lhs, c.rhs, c.std_err, c.pass);
  }
  {
    const auto f = HomogeneousTestFunction::quadratic(gaussian(5));
    const auto c = second_order_poincare_check(f, m, derive_seed(seed, 3));
    identity_row(r, "second_order_poincare_quadratic", 5, c.variance, c.bound, c.std_err, c.pass);
  }
  {
    const auto l = check_lemma_rand(10, m, derive_seed(seed, 4), spec.omega_scale);
    identity_row(r, "pair_reweighting_normalization", 10, l.normalization, 1.0, l.normalization_se,
                 l.normalization_pass && l.normalization_se_pass, "within 1% and within 4 standard errors");
    identity_row(r, "pair_reweighting_second_moment", 10, l.second_moment, l.second_moment_target, l.second_moment_se,
                 l.moment_pass);
  }
  {
    double worst = 0.0;
    for (int n = 3; n <= 64; ++n) worst = std::max(worst, std::abs(omega_quadrature_normalization(n) - 1.0));
    identity_row(r, "omega_quadrature", 64, worst, 1e-10, 0.0, worst <= 1e-10, "n = 3..64");
  }
  {
    const double v = phi_quartic_remainder();
    identity_row(r, "phi_quartic_remainder", 0, v, 0.02, 0.0, v <= 0.02, "sup |phi - quartic| / t^6 on |t| <= 0.5");
  }
  {
    const double v = psi_cubic_remainder(spec.psi_cubic);
    identity_row(r, "psi_cubic_remainder", 0, v, 0.1, 0.0, v <= 0.1, "sup |psi - cubic| / |t|^5 on |t| <= 0.5");
  }
  {
    const double v = measured_psi_cubic_coefficient();
    identity_row(r, "psi_cubic_coefficient", 0, v, spec.psi_cubic, 0.0, std::abs(v - spec.psi_cubic) <= 1e-6,
                 "Richardson third derivative / 6");
  }
  {
    const double v = cn1_series_error_scaled();
    identity_row(r, "cn1_inverse_square_series", 4096, v, 0.1, 0.0, v <= 0.1, "max n^4 |C^-2 - series|, n = 8..4096");
  }
  r.extras["omega_scale"] = spec.omega_scale;
  r.extras["psi_cubic"] = spec.psi_cubic;
  return r;
}

struct Source {
  std::string label;
  std::string family;
  DiscreteMeasure mu;
};

/// Measures named by --measure or by families x dimensions.
inline std::vector<Source> sources(const ExperimentSpec& spec, const std::string& default_family, int default_n,
                                   std::size_t default_atoms_per_n2) {
  std::vector<Source> out;
  if (!spec.measure_path.empty()) {
    out.push_back({spec.measure_path, "file", load_measure(spec.measure_path)});
    return out;
  }
  const std::vector<std::string> families =
      spec.families.empty() ? std::vector<std::string>{default_family} : spec.families;
  const std::vector<int> ns = spec.n_list.empty() ? std::vector<int>{default_n} : spec.n_list;
  for (const auto& fam : families) {
    for (int n : ns) {
      const auto atoms = spec.atoms.value_or(default_atoms_per_n2 * n * n);
      CounterRng rng(spec.seed, StreamDomain::sampler, stream_id(family_index(fam), n, 0));
      out.push_back({fam, fam, make_family(fam, n, atoms, rng)});
    }
  }
  return out;
}

inline RunReport run_third_moment(const ExperimentSpec& spec) {
  RunReport r;
  r.columns = {"source", "n", "atoms", "exact", "mc", "mc_se", "symmetric"};
  const std::size_t m = spec.samples.value_or(100000);
  for (const auto& src : sources(spec, "cube", 8, 4)) {
    const int n = src.mu.dimension();
    const std::string tag = src.family + "_n" + std::to_string(n);
    const double exact = third_moment_variance_exact(src.mu);
    const SampleMean mc = third_moment_variance_mc(src.mu, m, derive_seed(spec.seed, static_cast<std::uint64_t>(n)));
    const bool sym = is_symmetric(src.mu);
    r.add_row({src.label, std::int64_t{n}, as_int(src.mu.size()), exact, mc.mean, mc.std_err, sym});
    r.expect_agree("mc_agreement_" + tag, mc.mean, exact, mc.std_err, 1e-12);
    if (sym) r.expect("symmetric_zero_" + tag, std::abs(exact) <= 1e-12, exact, 1e-12);
    if (src.family == "point-mass") {
      const double target = static_cast<double>(n) * n * 15.0 / (n * (n + 2.0) * (n + 4.0));
      const double rel = std::abs(exact - target) / target;
      r.expect("point_mass_closed_form_" + tag, rel <= 1e-12, rel, 1e-12, "n^2 15 / (n(n+2)(n+4))");
    }
    if (src.family == "shifted-cube") r.expect("shifted_positive_" + tag, exact > 0.0, exact, 0.0);
  }
  return r;
}

inline RunReport run_moments(const ExperimentSpec& spec) {
  RunReport r;
  r.columns = {"family", "n",     "replicate", "atoms",  "cov1_residual", "alpha",      "beta",      "gamma",
               "delta",  "kappa", "lambda",    "zeta",   "var_F",         "beta_bound_ratio", "delta_bound_ratio"};
  const std::vector<std::string> families =
      spec.families.empty() ? std::vector<std::string>{"cube", "gaussian", "laplace", "uniform-cube", "cube-subset"}
                            : spec.families;
  const std::vector<int> ns = spec.n_list.empty() ? std::vector<int>{16, 24} : spec.n_list;
  const std::size_t seeds = spec.seeds.value_or(3);
  const double tol = spec.tol.value_or(1e-8);

  struct Params {
    MomentReport m;
    double var = 0.0;
    double residual = 0.0;
  };
  auto cube_params = [](int n) {
    const CubeMomentSums s = cube_moment_sums(n);
    const double nd = n;
    Params p;
    p.m.alpha = 1.0;
    p.m.beta = s.fourth / (nd * nd);
    p.m.delta = s.sixth / (nd * nd * nd);
    p.m.gamma_excess = nd * (p.m.beta - 3.0);
    p.m.zeta = 1.0;
    p.var = cube_stats_exact(n).var_F;
    return p;
  };
  auto beta_bound = [](const Params& p, int n) { return p.var * n * n / ((1.0 + p.m.beta) * p.m.alpha * p.m.alpha); };
  // gamma enters only through beta <= 3 + gamma/n, so a negative excess is 0.
  auto delta_bound = [](const Params& p, int n) {
    const double gamma = std::max(p.m.gamma_excess, 0.0);
    return p.var * n * n * n / ((1.0 + gamma + p.m.delta) * p.m.alpha * p.m.alpha);
  };
  const Params anchor = cube_params(8);
  const double c1 = beta_bound(anchor, 8), c2 = delta_bound(anchor, 8);
  r.extras["calibration"] = {{"family", "cube"}, {"n", 8}, {"beta_bound_constant", c1}, {"delta_bound_constant", c2}};

  for (const auto& fam : families) {
    double worst1 = 0.0, worst2 = 0.0;
    std::size_t scalar_rows = 0;
    const bool cube = fam == "cube";
    for (int n : ns) {
      const std::size_t reps = (cube || fam == "cross-polytope") ? 1 : seeds;
      for (std::size_t rep = 0; rep < reps; ++rep) {
        Params p;
        std::size_t atoms = 0;
        if (cube) {
          p = cube_params(n);
          atoms = n < 63 ? (std::size_t{1} << n) : 0;
        } else {
          atoms = spec.atoms.value_or(static_cast<std::size_t>(10) * n * n);
          CounterRng rng(spec.seed, StreamDomain::sampler, stream_id(family_index(fam), n, rep));
          DiscreteMeasure mu = make_family(fam, n, atoms, rng);
          atoms = mu.size();
          if (fam != "cross-polytope" && fam != "point-mass") mu = positioned_measure(mu, lp_isotropic_position(mu, 1.0));
          p.m = prop6_report(mu);
          p.var = stats_exact(mu).var_F;
          p.residual = is_lp_isotropic(mu, 1.0, tol).residual;
        }
        const bool scalar = p.residual <= tol;
        const double r1 = beta_bound(p, n) / c1;
        const Cell r2 = cube ? Cell{delta_bound(p, n) / c2} : Cell{};
        if (scalar) {
          ++scalar_rows;
          worst1 = std::max(worst1, r1);
          if (cube) worst2 = std::max(worst2, delta_bound(p, n) / c2);
        }
        r.add_row({fam, std::int64_t{n}, as_int(rep), as_int(atoms), p.residual, p.m.alpha, p.m.beta, p.m.gamma_excess,
                   p.m.delta, p.m.kappa, p.m.lambda, p.m.zeta, p.var, r1, r2});
      }
    }
    if (scalar_rows > 0) {
      r.expect("beta_bound_" + fam, worst1 <= 1.0, worst1, 1.0,
               "max var_F n^2 / ((1 + beta) alpha^2) over the cube-calibrated constant");
      if (cube)
        r.expect("delta_bound_cube", worst2 <= 1.0, worst2, 1.0,
                 "max var_F n^3 / ((1 + gamma + delta) alpha^2) over the cube-calibrated constant");
    }
  }
  return r;
}

inline RunReport run_position(const ExperimentSpec& spec) {
  RunReport r;
  r.columns = {"source",     "n",          "p",         "atoms",           "converged",      "iterations",
               "residual",   "raw_residual", "dilation", "objective_first", "objective_last", "monotone",
               "uniqueness", "perturbation_gap", "t_norm", "t_inv_norm",    "sqrt_n_z1"};
  const std::vector<double> ps = spec.p_list.empty() ? std::vector<double>{1, 2, 3} : spec.p_list;
  const double tol = spec.tol.value_or(1e-8);
  std::uint64_t k = 0;
  for (const auto& src : sources(spec, "gaussian", 8, 50)) {
    const int n = src.mu.dimension();
    DiscreteMeasure mu = src.mu;
    if (src.family != "file") {
      CounterRng rng(spec.seed, StreamDomain::transform, k++);
      mu = mu.transformed(random_gl(n, rng));
    }
    for (double p : ps) {
      const std::string tag = src.family + "_n" + std::to_string(n) + "_p" + p_label(p);
      const PositionOptions opt{.tol = tol, .throw_on_failure = false};
      const PositionResult pos = lp_isotropic_position(mu, p, opt);
      const IsotropyCheck iso = is_lp_isotropic(positioned_measure(mu, pos), p, tol);
      bool monotone = true;
      for (std::size_t i = 1; i < pos.objective_trace.size(); ++i)
        monotone = monotone && pos.objective_trace[i] <= pos.objective_trace[i - 1] * (1 + 1e-12);
      const double uniq = uniqueness_check(mu, p, 3, derive_seed(spec.seed, k), {.tol = std::min(tol, 1e-10)});
      const double gap = perturbation_gap(mu, pos, 20, 1e-3, derive_seed(spec.seed, k + 1000));
      std::vector<Cell> row = {src.label,        std::int64_t{n},   p,        as_int(mu.size()),
                               pos.converged,    as_int(pos.iterations), pos.residual, iso.raw_residual,
                               pos.dilation,     pos.objective_trace.front(), pos.objective_trace.back(), monotone,
                               uniq,             gap};
      const bool proximity = p == 1.0 && is_log_concave_family(src.family);
      if (proximity) {
        const ProximityReport pr = proximity_report(mu, opt);
        row.insert(row.end(), {pr.t_norm, pr.t_inv_norm, pr.sqrt_n_z1});
        r.expect("proximity_" + tag, pr.t_norm <= 4.0 && pr.t_inv_norm <= 4.0, std::max(pr.t_norm, pr.t_inv_norm), 4.0);
        r.expect("sqrt_n_z1_" + tag, pr.sqrt_n_z1 >= 0.5 && pr.sqrt_n_z1 <= 2.0, pr.sqrt_n_z1, 2.0, "within [0.5, 2]");
      } else {
        row.insert(row.end(), {Cell{}, Cell{}, Cell{}});
      }
      r.add_row(std::move(row));
      r.expect("converged_" + tag, pos.converged && pos.residual <= tol, pos.residual, tol);
      r.expect("monotone_" + tag, monotone, pos.objective_trace.back(), pos.objective_trace.front());
      r.expect("unique_" + tag, uniq <= 1e-5, uniq, 1e-5);
      r.expect("perturbation_" + tag, gap >= -1e-6, gap, -1e-6, "min relative objective change over perturbations");
    }
  }
  return r;
}

inline RunReport run_var(const ExperimentSpec& spec) {
  RunReport r;
  r.columns = {"source",    "n",         "atoms",      "method",   "mean_F",   "var_F",
               "grad_s_sq", "grad_sq",   "mc_mean_F",  "mc_var_F", "mc_var_se", "poincare_ratio"};
  const std::size_t m = spec.samples.value_or(100000);
  for (const auto& src : sources(spec, "gaussian", 8, 20)) {
    const int n = src.mu.dimension();
    const std::string tag = src.family + "_n" + std::to_string(n);
    const FStats mc = stats_mc(src.mu, m, derive_seed(spec.seed, static_cast<std::uint64_t>(n)));
    const bool exact = src.mu.size() <= kDefaultPairCap;
    const FStats s = exact ? stats_exact(src.mu) : mc;
    const double ratio = n > 1 && s.grad_s_sq > 0 ? s.var_F * (n - 1) / s.grad_s_sq : 0.0;
    r.add_row({src.label, std::int64_t{n}, as_int(src.mu.size()), s.method, s.mean_F, s.var_F, s.grad_s_sq, s.grad_sq,
               mc.mean_F, mc.var_F, mc.mc_std_err->var_F, ratio});
    if (exact) {
      r.expect_agree("mc_mean_" + tag, mc.mean_F, s.mean_F, mc.mc_std_err->mean_F, 1e-12);
      r.expect_agree("mc_var_" + tag, mc.var_F, s.var_F, mc.mc_std_err->var_F, 1e-12);
      r.expect("poincare_" + tag, ratio <= 1.0 + 1e-12, ratio, 1.0, "var_F (n - 1) / E|grad_S F|^2");
    } else {
      r.expect_below("poincare_" + tag, ratio, 1.0, 0.0);
    }
  }
  return r;
}

}  // namespace detail

/// Validates the spec, runs the scenario and stamps seed, version and
/// wall-clock time.
inline RunReport run(const ExperimentSpec& spec) {
  validate(spec);
  const unsigned previous = conclab::detail::thread_limit().load();
  set_thread_count(spec.threads);
  const auto start = std::chrono::steady_clock::now();
  RunReport r;
  try {
    const std::string& s = spec.scenario;
    if (s == "cube-scan") r = detail::run_cube_scan(spec);
    else if (s == "subset") r = detail::run_subset(spec);
    else if (s == "thm5") r = detail::run_logconcave_scan(spec);
    else if (s == "identities") r = detail::run_identities(spec);
    else if (s == "third-moment") r = detail::run_third_moment(spec);
    else if (s == "moments") r = detail::run_moments(spec);
    else if (s == "position") r = detail::run_position(spec);
    else r = detail::run_var(spec);
  } catch (...) {
    set_thread_count(previous);
    throw;
  }
  set_thread_count(previous);
  r.scenario = spec.scenario;
  r.seed = spec.seed;
  r.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace conclab::lab
