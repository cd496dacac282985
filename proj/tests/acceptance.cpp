// Acceptance suite: one line per criterion, nonzero exit if any fails.

#include "conclab/lab.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace conclab;
using lab::ExperimentSpec;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double rel(double a, double b) { return b == 0.0 ? std::abs(a) : std::abs(a - b) / std::abs(b); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string failures(const RunReport& r) {
  std::string out;
  for (const auto& a : r.assertions)
    if (a.status == Status::fail) out += (out.empty() ? "" : ", ") + a.name + "=" + format_number(a.value);
  return out.empty() ? "none" : out;
}

double find_value(const RunReport& r, const std::string& name) {
  for (const auto& a : r.assertions)
    if (a.name == name) return a.value;
  return std::nan("");
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome kernel_exactness() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string where;
  for (int n : {3, 8, 32}) {
    for (const auto& k : lab::kernel_mc_check(n, 50, 1000000, derive_seed(2024, n))) {
      if (k.max_z > worst) {
        worst = k.max_z;
        where = k.kernel + " n=" + std::to_string(n);
      }
    }
  }
  const double secs = elapsed(t0);
  return {worst <= 4.0 && secs <= 60.0,
          "max z " + fmt("%.2f", worst) + " (" + where + "), " + fmt("%.1f", secs) + " s, limits 4 SE and 60 s"};
}

Outcome cube_moments() {
  double worst_beta = 0.0, worst_sixth = 0.0, worst_hamming = 0.0;
  for (int n = 2; n <= 16; ++n) {
    const DiscreteMeasure c = cube_measure(n);
    const double nd = n;
    const double sixth = nd + 15 * nd * (nd - 1) + 15 * nd * (nd - 1) * (nd - 2);
    worst_beta = std::max(worst_beta, rel(moment_beta(c), 3.0 - 2.0 / nd));
    // alpha = 1 on the cube, so delta n^3 is the sixth moment of a sign sum
    worst_sixth = std::max(worst_sixth, rel(moment_delta(c) * nd * nd * nd, sixth));
    worst_hamming = std::max(worst_hamming, rel(cube_moment_sums(n).sixth, sixth));
  }
  const bool ok = worst_beta <= 1e-12 && worst_sixth <= 1e-12 && worst_hamming <= 1e-12;
  return {ok, "max rel err beta " + fmt("%.2e", worst_beta) + ", sixth (pairs) " + fmt("%.2e", worst_sixth) +
                  ", sixth (Hamming) " + fmt("%.2e", worst_hamming) + ", n = 2..16, limit 1e-12"};
}

Outcome hamming_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  int worst_n = 0;
  for (int n = 1; n <= 12; ++n) {
    const FStats h = cube_stats_exact(n);
    const FStats b = stats_exact(cube_measure(n));
    double e = std::max({rel(h.mean_F, b.mean_F), rel(h.second_moment_F, b.second_moment_F), rel(h.grad_sq, b.grad_sq),
                         rel(h.grad_s_sq, b.grad_s_sq)});
    e = std::max(e, b.var_F == 0.0 ? std::abs(h.var_F) / 1e-3 : rel(h.var_F, b.var_F));
    if (e > worst) {
      worst = e;
      worst_n = n;
    }
  }
  const double secs = elapsed(t0);
  return {worst <= 1e-12 && secs <= 120.0, "max rel diff " + fmt("%.2e", worst) + " at n=" + std::to_string(worst_n) +
                                               ", " + fmt("%.1f", secs) + " s, limits 1e-12 and 120 s"};
}

// Var of max(|cos|,|sin|)/2 on the circle by Gauss-Kronrod on the eight
// smooth arcs.
double circle_variance() {
  using boost::math::quadrature::gauss_kronrod;
  const auto f = [](double t) { return 0.5 * std::max(std::abs(std::cos(t)), std::abs(std::sin(t))); };
  double m1 = 0.0, m2 = 0.0;
  for (int k = 0; k < 8; ++k) {
    const double a = k * pi / 4, b = (k + 1) * pi / 4;
    m1 += gauss_kronrod<double, 61>::integrate(f, a, b, 0, 0.0);
    m2 += gauss_kronrod<double, 61>::integrate([&](double t) { return f(t) * f(t); }, a, b, 0, 0.0);
  }
  m1 /= 2 * pi;
  m2 /= 2 * pi;
  return m2 - m1 * m1;
}

Outcome cube_scaling() {
  ExperimentSpec s;
  s.scenario = "cube-scan";
  s.n_list = {2};
  for (int n = 4; n <= 512; ++n) s.n_list.push_back(n);
  const RunReport r = lab::run(s);
  const double closed = 0.125 + 0.25 / pi - 2.0 / (pi * pi);
  const double var2 = std::get<double>(r.rows[0][1]);
  const double quad = circle_variance();
  double lo = 1e300, hi = 0.0;
  const double anchor = r.extras["n3_var_F_at_16"].get<double>();
  for (std::size_t i = 1; i < r.rows.size(); ++i) {
    const double v = std::get<double>(r.rows[i][3]) / anchor;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const bool ok = r.ok() && lo >= 0.5 && hi <= 2.0 && rel(var2, closed) <= 1e-12 && rel(var2, quad) <= 1e-12;
  return {ok, "n^3 Var / (n=16 value) in [" + fmt("%.3f", lo) + ", " + fmt("%.3f", hi) + "] over n = 4..512; n=2 Var " +
                  fmt("%.12e", var2) + ", rel err vs closed form " + fmt("%.1e", rel(var2, closed)) + ", vs quadrature " +
                  fmt("%.1e", rel(var2, quad))};
}

Outcome inequality_harness() {
  ExperimentSpec cube;
  cube.scenario = "moments";
  cube.families = {"cube"};
  cube.n_list = {8, 12, 16, 24, 32, 48, 64, 128, 256, 512};
  const RunReport rc = lab::run(cube);
  ExperimentSpec sampled;
  sampled.scenario = "moments";
  sampled.families = {"gaussian", "laplace", "uniform-cube", "cube-subset"};
  sampled.n_list = {16, 24};
  sampled.seeds = 3;
  const RunReport rs = lab::run(sampled);
  double worst = 0.0;
  for (const auto* r : {&rc, &rs})
    for (const auto& a : r->assertions) worst = std::max(worst, a.value);
  return {rc.ok() && rs.ok(), "C calibrated on cube n=8; worst bound ratio " + fmt("%.3f", worst) + " over " +
                                  std::to_string(rc.rows.size() + rs.rows.size()) +
                                  " rows; violations: " + failures(rc) + " / " + failures(rs)};
}

Outcome subset_desk_scale() {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentSpec s;
  s.scenario = "subset";
  s.n_list = {10};
  s.delta = 0.5;
  s.seeds = 20;
  const RunReport r = lab::run(s);
  const double secs = elapsed(t0);
  return {r.ok() && secs <= 120.0, "N=" + std::to_string(r.extras["atoms"].get<std::size_t>()) + ", below constant " +
                                       format_number(find_value(r, "calibrated_variance_bound")) + ", kappa/lambda/zeta columns " +
                                       format_number(find_value(r, "kappa_lambda_zeta")) + " (need 0.95), " +
                                       fmt("%.1f", secs) + " s"};
}

Outcome position_optimizer() {
  ExperimentSpec cube;
  cube.scenario = "position";
  cube.families = {"cube"};
  cube.n_list = {8, 12};
  cube.p_list = {1, 2, 3};
  ExperimentSpec gauss = cube;
  gauss.families = {"gaussian"};
  gauss.n_list = {16, 32};
  gauss.atoms = 8000;
  const RunReport a = lab::run(cube);
  const RunReport b = lab::run(gauss);
  double worst_res = 0.0, worst_uniq = 0.0, worst_gap = 1.0;
  std::int64_t worst_it = 0;
  for (const auto* r : {&a, &b}) {
    for (const auto& row : r->rows) {
      worst_it = std::max(worst_it, std::get<std::int64_t>(row[5]));
      worst_res = std::max(worst_res, std::get<double>(row[6]));
      worst_uniq = std::max(worst_uniq, std::get<double>(row[12]));
      worst_gap = std::min(worst_gap, std::get<double>(row[13]));
    }
  }
  const bool ok = a.ok() && b.ok() && worst_it <= 500;
  return {ok, "max residual " + fmt("%.1e", worst_res) + ", max iterations " + std::to_string(worst_it) +
                  ", uniqueness " + fmt("%.1e", worst_uniq) + ", min perturbation gain " + fmt("%.1e", worst_gap) +
                  "; failures: " + failures(a) + " / " + failures(b)};
}

Outcome proximity() {
  double t_max = 0.0, z_lo = 1e300, z_hi = 0.0;
  bool ok = true;
  const std::vector<std::string> families = {"gaussian", "laplace", "uniform-cube"};
  for (std::size_t f = 0; f < families.size(); ++f) {
    for (int n : {8, 16, 32}) {
      for (std::uint64_t rep = 0; rep < 2; ++rep) {
        CounterRng rng(77, StreamDomain::sampler, lab::detail::stream_id(f, n, rep));
        const auto mu = lab::detail::make_family(families[f], n, static_cast<std::size_t>(50) * n * n, rng);
        const ProximityReport p = proximity_report(mu);
        t_max = std::max({t_max, p.t_norm, p.t_inv_norm});
        z_lo = std::min(z_lo, p.sqrt_n_z1);
        z_hi = std::max(z_hi, p.sqrt_n_z1);
        ok = ok && p.t_norm <= 4 && p.t_inv_norm <= 4 && p.sqrt_n_z1 >= 0.5 && p.sqrt_n_z1 <= 2;
      }
    }
  }
  return {ok, "max(||T||, ||T^-1||) " + fmt("%.3f", t_max) + " (limit 4), sqrt(n) Z_1 in [" + fmt("%.3f", z_lo) + ", " +
                  fmt("%.3f", z_hi) + "] (limit [0.5, 2]), 3 families x n in {8,16,32} x 2 seeds"};
}

Outcome logconcave_scaling() {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentSpec s;
  s.scenario = "thm5";
  s.n_list = {8, 16, 32, 64};
  s.samples = 100000;
  const RunReport r = lab::run(s);
  const double secs = elapsed(t0);
  std::string slopes;
  for (const auto& a : r.assertions)
    if (a.name.rfind("l2_slope_", 0) == 0) slopes += (slopes.empty() ? "" : ", ") + fmt("%.3f", a.value);
  std::string psi;
  for (const auto& a : r.assertions)
    if (a.name.rfind("n_psi1_bounded_", 0) == 0) psi += (psi.empty() ? "" : ", ") + fmt("%.3f", a.value);
  return {r.ok() && secs <= 600.0, "slopes " + slopes + "; max n psi1 / n=8 value " + psi + "; " + fmt("%.1f", secs) +
                                       " s; failures: " + failures(r)};
}

Outcome appendix_identities() {
  ExperimentSpec s;
  s.scenario = "identities";
  s.samples = 100000;
  const RunReport r = lab::run(s);
  const double measured = measured_psi_cubic_coefficient();
  const double printed = 1.0 / (12.0 * pi);
  const bool flags_printed = psi_cubic_remainder(printed) > 0.1 && std::abs(measured - printed) > 1e-3;
  return {r.ok() && flags_printed, std::to_string(r.count(Status::pass)) + "/" + std::to_string(r.assertions.size()) +
                                       " checks pass; psi cubic coefficient measured " + fmt("%.9f", measured) +
                                       " vs 1/6, printed 1/(12 pi) = " + fmt("%.6f", printed) +
                                       (flags_printed ? " rejected" : " NOT rejected") + "; failures: " + failures(r)};
}

std::string numeric_fingerprint(const RunReport& r) {
  auto j = to_json(r);
  j.erase("wall_clock_seconds");
  return j.dump();
}

Outcome determinism() {
  std::vector<ExperimentSpec> specs;
  ExperimentSpec s;
  s.scenario = "subset";
  s.n_list = {8};
  s.seeds = 5;
  specs.push_back(s);
  s = {};
  s.scenario = "thm5";
  s.n_list = {8, 16};
  s.samples = 20000;
  specs.push_back(s);
  s = {};
  s.scenario = "identities";
  s.samples = 20000;
  specs.push_back(s);
  s = {};
  s.scenario = "position";
  s.families = {"laplace"};
  s.n_list = {6};
  specs.push_back(s);
  s = {};
  s.scenario = "var";
  s.families = {"uniform-cube"};
  s.n_list = {7};
  s.samples = 20000;
  specs.push_back(s);
  std::string differing;
  for (auto spec : specs) {
    spec.threads = 1;
    const std::string one = numeric_fingerprint(lab::run(spec));
    spec.threads = 8;
    const std::string eight = numeric_fingerprint(lab::run(spec));
    if (one != eight) differing += (differing.empty() ? "" : ", ") + spec.scenario;
  }
  return {differing.empty(), std::to_string(specs.size()) + " scenarios at 1 vs 8 threads; differing: " +
                                 (differing.empty() ? std::string("none") : differing)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"kernel exactness vs sphere Monte Carlo", kernel_exactness},
      {"exact cube moments", cube_moments},
      {"Hamming profile equals brute-force pair sum", hamming_equivalence},
      {"cube n^3 variance scaling and n = 2 anchor", cube_scaling},
      {"variance inequality harness", inequality_harness},
      {"random cube subsets at desk scale", subset_desk_scale},
      {"L^p position optimizer", position_optimizer},
      {"proximity to isotropic position", proximity},
      {"log-concave variance and psi_1 scaling", logconcave_scaling},
      {"sphere calculus identities and expansions", appendix_identities},
      {"determinism across thread counts", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2zu %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str(), elapsed(t0));
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
