#include "conclab/lab.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

using conclab::lab::ExperimentSpec;

void write_report(const conclab::RunReport& r, const std::string& format, std::ostream& out) {
  if (format == "csv")
    conclab::write_csv(out, r);
  else
    conclab::write_json(out, r);
}

// --out PATH writes PATH in the chosen format and the other format next to it.
void emit(const conclab::RunReport& r, const ExperimentSpec& spec) {
  if (spec.out.empty()) {
    write_report(r, spec.format, std::cout);
    return;
  }
  const std::filesystem::path primary(spec.out);
  if (primary.has_parent_path()) std::filesystem::create_directories(primary.parent_path());
  const std::string other = spec.format == "csv" ? "json" : "csv";
  std::filesystem::path secondary = primary;
  secondary.replace_extension(other);
  if (secondary == primary) secondary += "." + other;
  for (const auto& [path, fmt] : {std::pair{primary, spec.format}, std::pair{secondary, other}}) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw conclab::DataError("cannot write " + path.string());
    write_report(r, fmt, f);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical laboratory for the half-space functional on the sphere", "conclab"};
  ExperimentSpec spec;
  std::size_t samples = 0, seeds = 0, atoms = 0;
  double tol = 0.0;

  app.add_option("scenario", spec.scenario, "Scenario to run")
      ->required()
      ->check(CLI::IsMember(conclab::lab::scenario_names()));
  app.add_option("--n", spec.n_list, "Dimensions (comma separated)")->delimiter(',');
  app.add_option("--seed", spec.seed, "Master seed");
  auto* samples_opt = app.add_option("--samples", samples, "Monte Carlo sample count");
  app.add_option("--p", spec.p_list, "Exponents (comma separated)")->delimiter(',');
  app.add_option("--out", spec.out, "Output path; the other format is written alongside");
  app.add_option("--format", spec.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--threads", spec.threads, "Worker thread cap (0 = hardware default)");
  auto* tol_opt = app.add_option("--tol", tol, "Tolerance override");
  app.add_option("--measure", spec.measure_path, "Measure CSV (weight,x1..xn)");
  app.add_option("--family", spec.families, "Measure families (comma separated)")->delimiter(',');
  auto* seeds_opt = app.add_option("--seeds", seeds, "Replicates per configuration");
  app.add_option("--delta", spec.delta, "Subset size exponent: N = n^(2 + delta)");
  auto* atoms_opt = app.add_option("--atoms", atoms, "Atom count override for sampled measures");
  app.add_option("--omega-scale", spec.omega_scale, "Multiplier on Omega_n (identities sensitivity probe)");
  app.add_option("--psi-cubic", spec.psi_cubic, "Cubic coefficient of psi checked by identities");

  CLI11_PARSE(app, argc, argv);
  if (*samples_opt) spec.samples = samples;
  if (*seeds_opt) spec.seeds = seeds;
  if (*atoms_opt) spec.atoms = atoms;
  if (*tol_opt) spec.tol = tol;

  try {
    const conclab::RunReport r = conclab::lab::run(spec);
    emit(r, spec);
    for (const auto& a : r.assertions) {
      std::fprintf(stderr, "%-4s %s value=%s limit=%s%s%s\n", conclab::to_string(a.status), a.name.c_str(),
                   conclab::format_number(a.value).c_str(), conclab::format_number(a.limit).c_str(),
                   a.detail.empty() ? "" : "  ", a.detail.c_str());
    }
    std::fprintf(stderr, "%s: %zu pass, %zu warn, %zu fail in %.2f s\n", r.scenario.c_str(),
                 r.count(conclab::Status::pass), r.count(conclab::Status::warn), r.count(conclab::Status::fail),
                 r.wall_clock_seconds);
    return r.ok() ? 0 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
