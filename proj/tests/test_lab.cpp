#include "conclab/lab.hpp"

#include <gtest/gtest.h>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace conclab;
using lab::ExperimentSpec;

namespace {

ExperimentSpec spec_for(std::string scenario) {
  ExperimentSpec s;
  s.scenario = std::move(scenario);
  return s;
}

const Assertion* find(const RunReport& r, const std::string& name) {
  for (const auto& a : r.assertions)
    if (a.name == name) return &a;
  return nullptr;
}

// Minimal RFC 4180 reader for the round-trip check.
std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows(1);
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      rows.back().push_back(field);
      field.clear();
    } else if (c == '\r') {
    } else if (c == '\n') {
      rows.back().push_back(field);
      field.clear();
      rows.emplace_back();
    } else {
      field += c;
    }
  }
  if (rows.back().empty()) rows.pop_back();
  return rows;
}

std::string strip_clock(const RunReport& r) {
  auto j = to_json(r);
  j.erase("wall_clock_seconds");
  return j.dump();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CONCLAB_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Validation, RejectsBadSpecs) {
  EXPECT_THROW(lab::validate(spec_for("nope")), DomainError);
  auto s = spec_for("cube-scan");
  s.format = "xml";
  EXPECT_THROW(lab::validate(s), DomainError);
  s = spec_for("position");
  s.p_list = {4.0};
  EXPECT_THROW(lab::validate(s), DomainError);
  s = spec_for("thm5");
  s.families = {"cube-subset"};
  EXPECT_THROW(lab::validate(s), DomainError);
  s = spec_for("subset");
  s.n_list = {200};
  EXPECT_THROW(lab::validate(s), CapExceeded);
  s = spec_for("var");
  s.measure_path = "/nonexistent/measure.csv";
  EXPECT_THROW(lab::validate(s), DataError);
  s = spec_for("cube-scan");
  s.samples = 10;
  EXPECT_THROW(lab::validate(s), DomainError);
  s = spec_for("cube-scan");
  s.p_list = {1.0};
  EXPECT_THROW(lab::validate(s), DomainError);
  s = spec_for("identities");
  s.omega_scale = 0.0;
  EXPECT_THROW(lab::validate(s), DomainError);
  EXPECT_NO_THROW(lab::validate(spec_for("cube-scan")));
}

TEST(Report, CsvQuoting) {
  EXPECT_EQ(csv_field("plain"), "plain");
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(csv_field("two\nlines"), "\"two\nlines\"");
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(std::numeric_limits<double>::infinity()), "inf");
}

TEST(Report, RowWidthChecked) {
  RunReport r;
  r.columns = {"a", "b"};
  EXPECT_THROW(r.add_row({1.0}), Error);
}

TEST(Report, StatisticalPolicy) {
  RunReport r;
  EXPECT_EQ(r.expect_below("a", 1.0, 2.0, 0.1).status, Status::pass);
  EXPECT_EQ(r.expect_below("b", 2.3, 2.0, 0.1).status, Status::warn);
  EXPECT_EQ(r.expect_below("c", 2.5, 2.0, 0.1).status, Status::fail);
  EXPECT_EQ(r.expect_agree("d", 1.0, 1.3, 0.1).status, Status::pass);
  EXPECT_EQ(r.expect_agree("e", 1.0, 1.5, 0.1).status, Status::fail);
  EXPECT_FALSE(r.ok());
  EXPECT_EQ(r.count(Status::warn), 1u);
}

TEST(Report, JsonAndCsvAgreeDigitForDigit) {
  auto s = spec_for("cube-scan");
  s.n_list = {1, 2, 3, 5, 16, 100};
  const RunReport r = lab::run(s);
  std::ostringstream csv, json;
  write_csv(csv, r);
  write_json(json, r);
  const auto table = parse_csv(csv.str());
  const auto j = nlohmann::json::parse(json.str());
  ASSERT_EQ(table.size(), r.rows.size() + 1);
  ASSERT_EQ(table[0], r.columns);
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    for (std::size_t c = 0; c < r.columns.size(); ++c) {
      const auto& jv = j["rows"][i][r.columns[c]];
      const std::string& text = table[i + 1][c];
      ASSERT_TRUE(jv.is_number()) << r.columns[c];
      double from_csv = 0;
      std::from_chars(text.data(), text.data() + text.size(), from_csv);
      EXPECT_EQ(from_csv, jv.get<double>()) << r.columns[c] << " row " << i;
      EXPECT_EQ(text, format_number(jv.get<double>())) << r.columns[c];
    }
  }
}

TEST(Report, DeterministicAcrossThreadCounts) {
  auto s = spec_for("subset");
  s.n_list = {8};
  s.seeds = 3;
  s.threads = 1;
  const auto one = lab::run(s);
  s.threads = 4;
  const auto four = lab::run(s);
  EXPECT_EQ(strip_clock(one), strip_clock(four));

  auto v = spec_for("var");
  v.families = {"laplace"};
  v.n_list = {5};
  v.samples = 5000;
  v.threads = 1;
  const auto a = lab::run(v);
  v.threads = 3;
  EXPECT_EQ(strip_clock(a), strip_clock(lab::run(v)));
}

TEST(CubeScan, AnchorsAndColumns) {
  auto s = spec_for("cube-scan");
  s.n_list = {1, 2, 4, 16, 64};
  const auto r = lab::run(s);
  EXPECT_TRUE(r.ok());
  ASSERT_NE(find(r, "n1_zero_variance"), nullptr);
  ASSERT_NE(find(r, "n2_closed_form"), nullptr);
  EXPECT_EQ(r.rows.size(), 5u);
  EXPECT_EQ(std::get<double>(r.rows[0][1]), 0.0);
  EXPECT_EQ(std::get<double>(r.rows[3][4]), 3.0 - 2.0 / 16);
}

TEST(Subset, ReplicatesAndDegenerateAtom) {
  auto s = spec_for("subset");
  s.n_list = {8};
  s.seeds = 4;
  const auto r = lab::run(s);
  EXPECT_EQ(r.rows.size(), 8u);
  EXPECT_TRUE(r.ok());
  EXPECT_GT(r.extras["calibrated_constant"].get<double>(), 0.0);

  s.atoms = 1;
  const auto d = lab::run(s);
  const Assertion* a = find(d, "single_atom_beta");
  ASSERT_NE(a, nullptr);
  EXPECT_EQ(a->status, Status::warn);
  EXPECT_NEAR(a->value, 64.0, 1e-9);
}

TEST(ThirdMoment, FamiliesAndOracles) {
  auto s = spec_for("third-moment");
  s.families = {"cube", "point-mass", "shifted-cube"};
  s.n_list = {6};
  s.samples = 20000;
  const auto r = lab::run(s);
  EXPECT_TRUE(r.ok());
  ASSERT_NE(find(r, "symmetric_zero_cube_n6"), nullptr);
  ASSERT_NE(find(r, "point_mass_closed_form_point-mass_n6"), nullptr);
  ASSERT_NE(find(r, "shifted_positive_shifted-cube_n6"), nullptr);
  EXPECT_EQ(find(r, "symmetric_zero_shifted-cube_n6"), nullptr);
}

TEST(Identities, TamperedInputsFail) {
  auto s = spec_for("identities");
  s.samples = 20000;
  s.omega_scale = 1.01;
  const auto r = lab::run(s);
  EXPECT_EQ(find(r, "pair_reweighting_normalization")->status, Status::fail);
  EXPECT_EQ(find(r, "omega_quadrature")->status, Status::pass);

  s.omega_scale = 1.0;
  s.psi_cubic = 1.0 / (12.0 * pi);
  const auto q = lab::run(s);
  EXPECT_EQ(find(q, "psi_cubic_remainder")->status, Status::fail);
  EXPECT_EQ(find(q, "psi_cubic_coefficient")->status, Status::fail);
  EXPECT_EQ(find(q, "phi_quartic_remainder")->status, Status::pass);
}

TEST(KernelCheck, SmallRun) {
  const auto res = lab::kernel_mc_check(4, 5, 20000, 3);
  ASSERT_EQ(res.size(), 3u);
  for (const auto& k : res) {
    EXPECT_LT(k.max_z, 5.0) << k.kernel;
    EXPECT_EQ(k.samples, 20000u);
  }
  EXPECT_THROW(lab::kernel_mc_check(1, 5, 100, 1), DomainError);
}

TEST(Symmetry, Detection) {
  EXPECT_TRUE(lab::detail::is_symmetric(cube_measure(4)));
  EXPECT_TRUE(lab::detail::is_symmetric(cross_polytope_measure(3)));
  Vector e = Vector::Zero(3);
  e[0] = 1;
  EXPECT_FALSE(lab::detail::is_symmetric(point_mass(e)));
  EXPECT_FALSE(lab::detail::is_symmetric(cube_measure(3).translated(0.5 * e)));
}

TEST(VarScenario, MeasureFile) {
  auto s = spec_for("var");
  s.measure_path = std::string(CONCLAB_SAMPLES_DIR) + "/gaussian5_400.csv";
  s.samples = 20000;
  const auto r = lab::run(s);
  EXPECT_TRUE(r.ok());
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(std::get<std::string>(r.rows[0][3]), "exact-kernel");
}

TEST(PositionScenario, CubeImage) {
  auto s = spec_for("position");
  s.families = {"cube", "gaussian"};
  s.n_list = {6};
  s.p_list = {1.0, 3.0};
  const auto r = lab::run(s);
  EXPECT_TRUE(r.ok());
  EXPECT_EQ(r.rows.size(), 4u);
  ASSERT_NE(find(r, "proximity_gaussian_n6_p1"), nullptr);
  EXPECT_EQ(find(r, "proximity_cube_n6_p1"), nullptr);
}

TEST(Cli, ExitCodesAndOutputs) {
  const auto dir = std::filesystem::temp_directory_path() / "conclab_cli_test";
  std::filesystem::remove_all(dir);
  const auto out = (dir / "scan.csv").string();
  EXPECT_EQ(run_cli("cube-scan --n 1,2,4,16 --format csv --out " + out), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "scan.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "scan.json"));
  std::ifstream f(dir / "scan.csv");
  std::string header;
  std::getline(f, header);
  EXPECT_EQ(header.rfind("n,var_F,", 0), 0u);

  EXPECT_EQ(run_cli("subset --n 6 --seeds 2 --atoms 1"), 1);
  EXPECT_NE(run_cli("frobnicate"), 0);
  EXPECT_EQ(run_cli("var --measure /nonexistent.csv"), 2);
  EXPECT_EQ(run_cli("var --measure " + std::string(CONCLAB_SAMPLES_DIR) + "/skewed_triangle.csv --samples 5000"), 0);
  std::filesystem::remove_all(dir);
}
