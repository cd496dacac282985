#pragma once

// Tabular run reports with JSON and CSV writers.

#include "conclab/error.hpp"
#include "conclab/halfspace.hpp"
#include "conclab/position.hpp"

#include "json.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

namespace conclab {

inline constexpr const char* kVersion = "0.1.0";

using Cell = std::variant<std::monostate, bool, std::int64_t, double, std::string>;

enum class Status { pass, warn, fail };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::pass:
      return "pass";
    case Status::warn:
      return "warn";
    case Status::fail:
      return "fail";
  }
  return "fail";
}

struct Assertion {
  std::string name;
  Status status = Status::pass;
  double value = 0.0;
  double limit = 0.0;
  std::string detail;
};

struct RunReport {
  std::string scenario;
  std::uint64_t seed = 0;
  std::string version = kVersion;
  double wall_clock_seconds = 0.0;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  std::vector<Assertion> assertions;
  nlohmann::ordered_json extras = nlohmann::ordered_json::object();

  void add_row(std::vector<Cell> row) {
    if (row.size() != columns.size()) throw Error("row width does not match the column list");
    rows.push_back(std::move(row));
  }

  std::size_t count(Status s) const {
    std::size_t k = 0;
    for (const auto& a : assertions) k += a.status == s;
    return k;
  }

  bool ok() const { return count(Status::fail) == 0; }

  /// Deterministic pass/fail.
  Assertion& expect(std::string name, bool holds, double value, double limit, std::string detail = {}) {
    assertions.push_back({std::move(name), holds ? Status::pass : Status::fail, value, limit, std::move(detail)});
    return assertions.back();
  }

  /// value <= limit for a Monte Carlo estimate with standard error se: a miss
  /// by less than 4 se is a warning.
  Assertion& expect_below(std::string name, double value, double limit, double se, std::string detail = {}) {
    Status s = Status::pass;
    if (!(value <= limit)) s = (se > 0.0 && value - limit < 4.0 * se) ? Status::warn : Status::fail;
    assertions.push_back({std::move(name), s, value, limit, std::move(detail)});
    return assertions.back();
  }

  /// |value - target| within 4 se (+ slack); a miss is a failure.
  Assertion& expect_agree(std::string name, double value, double target, double se, double slack = 0.0,
                          std::string detail = {}) {
    const double dev = std::abs(value - target);
    const double limit = 4.0 * se + slack;
    const Status s = dev <= limit ? Status::pass : Status::fail;
    assertions.push_back({std::move(name), s, value, target, std::move(detail)});
    return assertions.back();
  }
};

// ---------------------------------------------------------------------------
// Serialization

/// Shortest decimal that round-trips; JSON and CSV share it.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline nlohmann::ordered_json cell_to_json(const Cell& c) {
  return std::visit(
      [](const auto& v) -> nlohmann::ordered_json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::monostate>) {
          return nullptr;
        } else if constexpr (std::is_same_v<T, double>) {
          if (!std::isfinite(v)) return format_number(v);
          return v;
        } else {
          return v;
        }
      },
      c);
}

inline std::string cell_to_text(const Cell& c) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::monostate>) {
          return {};
        } else if constexpr (std::is_same_v<T, bool>) {
          return v ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          return std::to_string(v);
        } else if constexpr (std::is_same_v<T, double>) {
          return format_number(v);
        } else {
          return v;
        }
      },
      c);
}

/// RFC 4180: quote fields containing a comma, quote, CR or LF; double quotes.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

inline nlohmann::ordered_json to_json(const RunReport& r) {
  nlohmann::ordered_json j;
  j["scenario"] = r.scenario;
  j["seed"] = r.seed;
  j["version"] = r.version;
  j["wall_clock_seconds"] = r.wall_clock_seconds;
  j["columns"] = r.columns;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) {
    nlohmann::ordered_json o;
    for (std::size_t i = 0; i < row.size(); ++i) o[r.columns[i]] = cell_to_json(row[i]);
    rows.push_back(std::move(o));
  }
  j["rows"] = std::move(rows);
  auto as = nlohmann::ordered_json::array();
  for (const auto& a : r.assertions) {
    as.push_back({{"name", a.name},
                  {"status", to_string(a.status)},
                  {"value", cell_to_json(a.value)},
                  {"limit", cell_to_json(a.limit)},
                  {"detail", a.detail}});
  }
  j["assertions"] = std::move(as);
  j["summary"] = {{"pass", r.count(Status::pass)}, {"warn", r.count(Status::warn)}, {"fail", r.count(Status::fail)}};
  j["extras"] = r.extras;
  return j;
}

inline void write_json(std::ostream& out, const RunReport& r) { out << to_json(r).dump(2) << '\n'; }

/// Header row plus one row per table row; CRLF line ends per RFC 4180.
inline void write_csv(std::ostream& out, const RunReport& r) {
  for (std::size_t i = 0; i < r.columns.size(); ++i) out << (i ? "," : "") << csv_field(r.columns[i]);
  out << "\r\n";
  for (const auto& row : r.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_field(cell_to_text(row[i]));
    out << "\r\n";
  }
}

// Structured results from the numeric modules.

inline nlohmann::ordered_json to_json(const FStats& s) {
  nlohmann::ordered_json j = {{"method", s.method},           {"mean_F", s.mean_F},
                              {"second_moment_F", s.second_moment_F}, {"var_F", s.var_F},
                              {"grad_sq", s.grad_sq},         {"grad_s_sq", s.grad_s_sq},
                              {"samples", s.samples},         {"var_clipped", s.var_clipped}};
  if (s.mc_std_err) {
    j["std_err"] = {{"mean_F", s.mc_std_err->mean_F},
                    {"second_moment_F", s.mc_std_err->second_moment_F},
                    {"var_F", s.mc_std_err->var_F},
                    {"grad_sq", s.mc_std_err->grad_sq},
                    {"grad_s_sq", s.mc_std_err->grad_s_sq}};
  }
  return j;
}

inline nlohmann::ordered_json to_json(const OrliczEstimate& o) {
  return {{"alpha", o.alpha_index}, {"value", o.value},           {"uncentered_value", o.uncentered_value},
          {"samples", o.samples},   {"residual", o.residual},     {"degenerate", o.degenerate}};
}

inline nlohmann::ordered_json to_json(const MomentReport& m) {
  return {{"center_norm", m.center_norm}, {"alpha", m.alpha},   {"p", m.p},         {"z_p", m.z_p},
          {"beta", m.beta},               {"delta", m.delta},   {"gamma_excess", m.gamma_excess},
          {"kappa", m.kappa},             {"lambda", m.lambda}, {"zeta", m.zeta}};
}

inline nlohmann::ordered_json matrix_to_json(const Matrix& m) {
  auto rows = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto row = nlohmann::ordered_json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::ordered_json to_json(const PositionResult& r) {
  return {{"p", r.p},
          {"converged", r.converged},
          {"iterations", r.iterations},
          {"residual", r.residual},
          {"dilation", r.dilation},
          {"objective_trace", r.objective_trace},
          {"center", std::vector<double>(r.center.data(), r.center.data() + r.center.size())},
          {"transform", matrix_to_json(r.transform)}};
}

}  // namespace conclab
