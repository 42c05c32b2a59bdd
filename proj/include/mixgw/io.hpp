#pragma once

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mixgw/errors.hpp"
#include "mixgw/gmm.hpp"
#include "mixgw/mixture_ot.hpp"
#include "mixgw/ot.hpp"

namespace mixgw::io {

using nlohmann::json;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  // strtod rather than stod: subnormal values (ERANGE on underflow) are valid
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

}  // namespace detail

/// Comma-separated numeric table; a first line that does not parse as
/// numbers is treated as a header. Blank lines are skipped.
inline Matrix parse_csv(std::istream& in, const std::string& source = "<stream>") {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split(line);
    std::vector<double> values(cells.size());
    bool numeric = true;
    for (std::size_t c = 0; c < cells.size(); ++c) numeric = numeric && detail::parse_double(cells[c], values[c]);
    if (!numeric) {
      if (first) {
        first = false;
        continue;
      }
      fail(ErrorCode::kParse, source + ":" + std::to_string(line_no) + ": non-numeric value");
    }
    first = false;
    if (!rows.empty() && values.size() != rows.front().size()) {
      fail(ErrorCode::kParse, source + ":" + std::to_string(line_no) + ": expected " + std::to_string(rows.front().size()) + " columns");
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) fail(ErrorCode::kParse, source + ": no numeric rows");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return m;
}

inline Matrix read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open '" + path + "'");
  return parse_csv(in, path);
}

inline void write_csv(std::ostream& out, const Matrix& m, const std::vector<std::string>& header = {}) {
  out << std::setprecision(17);
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  if (!header.empty()) out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
    out << '\n';
  }
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIo, "cannot write '" + path + "'");
  out << text;
  if (!out) fail(ErrorCode::kIo, "write failed for '" + path + "'");
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json to_json(const Vector& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

inline json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace detail {

inline Vector vector_from(const json& j, const char* what) {
  if (!j.is_array()) fail(ErrorCode::kParse, std::string(what) + " must be an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) fail(ErrorCode::kParse, std::string(what) + " must contain numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline Matrix matrix_from(const json& j, const char* what) {
  if (!j.is_array() || j.empty()) fail(ErrorCode::kParse, std::string(what) + " must be a non-empty array of rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != cols) fail(ErrorCode::kParse, std::string(what) + " rows must have equal length");
    m.row(static_cast<Eigen::Index>(i)) = vector_from(j[i], what).transpose();
  }
  return m;
}

}  // namespace detail

inline json gmm_to_json(const Gmm& g) {
  json comps = json::array();
  for (const auto& c : g.components()) comps.push_back({{"mean", to_json(c.mean())}, {"cov", to_json(c.cov())}});
  return {{"d", g.dim()}, {"weights", to_json(g.weights())}, {"components", comps}};
}

/// Schema {"d", "weights", "components": [{"mean", "cov"}]}; weights must sum
/// to one within 1e-9. Violations raise kParse; invalid covariances keep
/// their own error codes.
inline Gmm gmm_from_json(const json& j) {
  if (!j.is_object() || !j.contains("d") || !j.contains("weights") || !j.contains("components")) {
    fail(ErrorCode::kParse, "GMM JSON needs keys d, weights, components");
  }
  if (!j["d"].is_number_integer() || j["d"].get<long long>() < 1) fail(ErrorCode::kParse, "d must be a positive integer");
  const auto d = static_cast<Eigen::Index>(j["d"].get<long long>());
  const Vector w = detail::vector_from(j["weights"], "weights");
  const json& comps = j["components"];
  if (!comps.is_array() || comps.size() != static_cast<std::size_t>(w.size())) fail(ErrorCode::kParse, "components must match weights in length");
  if (std::abs(w.sum() - 1.0) > 1e-9) fail(ErrorCode::kParse, "weights must sum to 1");
  std::vector<Gaussian> gs;
  for (const auto& c : comps) {
    if (!c.is_object() || !c.contains("mean") || !c.contains("cov")) fail(ErrorCode::kParse, "component needs mean and cov");
    const Vector m = detail::vector_from(c["mean"], "mean");
    const Matrix s = detail::matrix_from(c["cov"], "cov");
    if (m.size() != d || s.rows() != d || s.cols() != d) fail(ErrorCode::kParse, "component shape does not match d");
    gs.emplace_back(m, s);
  }
  return Gmm(w, std::move(gs));
}

inline Gmm read_gmm(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, path + ": " + e.what());
  }
  return gmm_from_json(j);
}

inline void write_gmm(const std::string& path, const Gmm& g) { write_text(path, gmm_to_json(g).dump(2) + "\n"); }

inline json config_to_json(const SolverConfig& c) {
  return {{"max_outer_iters", c.max_outer_iters}, {"objective_rel_tol", c.objective_rel_tol}, {"anneal_eps0", c.anneal_eps0},
          {"anneal_alpha", c.anneal_alpha},       {"anneal_iters", c.anneal_iters},           {"step_size_eta", c.step_size_eta},
          {"inner_pgd_iters", c.inner_pgd_iters}, {"seed", c.seed},                           {"sinkhorn_max_iters", c.sinkhorn_max_iters},
          {"n_restarts", c.n_restarts}};
}

/// Machine-readable summary of one distance computation. `value` is the
/// distance (square root of `squared`).
inline json run_report(const DistanceResult& r, const SolverConfig& config, double runtime_ms) {
  json j = {{"metric", r.metric},
            {"value", r.distance},
            {"squared", r.squared},
            {"coupling", to_json(r.omega.plan)},
            {"iterations", r.iterations},
            {"annealed", r.annealed},
            {"runtime_ms", runtime_ms},
            {"seed", config.seed},
            {"config", config_to_json(config)}};
  j["p_matrix"] = r.p ? to_json(r.p->matrix()) : json(nullptr);
  j["b_vector"] = r.b ? to_json(*r.b) : json(nullptr);
  if (r.p) j["swapped"] = r.swapped;
  return j;
}

}  // namespace mixgw::io
