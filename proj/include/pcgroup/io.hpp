#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pcgroup/dataset.hpp"
#include "pcgroup/errors.hpp"
#include "pcgroup/inference.hpp"
#include "pcgroup/pcprior.hpp"

// Dataset CSV ingestion and export of fits (JSON) and prior grids (CSV).
// Files are UTF-8 with LF line endings and '.' as decimal separator.

namespace pcgroup::io {

/// Shortest text that is 17 significant digits and round-trips exactly.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return in;
}

}  // namespace detail

struct ReadOptions {
  std::string response = "y";
  std::string group_column = "group";
  std::optional<std::string> pos_column;
  /// Empty: every column other than response, group and position.
  std::vector<std::string> covariates;
};

/// Reads a grouped dataset. Groups are numbered by first appearance; rows are
/// ordered by group, then by position (or file order when there is none);
/// an intercept column is prepended.
inline Dataset read_dataset(std::istream& in, const ReadOptions& opt = {}) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line).empty()) throw ParseError("empty file: missing header", 1);
  const auto header = detail::split(line);
  auto find = [&](const std::string& name) -> std::optional<std::size_t> {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto y_col = find(opt.response);
  if (!y_col) throw ParseError("missing required column", 1, opt.response);
  const auto g_col = find(opt.group_column);
  if (!g_col) throw ParseError("missing required column", 1, opt.group_column);
  std::optional<std::size_t> p_col;
  if (opt.pos_column) {
    p_col = find(*opt.pos_column);
    if (!p_col) throw ParseError("missing position column", 1, *opt.pos_column);
  }

  std::vector<std::string> cov_names = opt.covariates;
  if (cov_names.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (c != *y_col && c != *g_col && (!p_col || c != *p_col)) cov_names.push_back(header[c]);
  }
  std::vector<std::size_t> cov_cols;
  for (const auto& name : cov_names) {
    const auto c = find(name);
    if (!c) throw ParseError("missing covariate column", 1, name);
    cov_cols.push_back(*c);
  }

  struct Row {
    std::size_t group = 0;
    double pos = 0.0;
    std::size_t file_row = 0;
    double y = 0.0;
    std::vector<double> x;
  };
  std::vector<Row> rows;
  std::map<std::string, std::size_t> label_index;
  std::size_t row_no = 1;
  auto number = [&](const std::vector<std::string>& fields, std::size_t col) {
    const auto v = parse_double(fields[col]);
    if (!v || !std::isfinite(*v)) throw ParseError("non-numeric or missing value", row_no, header[col]);
    return *v;
  };
  while (std::getline(in, line)) {
    ++row_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line);
    if (fields.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields, found " + std::to_string(fields.size()),
                       row_no);
    Row r;
    r.file_row = row_no;
    const auto& label = fields[*g_col];
    if (label.empty()) throw ParseError("missing group label", row_no, header[*g_col]);
    const auto [it, inserted] = label_index.emplace(label, label_index.size());
    r.group = it->second;
    r.y = number(fields, *y_col);
    if (p_col) r.pos = number(fields, *p_col);
    for (auto c : cov_cols) r.x.push_back(number(fields, c));
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw ParseError("file has a header but no data rows", 2);

  std::stable_sort(rows.begin(), rows.end(), [&](const Row& a, const Row& b) {
    if (a.group != b.group) return a.group < b.group;
    if (p_col) return a.pos < b.pos;
    return false;
  });

  const std::size_t n_groups = label_index.size();
  std::vector<std::size_t> sizes(n_groups, 0);
  std::optional<GroupedDesign::Positions> positions;
  if (p_col) positions.emplace(n_groups);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    ++sizes[r.group];
    if (p_col) {
      auto& gp = (*positions)[r.group];
      if (!gp.empty() && gp.back() == r.pos) throw ParseError("duplicate position within group", r.file_row, *opt.pos_column);
      gp.push_back(r.pos);
    }
  }

  Dataset data;
  data.design = GroupedDesign(sizes, positions);
  const auto m = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(cov_cols.size() + 1);
  data.y.resize(m);
  data.x.resize(m, p);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    data.y[i] = r.y;
    data.x(i, 0) = 1.0;
    for (Eigen::Index c = 1; c < p; ++c) data.x(i, c) = r.x[static_cast<std::size_t>(c - 1)];
  }
  data.column_names.push_back("(Intercept)");
  for (const auto& n : cov_names) data.column_names.push_back(n);
  data.validate();
  return data;
}

inline Dataset read_dataset(const std::string& path, const ReadOptions& opt = {}) {
  auto in = detail::open_in(path);
  return read_dataset(in, opt);
}

/// Writes group, [pos,] y and the non-intercept covariates. Groups are labelled 1..n.
inline void write_dataset(const Dataset& data, std::ostream& out) {
  const bool has_pos = data.design.has_positions();
  out << "group";
  if (has_pos) out << ",pos";
  out << ",y";
  for (std::size_t c = 1; c < data.column_names.size(); ++c) out << ',' << data.column_names[c];
  out << '\n';
  for (std::size_t j = 0; j < data.design.n_groups(); ++j) {
    const auto off = data.design.offset(j);
    for (std::size_t i = 0; i < data.design.group_size(j); ++i) {
      const auto r = static_cast<Eigen::Index>(off + i);
      out << (j + 1);
      if (has_pos) out << ',' << format_double((*data.design.positions())[j][i]);
      out << ',' << format_double(data.y[r]);
      for (Eigen::Index c = 1; c < data.x.cols(); ++c) out << ',' << format_double(data.x(r, c));
      out << '\n';
    }
  }
}

inline void write_dataset(const Dataset& data, const std::string& path) {
  auto out = detail::open_out(path);
  write_dataset(data, out);
  if (!out) throw IoError("failed writing '" + path + "'");
}

// ---- fit JSON

namespace detail {

inline nlohmann::ordered_json number_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

inline double number_from(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return v.get<double>();
}

inline nlohmann::ordered_json summary_json(const inference::Summary& s) {
  nlohmann::ordered_json j;
  j["mean"] = number_or_null(s.mean);
  j["q025"] = number_or_null(s.q025);
  j["q975"] = number_or_null(s.q975);
  return j;
}

inline inference::Summary summary_from(const nlohmann::json& j) {
  return {number_from(j, "mean"), number_from(j, "q025"), number_from(j, "q975")};
}

}  // namespace detail

inline nlohmann::ordered_json fit_to_json(const inference::FitResult& fit) {
  nlohmann::ordered_json j;
  j["log_mlik"] = detail::number_or_null(fit.log_mlik);
  j["rho"] = detail::summary_json(fit.rho);
  j["sigma2"] = detail::summary_json(fit.sigma2);
  j["beta"] = nlohmann::ordered_json::array();
  for (const auto& b : fit.beta) {
    nlohmann::ordered_json e;
    e["name"] = b.name;
    e["mean"] = detail::number_or_null(b.mean);
    e["q025"] = detail::number_or_null(b.q025);
    e["q975"] = detail::number_or_null(b.q975);
    j["beta"].push_back(e);
  }
  const auto& d = fit.diagnostics;
  nlohmann::ordered_json dj;
  dj["family"] = d.family;
  dj["grid"] = {d.n_log_tau, d.n_internal};
  dj["log_tau_range"] = {d.log_tau_lo, d.log_tau_hi};
  dj["internal_range"] = {d.internal_lo, d.internal_hi};
  dj["refined"] = d.refined;
  dj["boundary_mass"] = d.boundary_mass;
  dj["boundary_warning"] = d.boundary_warning;
  dj["lambda"] = d.lambda;
  dj["psi"] = d.psi;
  dj["beta_precision"] = d.beta_precision;
  dj["data_fingerprint"] = d.data_fingerprint;
  dj["prior_fingerprint"] = d.prior_fingerprint;
  j["diagnostics"] = dj;
  return j;
}

inline inference::FitResult fit_from_json(const nlohmann::json& j) {
  try {
    inference::FitResult fit;
    fit.log_mlik = detail::number_from(j, "log_mlik");
    fit.rho = detail::summary_from(j.at("rho"));
    fit.sigma2 = detail::summary_from(j.at("sigma2"));
    for (const auto& e : j.at("beta")) {
      fit.beta.push_back({e.at("name").get<std::string>(), detail::number_from(e, "mean"),
                          detail::number_from(e, "q025"), detail::number_from(e, "q975")});
    }
    const auto& dj = j.at("diagnostics");
    auto& d = fit.diagnostics;
    d.family = dj.at("family").get<std::string>();
    d.n_log_tau = dj.at("grid").at(0).get<std::size_t>();
    d.n_internal = dj.at("grid").at(1).get<std::size_t>();
    d.log_tau_lo = dj.at("log_tau_range").at(0).get<double>();
    d.log_tau_hi = dj.at("log_tau_range").at(1).get<double>();
    d.internal_lo = dj.at("internal_range").at(0).get<double>();
    d.internal_hi = dj.at("internal_range").at(1).get<double>();
    d.refined = dj.at("refined").get<bool>();
    d.boundary_mass = dj.at("boundary_mass").get<double>();
    d.boundary_warning = dj.at("boundary_warning").get<bool>();
    d.lambda = dj.at("lambda").get<double>();
    d.psi = dj.at("psi").get<double>();
    d.beta_precision = dj.at("beta_precision").get<double>();
    d.data_fingerprint = dj.at("data_fingerprint").get<std::string>();
    d.prior_fingerprint = dj.at("prior_fingerprint").get<std::string>();
    return fit;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed fit JSON: ") + e.what());
  }
}

inline void write_fit(const inference::FitResult& fit, std::ostream& out) { out << fit_to_json(fit).dump(2) << '\n'; }

inline void write_fit(const inference::FitResult& fit, const std::string& path) {
  auto out = detail::open_out(path);
  write_fit(fit, out);
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline inference::FitResult read_fit(const std::string& path) {
  auto in = detail::open_in(path);
  try {
    return fit_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
}

// ---- prior grid CSV

inline constexpr std::string_view kGridHeader = "param,distance,density,cdf";

inline void write_grid(const std::vector<pcprior::GridRow>& rows, std::ostream& out) {
  out << kGridHeader << '\n';
  for (const auto& r : rows)
    out << format_double(r.param) << ',' << format_double(r.distance) << ',' << format_double(r.density) << ','
        << format_double(r.cdf) << '\n';
}

inline void write_grid(const std::vector<pcprior::GridRow>& rows, const std::string& path) {
  auto out = detail::open_out(path);
  write_grid(rows, out);
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline std::vector<pcprior::GridRow> read_grid(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kGridHeader)
    throw ParseError("grid CSV must start with header '" + std::string(kGridHeader) + "'", 1);
  std::vector<pcprior::GridRow> rows;
  std::size_t row_no = 1;
  static const char* names[] = {"param", "distance", "density", "cdf"};
  while (std::getline(in, line)) {
    ++row_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(line);
    if (f.size() != 4) throw ParseError("expected 4 fields", row_no);
    double v[4];
    for (std::size_t c = 0; c < 4; ++c) {
      const auto x = parse_double(f[c]);
      if (!x) throw ParseError("non-numeric value", row_no, names[c]);
      v[c] = *x;
    }
    rows.push_back({v[0], v[1], v[2], v[3]});
  }
  return rows;
}

inline std::vector<pcprior::GridRow> read_grid(const std::string& path) {
  auto in = detail::open_in(path);
  return read_grid(in);
}

}  // namespace pcgroup::io
