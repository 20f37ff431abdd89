#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pcgroup/design.hpp"
#include "pcgroup/errors.hpp"

namespace pcgroup {

/// Response, design matrix (first column is the intercept) and grouping.
/// Rows are stacked group by group, in within-group order.
struct Dataset {
  Eigen::VectorXd y;
  Eigen::MatrixXd x;
  GroupedDesign design;
  std::vector<std::string> column_names;

  std::size_t size() const noexcept { return static_cast<std::size_t>(y.size()); }
  std::size_t n_coef() const noexcept { return static_cast<std::size_t>(x.cols()); }

  void validate() const {
    const auto m = static_cast<Eigen::Index>(design.total_size());
    if (y.size() != m) throw ConfigError("response length differs from the design's total size");
    if (x.rows() != m) throw ConfigError("covariate matrix rows differ from the response length");
    if (x.cols() < 1) throw ConfigError("covariate matrix needs at least the intercept column");
    if (x.cols() >= m) throw ConfigError("need more observations than fixed effects");
    if (column_names.size() != static_cast<std::size_t>(x.cols()))
      throw ConfigError("one column name per covariate column is required");
    if (!y.allFinite() || !x.allFinite()) throw ConfigError("dataset contains missing or non-finite values");
  }
};

namespace detail {

class Fnv1a {
public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 1099511628211ULL;
    }
  }
  void value(double v) {
    if (v == 0.0) v = 0.0;  // fold -0
    bytes(&v, sizeof v);
  }
  void value(std::uint64_t v) { bytes(&v, sizeof v); }
  void text(const std::string& s) {
    value(static_cast<std::uint64_t>(s.size()));
    bytes(s.data(), s.size());
  }

  std::string hex() const {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 0; i < 16; ++i) out[static_cast<std::size_t>(15 - i)] = digits[(h_ >> (4 * i)) & 0xF];
    return out;
  }

private:
  std::uint64_t h_ = 14695981039346656037ULL;
};

}  // namespace detail

/// 64-bit FNV-1a hash of (y, X, group sizes, positions), as hex.
inline std::string fingerprint(const Dataset& data) {
  detail::Fnv1a h;
  h.value(static_cast<std::uint64_t>(data.y.size()));
  for (Eigen::Index i = 0; i < data.y.size(); ++i) h.value(data.y[i]);
  h.value(static_cast<std::uint64_t>(data.x.cols()));
  for (Eigen::Index c = 0; c < data.x.cols(); ++c)
    for (Eigen::Index r = 0; r < data.x.rows(); ++r) h.value(data.x(r, c));
  h.value(static_cast<std::uint64_t>(data.design.n_groups()));
  for (std::size_t m : data.design.group_sizes()) h.value(static_cast<std::uint64_t>(m));
  if (data.design.has_positions())
    for (const auto& g : *data.design.positions())
      for (double p : g) h.value(p);
  return h.hex();
}

}  // namespace pcgroup
