#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pcgroup/errors.hpp"

namespace pcgroup {

enum class Family { exchangeable, ar1, ou };

inline std::string_view family_name(Family f) {
  switch (f) {
    case Family::exchangeable: return "exch";
    case Family::ar1: return "ar1";
    case Family::ou: return "ou";
  }
  return "?";
}

inline Family parse_family(std::string_view s) {
  if (s == "exch" || s == "exchangeable") return Family::exchangeable;
  if (s == "ar1") return Family::ar1;
  if (s == "ou") return Family::ou;
  throw ConfigError("unknown group model '" + std::string(s) + "' (expected exch, ar1 or ou)");
}

/// Grouping structure of the residuals: group sizes and, optionally, 1-D
/// within-group coordinates used by the OU model.
class GroupedDesign {
public:
  using Positions = std::vector<std::vector<double>>;

  GroupedDesign() = default;

  explicit GroupedDesign(std::vector<std::size_t> sizes, std::optional<Positions> positions = std::nullopt)
      : sizes_(std::move(sizes)), positions_(std::move(positions)) {
    if (sizes_.empty()) throw ConfigError("design needs at least one group");
    for (std::size_t s : sizes_)
      if (s == 0) throw ConfigError("group sizes must be positive");
    if (positions_) {
      if (positions_->size() != sizes_.size())
        throw ConfigError("positions must be given for every group");
      for (std::size_t j = 0; j < sizes_.size(); ++j) {
        const auto& p = (*positions_)[j];
        if (p.size() != sizes_[j])
          throw ConfigError("group " + std::to_string(j + 1) + ": positions length differs from group size");
        for (std::size_t i = 0; i < p.size(); ++i) {
          if (!std::isfinite(p[i]))
            throw ConfigError("group " + std::to_string(j + 1) + ": non-finite position");
          if (i > 0 && !(p[i] > p[i - 1]))
            throw ConfigError("group " + std::to_string(j + 1) + ": positions must be strictly increasing");
        }
      }
    }
  }

  static GroupedDesign balanced(std::size_t n_groups, std::size_t group_size) {
    return GroupedDesign(std::vector<std::size_t>(n_groups, group_size));
  }

  std::size_t n_groups() const noexcept { return sizes_.size(); }
  std::size_t group_size(std::size_t j) const { return sizes_.at(j); }
  const std::vector<std::size_t>& group_sizes() const noexcept { return sizes_; }
  std::size_t total_size() const noexcept { return std::accumulate(sizes_.begin(), sizes_.end(), std::size_t{0}); }

  bool is_balanced() const noexcept {
    for (std::size_t s : sizes_)
      if (s != sizes_.front()) return false;
    return true;
  }

  bool has_positions() const noexcept { return positions_.has_value(); }
  const std::optional<Positions>& positions() const noexcept { return positions_; }

  /// Row offset of group j in the stacked response vector.
  std::size_t offset(std::size_t j) const {
    std::size_t off = 0;
    for (std::size_t k = 0; k < j; ++k) off += sizes_[k];
    return off;
  }

  friend bool operator==(const GroupedDesign&, const GroupedDesign&) = default;

private:
  std::vector<std::size_t> sizes_;
  std::optional<Positions> positions_;
};

/// Residual correlation family. Exchangeable and AR1 use rho in [0,1);
/// OU uses phi > 0 with correlation exp(-delta * phi).
struct GroupModelSpec {
  Family family = Family::exchangeable;
  /// OU only: treat within-group spacing as 1 when the design has no positions.
  bool unit_spacing = false;

  bool uses_phi() const noexcept { return family == Family::ou; }

  friend bool operator==(const GroupModelSpec&, const GroupModelSpec&) = default;
};

/// Spacings between consecutive observations of group j, as used by the OU model.
inline std::vector<double> spacings(const GroupModelSpec& spec, const GroupedDesign& design, std::size_t j) {
  const std::size_t m = design.group_size(j);
  std::vector<double> out;
  if (m < 2) return out;
  out.reserve(m - 1);
  if (spec.family != Family::ou || (spec.unit_spacing && !design.has_positions())) {
    out.assign(m - 1, 1.0);
  } else if (design.has_positions()) {
    const auto& p = (*design.positions())[j];
    for (std::size_t i = 1; i < m; ++i) out.push_back(p[i] - p[i - 1]);
  } else {
    throw ConfigError("OU model needs within-group positions or explicit unit spacing");
  }
  return out;
}

inline void check_compatible(const GroupModelSpec& spec, const GroupedDesign& design) {
  if (spec.family == Family::ou && !design.has_positions() && !spec.unit_spacing)
    throw ConfigError("OU model needs within-group positions or explicit unit spacing");
}

/// A correlation parameter held together with the quantities needed to
/// evaluate log-determinants accurately near the degenerate end.
///
/// rho families: value = rho, log_comp = log(1 - rho).
/// OU:           value = phi.
/// The internal (unbounded) scale is logit(rho) or log(phi).
struct ParamPoint {
  double value = 0.0;
  double comp = 1.0;
  double log_comp = 0.0;

  static ParamPoint from_param(const GroupModelSpec& spec, double param) {
    if (std::isnan(param)) throw DomainError("correlation parameter is NaN");
    if (spec.uses_phi()) {
      if (param < 0.0) throw DomainError("phi must be positive");
      return {param, 0.0, 0.0};
    }
    if (param < 0.0 || param > 1.0) throw DomainError("rho must lie in [0, 1)");
    const double c = 1.0 - param;
    return {param, c, std::log1p(-param)};
  }

  static ParamPoint from_internal(const GroupModelSpec& spec, double t) {
    if (std::isnan(t)) throw DomainError("internal parameter is NaN");
    if (spec.uses_phi()) return {std::exp(t), 0.0, 0.0};
    // rho = 1/(1+e^-t), 1-rho = 1/(1+e^t)
    const double rho = t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
    const double comp = t >= 0 ? std::exp(-t) / (1.0 + std::exp(-t)) : 1.0 / (1.0 + std::exp(t));
    const double log_comp = t >= 0 ? -t - std::log1p(std::exp(-t)) : -std::log1p(std::exp(t));
    return {rho, comp, log_comp};
  }

  bool degenerate(const GroupModelSpec& spec) const noexcept {
    return spec.uses_phi() ? value == 0.0 : std::isinf(log_comp);
  }
  bool base(const GroupModelSpec& spec) const noexcept {
    return spec.uses_phi() ? std::isinf(value) : value == 0.0;
  }
};

inline double to_internal(const GroupModelSpec& spec, double param) {
  if (spec.uses_phi()) return std::log(param);
  return std::log(param) - std::log1p(-param);
}

inline double from_internal(const GroupModelSpec& spec, double t) {
  return ParamPoint::from_internal(spec, t).value;
}

/// d(param)/dt for the internal scale.
inline double internal_jacobian(const GroupModelSpec& spec, const ParamPoint& p) {
  return spec.uses_phi() ? p.value : p.value * p.comp;
}

/// Correlation at distance `reference` implied by an OU phi.
inline double ou_correlation_at(double phi, double reference = 1.0) { return std::exp(-phi * reference); }

/// OU phi giving correlation `rho` at distance `reference`.
inline double ou_phi_for_correlation(double rho, double reference = 1.0) {
  if (!(rho > 0.0 && rho < 1.0)) throw DomainError("reference correlation must lie in (0, 1)");
  if (!(reference > 0.0)) throw DomainError("reference distance must be positive");
  return -std::log(rho) / reference;
}

}  // namespace pcgroup
