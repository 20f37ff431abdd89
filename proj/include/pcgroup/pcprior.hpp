#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "pcgroup/corr.hpp"
#include "pcgroup/design.hpp"
#include "pcgroup/errors.hpp"
#include "pcgroup/numeric.hpp"

// Penalized-complexity priors for the residual correlation parameter.
//
// The prior is an exponential with rate lambda on the distance
//   d(param) = sqrt(2 KLD) = sqrt(-sum_j log|R_j(param)|)
// from the iid base model, pushed to the parameter scale by change of
// variables. All inversion and grid work happens on the internal scale
// t = logit(rho) (exchangeable, AR1) or t = log(phi) (OU), where both ends of
// the parameter domain stay representable.

namespace pcgroup::pcprior {

/// Distance and its derivative with respect to the internal scale.
struct DistancePoint {
  double distance = 0.0;
  double d_internal = 0.0;
};

/// d(param) bound to a group model and a design.
class DistanceFunction {
public:
  DistanceFunction(GroupModelSpec spec, GroupedDesign design) : spec_(spec), design_(std::move(design)) {
    check_compatible(spec_, design_);
    for (std::size_t j = 0; j < design_.n_groups(); ++j) {
      const double k = static_cast<double>(design_.group_size(j)) - 1.0;
      if (spec_.family == Family::exchangeable) base_slope_sq_ += 0.5 * k * (k + 1.0);
      if (spec_.family == Family::ar1) base_slope_sq_ += k;
    }
  }

  const GroupModelSpec& spec() const noexcept { return spec_; }
  const GroupedDesign& design() const noexcept { return design_; }

  /// True when d grows with the internal parameter (rho families); false for OU.
  bool increasing() const noexcept { return !spec_.uses_phi(); }

  /// d(param); +inf at the degenerate end.
  double operator()(double param) const { return at(ParamPoint::from_param(spec_, param)); }

  double at(const ParamPoint& p) const {
    const double ld = corr::log_det_terms(spec_, design_, p).log_det;
    if (std::isinf(ld)) return std::numeric_limits<double>::infinity();
    return std::sqrt(std::max(0.0, -ld));
  }

  /// d d / d param. Finite limit at the base model (zero for OU).
  double derivative(double param) const {
    const ParamPoint p = ParamPoint::from_param(spec_, param);
    if (p.degenerate(spec_)) throw DomainError("distance derivative undefined at the degenerate end");
    const auto terms = corr::log_det_terms(spec_, design_, p);
    const double d = std::sqrt(std::max(0.0, -terms.log_det));
    if (d < kTiny) return std::sqrt(base_slope_sq_);
    return -terms.d_param / (2.0 * d);
  }

  DistancePoint at_internal(double t) const {
    const ParamPoint p = ParamPoint::from_internal(spec_, t);
    const auto terms = corr::log_det_terms(spec_, design_, p);
    if (std::isinf(terms.log_det))
      return {std::numeric_limits<double>::infinity(), increasing() ? std::numeric_limits<double>::infinity()
                                                                    : -std::numeric_limits<double>::infinity()};
    const double d = std::sqrt(std::max(0.0, -terms.log_det));
    if (d < kTiny) return {d, std::sqrt(base_slope_sq_) * internal_jacobian(spec_, p)};
    return {d, -terms.d_internal / (2.0 * d)};
  }

  /// Internal parameter t with d(t) = target, by bracketed bisection and
  /// secant polish to |d - target| <= tol.
  double internal_at_distance(double target, double tol = 1e-12) const {
    if (!(target >= 0.0) || !std::isfinite(target)) throw DomainError("target distance must be finite and >= 0");
    const double sign = increasing() ? 1.0 : -1.0;
    auto f = [&](double t) { return sign * (at_internal(t).distance - target); };
    double lo = -20.0, hi = 20.0;
    while (f(lo) > 0.0) {
      lo *= 2.0;
      if (lo < -1e6) return lo;  // target is at (or numerically indistinguishable from) the base model
    }
    while (f(hi) < 0.0) {
      hi *= 2.0;
      if (hi > 1e6) throw NumericError("distance inversion: could not bracket target distance");
    }
    return numeric::solve_increasing(f, lo, hi, tol);
  }

  double param_at_distance(double target, double tol = 1e-12) const {
    return from_internal(spec_, internal_at_distance(target, tol));
  }

private:
  static constexpr double kTiny = 1e-150;
  GroupModelSpec spec_;
  GroupedDesign design_;
  double base_slope_sq_ = 0.0;
};

/// d(param) for a group model and design.
inline double distance(const GroupModelSpec& spec, const GroupedDesign& design, double param) {
  return DistanceFunction(spec, design)(param);
}

/// Rate lambda such that P(d < d(u)) = a, i.e. lambda = -log(1 - a) / d(u).
/// For rho families this is P(rho < u) = a; for OU, u is a phi value and the
/// statement reads P(phi > u) = a.
inline double solve_lambda(double u, double a, const DistanceFunction& distance) {
  if (!(a > 0.0 && a < 1.0)) throw DomainError("tail probability a must lie in (0, 1)");
  const double du = distance(u);
  if (!(du > 0.0)) throw DomainError("degenerate scaling: U is at the base model (d(U) = 0)");
  if (!std::isfinite(du)) throw DomainError("degenerate scaling: U is at the degenerate end (d(U) = inf)");
  return -std::log1p(-a) / du;
}

/// lambda from a statement on the correlation scale: P(correlation < u) = a.
/// For OU the correlation is taken at `reference` distance, so u maps to
/// phi = -log(u) / reference.
inline double solve_lambda_correlation(double u, double a, const DistanceFunction& distance, double reference = 1.0) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("U must lie strictly inside (0, 1)");
  if (distance.spec().uses_phi()) return solve_lambda(ou_phi_for_correlation(u, reference), a, distance);
  return solve_lambda(u, a, distance);
}

/// PC prior: Exponential(lambda) on the distance scale.
class PCPrior {
public:
  PCPrior(double lambda, DistanceFunction distance) : lambda_(lambda), distance_(std::move(distance)) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw DomainError("PC prior rate lambda must be positive");
  }

  double lambda() const noexcept { return lambda_; }
  const DistanceFunction& distance() const noexcept { return distance_; }
  const GroupModelSpec& spec() const noexcept { return distance_.spec(); }

  /// Density on the parameter scale: lambda exp(-lambda d) |dd/dparam|.
  double density(double param) const {
    const ParamPoint p = ParamPoint::from_param(spec(), param);
    if (p.degenerate(spec())) throw DomainError("PC prior density is unbounded at the degenerate boundary");
    if (p.base(spec())) return spec().uses_phi() ? 0.0 : lambda_ * distance_.derivative(param);
    const double d = distance_.at(p);
    return lambda_ * std::exp(-lambda_ * d) * std::abs(distance_.derivative(param));
  }

  /// log density on the internal scale t.
  double log_density_internal(double t) const {
    const auto dp = distance_.at_internal(t);
    if (!std::isfinite(dp.distance)) return -std::numeric_limits<double>::infinity();
    const double slope = std::abs(dp.d_internal);
    if (slope == 0.0) return -std::numeric_limits<double>::infinity();
    return std::log(lambda_) - lambda_ * dp.distance + std::log(slope);
  }

  /// 1 - exp(-lambda d(param)): P(rho < param), or P(phi > param) for OU.
  double cdf(double param) const {
    const double d = distance_(param);
    if (std::isinf(d)) return 1.0;
    return -std::expm1(-lambda_ * d);
  }

  double cdf_internal(double t) const {
    const double d = distance_.at_internal(t).distance;
    if (std::isinf(d)) return 1.0;
    return -std::expm1(-lambda_ * d);
  }

  double quantile_internal(double p) const {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("probability must lie in (0, 1)");
    return distance_.internal_at_distance(-std::log1p(-p) / lambda_);
  }

  double quantile(double p) const { return from_internal(spec(), quantile_internal(p)); }

private:
  double lambda_;
  DistanceFunction distance_;
};

inline double pc_density(const PCPrior& prior, double param) { return prior.density(param); }
inline double pc_cdf(const PCPrior& prior, double param) { return prior.cdf(param); }
inline double pc_quantile(const PCPrior& prior, double p) { return prior.quantile(p); }

/// Closed-form density for balanced designs (n groups of size m), written
/// with lambda' = lambda sqrt(n) and the per-group determinant |R|.
inline double pc_density_balanced(Family family, std::size_t n, std::size_t m, double lambda, double param) {
  if (n == 0 || m < 2) throw ConfigError("balanced closed form needs n >= 1 and m >= 2");
  const double mm = static_cast<double>(m);
  const double lp = lambda * std::sqrt(static_cast<double>(n));
  double log_det_r = 0.0;
  double half_dlog = 0.0;  // 0.5 |R|^{-1} |d|R|/d param|
  switch (family) {
    case Family::exchangeable: {
      const double rho = param;
      if (!(rho > 0.0 && rho < 1.0)) throw DomainError("rho must lie in (0, 1)");
      log_det_r = std::log1p((mm - 1.0) * rho) + (mm - 1.0) * std::log1p(-rho);
      half_dlog = 0.5 * (mm - 1.0) * (1.0 / (1.0 - rho) - 1.0 / (1.0 + (mm - 1.0) * rho));
      break;
    }
    case Family::ar1: {
      const double rho = param;
      if (!(rho > 0.0 && rho < 1.0)) throw DomainError("rho must lie in (0, 1)");
      log_det_r = (mm - 1.0) * std::log1p(-rho * rho);
      half_dlog = rho * (mm - 1.0) / (1.0 - rho * rho);
      break;
    }
    case Family::ou: {
      const double phi = param;
      if (!(phi > 0.0) || !std::isfinite(phi)) throw DomainError("phi must be positive and finite");
      const double e = std::exp(-2.0 * phi);
      log_det_r = (mm - 1.0) * std::log1p(-e);
      half_dlog = (mm - 1.0) * e / (-std::expm1(-2.0 * phi));
      break;
    }
  }
  const double root = std::sqrt(-log_det_r);
  return half_dlog * lp / root * std::exp(-lp * root);
}

/// Draws from the prior: E ~ Exponential(lambda) on the distance scale,
/// mapped back through d^{-1}. Deterministic for a given seed.
inline std::vector<double> pc_sample(const PCPrior& prior, std::size_t count, std::uint64_t seed) {
  if (count == 0) throw ConfigError("sample count must be at least 1");
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> expo(prior.lambda());
  std::vector<double> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(prior.distance().param_at_distance(expo(rng)));
  return out;
}

struct GridRow {
  double param = 0.0;
  double distance = 0.0;
  double density = 0.0;
  double cdf = 0.0;
};

/// Tabulates the prior on `grid_size` points ordered by increasing distance
/// from the base model. Points are equally spaced on the internal scale
/// between the 1e-10 and 1 - 1e-10 prior quantiles, and never touch either
/// end of the parameter domain.
inline std::vector<GridRow> density_grid(const PCPrior& prior, std::size_t grid_size) {
  if (grid_size < 2) throw ConfigError("grid size must be at least 2");
  const auto& spec = prior.spec();
  double t_near = prior.quantile_internal(1e-10);
  double t_far = prior.quantile_internal(1.0 - 1e-10);
  // keep rho strictly below 1 in double precision with distinct grid values
  if (!spec.uses_phi()) t_far = std::min(t_far, 30.0);
  else t_far = std::max(t_far, -700.0);

  std::vector<GridRow> rows;
  rows.reserve(grid_size);
  for (std::size_t i = 0; i < grid_size; ++i) {
    const double frac = static_cast<double>(i) / static_cast<double>(grid_size - 1);
    const double t = t_near + frac * (t_far - t_near);
    const ParamPoint p = ParamPoint::from_internal(spec, t);
    GridRow row;
    row.param = p.value;
    row.distance = prior.distance().at(p);
    row.density = prior.density(p.value);
    row.cdf = std::isinf(row.distance) ? 1.0 : -std::expm1(-prior.lambda() * row.distance);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace pcgroup::pcprior
