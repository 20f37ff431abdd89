#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pcgroup/design.hpp"
#include "pcgroup/errors.hpp"

// Within-group correlation and precision matrices of the exchangeable, AR1
// and OU group models, their log-determinants and derivatives.
//
// Every routine works group by group: the residual covariance is
// block-diagonal, so log|C| is the sum of the per-group terms. Balanced and
// unbalanced designs go through the same code.

namespace pcgroup::corr {

using Matrix = Eigen::MatrixXd;

enum class Method { closed_form, dense };

/// Cholesky log-determinant of a symmetric positive-definite matrix.
inline double cholesky_log_det(const Matrix& a) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) throw NumericError("Cholesky factorization failed: matrix not positive definite");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

namespace detail {

inline void check_group(const GroupedDesign& design, std::size_t j) {
  if (j >= design.n_groups())
    throw ConfigError("group index " + std::to_string(j) + " out of range (design has " +
                      std::to_string(design.n_groups()) + " groups)");
}

// Builds R_j without domain checks; the dense finite-difference path steps
// slightly outside [0,1) around rho = 0.
inline Matrix build_corr(const GroupModelSpec& spec, const GroupedDesign& design, std::size_t j, double param) {
  const auto m = static_cast<Eigen::Index>(design.group_size(j));
  Matrix r = Matrix::Identity(m, m);
  switch (spec.family) {
    case Family::exchangeable:
      for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index h = 0; h < m; ++h)
          if (i != h) r(i, h) = param;
      break;
    case Family::ar1:
      for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index h = 0; h < m; ++h)
          if (i != h) r(i, h) = std::pow(param, static_cast<double>(std::abs(i - h)));
      break;
    case Family::ou: {
      std::vector<double> pos(static_cast<std::size_t>(m));
      if (design.has_positions()) {
        pos = (*design.positions())[j];
      } else {
        check_compatible(spec, design);
        for (Eigen::Index i = 0; i < m; ++i) pos[static_cast<std::size_t>(i)] = static_cast<double>(i);
      }
      for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index h = 0; h < m; ++h)
          if (i != h) {
            const double delta = std::abs(pos[static_cast<std::size_t>(i)] - pos[static_cast<std::size_t>(h)]);
            r(i, h) = std::exp(-delta * param);
          }
      break;
    }
  }
  return r;
}

// log(1 + k rho) + k log(1 - rho). The two logs cancel to O(rho^2) near the
// base model, so small k*rho uses the power series
//   sum_{j>=2} [-(-k rho)^j - k rho^j] / j.
inline double exch_log_det(double k, const ParamPoint& p) {
  if (k == 0.0) return 0.0;
  const double rho = p.value;
  if (k * rho < 0.1) {
    const double a = k * rho;
    double sum = 0.0;
    double neg_pow = -a;  // (-k rho)^j
    double rho_pow = rho; // rho^j
    for (int j = 2; j < 60; ++j) {
      neg_pow *= -a;
      rho_pow *= rho;
      const double term = (-neg_pow - k * rho_pow) / j;
      sum += term;
      if (std::abs(neg_pow) + k * rho_pow <= 1e-18 * std::abs(sum)) break;
    }
    return sum;
  }
  return std::log1p(k * rho) + k * p.log_comp;
}

// d/drho and d/dt (t = logit rho) of exch_log_det.
inline double exch_dparam(double k, const ParamPoint& p) {
  if (k == 0.0) return 0.0;
  return -k * (k + 1.0) * p.value / ((1.0 + k * p.value) * p.comp);
}
inline double exch_dinternal(double k, const ParamPoint& p) {
  if (k == 0.0) return 0.0;
  return -k * (k + 1.0) * p.value * p.value / (1.0 + k * p.value);
}

inline double ar1_log_det(double k, const ParamPoint& p) {
  if (k == 0.0) return 0.0;
  if (p.value < 0.5) return k * std::log1p(-p.value * p.value);
  return k * (p.log_comp + std::log1p(p.value));
}
inline double ar1_dparam(double k, const ParamPoint& p) {
  if (k == 0.0) return 0.0;
  return -2.0 * k * p.value / (p.comp * (1.0 + p.value));
}
inline double ar1_dinternal(double k, const ParamPoint& p) {
  if (k == 0.0) return 0.0;
  return -2.0 * k * p.value * p.value / (1.0 + p.value);
}

// Markov product: |R| = prod_i (1 - exp(-2 delta_i phi)).
// log(1 - exp(-x)), accurate at both ends.
inline double log1mexp(double x) {
  return x > 0.6931471805599453 ? std::log1p(-std::exp(-x)) : std::log(-std::expm1(-x));
}

inline double ou_log_det_term(double delta, double phi) { return log1mexp(2.0 * delta * phi); }
inline double ou_dparam_term(double delta, double phi) { return 2.0 * delta / std::expm1(2.0 * delta * phi); }
inline double ou_dinternal_term(double delta, double phi) {
  const double x = 2.0 * delta * phi;
  if (x == 0.0) return 1.0;
  return x / std::expm1(x);
}

}  // namespace detail

/// log|R| and its derivatives, summed over groups.
struct LogDetTerms {
  double log_det = 0.0;
  double d_param = 0.0;     ///< d log|R| / d rho (or d phi)
  double d_internal = 0.0;  ///< d log|R| / d t, t = logit(rho) or log(phi)
};

inline LogDetTerms log_det_terms(const GroupModelSpec& spec, const GroupedDesign& design, const ParamPoint& p) {
  check_compatible(spec, design);
  LogDetTerms out;
  if (p.degenerate(spec)) {
    bool any_pairs = false;
    for (std::size_t m : design.group_sizes()) any_pairs = any_pairs || m > 1;
    if (any_pairs) {
      out.log_det = -std::numeric_limits<double>::infinity();
      out.d_param = spec.uses_phi() ? std::numeric_limits<double>::infinity()
                                    : -std::numeric_limits<double>::infinity();
      out.d_internal = out.d_param;
    }
    return out;
  }
  for (std::size_t j = 0; j < design.n_groups(); ++j) {
    const double k = static_cast<double>(design.group_size(j)) - 1.0;
    switch (spec.family) {
      case Family::exchangeable:
        out.log_det += detail::exch_log_det(k, p);
        out.d_param += detail::exch_dparam(k, p);
        out.d_internal += detail::exch_dinternal(k, p);
        break;
      case Family::ar1:
        out.log_det += detail::ar1_log_det(k, p);
        out.d_param += detail::ar1_dparam(k, p);
        out.d_internal += detail::ar1_dinternal(k, p);
        break;
      case Family::ou:
        if (std::isinf(p.value)) break;
        for (double delta : spacings(spec, design, j)) {
          out.log_det += detail::ou_log_det_term(delta, p.value);
          out.d_param += detail::ou_dparam_term(delta, p.value);
          out.d_internal += detail::ou_dinternal_term(delta, p.value);
        }
        break;
    }
  }
  return out;
}

/// Correlation matrix of group j (0-based).
inline Matrix corr_matrix(const GroupModelSpec& spec, const GroupedDesign& design, std::size_t j, double param) {
  detail::check_group(design, j);
  check_compatible(spec, design);
  ParamPoint::from_param(spec, param);
  return detail::build_corr(spec, design, j, param);
}

/// Sum over groups of log|R_j|, or -inf at the degenerate end (rho = 1, phi = 0).
inline double log_det(const GroupModelSpec& spec, const GroupedDesign& design, double param,
                      Method method = Method::closed_form) {
  const ParamPoint p = ParamPoint::from_param(spec, param);
  if (method == Method::closed_form || p.degenerate(spec)) return log_det_terms(spec, design, p).log_det;
  if (p.base(spec)) return 0.0;
  double sum = 0.0;
  for (std::size_t j = 0; j < design.n_groups(); ++j)
    sum += cholesky_log_det(detail::build_corr(spec, design, j, param));
  return sum;
}

/// d/d(param) of log_det. The dense method uses central differences.
inline double dlogdet_dparam(const GroupModelSpec& spec, const GroupedDesign& design, double param,
                             Method method = Method::closed_form) {
  const ParamPoint p = ParamPoint::from_param(spec, param);
  if (p.degenerate(spec)) throw DomainError("log-determinant derivative undefined at the degenerate end");
  if (method == Method::closed_form) return log_det_terms(spec, design, p).d_param;
  if (p.base(spec)) return 0.0;
  const double h = 1e-6 * std::max(1.0, std::abs(param));
  auto dense = [&](double x) {
    double s = 0.0;
    for (std::size_t j = 0; j < design.n_groups(); ++j) s += cholesky_log_det(detail::build_corr(spec, design, j, x));
    return s;
  };
  return (dense(param + h) - dense(param - h)) / (2.0 * h);
}

/// tau * R_j^{-1}. Exchangeable: closed-form dense inverse; AR1/OU: tridiagonal.
inline Matrix precision_matrix(const GroupModelSpec& spec, const GroupedDesign& design, std::size_t j,
                               double param, double tau) {
  detail::check_group(design, j);
  check_compatible(spec, design);
  if (!(tau > 0.0) || !std::isfinite(tau)) throw DomainError("precision tau must be positive");
  const ParamPoint p = ParamPoint::from_param(spec, param);
  if (p.degenerate(spec)) throw DomainError("precision matrix undefined at the degenerate end");
  const auto m = static_cast<Eigen::Index>(design.group_size(j));

  if (spec.family == Family::exchangeable) {
    const double rho = p.value;
    const double denom = -p.comp * (static_cast<double>(m - 1) * rho + 1.0);
    Matrix q = Matrix::Constant(m, m, rho);
    q.diagonal().setConstant(-(static_cast<double>(m - 2) * rho + 1.0));
    return (tau / denom) * q;
  }

  Matrix q = Matrix::Zero(m, m);
  if (m == 1) {
    q(0, 0) = tau;
    return q;
  }
  const auto gaps = spacings(spec, design, j);
  std::vector<double> r(gaps.size()), s(gaps.size());
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    if (spec.family == Family::ar1) {
      r[i] = p.value;
      s[i] = p.comp * (1.0 + p.value);
    } else {
      r[i] = std::exp(-gaps[i] * p.value);
      s[i] = -std::expm1(-2.0 * gaps[i] * p.value);
    }
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    double diag = 0.0;
    if (i == 0)
      diag = 1.0 / s[0];
    else if (i + 1 == m)
      diag = 1.0 / s[ui - 1];
    else
      diag = 1.0 / s[ui - 1] + r[ui] * r[ui] / s[ui];
    q(i, i) = diag;
    if (i + 1 < m) q(i, i + 1) = q(i + 1, i) = -r[ui] / s[ui];
  }
  return tau * q;
}

/// In-place block <- R_j^{-1} * block, without forming R_j or its inverse.
inline void apply_inverse(const GroupModelSpec& spec, const GroupedDesign& design, std::size_t j,
                          const ParamPoint& p, Eigen::Ref<Matrix> block) {
  const auto m = block.rows();
  if (m == 1 || p.base(spec)) return;
  if (spec.family == Family::exchangeable) {
    // R^{-1} = (I - c 11') / (1 - rho),  c = rho / (1 + (m-1) rho)
    const double c = p.value / (1.0 + static_cast<double>(m - 1) * p.value);
    const Eigen::RowVectorXd sums = block.colwise().sum();
    block.rowwise() -= c * sums;
    block /= p.comp;
    return;
  }
  const auto gaps = spacings(spec, design, j);
  const std::size_t k = gaps.size();
  std::vector<double> r(k), s(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (spec.family == Family::ar1) {
      r[i] = p.value;
      s[i] = p.comp * (1.0 + p.value);
    } else {
      r[i] = std::exp(-gaps[i] * p.value);
      s[i] = -std::expm1(-2.0 * gaps[i] * p.value);
    }
  }
  const Matrix v = block;
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    double diag = 0.0;
    if (i == 0)
      diag = 1.0 / s[0];
    else if (i + 1 == m)
      diag = 1.0 / s[ui - 1];
    else
      diag = 1.0 / s[ui - 1] + r[ui] * r[ui] / s[ui];
    block.row(i) = diag * v.row(i);
    if (i > 0) block.row(i) -= (r[ui - 1] / s[ui - 1]) * v.row(i - 1);
    if (i + 1 < m) block.row(i) -= (r[ui] / s[ui]) * v.row(i + 1);
  }
}

}  // namespace pcgroup::corr
