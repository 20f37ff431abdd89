#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "pcgroup/corr.hpp"
#include "pcgroup/dataset.hpp"
#include "pcgroup/design.hpp"
#include "pcgroup/errors.hpp"
#include "pcgroup/gaussian.hpp"
#include "pcgroup/gumbel.hpp"
#include "pcgroup/numeric.hpp"
#include "pcgroup/pcprior.hpp"

// Marginal likelihood of the Gaussian one-factor model
//
//   y = X beta + theta,  theta ~ N(0, tau^{-1} blockdiag R_j(param)),
//   beta ~ N(0, kappa^2 I),  tau ~ Gumbel2(psi),  param ~ PC prior.
//
// beta and theta are integrated analytically; (log tau, t) is integrated on
// a tensor grid with trapezoid weights, accumulated in log space.

namespace pcgroup::inference {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct HyperPriors {
  pcprior::PCPrior correlation;
  double psi = 0.0;              ///< Gumbel type-2 rate on sigma
  double beta_precision = 1e-6;  ///< kappa^{-2}
};

struct GridConfig {
  std::size_t n_log_tau = 201;
  std::size_t n_internal = 201;
  double log_tau_lo = -12.0;
  double log_tau_hi = 12.0;
  double internal_lo = -12.0;  ///< logit(rho) or log(phi)
  double internal_hi = 12.0;
  /// Re-grid on the box holding all cells within `refine_drop` log units of the peak.
  bool refine = true;
  double refine_drop = 30.0;
  double boundary_threshold = 0.01;
  /// OU: report correlation at this distance.
  double reference_distance = 1.0;
  unsigned threads = 0;  ///< 0 = hardware concurrency
};

struct PosteriorGrid {
  Family family = Family::exchangeable;
  double reference_distance = 1.0;
  std::vector<double> log_tau;
  std::vector<double> internal;
  MatrixXd weights;  ///< rows: log_tau nodes, cols: internal nodes; sums to 1
};

struct Summary {
  double mean = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
};

struct CoefSummary {
  std::string name;
  double mean = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
};

struct Diagnostics {
  std::string family;
  std::size_t n_log_tau = 0;
  std::size_t n_internal = 0;
  double log_tau_lo = 0.0, log_tau_hi = 0.0;
  double internal_lo = 0.0, internal_hi = 0.0;
  bool refined = false;
  double boundary_mass = 0.0;
  bool boundary_warning = false;
  double lambda = 0.0;
  double psi = 0.0;
  double beta_precision = 0.0;
  std::string data_fingerprint;
  std::string prior_fingerprint;
};

struct FitResult {
  double log_mlik = 0.0;
  Summary rho;
  Summary sigma2;
  std::vector<CoefSummary> beta;
  Diagnostics diagnostics;
  PosteriorGrid grid;
};

struct PosteriorSummaries {
  Summary rho;
  Summary sigma2;
};

/// Fingerprint of the prior components shared by every model in a comparison:
/// the distance-scale rate, the precision prior and the fixed-effect prior.
inline std::string prior_fingerprint(const HyperPriors& priors) {
  pcgroup::detail::Fnv1a h;
  h.value(priors.correlation.lambda());
  h.value(priors.psi);
  h.value(priors.beta_precision);
  return h.hex();
}

namespace detail {

// [X y]' R^{-1} [X y] and log|R| at one correlation value.
struct ColumnStats {
  double log_det = 0.0;
  MatrixXd gram;  // (p+1) x (p+1)
};

inline ColumnStats column_stats(const Dataset& data, const GroupModelSpec& spec, const ParamPoint& p) {
  const auto n_coef = data.x.cols();
  ColumnStats out;
  out.log_det = corr::log_det_terms(spec, data.design, p).log_det;
  out.gram = MatrixXd::Zero(n_coef + 1, n_coef + 1);
  MatrixXd block;
  for (std::size_t j = 0; j < data.design.n_groups(); ++j) {
    const auto off = static_cast<Eigen::Index>(data.design.offset(j));
    const auto m = static_cast<Eigen::Index>(data.design.group_size(j));
    block.resize(m, n_coef + 1);
    block.leftCols(n_coef) = data.x.middleRows(off, m);
    block.col(n_coef) = data.y.segment(off, m);
    MatrixXd solved = block;
    corr::apply_inverse(spec, data.design, j, p, solved);
    out.gram.noalias() += block.transpose() * solved;
  }
  return out;
}

struct CellEval {
  double log_lik = 0.0;
  VectorXd beta_mean;
  VectorXd beta_var;
};

inline CellEval cell(const ColumnStats& s, double log_tau, double beta_precision, std::size_t m_total) {
  const auto p = s.gram.rows() - 1;
  const double tau = std::exp(log_tau);
  MatrixXd a = tau * s.gram.topLeftCorner(p, p);
  a.diagonal().array() += beta_precision;
  const VectorXd b = tau * s.gram.topRightCorner(p, 1);
  Eigen::LLT<MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw NumericError("fixed-effect posterior precision is not positive definite");
  const VectorXd mean = llt.solve(b);
  const double logdet_a = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double quad = tau * s.gram(p, p) - b.dot(mean);
  const double m = static_cast<double>(m_total);
  CellEval out;
  out.log_lik = -0.5 * m * std::log(2.0 * std::numbers::pi) + 0.5 * m * log_tau - 0.5 * s.log_det +
                0.5 * static_cast<double>(p) * std::log(beta_precision) - 0.5 * logdet_a - 0.5 * quad;
  out.beta_mean = mean;
  out.beta_var = llt.solve(MatrixXd::Identity(p, p)).diagonal();
  return out;
}

inline std::vector<double> axis(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

inline std::vector<double> log_trapezoid_weights(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> w(n, 0.0);
  if (n == 1) return w;
  const double h = x[1] - x[0];
  for (std::size_t i = 0; i < n; ++i) w[i] = std::log((i == 0 || i + 1 == n) ? 0.5 * h : h);
  return w;
}

struct GridEval {
  std::vector<double> log_tau;
  std::vector<double> internal;
  MatrixXd log_f;      // log integrand per node
  MatrixXd beta_mean;  // p x (n_tau * n_t), cell index i + n_tau * k
  MatrixXd beta_var;
};

template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& body) {
  unsigned nt = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
  nt = static_cast<unsigned>(std::min<std::size_t>(nt, n));
  if (nt <= 1) {
    for (std::size_t k = 0; k < n; ++k) body(k);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(nt);
  for (unsigned w = 0; w < nt; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t k = w; k < n; k += nt) body(k);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline GridEval evaluate_grid(const Dataset& data, const GroupModelSpec& spec, const HyperPriors& priors,
                              std::vector<double> log_tau, std::vector<double> internal, unsigned threads) {
  GridEval g;
  g.log_tau = std::move(log_tau);
  g.internal = std::move(internal);
  const std::size_t nu = g.log_tau.size(), nt = g.internal.size();
  const auto p = data.x.cols();
  g.log_f.resize(static_cast<Eigen::Index>(nu), static_cast<Eigen::Index>(nt));
  g.beta_mean.resize(p, static_cast<Eigen::Index>(nu * nt));
  g.beta_var.resize(p, static_cast<Eigen::Index>(nu * nt));

  std::vector<double> log_prior_tau(nu);
  for (std::size_t i = 0; i < nu; ++i) log_prior_tau[i] = gumbel2_log_density_log_tau(g.log_tau[i], priors.psi);

  parallel_for(nt, threads, [&](std::size_t k) {
    const double t = g.internal[k];
    const double log_prior_t = priors.correlation.log_density_internal(t);
    const ParamPoint pp = ParamPoint::from_internal(spec, t);
    const ColumnStats stats = column_stats(data, spec, pp);
    for (std::size_t i = 0; i < nu; ++i) {
      const auto idx = static_cast<Eigen::Index>(i + nu * k);
      const CellEval c = cell(stats, g.log_tau[i], priors.beta_precision, data.size());
      g.log_f(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = c.log_lik + log_prior_tau[i] + log_prior_t;
      g.beta_mean.col(idx) = c.beta_mean;
      g.beta_var.col(idx) = c.beta_var;
    }
  });
  return g;
}

inline MatrixXd log_weighted(const GridEval& g) {
  const auto wu = log_trapezoid_weights(g.log_tau);
  const auto wt = log_trapezoid_weights(g.internal);
  MatrixXd lw = g.log_f;
  for (Eigen::Index k = 0; k < lw.cols(); ++k)
    for (Eigen::Index i = 0; i < lw.rows(); ++i)
      lw(i, k) += wu[static_cast<std::size_t>(i)] + wt[static_cast<std::size_t>(k)];
  return lw;
}

// Mass beyond each grid edge, assuming the integrand keeps decaying
// exponentially at the rate seen between the last two nodes.
inline std::vector<double> edge_tails(const GridEval& g) {
  std::vector<double> out;
  const auto nu = static_cast<Eigen::Index>(g.log_tau.size());
  const auto nt = static_cast<Eigen::Index>(g.internal.size());
  if (nu < 2 || nt < 2) return out;
  const auto wu = log_trapezoid_weights(g.log_tau);
  const auto wt = log_trapezoid_weights(g.internal);
  const double hu = g.log_tau[1] - g.log_tau[0];
  const double ht = g.internal[1] - g.internal[0];
  auto tail = [&](double edge, double inner, double h, double log_w) {
    if (!std::isfinite(edge)) return;
    const double slope = (inner - edge) / h;
    if (!(slope > 0.0) || !std::isfinite(slope)) return;
    out.push_back(edge - std::log(slope) + log_w);
  };
  for (Eigen::Index i = 0; i < nu; ++i) {
    const double w = wu[static_cast<std::size_t>(i)];
    tail(g.log_f(i, 0), g.log_f(i, 1), ht, w);
    tail(g.log_f(i, nt - 1), g.log_f(i, nt - 2), ht, w);
  }
  for (Eigen::Index k = 0; k < nt; ++k) {
    const double w = wt[static_cast<std::size_t>(k)];
    tail(g.log_f(0, k), g.log_f(1, k), hu, w);
    tail(g.log_f(nu - 1, k), g.log_f(nu - 2, k), hu, w);
  }
  return out;
}

// Hazen-style quantile of a discrete distribution on increasing nodes x:
// node k sits at cumulative mass C_{k-1} + w_k / 2; zero-weight nodes are skipped.
inline double grid_quantile(const std::vector<double>& x, const std::vector<double>& w, double q) {
  std::vector<double> xs, fs;
  double cum = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!(w[k] > 0.0)) continue;
    xs.push_back(x[k]);
    fs.push_back(cum + 0.5 * w[k]);
    cum += w[k];
  }
  if (xs.empty()) throw NumericError("posterior grid has no mass");
  for (double& f : fs) f /= cum;
  if (q <= fs.front()) return xs.front();
  if (q >= fs.back()) return xs.back();
  const auto it = std::upper_bound(fs.begin(), fs.end(), q);
  const auto k = static_cast<std::size_t>(it - fs.begin());
  const double frac = (q - fs[k - 1]) / (fs[k] - fs[k - 1]);
  return xs[k - 1] + frac * (xs[k] - xs[k - 1]);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Quantile of the Gaussian mixture sum_c w_c N(mu_c, var_c).
inline double mixture_quantile(const std::vector<double>& w, const std::vector<double>& mu,
                               const std::vector<double>& var, double q) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t c = 0; c < w.size(); ++c) {
    const double s = std::sqrt(var[c]);
    lo = std::min(lo, mu[c] - 12.0 * s);
    hi = std::max(hi, mu[c] + 12.0 * s);
  }
  auto cdf = [&](double x) {
    double acc = 0.0;
    for (std::size_t c = 0; c < w.size(); ++c) acc += w[c] * normal_cdf((x - mu[c]) / std::sqrt(var[c]));
    return acc;
  };
  for (int it = 0; it < 200 && hi - lo > 1e-12 * std::max(1.0, std::abs(lo) + std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (cdf(mid) < q ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Marginal posterior summaries of the correlation (rho scale; OU reported as
/// the correlation at the reference distance) and of sigma^2 = 1/tau.
inline PosteriorSummaries posterior_summaries(const PosteriorGrid& grid) {
  const auto nu = grid.log_tau.size(), nt = grid.internal.size();
  if (static_cast<std::size_t>(grid.weights.rows()) != nu || static_cast<std::size_t>(grid.weights.cols()) != nt)
    throw ConfigError("posterior grid weights do not match its axes");
  const double total = grid.weights.sum();
  if (!(total > 0.0)) throw NumericError("posterior grid has no mass");

  std::vector<double> wu(nu), wt(nt);
  for (std::size_t i = 0; i < nu; ++i) wu[i] = grid.weights.row(static_cast<Eigen::Index>(i)).sum() / total;
  for (std::size_t k = 0; k < nt; ++k) wt[k] = grid.weights.col(static_cast<Eigen::Index>(k)).sum() / total;

  const GroupModelSpec spec{grid.family, true};
  const bool ou = grid.family == Family::ou;
  auto to_rho = [&](double t) {
    const double v = from_internal(spec, t);
    return ou ? ou_correlation_at(v, grid.reference_distance) : v;
  };

  PosteriorSummaries out;
  for (std::size_t k = 0; k < nt; ++k) out.rho.mean += wt[k] * to_rho(grid.internal[k]);
  const double t_lo = detail::grid_quantile(grid.internal, wt, 0.025);
  const double t_hi = detail::grid_quantile(grid.internal, wt, 0.975);
  // OU correlation decreases in log(phi)
  out.rho.q025 = ou ? to_rho(t_hi) : to_rho(t_lo);
  out.rho.q975 = ou ? to_rho(t_lo) : to_rho(t_hi);

  for (std::size_t i = 0; i < nu; ++i) out.sigma2.mean += wu[i] * std::exp(-grid.log_tau[i]);
  out.sigma2.q025 = std::exp(-detail::grid_quantile(grid.log_tau, wu, 0.975));
  out.sigma2.q975 = std::exp(-detail::grid_quantile(grid.log_tau, wu, 0.025));
  return out;
}

/// log p(y | tau, param) via the per-group precisions (Woodbury form).
inline double log_likelihood(const Dataset& data, const GroupModelSpec& spec, double param, double tau,
                             double beta_precision) {
  data.validate();
  const ParamPoint p = ParamPoint::from_param(spec, param);
  if (p.degenerate(spec)) throw DomainError("likelihood undefined at the degenerate end");
  const auto stats = detail::column_stats(data, spec, p);
  return detail::cell(stats, std::log(tau), beta_precision, data.size()).log_lik;
}

/// Same quantity from the dense M x M covariance tau^{-1} R + kappa^2 X X'.
inline double log_likelihood_dense(const Dataset& data, const GroupModelSpec& spec, double param, double tau,
                                   double beta_precision) {
  data.validate();
  // a vague fixed-effect prior leaves cov badly conditioned: assemble and factor it in long double
  using MatL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  const auto m = static_cast<Eigen::Index>(data.size());
  MatL cov = MatL::Zero(m, m);
  for (std::size_t j = 0; j < data.design.n_groups(); ++j) {
    const auto off = static_cast<Eigen::Index>(data.design.offset(j));
    const auto mj = static_cast<Eigen::Index>(data.design.group_size(j));
    cov.block(off, off, mj, mj) = corr::corr_matrix(spec, data.design, j, param).cast<long double>() / (long double)tau;
  }
  const MatL x = data.x.cast<long double>();
  cov.noalias() += (x * x.transpose()) / (long double)beta_precision;
  return gaussian_log_density<long double>(data.y, cov);
}

/// Fits one group model: log evidence, posterior grid and summaries.
inline FitResult log_marginal_likelihood(const Dataset& data, const GroupModelSpec& spec, const HyperPriors& priors,
                                         const GridConfig& config = {}) {
  data.validate();
  check_compatible(spec, data.design);
  if (!(priors.correlation.spec().family == spec.family))
    throw ConfigError("correlation prior was built for a different group model");
  if (!(priors.correlation.distance().design() == data.design))
    throw ConfigError("correlation prior was built for a different design");
  if (!(priors.psi > 0.0)) throw DomainError("precision prior scale psi must be positive");
  if (!(priors.beta_precision > 0.0)) throw DomainError("fixed-effect prior precision must be positive");
  if (config.n_log_tau < 3 || config.n_internal < 3) throw ConfigError("grid needs at least 3 nodes per axis");
  if (!(config.log_tau_lo < config.log_tau_hi) || !(config.internal_lo < config.internal_hi))
    throw ConfigError("grid window bounds must be increasing");
  {
    // singular X'X makes the fixed effects unidentified
    Eigen::FullPivLU<MatrixXd> lu(data.x.transpose() * data.x);
    if (lu.rank() < data.x.cols()) throw NumericError("covariate matrix X'X is singular");
  }

  auto g = detail::evaluate_grid(data, spec, priors, detail::axis(config.log_tau_lo, config.log_tau_hi, config.n_log_tau),
                                 detail::axis(config.internal_lo, config.internal_hi, config.n_internal), config.threads);
  bool refined = false;
  if (config.refine) {
    const MatrixXd lw = detail::log_weighted(g);
    const double peak = lw.maxCoeff();
    if (!std::isfinite(peak)) throw NumericError("log evidence integrand is not finite anywhere on the grid");
    Eigen::Index i0 = lw.rows(), i1 = -1, k0 = lw.cols(), k1 = -1;
    for (Eigen::Index k = 0; k < lw.cols(); ++k)
      for (Eigen::Index i = 0; i < lw.rows(); ++i)
        if (lw(i, k) >= peak - config.refine_drop) {
          i0 = std::min(i0, i);
          i1 = std::max(i1, i);
          k0 = std::min(k0, k);
          k1 = std::max(k1, k);
        }
    i0 = std::max<Eigen::Index>(0, i0 - 1);
    k0 = std::max<Eigen::Index>(0, k0 - 1);
    i1 = std::min<Eigen::Index>(lw.rows() - 1, i1 + 1);
    k1 = std::min<Eigen::Index>(lw.cols() - 1, k1 + 1);
    if (i0 > 0 || k0 > 0 || i1 < lw.rows() - 1 || k1 < lw.cols() - 1) {
      const auto ui0 = static_cast<std::size_t>(i0), ui1 = static_cast<std::size_t>(i1);
      const auto uk0 = static_cast<std::size_t>(k0), uk1 = static_cast<std::size_t>(k1);
      g = detail::evaluate_grid(data, spec, priors, detail::axis(g.log_tau[ui0], g.log_tau[ui1], config.n_log_tau),
                                detail::axis(g.internal[uk0], g.internal[uk1], config.n_internal), config.threads);
      refined = true;
    }
  }

  const MatrixXd lw = detail::log_weighted(g);
  std::vector<double> terms(lw.data(), lw.data() + lw.size());
  const double log_grid = numeric::log_sum_exp(terms);
  if (!std::isfinite(log_grid)) throw NumericError("log marginal likelihood is not finite");
  const auto tails = detail::edge_tails(g);
  terms.insert(terms.end(), tails.begin(), tails.end());

  FitResult fit;
  fit.log_mlik = numeric::log_sum_exp(terms);

  fit.grid.family = spec.family;
  fit.grid.reference_distance = config.reference_distance;
  fit.grid.log_tau = g.log_tau;
  fit.grid.internal = g.internal;
  fit.grid.weights = (lw.array() - log_grid).exp().matrix();
  fit.grid.weights /= fit.grid.weights.sum();

  const auto summaries = posterior_summaries(fit.grid);
  fit.rho = summaries.rho;
  fit.sigma2 = summaries.sigma2;

  // fixed effects: mixture over grid cells of the conditional Gaussians
  std::vector<double> w, mu, var;
  std::vector<Eigen::Index> cells;
  for (Eigen::Index c = 0; c < fit.grid.weights.size(); ++c)
    if (fit.grid.weights.data()[c] > 1e-15) cells.push_back(c);
  double wsum = 0.0;
  for (auto c : cells) wsum += fit.grid.weights.data()[c];
  for (Eigen::Index b = 0; b < data.x.cols(); ++b) {
    w.clear();
    mu.clear();
    var.clear();
    CoefSummary s;
    s.name = data.column_names[static_cast<std::size_t>(b)];
    for (auto c : cells) {
      const double wc = fit.grid.weights.data()[c] / wsum;
      w.push_back(wc);
      mu.push_back(g.beta_mean(b, c));
      var.push_back(g.beta_var(b, c));
      s.mean += wc * g.beta_mean(b, c);
    }
    s.q025 = detail::mixture_quantile(w, mu, var, 0.025);
    s.q975 = detail::mixture_quantile(w, mu, var, 0.975);
    fit.beta.push_back(std::move(s));
  }

  auto& dg = fit.diagnostics;
  dg.family = std::string(family_name(spec.family));
  dg.n_log_tau = g.log_tau.size();
  dg.n_internal = g.internal.size();
  dg.log_tau_lo = g.log_tau.front();
  dg.log_tau_hi = g.log_tau.back();
  dg.internal_lo = g.internal.front();
  dg.internal_hi = g.internal.back();
  dg.refined = refined;
  const auto& wg = fit.grid.weights;
  double edge = wg.row(0).sum() + wg.row(wg.rows() - 1).sum() + wg.col(0).sum() + wg.col(wg.cols() - 1).sum();
  edge -= wg(0, 0) + wg(0, wg.cols() - 1) + wg(wg.rows() - 1, 0) + wg(wg.rows() - 1, wg.cols() - 1);
  dg.boundary_mass = edge;
  dg.boundary_warning = edge >= config.boundary_threshold;
  dg.lambda = priors.correlation.lambda();
  dg.psi = priors.psi;
  dg.beta_precision = priors.beta_precision;
  dg.data_fingerprint = fingerprint(data);
  dg.prior_fingerprint = prior_fingerprint(priors);
  return fit;
}

/// Kass-Raftery evidence category for |log BF|, read on the 2 log BF scale.
inline std::string kass_raftery_category(double log_bf) {
  const double two = 2.0 * std::abs(log_bf);
  if (two < 2.0) return "not worth more than a bare mention";
  if (two < 6.0) return "positive evidence";
  if (two < 10.0) return "strong evidence";
  return "very strong evidence";
}

struct BayesFactor {
  double log_bf = 0.0;  ///< log p(y | A) - log p(y | B)
  std::string category;
};

inline BayesFactor bayes_factor(const FitResult& a, const FitResult& b) {
  if (a.diagnostics.data_fingerprint != b.diagnostics.data_fingerprint)
    throw ConfigError("Bayes factor needs both fits on the same dataset (fingerprint mismatch)");
  BayesFactor out;
  out.log_bf = a.log_mlik - b.log_mlik;
  out.category = kass_raftery_category(out.log_bf);
  return out;
}

}  // namespace pcgroup::inference
