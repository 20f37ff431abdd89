#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pcgroup/corr.hpp"
#include "pcgroup/dataset.hpp"
#include "pcgroup/design.hpp"
#include "pcgroup/errors.hpp"

namespace pcgroup::simulate {

/// Synthetic grouped data y = X beta + theta, theta_j ~ N(0, sigma2 R_j(param)).
/// beta[0] is the intercept; the remaining entries multiply standard Gaussian
/// covariates named x1, x2, ...
struct SimConfig {
  GroupedDesign design;
  GroupModelSpec spec;
  double param = 0.0;
  double sigma2 = 1.0;
  std::vector<double> beta{0.0};
  std::uint64_t seed = 0;
};

/// Residual vector theta, stacked group by group, via Cholesky of sigma2 R_j.
inline Eigen::VectorXd simulate_residuals(const GroupModelSpec& spec, const GroupedDesign& design, double param,
                                          double sigma2, std::mt19937_64& rng) {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw DomainError("sigma2 must be positive");
  const ParamPoint p = ParamPoint::from_param(spec, param);
  if (p.degenerate(spec)) throw DomainError("cannot simulate at the degenerate end: correlation matrix is singular");
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd theta(static_cast<Eigen::Index>(design.total_size()));
  const double sd = std::sqrt(sigma2);
  for (std::size_t j = 0; j < design.n_groups(); ++j) {
    const auto m = static_cast<Eigen::Index>(design.group_size(j));
    Eigen::LLT<Eigen::MatrixXd> llt(corr::corr_matrix(spec, design, j, param));
    if (llt.info() != Eigen::Success) throw NumericError("correlation matrix is not positive definite");
    Eigen::VectorXd z(m);
    for (Eigen::Index i = 0; i < m; ++i) z[i] = normal(rng);
    const Eigen::VectorXd lz = llt.matrixL() * z;
    theta.segment(static_cast<Eigen::Index>(design.offset(j)), m) = sd * lz;
  }
  return theta;
}

inline Dataset simulate_dataset(const SimConfig& config) {
  check_compatible(config.spec, config.design);
  if (config.beta.empty()) throw ConfigError("beta needs at least the intercept");
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const auto m = static_cast<Eigen::Index>(config.design.total_size());
  const auto p = static_cast<Eigen::Index>(config.beta.size());
  Dataset data;
  data.design = config.design;
  data.x.resize(m, p);
  data.x.col(0).setOnes();
  for (Eigen::Index r = 0; r < m; ++r)
    for (Eigen::Index c = 1; c < p; ++c) data.x(r, c) = normal(rng);
  data.column_names.push_back("(Intercept)");
  for (Eigen::Index c = 1; c < p; ++c) data.column_names.push_back("x" + std::to_string(c));

  const Eigen::VectorXd beta = Eigen::Map<const Eigen::VectorXd>(config.beta.data(), p);
  data.y = data.x * beta + simulate_residuals(config.spec, config.design, config.param, config.sigma2, rng);
  return data;
}

}  // namespace pcgroup::simulate
