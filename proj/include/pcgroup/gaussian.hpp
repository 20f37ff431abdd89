#pragma once

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "pcgroup/errors.hpp"

namespace pcgroup {

/// KL divergence KLD(N(0, c) || N(0, c0)) between zero-mean Gaussians:
///   0.5 * [tr(c0^{-1} c) - M - log(|c| / |c0|)].
inline double kld_gaussian(const Eigen::MatrixXd& c, const Eigen::MatrixXd& c0) {
  if (c.rows() != c.cols() || c0.rows() != c0.cols() || c.rows() != c0.rows())
    throw ConfigError("KLD needs two square matrices of the same size");
  Eigen::LLT<Eigen::MatrixXd> l(c), l0(c0);
  if (l.info() != Eigen::Success || l0.info() != Eigen::Success)
    throw NumericError("KLD: covariance matrix is not positive definite");
  const Eigen::MatrixXd l0c = l0.matrixL().solve(c);
  const Eigen::MatrixXd whitened = l0.matrixL().solve(l0c.transpose());
  const double trace = whitened.trace();
  const double logdet = 2.0 * l.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double logdet0 = 2.0 * l0.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return 0.5 * (trace - static_cast<double>(c.rows()) - (logdet - logdet0));
}

/// log N(y; 0, cov) by dense Cholesky, carried out in Scalar.
template <typename Scalar = double>
double gaussian_log_density(const Eigen::VectorXd& y, const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& cov) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericError("covariance matrix is not positive definite");
  const Vec z = llt.matrixL().solve(y.template cast<Scalar>());
  Scalar logdet = 0;
  for (Eigen::Index i = 0; i < cov.rows(); ++i) logdet += 2 * std::log(llt.matrixLLT()(i, i));
  const Scalar n = static_cast<Scalar>(y.size());
  return static_cast<double>(-0.5 * (n * std::log(2 * std::numbers::pi_v<Scalar>) + logdet + z.squaredNorm()));
}

}  // namespace pcgroup
