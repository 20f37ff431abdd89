#pragma once

#include <cmath>

#include "pcgroup/errors.hpp"

// Gumbel type-2 prior on a Gaussian precision tau: the PC prior for the
// total standard deviation sigma = tau^{-1/2}, which is Exponential(psi).
//   pi(tau) = (psi / 2) tau^{-3/2} exp(-psi tau^{-1/2})

namespace pcgroup {

inline double gumbel2_log_density(double tau, double psi) {
  if (!(tau > 0.0) || !(psi > 0.0)) throw DomainError("Gumbel type-2 density needs tau > 0 and psi > 0");
  return std::log(0.5 * psi) - 1.5 * std::log(tau) - psi / std::sqrt(tau);
}

/// Same density expressed on u = log(tau), Jacobian included.
inline double gumbel2_log_density_log_tau(double log_tau, double psi) {
  if (!(psi > 0.0)) throw DomainError("Gumbel type-2 density needs psi > 0");
  return std::log(0.5 * psi) - 0.5 * log_tau - psi * std::exp(-0.5 * log_tau);
}

/// psi such that P(sigma > u_sigma) = alpha_sigma.
inline double solve_psi(double u_sigma, double alpha_sigma) {
  if (!(u_sigma > 0.0)) throw DomainError("U_sigma must be positive");
  if (!(alpha_sigma > 0.0 && alpha_sigma < 1.0)) throw DomainError("alpha_sigma must lie in (0, 1)");
  return -std::log(alpha_sigma) / u_sigma;
}

}  // namespace pcgroup
