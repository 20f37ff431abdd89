#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace pcgroup::numeric {

/// log(sum(exp(x))) without overflow; -inf for an empty or all -inf input.
inline double log_sum_exp(std::span<const double> x) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : x) mx = std::max(mx, v);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double v : x) s += std::exp(v - mx);
  return mx + std::log(s);
}

inline double log_add_exp(double a, double b) {
  if (a < b) std::swap(a, b);
  if (a == -std::numeric_limits<double>::infinity()) return a;
  return a + std::log1p(std::exp(b - a));
}

/// Root of a nondecreasing f on the bracket [lo, hi] with f(lo) <= 0 <= f(hi).
///
/// Bisection narrows the bracket, then Illinois-modified secant steps polish
/// the root. Stops once |f| <= ftol or the bracket collapses to a few ulps;
/// returns the iterate with the smallest |f| seen.
template <class F>
double solve_increasing(F&& f, double lo, double hi, double ftol, int max_iter = 400) {
  double a = lo, b = hi;
  double fa = f(a), fb = f(b);
  if (fa >= 0.0) return a;
  if (fb <= 0.0) return b;
  double best = std::abs(fa) < std::abs(fb) ? a : b;
  double best_f = std::min(std::abs(fa), std::abs(fb));
  int side = 0;

  for (int it = 0; it < max_iter; ++it) {
    const double width = b - a;
    if (width <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::max(std::abs(a), std::abs(b))))
      break;
    double x;
    const bool polish = width < 1e-3 * (1.0 + std::abs(a)) && std::isfinite(fa) && std::isfinite(fb);
    if (polish) {
      x = b - fb * (b - a) / (fb - fa);
      if (!(x > a && x < b)) x = 0.5 * (a + b);
    } else {
      x = 0.5 * (a + b);
    }
    const double fx = f(x);
    if (std::abs(fx) < best_f) {
      best_f = std::abs(fx);
      best = x;
    }
    if (best_f <= ftol) break;
    if (fx < 0.0) {
      a = x;
      fa = fx;
      if (polish && side == -1) fb *= 0.5;
      side = -1;
    } else {
      b = x;
      fb = fx;
      if (polish && side == 1) fa *= 0.5;
      side = 1;
    }
  }
  return best;
}

}  // namespace pcgroup::numeric
