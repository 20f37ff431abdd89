// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "cli_runner.hpp"
#include "oracles.hpp"
#include "pcgroup/pcgroup.hpp"

using namespace pcgroup;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

const GroupModelSpec kExch{Family::exchangeable, false};
const GroupModelSpec kAr1{Family::ar1, false};
const GroupModelSpec kOuUnit{Family::ou, true};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

pcprior::PCPrior median_prior(const GroupModelSpec& spec, const GroupedDesign& d, double median) {
  pcprior::DistanceFunction df(spec, d);
  return pcprior::PCPrior(pcprior::solve_lambda_correlation(median, 0.5, df), df);
}

GroupedDesign transect_design() {
  std::vector<std::size_t> sizes;
  for (std::size_t j = 0; j < 38; ++j) sizes.push_back(7 + j % 4);
  return GroupedDesign(sizes);
}

Dataset simulated(const GroupModelSpec& spec, const GroupedDesign& d, double param, std::uint64_t seed) {
  simulate::SimConfig cfg;
  cfg.design = d;
  cfg.spec = spec;
  cfg.param = param;
  cfg.sigma2 = 1.0;
  cfg.beta = {1.0, 0.5};
  cfg.seed = seed;
  return simulate::simulate_dataset(cfg);
}

inference::HyperPriors shared_priors(const GroupModelSpec& spec, const GroupedDesign& d, double median) {
  const double lambda = pcprior::solve_lambda(median, 0.5, pcprior::DistanceFunction(kExch, d));
  return {pcprior::PCPrior(lambda, pcprior::DistanceFunction(spec, d)), solve_psi(1.0 / 0.31, 0.01), 1e-6};
}

Outcome determinant_oracle() {
  double worst = 0.0;
  std::size_t cases = 0;
  for (const auto& design : oracle::small_designs(4, 10)) {
    const auto irregular = oracle::with_irregular_positions(design, 17);
    for (int k = 1; k <= 19; ++k) {
      const double rho = 0.05 * k;
      for (const auto& [spec, d, param] :
           {std::tuple{kExch, design, rho}, std::tuple{kAr1, design, rho}, std::tuple{kOuUnit, design, -std::log(rho)},
            std::tuple{GroupModelSpec{Family::ou, false}, irregular, -std::log(rho)}}) {
        double dense = 0.0;
        for (std::size_t j = 0; j < d.n_groups(); ++j)
          dense += corr::cholesky_log_det(oracle::dense_corr(spec.family, d, j, param));
        worst = std::max(worst, std::abs(corr::log_det(spec, d, param) - dense));
        ++cases;
      }
    }
  }
  return {worst <= 1e-10, std::to_string(cases) + " cases, max abs error " + num(worst) + " (tol 1e-10)"};
}

Outcome kld_oracle() {
  double worst = 0.0;
  std::size_t cases = 0;
  for (const auto& design : oracle::small_designs(4, 10)) {
    const auto mm = static_cast<Eigen::Index>(design.total_size());
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(mm, mm);
    const auto irregular = oracle::with_irregular_positions(design, 29);
    for (int k = 1; k <= 19; ++k) {
      const double rho = 0.05 * k;
      for (const auto& [spec, d, param] :
           {std::tuple{kExch, design, rho}, std::tuple{kAr1, design, rho}, std::tuple{kOuUnit, design, -std::log(rho)},
            std::tuple{GroupModelSpec{Family::ou, false}, irregular, -std::log(rho)}}) {
        const double dist = pcprior::distance(spec, d, param);
        const double kld = kld_gaussian(oracle::block_diag(spec.family, d, param), eye);
        worst = std::max(worst, std::abs(dist * dist - 2.0 * kld));
        ++cases;
      }
    }
  }
  return {worst <= 1e-10, std::to_string(cases) + " cases (M <= 40), max |d^2 - 2 KLD| " + num(worst) + " (tol 1e-10)"};
}

Outcome prior_normalization() {
  double worst = 0.0;
  for (const auto& d : {GroupedDesign::balanced(6, 50), transect_design()})
    for (const auto& spec : {kExch, kAr1, kOuUnit})
      for (double median : {0.1, 0.5, 0.9}) {
        const auto prior = median_prior(spec, d, median);
        const double lo = -25.0, hi = 25.0;
        const double body = oracle::integrate(
            [&](double t) { return std::exp(prior.log_density_internal(t)); }, lo, hi, 1e-13, 30);
        // tails integrate the exponential exactly on the distance scale
        const double c_lo = prior.cdf_internal(lo), c_hi = prior.cdf_internal(hi);
        const double mass = body + std::min(c_lo, c_hi) + (1.0 - std::max(c_lo, c_hi));
        worst = std::max(worst, std::abs(mass - 1.0));
      }
  return {worst <= 1e-6, "18 priors, max |mass - 1| " + num(worst) + " (tol 1e-6)"};
}

Outcome scaling_round_trip() {
  double worst = 0.0;
  for (const auto& d : {GroupedDesign::balanced(6, 50), transect_design()}) {
    for (const auto& spec : {kExch, kAr1}) {
      pcprior::DistanceFunction df(spec, d);
      const pcprior::PCPrior prior(pcprior::solve_lambda(0.5, 0.5, df), df);
      worst = std::max(worst, std::abs(pcprior::pc_cdf(prior, 0.5) - 0.5));
    }
    // OU: the same statement on the distance scale, P(phi > phi_U) = a
    pcprior::DistanceFunction df(kOuUnit, d);
    const double phi_u = ou_phi_for_correlation(0.5);
    const pcprior::PCPrior prior(pcprior::solve_lambda(phi_u, 0.5, df), df);
    worst = std::max(worst, std::abs(pcprior::pc_cdf(prior, phi_u) - 0.5));
    worst = std::max(worst, std::abs(1.0 - std::exp(-prior.lambda() * df(phi_u)) - 0.5));
  }
  return {worst <= 1e-10, "max |cdf(U) - 0.5| " + num(worst) + " (tol 1e-10)"};
}

Outcome closed_vs_generic() {
  double worst = 0.0;
  for (const auto& [n, m] : {std::pair<std::size_t, std::size_t>{6, 50}, {1, 2}, {10, 7}})
    for (const auto& spec : {kExch, kAr1, kOuUnit}) {
      const auto prior = median_prior(spec, GroupedDesign::balanced(n, m), 0.5);
      for (int i = 1; i <= 512; ++i) {
        const double u = i / 513.0;
        const double param = spec.uses_phi() ? -std::log(u) : u;
        const double closed = pcprior::pc_density_balanced(spec.family, n, m, prior.lambda(), param);
        const double generic = pcprior::pc_density(prior, param);
        worst = std::max(worst, std::abs(closed / generic - 1.0));
      }
    }
  return {worst <= 1e-8, "3 families x 3 designs x 512 points, max rel diff " + num(worst) + " (tol 1e-8)"};
}

Outcome push_forward() {
  double worst = 0.0;
  for (const auto& d : {GroupedDesign::balanced(1, 2), GroupedDesign::balanced(6, 50), transect_design()}) {
    pcprior::DistanceFunction ar1(kAr1, d), ou(kOuUnit, d);
    const double lambda = pcprior::solve_lambda(0.5, 0.5, ar1);
    const pcprior::PCPrior pa(lambda, ar1), po(lambda, ou);
    for (int i = 1; i <= 512; ++i) {
      const double rho = i / 513.0;
      const double phi = -std::log(rho);
      worst = std::max(worst, std::abs(po.density(phi) / (pa.density(rho) * std::exp(-phi)) - 1.0));
    }
  }
  return {worst <= 1e-8, "max rel diff " + num(worst) + " (tol 1e-8)"};
}

Outcome figure_ordering() {
  const auto d = GroupedDesign::balanced(6, 50);
  const double c1 = median_prior(kExch, d, 0.1).cdf(0.1);
  const double c5 = median_prior(kExch, d, 0.5).cdf(0.1);
  const double c9 = median_prior(kExch, d, 0.9).cdf(0.1);
  return {c1 > c5 && c5 > c9, "cdf(0.1) = " + num(c1) + " > " + num(c5) + " > " + num(c9)};
}

Outcome sampler_ks() {
  const auto prior = median_prior(kExch, GroupedDesign::balanced(6, 50), 0.5);
  const auto s = pcprior::pc_sample(prior, 100000, 20240601);
  std::vector<double> d;
  d.reserve(s.size());
  for (double x : s) d.push_back(prior.distance()(x));
  const double ks = oracle::ks_exponential(d, prior.lambda());
  return {ks < 0.02, "KS distance " + num(ks) + " at 1e5 samples (tol 0.02)"};
}

Outcome evidence_oracle() {
  Dataset data;
  data.design = GroupedDesign({3}, GroupedDesign::Positions{{0.0, 0.7, 2.0}});
  data.y.resize(3);
  data.y << 0.3, 1.1, -0.4;
  data.x = Eigen::MatrixXd::Ones(3, 1);
  data.column_names = {"(Intercept)"};
  double worst_q = 0.0;
  for (const auto& spec : {kExch, kAr1, GroupModelSpec{Family::ou, false}}) {
    pcprior::DistanceFunction df(spec, data.design);
    const inference::HyperPriors priors{pcprior::PCPrior(pcprior::solve_lambda_correlation(0.5, 0.5, df), df),
                                        solve_psi(1.0 / 0.31, 0.01), 1e-6};
    const double fit = inference::log_marginal_likelihood(data, spec, priors).log_mlik;
    const double quad = oracle::evidence_oracle(spec.family, data.design, data.y, data.x,
                                                priors.correlation.lambda(), priors.psi, priors.beta_precision);
    worst_q = std::max(worst_q, std::abs(fit - quad));
  }
  double worst_w = 0.0;
  for (const auto& sizes : std::vector<std::vector<std::size_t>>{{3}, {2, 5, 9}, {10, 10, 10, 10, 10, 10}, {60}}) {
    const auto d = oracle::with_irregular_positions(GroupedDesign(sizes), 3);
    for (const auto& spec : {kExch, kAr1, GroupModelSpec{Family::ou, false}}) {
      const auto ds = simulated(spec, d, spec.uses_phi() ? 0.6 : 0.5, 9);
      for (double tau : {0.1, 1.0, 10.0})
        for (double p : spec.uses_phi() ? std::vector<double>{0.1, 1.0} : std::vector<double>{0.2, 0.8}) {
          const double fast = inference::log_likelihood(ds, spec, p, tau, 1e-6);
          const double dense = oracle::evidence_log_lik<oracle::HighPrecision>(spec.family, d, ds.y, ds.x, p, tau, 1e-6);
          worst_w = std::max(worst_w, std::abs(fast - dense));
        }
    }
  }
  return {worst_q <= 1e-6 && worst_w <= 1e-8,
          "M=3 |log_mlik - quadrature| " + num(worst_q) + " (tol 1e-6); Woodbury vs dense " + num(worst_w) +
              " (tol 1e-8)"};
}

Outcome recovery() {
  const auto d = GroupedDesign::balanced(30, 20);
  double err = 0.0;
  int shrunk = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto a = simulated(kExch, d, 0.3, seed);
    err += std::abs(inference::log_marginal_likelihood(a, kExch, shared_priors(kExch, d, 0.5)).rho.mean - 0.3);
    const auto b = simulated(kExch, d, 0.0, 1000 + seed);
    if (inference::log_marginal_likelihood(b, kExch, shared_priors(kExch, d, 0.5)).rho.mean < 0.15) ++shrunk;
  }
  err /= 10.0;
  return {err < 0.1 && shrunk >= 9,
          "mean |E[rho|y] - 0.3| = " + num(err) + " (tol 0.1); rho=0 posterior mean < 0.15 in " +
              std::to_string(shrunk) + "/10 (need 9)"};
}

Outcome model_selection() {
  const auto d = GroupedDesign::balanced(30, 20);
  int favoured = 0, stable = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto data = simulated(kExch, d, 0.3, 500 + seed);
    std::vector<bool> exch_first;
    for (double median : {0.1, 0.5, 0.9}) {
      const auto fe = inference::log_marginal_likelihood(data, kExch, shared_priors(kExch, d, median));
      const auto fa = inference::log_marginal_likelihood(data, kAr1, shared_priors(kAr1, d, median));
      const double lbf = inference::bayes_factor(fe, fa).log_bf;
      exch_first.push_back(lbf > 0.0);
      if (median == 0.5 && lbf > 0.0) ++favoured;
    }
    if (std::all_of(exch_first.begin(), exch_first.end(), [&](bool b) { return b == exch_first.front(); })) ++stable;
  }
  return {favoured >= 8 && stable >= 8, "exch favoured in " + std::to_string(favoured) +
                                            "/10 (need 8); ranking stable across median ICC in " +
                                            std::to_string(stable) + "/10 (need 8)"};
}

Outcome pipeline_determinism() {
  std::vector<std::string> runs;
  for (int rep = 0; rep < 2; ++rep) {
    const auto dir = cli::scratch("accept_run" + std::to_string(rep));
    const auto data = dir / "d.csv";
    std::string transcript;
    auto step = [&](const std::string& args) {
      const auto r = cli::run(args);
      transcript += "$ " + std::to_string(r.code) + "\n" + r.out + r.err;
    };
    step("simulate --family exch --rho 0.3 --n 12 --m 10 --beta 1,0.5 --seed 77 --out " + data.string());
    step("fit --data " + data.string() + " --family ar1 --out " + (dir / "fit.json").string());
    step("compare --data " + data.string() + " --models exch,ar1,ou --median-icc 0.1,0.5 --out-dir " +
         (dir / "cmp").string());
    for (const auto& f : {"d.csv", "fit.json", "cmp/fit_s1_exch.json", "cmp/fit_s2_ou.json"})
      transcript += cli::slurp(dir / f);
    runs.push_back(transcript);
  }
  const bool same = runs[0] == runs[1] && runs[0].find("$ 0") != std::string::npos &&
                    runs[0].find("$ 1") == std::string::npos && runs[0].find("$ 2") == std::string::npos;
  return {same, std::to_string(runs[0].size()) + " bytes of output compared across two runs"};
}

}  // namespace

int main() {
  const std::vector<std::tuple<int, std::string, double, std::function<Outcome()>>> criteria{
      {1, "determinant oracle", 10.0, determinant_oracle},
      {2, "KLD oracle", 10.0, kld_oracle},
      {3, "prior normalization", 30.0, prior_normalization},
      {4, "scaling round-trip", 0.0, scaling_round_trip},
      {5, "closed-form vs generic density", 0.0, closed_vs_generic},
      {6, "OU push-forward of AR1", 0.0, push_forward},
      {7, "median-ICC penalty ordering", 0.0, figure_ordering},
      {8, "sampler KS", 0.0, sampler_ks},
      {9, "evidence oracle", 0.0, evidence_oracle},
      {10, "recovery study", 300.0, recovery},
      {11, "model selection", 0.0, model_selection},
      {12, "end-to-end determinism", 0.0, pipeline_determinism},
  };
  int failures = 0;
  for (const auto& [id, name, budget, run] : criteria) {
    const auto start = Clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    if (budget > 0.0 && secs > budget) {
      o.pass = false;
      o.detail += "; over time budget " + num(budget) + " s";
    }
    std::printf("%s  %2d  %-32s %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
