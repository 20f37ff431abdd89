#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pcgroup/pcgroup.hpp"

using namespace pcgroup;

namespace {

constexpr int kUsage = 2;
constexpr int kData = 3;
constexpr int kNumeric = 4;

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

/// Correlation-prior statement: P(correlation < u) = a.
struct Elicitation {
  std::vector<std::string> median_icc;  // one setting per entry
  std::optional<double> u;
  std::optional<double> a;
  double ref_distance = 1.0;

  void add(CLI::App* app, bool allow_list) {
    app->add_option("--median-icc", median_icc,
                    allow_list ? "median ICC (U with a = 0.5); comma list gives one setting each"
                               : "median ICC (shorthand for --u value --a 0.5)")
        ->delimiter(',');
    app->add_option("--u", u, "upper value U on the correlation scale");
    app->add_option("--a", a, "probability a with P(correlation < U) = a");
    app->add_option("--ref-distance", ref_distance, "OU: distance at which U is read as a correlation")
        ->capture_default_str();
  }

  std::vector<std::pair<double, double>> settings(bool allow_list) const {
    if (!median_icc.empty() && (u || a)) throw ConfigError("--median-icc cannot be combined with --u/--a");
    if (u.has_value() != a.has_value()) throw ConfigError("--u and --a must be given together");
    std::vector<std::pair<double, double>> out;
    for (const auto& s : median_icc) {
      const auto v = io::parse_double(s);
      if (!v) throw ConfigError("invalid --median-icc value '" + s + "'");
      out.emplace_back(*v, 0.5);
    }
    if (u) out.emplace_back(*u, *a);
    if (out.empty()) out.emplace_back(0.5, 0.5);
    if (!allow_list && out.size() > 1) throw ConfigError("this subcommand takes a single prior setting");
    for (const auto& [uu, aa] : out) {
      if (!(uu > 0.0 && uu < 1.0)) throw ConfigError("U must lie strictly inside (0, 1)");
      if (!(aa > 0.0 && aa < 1.0)) throw ConfigError("a must lie strictly inside (0, 1)");
    }
    return out;
  }
};

struct DataOptions {
  std::string path;
  std::string group_col = "group";
  std::string pos_col = "auto";
  std::string response = "y";
  std::string covariates;

  void add(CLI::App* app, bool required) {
    auto* opt = app->add_option("--data", path, "dataset CSV");
    if (required) opt->required();
    app->add_option("--group-col", group_col, "grouping column")->capture_default_str();
    app->add_option("--pos-col", pos_col, "within-group position column ('auto': use 'pos' if present, 'none')")
        ->capture_default_str();
    app->add_option("--response", response, "response column")->capture_default_str();
    app->add_option("--covariates", covariates, "comma-separated covariate columns (default: all others)");
  }

  Dataset read() const {
    io::ReadOptions ro;
    ro.response = response;
    ro.group_column = group_col;
    ro.covariates = split_list(covariates);
    if (pos_col == "auto") {
      std::ifstream in(path);
      if (!in) throw IoError("cannot open '" + path + "' for reading");
      std::string header;
      std::getline(in, header);
      for (const auto& name : split_list(header))
        if (std::string(io::detail::trim(name)) == "pos") ro.pos_column = "pos";
    } else if (pos_col != "none") {
      ro.pos_column = pos_col;
    }
    return io::read_dataset(path, ro);
  }
};

std::pair<std::size_t, std::size_t> parse_grid(const std::string& s) {
  const auto x = s.find_first_of("xX");
  if (x == std::string::npos) throw ConfigError("--grid must look like NxM");
  const auto a = io::parse_double(s.substr(0, x));
  const auto b = io::parse_double(s.substr(x + 1));
  if (!a || !b || *a < 3 || *b < 3 || *a != std::floor(*a) || *b != std::floor(*b))
    throw ConfigError("--grid must be NxM with integers N, M >= 3");
  return {static_cast<std::size_t>(*a), static_cast<std::size_t>(*b)};
}

// ---- prior

struct PriorCmd {
  std::string family;
  std::optional<std::size_t> n, m;
  DataOptions data;
  Elicitation elicit;
  std::size_t grid_size = 512;
  std::string out;
  bool unit_spacing = false;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("prior", "scale a PC prior and emit its density grid");
    app->add_option("--family", family, "exch, ar1 or ou")->required();
    app->add_option("--n", n, "number of groups (balanced design)");
    app->add_option("--m", m, "group size (balanced design)");
    data.add(app, false);
    elicit.add(app, false);
    app->add_option("--grid-size", grid_size, "rows in the density grid")->capture_default_str();
    app->add_option("--out", out, "grid CSV path");
    app->add_flag("--unit-spacing", unit_spacing, "OU: unit spacing when the design has no positions");
    app->callback([this] { run(); });
  }

  void run() const {
    const GroupModelSpec spec{parse_family(family), unit_spacing};
    GroupedDesign design;
    if (!data.path.empty()) {
      if (n || m) throw ConfigError("give either --data or --n/--m, not both");
      design = data.read().design;
    } else {
      if (!n || !m) throw ConfigError("need --n and --m, or --data");
      if (*n < 1 || *m < 1) throw ConfigError("--n and --m must be positive");
      design = GroupedDesign::balanced(*n, *m);
    }
    check_compatible(spec, design);
    if (grid_size < 2) throw ConfigError("--grid-size must be at least 2");
    const auto [u, a] = elicit.settings(false).front();
    pcprior::DistanceFunction dist(spec, design);
    const double lambda = pcprior::solve_lambda_correlation(u, a, dist, elicit.ref_distance);
    const double u_param = spec.uses_phi() ? ou_phi_for_correlation(u, elicit.ref_distance) : u;
    const pcprior::PCPrior prior(lambda, dist);
    std::cout << "family " << family_name(spec.family) << '\n';
    std::cout << "lambda " << io::format_double(lambda) << '\n';
    std::cout << "d(U) " << io::format_double(dist(u_param)) << '\n';
    std::cout << "U " << io::format_double(u_param) << '\n';
    std::cout << "cdf(U) " << io::format_double(prior.cdf(u_param)) << '\n';
    if (!out.empty()) io::write_grid(pcprior::density_grid(prior, grid_size), out);
  }
};

// ---- fit / compare shared pieces

struct FitOptions {
  DataOptions data;
  Elicitation elicit;
  double u_sigma = 1.0 / 0.31;
  double alpha_sigma = 0.01;
  double beta_precision = 1e-6;
  std::string grid = "201x201";
  std::string lambda_ref = "exch";
  bool unit_spacing = false;
  unsigned threads = 0;

  void add(CLI::App* app, bool list_settings) {
    data.add(app, true);
    elicit.add(app, list_settings);
    app->add_option("--u-sigma", u_sigma, "precision prior: P(sigma > U_sigma) = alpha_sigma")->capture_default_str();
    app->add_option("--alpha-sigma", alpha_sigma, "precision prior tail probability")->capture_default_str();
    app->add_option("--beta-precision", beta_precision, "prior precision of the fixed effects")->capture_default_str();
    app->add_option("--grid", grid, "quadrature grid NxM over (log tau, correlation)")->capture_default_str();
    app->add_option("--lambda-ref", lambda_ref,
                    "distance used to scale lambda: 'exch' shares one lambda across models, 'self' uses each model's own")
        ->capture_default_str()
        ->check(CLI::IsMember({"exch", "self"}));
    app->add_flag("--unit-spacing", unit_spacing, "OU: unit spacing when the data have no positions");
    app->add_option("--threads", threads, "worker threads (0: all cores)")->capture_default_str();
  }

  inference::GridConfig grid_config() const {
    inference::GridConfig gc;
    std::tie(gc.n_log_tau, gc.n_internal) = parse_grid(grid);
    gc.threads = threads;
    gc.reference_distance = elicit.ref_distance;
    return gc;
  }

  double lambda_for(const GroupModelSpec& spec, const GroupedDesign& design, double u, double a) const {
    if (lambda_ref == "exch")
      return pcprior::solve_lambda(u, a, pcprior::DistanceFunction({Family::exchangeable, false}, design));
    return pcprior::solve_lambda_correlation(u, a, pcprior::DistanceFunction(spec, design), elicit.ref_distance);
  }

  inference::FitResult fit(const Dataset& data_set, Family family, double u, double a) const {
    const GroupModelSpec spec{family, unit_spacing};
    check_compatible(spec, data_set.design);
    const double lambda = lambda_for(spec, data_set.design, u, a);
    inference::HyperPriors priors{pcprior::PCPrior(lambda, pcprior::DistanceFunction(spec, data_set.design)),
                                  solve_psi(u_sigma, alpha_sigma), beta_precision};
    return inference::log_marginal_likelihood(data_set, spec, priors, grid_config());
  }
};

void warn_boundary(const inference::FitResult& fit, const std::string& model) {
  if (fit.diagnostics.boundary_warning)
    std::cerr << "warning: " << model << ": " << fmt("%.3g", fit.diagnostics.boundary_mass)
              << " of the posterior mass lies in boundary cells; consider a wider or finer grid\n";
}

struct FitCmd {
  std::string family;
  FitOptions opts;
  std::string out;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("fit", "fit one group model and report its evidence and posteriors");
    app->add_option("--family", family, "exch, ar1 or ou")->required();
    opts.add(app, false);
    app->add_option("--out", out, "fit JSON path (default: standard output)");
    app->callback([this] { run(); });
  }

  void run() const {
    const Family f = parse_family(family);
    const auto [u, a] = opts.elicit.settings(false).front();
    opts.grid_config();
    const Dataset data = opts.data.read();
    const auto fit = opts.fit(data, f, u, a);
    warn_boundary(fit, std::string(family_name(f)));
    if (out.empty())
      io::write_fit(fit, std::cout);
    else
      io::write_fit(fit, out);
  }
};

struct ModelFailure : std::runtime_error {
  ModelFailure(const std::string& model, int code, const std::string& what)
      : std::runtime_error("model '" + model + "' failed: " + what), exit_code(code) {}
  int exit_code;
};

struct CompareCmd {
  std::string models = "exch,ar1,ou";
  FitOptions opts;
  std::string out_dir;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("compare", "fit several group models under a shared prior and rank them");
    app->add_option("--models", models, "comma-separated group models")->capture_default_str();
    opts.add(app, true);
    app->add_option("--out-dir", out_dir, "directory receiving one fit JSON per model and setting");
    app->callback([this] { run(); });
  }

  void run() const {
    std::vector<Family> families;
    for (const auto& name : split_list(models)) families.push_back(parse_family(name));
    if (families.empty()) throw ConfigError("--models is empty");
    const auto settings = opts.elicit.settings(true);
    opts.grid_config();
    const Dataset data = opts.data.read();
    const std::string fp = fingerprint(data);
    if (!out_dir.empty()) {
      std::error_code ec;
      std::filesystem::create_directories(out_dir, ec);
      if (ec) throw IoError("cannot create directory '" + out_dir + "'");
    }

    std::cout << "dataset " << fp << ": " << data.design.n_groups() << " groups, " << data.size() << " rows\n";
    for (std::size_t s = 0; s < settings.size(); ++s) {
      const auto [u, a] = settings[s];
      std::vector<std::pair<std::string, inference::FitResult>> fits;
      for (Family f : families) {
        const std::string name(family_name(f));
        try {
          fits.emplace_back(name, opts.fit(data, f, u, a));
        } catch (const NumericError& e) {
          throw ModelFailure(name, kNumeric, e.what());
        } catch (const DomainError& e) {
          throw ModelFailure(name, kUsage, e.what());
        } catch (const ConfigError& e) {
          throw ModelFailure(name, kUsage, e.what());
        }
        warn_boundary(fits.back().second, name);
        if (fits.back().second.diagnostics.data_fingerprint != fp)
          throw ModelFailure(name, kNumeric, "fit ran on a different dataset fingerprint");
      }
      std::stable_sort(fits.begin(), fits.end(),
                       [](const auto& x, const auto& y) { return x.second.log_mlik > y.second.log_mlik; });
      print_table(s + 1, u, a, fits);
      if (!out_dir.empty()) {
        for (const auto& [name, fit] : fits) {
          const auto path = std::filesystem::path(out_dir) / ("fit_s" + std::to_string(s + 1) + "_" + name + ".json");
          io::write_fit(fit, path.string());
        }
      }
    }
  }

  void print_table(std::size_t setting, double u, double a,
                   const std::vector<std::pair<std::string, inference::FitResult>>& fits) const {
    std::cout << "\nprior setting " << setting << ": ";
    if (a == 0.5)
      std::cout << "median ICC = " << fmt("%g", u);
    else
      std::cout << "P(rho < " << fmt("%g", u) << ") = " << fmt("%g", a);
    std::cout << ", lambda = " << fmt("%.6g", fits.front().second.diagnostics.lambda) << " (" << opts.lambda_ref
              << ")\n";
    std::printf("%-16s %-12s %10s %10s %10s %14s %10s  %s\n", "grouping factor", "group model", "0.025q", "mean",
                "0.975q", "log.mlik", "log.BF", "evidence");
    std::fflush(stdout);
    const double best = fits.front().second.log_mlik;
    for (const auto& [name, fit] : fits) {
      std::string bf, category;
      if (fits.size() > 1) {
        const double lbf = fit.log_mlik - best;
        bf = fmt("%.3f", lbf);
        if (&fit != &fits.front().second) category = inference::kass_raftery_category(lbf) + " against";
      }
      std::printf("%-16s %-12s %10.4f %10.4f %10.4f %14.4f %10s  %s\n", opts.data.group_col.c_str(), name.c_str(),
                  fit.rho.q025, fit.rho.mean, fit.rho.q975, fit.log_mlik, bf.c_str(), category.c_str());
    }
    std::fflush(stdout);
  }
};

// ---- simulate

struct SimulateCmd {
  std::string family;
  std::optional<double> rho, phi;
  std::size_t n = 0, m = 0;
  double sigma2 = 1.0;
  std::vector<double> beta{0.0};
  std::uint64_t seed = 0;
  std::string out;
  bool irregular = false;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("simulate", "simulate a grouped dataset with known hyperparameters");
    app->add_option("--family", family, "exch, ar1 or ou")->required();
    app->add_option("--rho", rho, "correlation (exch, ar1; for ou the correlation at unit distance)");
    app->add_option("--phi", phi, "OU decay rate");
    app->add_option("--n", n, "number of groups")->required();
    app->add_option("--m", m, "observations per group")->required();
    app->add_option("--sigma2", sigma2, "total residual variance")->capture_default_str();
    app->add_option("--beta", beta, "fixed effects: intercept first, then one per Gaussian covariate")->delimiter(',');
    app->add_option("--seed", seed, "random seed")->required();
    app->add_option("--out", out, "dataset CSV path (default: standard output)");
    app->add_flag("--irregular", irregular, "OU: exponential(1) spacings instead of unit spacing");
    app->callback([this] { run(); });
  }

  void run() const {
    simulate::SimConfig cfg;
    cfg.spec = {parse_family(family), false};
    if (rho && phi) throw ConfigError("give --rho or --phi, not both");
    if (cfg.spec.uses_phi()) {
      if (phi)
        cfg.param = *phi;
      else if (rho)
        cfg.param = ou_phi_for_correlation(*rho);
      else
        throw ConfigError("OU needs --phi or --rho");
      if (!(cfg.param > 0.0) || !std::isfinite(cfg.param)) throw DomainError("phi must be positive and finite");
    } else {
      if (phi) throw ConfigError("--phi applies to the OU model only");
      if (!rho) throw ConfigError("--rho is required");
      if (!(*rho >= 0.0 && *rho < 1.0)) throw DomainError("rho must lie in [0, 1)");
      cfg.param = *rho;
    }
    if (n < 1 || m < 1) throw ConfigError("--n and --m must be positive");
    if (irregular && !cfg.spec.uses_phi()) throw ConfigError("--irregular applies to the OU model only");

    GroupedDesign::Positions pos(n);
    std::mt19937_64 pos_rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::exponential_distribution<double> gap(1.0);
    for (auto& p : pos) {
      double x = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        p.push_back(x);
        x += irregular ? gap(pos_rng) : 1.0;
      }
    }
    cfg.design = GroupedDesign(std::vector<std::size_t>(n, m), pos);
    cfg.sigma2 = sigma2;
    cfg.beta = beta;
    cfg.seed = seed;
    const Dataset data = simulate::simulate_dataset(cfg);
    if (out.empty())
      io::write_dataset(data, std::cout);
    else
      io::write_dataset(data, out);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PC priors for grouped residual correlation: prior scaling, model fitting and comparison"};
  app.require_subcommand(1);
  PriorCmd prior;
  FitCmd fit;
  CompareCmd compare;
  SimulateCmd sim;
  prior.add(app);
  fit.add(app);
  compare.add(app);
  sim.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  } catch (const ModelFailure& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code;
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const DomainError& e) {
    std::cerr << "domain error: " << e.what() << '\n';
    return kUsage;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumeric;
  }
  return 0;
}
