// Command-line front end: single zig-zag or pmcmc runs, experiments and the
// Jensen-gap diagnostic. Exit codes: 0 success, 1 config error, 2 envelope violation,
// 3 other runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <thread>

#include "zzgibbs/harness/config.hpp"
#include "zzgibbs/harness/data.hpp"
#include "zzgibbs/harness/experiment.hpp"
#include "zzgibbs/harness/jensen_gap.hpp"
#include "zzgibbs/models/poisson_regression.hpp"
#include "zzgibbs/zigzag.hpp"

namespace {

using namespace zzgibbs;

int jensen_gap_command(std::size_t m, std::size_t reps, std::size_t thetas, std::uint64_t seed,
                       std::optional<double> prior_sd) {
  const PoissonRegression model(gen_poisson_data(1000, 1), 0.5);
  Rng rng(seed, 7);
  std::printf("theta_index,lambda,m,reps,estimate,se,bound\n");
  for (std::size_t k = 0; k < thetas; ++k) {
    Eigen::VectorXd theta = poisson_true_theta();
    for (Eigen::Index j = 0; j < theta.size(); ++j) theta[j] += 0.25 * rng.normal();
    const auto est = jensen_gap_estimate(model, theta, k % model.num_observations(), m, reps, rng, prior_sd);
    std::printf("%zu,%s,%zu,%zu,%s,%s,%s\n", k + 1, format_double(model.rate(theta, k % model.num_observations())).c_str(),
                m, reps, format_double(est.estimate).c_str(), format_double(est.se).c_str(),
                format_double(jensen_gap_bound(m)).c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zig-zag and block pseudo-marginal samplers for generalised Bayesian posteriors"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".";
  auto* zz = app.add_subcommand("zigzag", "single zig-zag run");
  zz->add_option("--config", config_path, "JSON config")->required();
  zz->add_option("--out", out_dir, "output directory");

  auto* pm = app.add_subcommand("pmcmc", "single block pseudo-marginal run");
  pm->add_option("--config", config_path, "JSON config")->required();
  pm->add_option("--out", out_dir, "output directory");

  std::string experiment;
  bool dry_run = false;
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  auto* ex = app.add_subcommand("experiment", "gold run plus b and m sweeps");
  ex->add_option("name", experiment, "copula-n100 | copula-n1000 | regression-n100 | poisson-n1000")->required();
  ex->add_option("--out", out_dir, "output directory")->required();
  ex->add_flag("--dry-run", dry_run, "T = 10, S = 100");
  ex->add_option("--config", config_path, "config or manifest overriding the defaults");
  ex->add_option("--threads", threads, "worker threads for sweep cells");

  std::size_t m = 100, reps = 1000, thetas = 5;
  std::uint64_t seed = 1;
  std::optional<double> prior_sd;
  auto* jg = app.add_subcommand("jensen-gap", "nested Monte Carlo Jensen gap for Poisson regression");
  jg->add_option("--m", m, "pseudo-observations per estimate")->required();
  jg->add_option("--reps", reps, "outer replications")->required();
  jg->add_option("--thetas", thetas, "number of random parameter values");
  jg->add_option("--seed", seed, "seed");
  jg->add_option("--prior-sd", prior_sd, "weight by the N(0, sd^2 I) prior density");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*zz) {
      const auto out = run_zigzag_command(load_config(config_path), out_dir);
      std::cout << out["diagnostics"].dump(2) << '\n';
    } else if (*pm) {
      const auto out = run_pmcmc_command(load_config(config_path), out_dir);
      std::cout << out["diagnostics"].dump(2) << '\n';
    } else if (*ex) {
      Config cfg = experiment_defaults(experiment);
      if (!config_path.empty()) apply_json(cfg, config_section(read_json_file(config_path)));
      if (dry_run) apply_dry_run(cfg);
      validate(cfg);
      const auto res = run_experiment(experiment, cfg, out_dir, threads, &std::cerr);
      std::cout << "wrote " << res.outputs.size() << " files to " << out_dir << '\n';
    } else if (*jg) {
      if (reps < 2) throw ConfigError("reps must be at least 2");
      if (m == 0) throw ConfigError("m must be positive");
      return jensen_gap_command(m, reps, thetas, seed, prior_sd);
    }
  } catch (const EnvelopeViolation& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
