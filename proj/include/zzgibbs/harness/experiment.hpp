#ifndef ZZGIBBS_HARNESS_EXPERIMENT_HPP
#define ZZGIBBS_HARNESS_EXPERIMENT_HPP

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "zzgibbs/harness/accuracy.hpp"
#include "zzgibbs/harness/config.hpp"
#include "zzgibbs/harness/data.hpp"
#include "zzgibbs/models/gaussian_copula.hpp"
#include "zzgibbs/models/gaussian_regression.hpp"
#include "zzgibbs/models/poisson_regression.hpp"
#include "zzgibbs/pmcmc.hpp"
#include "zzgibbs/stats.hpp"
#include "zzgibbs/trajectory.hpp"
#include "zzgibbs/zigzag.hpp"

namespace zzgibbs {

using AnyModel = std::variant<GaussianCopula, GaussianRegression, PoissonRegression>;

inline Dataset make_dataset(const Config& cfg) {
  if (cfg.model == "copula") return gen_copula_data(cfg.n, cfg.rho, cfg.data_seed);
  if (cfg.model == "regression") return gen_regression_data(cfg.n, cfg.data_seed);
  return gen_poisson_data(cfg.n, cfg.data_seed);
}

inline AnyModel make_model(const Config& cfg, const Dataset& data) {
  if (cfg.model == "copula") return AnyModel(std::in_place_type<GaussianCopula>, data, cfg.gamma);
  if (cfg.model == "regression") return AnyModel(std::in_place_type<GaussianRegression>, data, cfg.gamma);
  return AnyModel(std::in_place_type<PoissonRegression>, data, cfg.beta,
                  cfg.poisson_bound == "closed_form" ? PoissonBound::closed_form : PoissonBound::exact);
}

// Data-generating parameter on the sampler's scale.
inline Eigen::VectorXd default_initial_theta(const Config& cfg) {
  if (cfg.model == "copula") return Eigen::VectorXd::Constant(1, 2.0 * std::atanh(cfg.rho));
  if (cfg.model == "regression") return regression_true_theta();
  return poisson_true_theta();
}

inline Eigen::VectorXd initial_theta(const Config& cfg) {
  return cfg.init_theta ? *cfg.init_theta : default_initial_theta(cfg);
}

template <class Model>
Trajectory run_zigzag(const Model& model, const Config& cfg, std::size_t b, double T, Rng& rng) {
  ZigZagConfig z;
  z.total_time = T;
  z.horizon = cfg.horizon;
  z.safety_factor = cfg.eta;
  z.b = b;
  z.seed = cfg.seed;
  z.initial_position = initial_theta(cfg);
  z.initial_velocity = cfg.initial_velocity == "random" ? InitialVelocity::random : InitialVelocity::all_positive;
  z.strict_thinning = cfg.strict_thinning;
  z.store_rejected = cfg.store_rejected;
  const double omega = *cfg.omega;
  const ModelTarget target(model, omega, b);
  if (cfg.subsample && *cfg.subsample < model.num_observations()) {
    z.subsample = cfg.subsample;
    return zigzag_run_subsampled(target, ModelEnvelope<Model>{&model, omega, cfg.eta, EnvelopeScope::subsample}, z,
                                 *cfg.subsample, rng);
  }
  return zigzag_run(target, ModelEnvelope<Model>{&model, omega, cfg.eta}, z, rng);
}

template <class Model>
Chain run_pmcmc(const Model& model, const Config& cfg, std::size_t m, std::size_t S, const Eigen::MatrixXd& cov,
                Rng& rng) {
  PmcmcConfig p;
  p.m = m;
  p.iterations = S;
  p.omega = *cfg.omega;
  p.proposal_covariance = cov;
  p.initial_position = initial_theta(cfg);
  p.seed = cfg.seed;
  p.audit_interval = cfg.audit_interval;
  if (cfg.blocking)
    p.blocking = *cfg.blocking == "per_draw" ? BlockStrategy::per_draw : BlockStrategy::per_observation;
  return bpmcmc_run(model, p, rng);
}

inline nlohmann::json zigzag_diagnostics_json(const Trajectory& t) {
  const auto& d = t.diagnostics();
  return {{"proposals", d.proposals},
          {"flips", d.flips},
          {"refreshes", d.refreshes},
          {"bound_violations", d.bound_violations},
          {"simulator_calls", d.simulator_calls},
          {"pseudo_observations", d.pseudo_observations},
          {"max_thinning_ratio", d.max_thinning_ratio},
          {"skeleton_points", t.size()}};
}

inline nlohmann::json pmcmc_diagnostics_json(const Chain& c) {
  const auto& d = c.diagnostics;
  return {{"iterations", c.iterations()},
          {"accepted", d.accepted},
          {"acceptance_rate", c.acceptance_rate()},
          {"simulator_calls", d.simulator_calls},
          {"pseudo_observations", d.pseudo_observations},
          {"nonfinite_rejections", d.nonfinite_rejections},
          {"audits", d.audits},
          {"audit_failures", d.audit_failures},
          {"stuck_warning", d.stuck_warning},
          {"messages", d.messages}};
}

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::function<void(std::ostream&)>& body) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  body(os);
  if (!os) throw std::runtime_error("write failed for " + p.string());
}

inline void write_density_csv(const DensityGrid& g, std::ostream& os) {
  os << "x,density\n";
  for (std::size_t k = 0; k < g.x.size(); ++k) os << format_double(g.x[k]) << ',' << format_double(g.density[k]) << '\n';
}

// Equally spaced post-burn-in positions, about `count` of them.
inline std::vector<std::vector<double>> trajectory_samples(const Trajectory& t, double burnin, std::size_t count) {
  const double len = (1.0 - burnin) * (t.total_time() - t.time(0));
  const auto pts = trajectory_discretize(t, len / static_cast<double>(count), burnin);
  std::vector<std::vector<double>> out(t.dimension());
  for (const auto& x : pts)
    for (std::size_t j = 0; j < t.dimension(); ++j) out[j].push_back(x[static_cast<Eigen::Index>(j)]);
  return out;
}

inline std::vector<std::vector<double>> chain_samples(const Chain& c, double burnin, std::size_t count) {
  const std::size_t S = c.iterations();
  const auto first = std::min(S, static_cast<std::size_t>(std::ceil(burnin * static_cast<double>(S))));
  const std::size_t avail = S - first + 1, step = std::max<std::size_t>(1, avail / count);
  std::vector<std::vector<double>> out(static_cast<std::size_t>(c.draws.cols()));
  for (std::size_t s = first; s <= S; s += step)
    for (Eigen::Index j = 0; j < c.draws.cols(); ++j) out[static_cast<std::size_t>(j)].push_back(c.draws(static_cast<Eigen::Index>(s), j));
  return out;
}

// Runs tasks on up to `threads` workers; the first exception is rethrown.
inline void run_parallel(std::vector<std::function<void()>>& tasks, std::size_t threads) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < tasks.size();) {
      try {
        tasks[i]();
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  const std::size_t k = std::max<std::size_t>(1, std::min(threads, tasks.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < k; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"copula-n100", "copula-n1000", "regression-n100", "poisson-n1000"};
  return names;
}

// Shipped settings per experiment; omega = n throughout.
inline Config experiment_defaults(const std::string& name) {
  Config c;
  c.strict_thinning = false;
  c.b_values = {2, 5, 20, 50};
  c.m_values = {2, 5, 10, 20, 50, 100, 1000};
  if (name == "copula-n100") {
    c.model = "copula";
    c.n = 100;
    c.T = 2000.0;
    c.S = 10000;
  } else if (name == "copula-n1000") {
    c.model = "copula";
    c.n = 1000;
    c.T = 500.0;
    c.S = 5000;
  } else if (name == "regression-n100") {
    c.model = "regression";
    c.n = 100;
    c.T = 100.0;
    c.S = 5000;
    // the V-statistic costs n m^2 kernel evaluations per iteration
    c.m_values = {2, 5, 10, 20, 50, 100};
  } else if (name == "poisson-n1000") {
    c.model = "poisson";
    c.n = 1000;
    c.beta = 0.5;
    c.T = 50.0;
    c.S = 5000;
  } else {
    throw ConfigError("unknown experiment '" + name + "'");
  }
  c.omega = static_cast<double>(c.n);
  c.loss = default_loss(c.model);
  return c;
}

inline void apply_dry_run(Config& c) {
  c.T = 10.0;
  c.gold_T = 10.0;
  c.S = 100;
}

struct RunRecord {
  std::string name;
  nlohmann::json info;
  std::uint64_t simulator_calls = 0;
};

struct ExperimentResult {
  nlohmann::json manifest;
  std::vector<std::string> outputs;
};

// Gold run, b and m sweeps, densities, accuracy curves and a manifest under out_dir.
inline ExperimentResult run_experiment(const std::string& name, const Config& cfg_in, const std::filesystem::path& out_dir,
                                       std::size_t threads = 1, std::ostream* log = nullptr) {
  Config cfg = cfg_in;
  validate(cfg);
  const auto start = std::chrono::steady_clock::now();
  std::mutex log_mu;
  auto note = [&](const std::string& msg) {
    if (!log) return;
    std::lock_guard lock(log_mu);
    *log << name << ": " << msg << std::endl;
  };
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> outputs;
  std::mutex out_mu;
  auto add_output = [&](const std::string& rel) {
    std::lock_guard lock(out_mu);
    outputs.push_back(rel);
  };

  const Dataset data = make_dataset(cfg);
  detail::write_text(out_dir / "data.csv", [&](std::ostream& os) { write_dataset_csv(data, os); });
  add_output("data.csv");
  const AnyModel any = make_model(cfg, data);
  const std::size_t d = cfg.dimension();
  constexpr std::size_t density_samples = 20000;

  return std::visit(
      [&](const auto& model) {
        // gold
        const double gold_T = cfg.gold_T ? *cfg.gold_T : 20.0 * cfg.T;
        Rng gold_rng(cfg.seed, 0);
        note("gold run, T = " + format_double(gold_T));
        const Trajectory gold = run_zigzag(model, cfg, cfg.gold_b, gold_T, gold_rng);
        detail::write_text(out_dir / "gold" / "skeleton.csv", [&](std::ostream& os) { write_skeleton_csv(gold, os); });
        add_output("gold/skeleton.csv");
        const MomentSummary gold_moments = trajectory_summary(gold, cfg.burnin);
        std::vector<double> lo(d), hi(d);
        for (std::size_t j = 0; j < d; ++j) {
          const auto J = static_cast<Eigen::Index>(j);
          const double sd = gold_moments.sd[J] > 0.0 ? gold_moments.sd[J] : 1e-3;
          lo[j] = gold_moments.mean[J] - 5.0 * sd;
          hi[j] = gold_moments.mean[J] + 5.0 * sd;
        }
        auto write_densities = [&](const std::string& dir, const std::vector<std::vector<double>>& samples) {
          for (std::size_t j = 0; j < d; ++j) {
            const auto g = kde_grid(samples[j], lo[j], hi[j], 512);
            const std::string rel = dir + "/density_" + std::to_string(j + 1) + ".csv";
            detail::write_text(out_dir / rel, [&](std::ostream& os) { detail::write_density_csv(g, os); });
            add_output(rel);
          }
        };
        write_densities("gold", detail::trajectory_samples(gold, cfg.burnin, density_samples));

        // proposal: scaled gold covariance unless configured
        Eigen::MatrixXd cov;
        if (cfg.proposal_cov) {
          cov = *cfg.proposal_cov;
        } else {
          cov = trajectory_moments(gold, cfg.burnin).covariance * (2.38 * 2.38 / static_cast<double>(d));
          Eigen::LLT<Eigen::MatrixXd> llt(cov);
          if (llt.info() != Eigen::Success) cov = default_proposal_covariance(d);
        }

        std::vector<RunRecord> records(cfg.b_values.size() + cfg.m_values.size());
        std::vector<std::function<void()>> tasks;
        for (std::size_t k = 0; k < cfg.b_values.size(); ++k)
          tasks.push_back([&, k] {
            const std::size_t b = cfg.b_values[k];
            const std::string dir = "zigzag_b" + std::to_string(b);
            Rng rng(cfg.seed, 1 + k);
            note("zig-zag b = " + std::to_string(b));
            const Trajectory t = run_zigzag(model, cfg, b, cfg.T, rng);
            detail::write_text(out_dir / dir / "skeleton.csv", [&](std::ostream& os) { write_skeleton_csv(t, os); });
            add_output(dir + "/skeleton.csv");
            write_densities(dir, detail::trajectory_samples(t, cfg.burnin, density_samples));
            const auto acc = accuracy_metrics(t, gold_moments, cfg.checkpoints, cfg.burnin);
            detail::write_text(out_dir / dir / "accuracy.csv", [&](std::ostream& os) { write_accuracy_csv(acc, os); });
            add_output(dir + "/accuracy.csv");
            nlohmann::json info = zigzag_diagnostics_json(t);
            info["sampler"] = "zigzag";
            info["b"] = b;
            info["T"] = cfg.T;
            const auto s = trajectory_summary(t, cfg.burnin);
            info["posterior_mean"] = std::vector<double>(s.mean.begin(), s.mean.end());
            info["posterior_sd"] = std::vector<double>(s.sd.begin(), s.sd.end());
            records[k] = {dir, info, t.diagnostics().simulator_calls};
          });
        for (std::size_t k = 0; k < cfg.m_values.size(); ++k)
          tasks.push_back([&, k] {
            const std::size_t m = cfg.m_values[k];
            const std::string dir = "pmcmc_m" + std::to_string(m);
            Rng rng(cfg.seed, 1001 + k);
            note("block pseudo-marginal m = " + std::to_string(m));
            const Chain c = run_pmcmc(model, cfg, m, cfg.S, cov, rng);
            detail::write_text(out_dir / dir / "draws.csv", [&](std::ostream& os) { write_draws_csv(c, os); });
            add_output(dir + "/draws.csv");
            write_densities(dir, detail::chain_samples(c, cfg.burnin, density_samples));
            const auto acc = accuracy_metrics(c, m, gold_moments, cfg.checkpoints, cfg.burnin);
            detail::write_text(out_dir / dir / "accuracy.csv", [&](std::ostream& os) { write_accuracy_csv(acc, os); });
            add_output(dir + "/accuracy.csv");
            nlohmann::json info = pmcmc_diagnostics_json(c);
            info["sampler"] = "pmcmc";
            info["m"] = m;
            info["S"] = cfg.S;
            const auto first = static_cast<std::size_t>(std::ceil(cfg.burnin * static_cast<double>(cfg.S)));
            const auto s = chain_summary(c.draws, std::min(first, cfg.S), cfg.S);
            info["posterior_mean"] = std::vector<double>(s.mean.begin(), s.mean.end());
            info["posterior_sd"] = std::vector<double>(s.sd.begin(), s.sd.end());
            records[cfg.b_values.size() + k] = {dir, info, c.diagnostics.simulator_calls};
          });
        detail::run_parallel(tasks, threads);

        nlohmann::json runs = nlohmann::json::array();
        nlohmann::json gold_info = zigzag_diagnostics_json(gold);
        gold_info["sampler"] = "zigzag";
        gold_info["b"] = cfg.gold_b;
        gold_info["T"] = gold_T;
        gold_info["posterior_mean"] = std::vector<double>(gold_moments.mean.begin(), gold_moments.mean.end());
        gold_info["posterior_sd"] = std::vector<double>(gold_moments.sd.begin(), gold_moments.sd.end());
        runs.push_back({{"name", "gold"}, {"diagnostics", gold_info}});
        std::uint64_t total = gold.diagnostics().simulator_calls;
        for (const auto& r : records) {
          runs.push_back({{"name", r.name}, {"diagnostics", r.info}});
          total += r.simulator_calls;
        }
        std::sort(outputs.begin(), outputs.end());
        outputs.push_back("manifest.json");
        ExperimentResult res;
        res.outputs = outputs;
        res.manifest = {{"experiment", name},
                        {"config", to_json(cfg)},
                        {"outputs", outputs},
                        {"runs", runs},
                        {"simulator_calls_total", total},
                        {"wall_clock_seconds",
                         std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}};
        detail::write_text(out_dir / "manifest.json", [&](std::ostream& os) { os << res.manifest.dump(2) << '\n'; });
        return res;
      },
      any);
}

// Single zig-zag run: data.csv, skeleton.csv and diagnostics.json.
inline nlohmann::json run_zigzag_command(const Config& cfg, const std::filesystem::path& out_dir) {
  const Dataset data = make_dataset(cfg);
  const AnyModel any = make_model(cfg, data);
  return std::visit(
      [&](const auto& model) {
        Rng rng(cfg.seed, 0);
        const Trajectory t = run_zigzag(model, cfg, cfg.b, cfg.T, rng);
        detail::write_text(out_dir / "data.csv", [&](std::ostream& os) { write_dataset_csv(data, os); });
        detail::write_text(out_dir / "skeleton.csv", [&](std::ostream& os) { write_skeleton_csv(t, os); });
        nlohmann::json diag = zigzag_diagnostics_json(t);
        const auto s = trajectory_summary(t, cfg.burnin);
        diag["posterior_mean"] = std::vector<double>(s.mean.begin(), s.mean.end());
        diag["posterior_sd"] = std::vector<double>(s.sd.begin(), s.sd.end());
        const nlohmann::json out{{"config", to_json(cfg)}, {"diagnostics", diag}};
        detail::write_text(out_dir / "diagnostics.json", [&](std::ostream& os) { os << out.dump(2) << '\n'; });
        return out;
      },
      any);
}

// Single pmcmc run: data.csv, draws.csv and diagnostics.json.
inline nlohmann::json run_pmcmc_command(const Config& cfg, const std::filesystem::path& out_dir) {
  const Dataset data = make_dataset(cfg);
  const AnyModel any = make_model(cfg, data);
  return std::visit(
      [&](const auto& model) {
        Rng rng(cfg.seed, 0);
        const Eigen::MatrixXd cov = cfg.proposal_cov ? *cfg.proposal_cov : default_proposal_covariance(cfg.dimension());
        const Chain c = run_pmcmc(model, cfg, cfg.m, cfg.S, cov, rng);
        detail::write_text(out_dir / "data.csv", [&](std::ostream& os) { write_dataset_csv(data, os); });
        detail::write_text(out_dir / "draws.csv", [&](std::ostream& os) { write_draws_csv(c, os); });
        nlohmann::json diag = pmcmc_diagnostics_json(c);
        const auto first = static_cast<std::size_t>(std::ceil(cfg.burnin * static_cast<double>(cfg.S)));
        const auto s = chain_summary(c.draws, std::min(first, cfg.S), cfg.S);
        diag["posterior_mean"] = std::vector<double>(s.mean.begin(), s.mean.end());
        diag["posterior_sd"] = std::vector<double>(s.sd.begin(), s.sd.end());
        const nlohmann::json out{{"config", to_json(cfg)}, {"diagnostics", diag}};
        detail::write_text(out_dir / "diagnostics.json", [&](std::ostream& os) { os << out.dump(2) << '\n'; });
        return out;
      },
      any);
}

}  // namespace zzgibbs

#endif
