#ifndef ZZGIBBS_HARNESS_CONFIG_HPP
#define ZZGIBBS_HARNESS_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace zzgibbs {

// Bad or inconsistent configuration; the CLI maps it to exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat run configuration shared by the zigzag, pmcmc and experiment commands.
struct Config {
  std::string model;  // copula | regression | poisson
  std::string loss;   // mmd (copula, regression) | beta (poisson)
  std::optional<double> omega;
  std::uint64_t seed = 1;

  // data
  std::size_t n = 100;
  std::uint64_t data_seed = 1;
  double rho = 0.5;
  double gamma = 1.0;
  double beta = 0.5;
  std::string poisson_bound = "exact";  // exact | closed_form

  // zig-zag
  double T = 1000.0;
  double horizon = 1.0;
  double eta = 1.05;
  std::size_t b = 5;
  std::optional<Eigen::VectorXd> init_theta;
  std::string initial_velocity = "positive";  // positive | random
  bool strict_thinning = true;
  std::optional<std::size_t> subsample;
  bool store_rejected = false;
  double burnin = 0.1;

  // pmcmc
  std::size_t m = 10;
  std::size_t S = 10000;
  std::optional<Eigen::MatrixXd> proposal_cov;
  std::optional<std::string> blocking;  // per_observation | per_draw
  std::size_t audit_interval = 1000;

  // experiment
  std::optional<double> gold_T;
  std::size_t gold_b = 5;
  std::vector<std::size_t> b_values;
  std::vector<std::size_t> m_values;
  std::size_t checkpoints = 50;

  std::size_t dimension() const {
    if (model == "copula") return 1;
    if (model == "regression") return 9;
    return 5;
  }
};

namespace detail {

template <class T>
T json_get(const nlohmann::json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

inline double json_number(const nlohmann::json& j, const std::string& key) {
  if (!j.is_number()) throw ConfigError("config key '" + key + "' must be a number");
  return j.get<double>();
}

inline std::size_t json_count(const nlohmann::json& j, const std::string& key) {
  if (!j.is_number_integer() || j.get<long long>() < 0)
    throw ConfigError("config key '" + key + "' must be a non-negative integer");
  return j.get<std::size_t>();
}

inline Eigen::VectorXd json_vector(const nlohmann::json& j, const std::string& key) {
  if (!j.is_array()) throw ConfigError("config key '" + key + "' must be an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = json_number(j[i], key);
  return v;
}

// Scalar (times identity), vector (diagonal) or nested rows.
inline Eigen::MatrixXd json_matrix(const nlohmann::json& j, const std::string& key, std::size_t d) {
  const auto D = static_cast<Eigen::Index>(d);
  if (j.is_number()) return Eigen::MatrixXd::Identity(D, D) * j.get<double>();
  if (!j.is_array() || j.empty()) throw ConfigError("config key '" + key + "' must be a number or array");
  if (!j[0].is_array()) return json_vector(j, key).asDiagonal();
  Eigen::MatrixXd M(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != j[0].size()) throw ConfigError("config key '" + key + "' is ragged");
    for (std::size_t c = 0; c < j[r].size(); ++c)
      M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = json_number(j[r][c], key);
  }
  return M;
}

inline std::vector<std::size_t> json_counts(const nlohmann::json& j, const std::string& key) {
  if (!j.is_array()) throw ConfigError("config key '" + key + "' must be an array");
  std::vector<std::size_t> v;
  for (const auto& x : j) v.push_back(json_count(x, key));
  return v;
}

}  // namespace detail

// Overlays the keys of `j` on `cfg`. Unknown keys are rejected.
inline void apply_json(Config& cfg, const nlohmann::json& j) {
  using namespace detail;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  // model first: matrix-valued keys need the dimension
  if (j.contains("model")) cfg.model = json_get<std::string>(j["model"], "model");
  for (const auto& [key, v] : j.items()) {
    if (key == "model") continue;
    if (key == "loss") cfg.loss = json_get<std::string>(v, key);
    else if (key == "omega") cfg.omega = json_number(v, key);
    else if (key == "seed") cfg.seed = json_count(v, key);
    else if (key == "n") cfg.n = json_count(v, key);
    else if (key == "data_seed") cfg.data_seed = json_count(v, key);
    else if (key == "rho") cfg.rho = json_number(v, key);
    else if (key == "gamma") cfg.gamma = json_number(v, key);
    else if (key == "beta") cfg.beta = json_number(v, key);
    else if (key == "poisson_bound") cfg.poisson_bound = json_get<std::string>(v, key);
    else if (key == "T") cfg.T = json_number(v, key);
    else if (key == "horizon") cfg.horizon = json_number(v, key);
    else if (key == "eta") cfg.eta = json_number(v, key);
    else if (key == "b") cfg.b = json_count(v, key);
    else if (key == "init_theta") cfg.init_theta = v.is_null() ? std::nullopt : std::optional(json_vector(v, key));
    else if (key == "initial_velocity") cfg.initial_velocity = json_get<std::string>(v, key);
    else if (key == "strict_thinning") cfg.strict_thinning = json_get<bool>(v, key);
    else if (key == "subsample") cfg.subsample = v.is_null() ? std::nullopt : std::optional(json_count(v, key));
    else if (key == "store_rejected") cfg.store_rejected = json_get<bool>(v, key);
    else if (key == "burnin") cfg.burnin = json_number(v, key);
    else if (key == "m") cfg.m = json_count(v, key);
    else if (key == "S") cfg.S = json_count(v, key);
    else if (key == "proposal_cov")
      cfg.proposal_cov = v.is_null() ? std::nullopt : std::optional(json_matrix(v, key, cfg.dimension()));
    else if (key == "blocking") cfg.blocking = v.is_null() ? std::nullopt : std::optional(json_get<std::string>(v, key));
    else if (key == "audit_interval") cfg.audit_interval = json_count(v, key);
    else if (key == "gold_T") cfg.gold_T = v.is_null() ? std::nullopt : std::optional(json_number(v, key));
    else if (key == "gold_b") cfg.gold_b = json_count(v, key);
    else if (key == "b_values") cfg.b_values = json_counts(v, key);
    else if (key == "m_values") cfg.m_values = json_counts(v, key);
    else if (key == "checkpoints") cfg.checkpoints = json_count(v, key);
    else throw ConfigError("unknown config key '" + key + "'");
  }
}

inline std::string default_loss(const std::string& model) { return model == "poisson" ? "beta" : "mmd"; }

inline void validate(Config& cfg) {
  static const std::set<std::string> models{"copula", "regression", "poisson"};
  if (!models.count(cfg.model)) throw ConfigError("model must be one of copula, regression, poisson");
  if (cfg.loss.empty()) cfg.loss = default_loss(cfg.model);
  if (cfg.loss != default_loss(cfg.model)) throw ConfigError("loss '" + cfg.loss + "' is not available for " + cfg.model);
  if (!cfg.omega) throw ConfigError("omega is required");
  if (!(*cfg.omega >= 0.0)) throw ConfigError("omega must be non-negative");
  if (cfg.n == 0) throw ConfigError("n must be positive");
  if (!(std::abs(cfg.rho) < 1.0)) throw ConfigError("rho must lie in (-1, 1)");
  if (!(cfg.gamma > 0.0)) throw ConfigError("gamma must be positive");
  if (!(cfg.beta > 0.0)) throw ConfigError("beta must be positive");
  if (cfg.poisson_bound != "exact" && cfg.poisson_bound != "closed_form") throw ConfigError("poisson_bound must be exact or closed_form");
  if (!(cfg.T > 0.0)) throw ConfigError("T must be positive");
  if (!(cfg.horizon > 0.0)) throw ConfigError("horizon must be positive");
  if (!(cfg.eta >= 1.0)) throw ConfigError("eta must be at least 1");
  const std::size_t min_b = cfg.loss == "mmd" ? 2 : 1;
  if (cfg.b < min_b || cfg.gold_b < min_b) throw ConfigError(cfg.loss == "mmd" ? "unbiased MMD needs b >= 2" : "b must be positive");
  for (auto v : cfg.b_values)
    if (v < min_b) throw ConfigError(cfg.loss == "mmd" ? "unbiased MMD needs b >= 2" : "b must be positive");
  if (cfg.initial_velocity != "positive" && cfg.initial_velocity != "random")
    throw ConfigError("initial_velocity must be positive or random");
  if (cfg.subsample && (*cfg.subsample == 0 || *cfg.subsample > cfg.n)) throw ConfigError("subsample must lie in [1, n]");
  if (!(cfg.burnin >= 0.0 && cfg.burnin < 1.0)) throw ConfigError("burnin must lie in [0, 1)");
  if (cfg.m == 0 || cfg.S == 0) throw ConfigError("m and S must be positive");
  for (auto v : cfg.m_values)
    if (v == 0) throw ConfigError("m values must be positive");
  const auto d = static_cast<Eigen::Index>(cfg.dimension());
  if (cfg.init_theta && cfg.init_theta->size() != d) throw ConfigError("init_theta has the wrong length");
  if (cfg.proposal_cov) {
    if (cfg.proposal_cov->rows() != d || cfg.proposal_cov->cols() != d) throw ConfigError("proposal_cov has the wrong shape");
    Eigen::LLT<Eigen::MatrixXd> llt(*cfg.proposal_cov);
    if (llt.info() != Eigen::Success) throw ConfigError("proposal_cov is not positive definite");
  }
  if (cfg.blocking && *cfg.blocking != "per_observation" && *cfg.blocking != "per_draw")
    throw ConfigError("blocking must be per_observation or per_draw");
  if (cfg.gold_T && !(*cfg.gold_T > 0.0)) throw ConfigError("gold_T must be positive");
  if (cfg.checkpoints == 0) throw ConfigError("checkpoints must be positive");
}

inline nlohmann::json to_json(const Config& c) {
  nlohmann::json j;
  j["model"] = c.model;
  j["loss"] = c.loss;
  j["omega"] = c.omega ? nlohmann::json(*c.omega) : nlohmann::json(nullptr);
  j["seed"] = c.seed;
  j["n"] = c.n;
  j["data_seed"] = c.data_seed;
  j["rho"] = c.rho;
  j["gamma"] = c.gamma;
  j["beta"] = c.beta;
  j["poisson_bound"] = c.poisson_bound;
  j["T"] = c.T;
  j["horizon"] = c.horizon;
  j["eta"] = c.eta;
  j["b"] = c.b;
  j["init_theta"] = c.init_theta ? nlohmann::json(std::vector<double>(c.init_theta->begin(), c.init_theta->end()))
                                 : nlohmann::json(nullptr);
  j["initial_velocity"] = c.initial_velocity;
  j["strict_thinning"] = c.strict_thinning;
  j["subsample"] = c.subsample ? nlohmann::json(*c.subsample) : nlohmann::json(nullptr);
  j["store_rejected"] = c.store_rejected;
  j["burnin"] = c.burnin;
  j["m"] = c.m;
  j["S"] = c.S;
  if (c.proposal_cov) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < c.proposal_cov->rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(c.proposal_cov->cols()));
      for (Eigen::Index k = 0; k < c.proposal_cov->cols(); ++k) row[static_cast<std::size_t>(k)] = (*c.proposal_cov)(r, k);
      rows.push_back(row);
    }
    j["proposal_cov"] = rows;
  } else {
    j["proposal_cov"] = nullptr;
  }
  j["blocking"] = c.blocking ? nlohmann::json(*c.blocking) : nlohmann::json(nullptr);
  j["audit_interval"] = c.audit_interval;
  j["gold_T"] = c.gold_T ? nlohmann::json(*c.gold_T) : nlohmann::json(nullptr);
  j["gold_b"] = c.gold_b;
  j["b_values"] = c.b_values;
  j["m_values"] = c.m_values;
  j["checkpoints"] = c.checkpoints;
  return j;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

// A manifest carries its resolved config under "config"; plain configs are used as is.
inline nlohmann::json config_section(const nlohmann::json& j) {
  return j.is_object() && j.contains("config") && j.contains("experiment") ? j["config"] : j;
}

inline Config load_config(const std::string& path) {
  Config cfg;
  apply_json(cfg, config_section(read_json_file(path)));
  validate(cfg);
  return cfg;
}

}  // namespace zzgibbs

#endif
