#ifndef ZZGIBBS_PMCMC_HPP
#define ZZGIBBS_PMCMC_HPP

#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zzgibbs/aux_state.hpp"
#include "zzgibbs/rng.hpp"
#include "zzgibbs/trajectory.hpp"

namespace zzgibbs {

// Model interface for block pseudo-marginal MCMC on pi(theta) exp(-omega L).
template <class M>
concept PmcmcModel = requires(const M& m, const Eigen::VectorXd& th, const AuxState& aux, std::size_t k) {
  { m.dimension() } -> std::convertible_to<std::size_t>;
  { m.log_prior(th) } -> std::convertible_to<double>;
  { m.aux_layout(k) } -> std::convertible_to<AuxLayout>;
  { m.loss_estimate(th, aux) } -> std::convertible_to<double>;
  { m.pmcmc_pseudo_observations(k) } -> std::convertible_to<std::size_t>;
  { m.default_blocking() } -> std::convertible_to<BlockStrategy>;
};

// Returns a copy of `state` with one block redrawn; `changed` receives the
// block (per_observation) or draw (per_draw) index.
inline AuxState block_update(const AuxState& state, BlockStrategy strategy, Rng& rng, std::size_t* changed = nullptr) {
  AuxState next = state;
  const AuxLayout& L = state.layout;
  if (strategy == BlockStrategy::per_observation) {
    const std::size_t j = rng.index(L.blocks);
    for (std::size_t a = 0; a < L.draws; ++a)
      for (std::size_t q = 0; q < L.noise_dim; ++q) next.values[next.index(j, a, q)] = draw_noise(L.kind, rng);
    if (changed) *changed = j;
  } else {
    const std::size_t a = rng.index(L.draws);
    for (std::size_t j = 0; j < L.blocks; ++j)
      for (std::size_t q = 0; q < L.noise_dim; ++q) next.values[next.index(j, a, q)] = draw_noise(L.kind, rng);
    if (changed) *changed = a;
  }
  return next;
}

// exp(-omega L_new) pi(theta_new) / (exp(-omega L_old) pi(theta_old)) from log priors.
inline double mh_accept_prob(double loss_old, double loss_new, double log_prior_old, double log_prior_new,
                             double omega) {
  return std::exp(-omega * (loss_new - loss_old) + (log_prior_new - log_prior_old));
}

struct PmcmcConfig {
  std::size_t m = 10;
  std::size_t iterations = 10000;
  double omega = 1.0;
  Eigen::MatrixXd proposal_covariance;  // empty: 2.38^2 / d * I
  Eigen::VectorXd initial_position;
  std::uint64_t seed = 1;
  std::optional<BlockStrategy> blocking;  // empty: the model's default
  std::size_t audit_interval = 1000;
};

struct PmcmcDiagnostics {
  std::uint64_t accepted = 0;
  std::uint64_t simulator_calls = 0;
  std::uint64_t pseudo_observations = 0;
  std::uint64_t nonfinite_rejections = 0;
  std::uint64_t audits = 0;
  std::uint64_t audit_failures = 0;
  bool stuck_warning = false;  // no acceptance within 10^4 iterations
  std::vector<std::string> messages;
};

struct Chain {
  Eigen::MatrixXd draws;           // (S + 1) x d, row 0 is the initial state
  std::vector<std::uint8_t> accepted;  // S + 1 entries, entry 0 is 0
  PmcmcDiagnostics diagnostics;

  std::size_t iterations() const { return accepted.empty() ? 0 : accepted.size() - 1; }
  double acceptance_rate() const {
    return iterations() ? static_cast<double>(diagnostics.accepted) / static_cast<double>(iterations()) : 0.0;
  }
};

inline Eigen::MatrixXd default_proposal_covariance(std::size_t d) {
  return Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)) *
         (2.38 * 2.38 / static_cast<double>(d));
}

template <PmcmcModel Model>
Chain bpmcmc_run(const Model& model, const PmcmcConfig& cfg, Rng& rng) {
  const std::size_t d = model.dimension();
  if (static_cast<std::size_t>(cfg.initial_position.size()) != d)
    throw std::invalid_argument("initial position has wrong dimension");
  if (cfg.m == 0) throw std::invalid_argument("m must be positive");
  if (!(cfg.omega >= 0.0)) throw std::invalid_argument("omega must be non-negative");
  const Eigen::MatrixXd sigma = cfg.proposal_covariance.size() ? cfg.proposal_covariance : default_proposal_covariance(d);
  if (static_cast<std::size_t>(sigma.rows()) != d || sigma.cols() != sigma.rows())
    throw std::invalid_argument("proposal covariance has wrong shape");
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("proposal covariance is not positive definite");
  const Eigen::MatrixXd L = llt.matrixL();
  const BlockStrategy strategy = cfg.blocking ? *cfg.blocking : model.default_blocking();

  Chain chain;
  auto& diag = chain.diagnostics;
  chain.draws.resize(static_cast<Eigen::Index>(cfg.iterations + 1), static_cast<Eigen::Index>(d));
  chain.accepted.assign(cfg.iterations + 1, 0);

  Eigen::VectorXd theta = cfg.initial_position, z(d);
  AuxState aux = make_aux_state(model.aux_layout(cfg.m), rng);
  double loss = model.loss_estimate(theta, aux);
  double log_prior = model.log_prior(theta);
  if (!std::isfinite(loss) || !std::isfinite(log_prior))
    throw std::invalid_argument("non-finite loss or prior at the initial state");
  chain.draws.row(0) = theta.transpose();
  const std::uint64_t pseudo = model.pmcmc_pseudo_observations(cfg.m);
  std::size_t since_accept = 0;

  for (std::size_t s = 1; s <= cfg.iterations; ++s) {
    AuxState proposed_aux = block_update(aux, strategy, rng);
    for (std::size_t j = 0; j < d; ++j) z[static_cast<Eigen::Index>(j)] = rng.normal();
    const Eigen::VectorXd proposal = theta + L * z;
    const double new_loss = model.loss_estimate(proposal, proposed_aux);
    const double new_log_prior = model.log_prior(proposal);
    diag.simulator_calls += cfg.m;
    diag.pseudo_observations += pseudo;
    const double alpha = mh_accept_prob(loss, new_loss, log_prior, new_log_prior, cfg.omega);
    const double u = rng.uniform();
    if (std::isnan(alpha) || !std::isfinite(new_loss) || !std::isfinite(new_log_prior)) {
      ++diag.nonfinite_rejections;
      if (diag.messages.size() < 20)
        diag.messages.push_back("non-finite acceptance ratio at iteration " + std::to_string(s) + ", rejected");
    } else if (u < alpha) {
      theta = proposal;
      aux = std::move(proposed_aux);
      loss = new_loss;
      log_prior = new_log_prior;
      ++diag.accepted;
      chain.accepted[s] = 1;
      since_accept = 0;
    }
    if (!chain.accepted[s] && ++since_accept == 10000 && !diag.stuck_warning) {
      diag.stuck_warning = true;
      diag.messages.push_back("no acceptance in 10000 iterations up to " + std::to_string(s));
    }
    chain.draws.row(static_cast<Eigen::Index>(s)) = theta.transpose();
    if (cfg.audit_interval && s % cfg.audit_interval == 0) {
      ++diag.audits;
      if (model.loss_estimate(theta, aux) != loss) ++diag.audit_failures;
    }
  }
  return chain;
}

template <PmcmcModel Model>
Chain bpmcmc_run(const Model& model, const PmcmcConfig& cfg) {
  Rng rng(cfg.seed);
  return bpmcmc_run(model, cfg, rng);
}

inline void write_draws_csv(const Chain& chain, std::ostream& os) {
  const auto d = chain.draws.cols();
  os << "s";
  for (Eigen::Index j = 1; j <= d; ++j) os << ",theta_" << j;
  os << ",accepted\n";
  for (Eigen::Index s = 0; s < chain.draws.rows(); ++s) {
    os << s;
    for (Eigen::Index j = 0; j < d; ++j) os << ',' << format_double(chain.draws(s, j));
    os << ',' << static_cast<int>(chain.accepted[static_cast<std::size_t>(s)]) << '\n';
  }
}

}  // namespace zzgibbs

#endif
