#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "csgmcmc/model.hpp"
#include "csgmcmc/random.hpp"
#include "csgmcmc/schedule.hpp"

namespace csgmcmc {

enum class BaseSampler { SGLD, SGHMC, HMC };

inline std::string_view to_string(BaseSampler b) {
  switch (b) {
    case BaseSampler::SGLD: return "sgld";
    case BaseSampler::SGHMC: return "sghmc";
    case BaseSampler::HMC: return "hmc";
  }
  return "unknown";
}

inline BaseSampler parse_base_sampler(std::string_view name) {
  if (name == "sgld") return BaseSampler::SGLD;
  if (name == "sghmc") return BaseSampler::SGHMC;
  if (name == "hmc") return BaseSampler::HMC;
  throw std::invalid_argument("unknown sampler '" + std::string(name) +
                              "' (expected sgld, sghmc or hmc)");
}

struct SamplerConfig {
  BaseSampler base = BaseSampler::SGLD;
  ScheduleSpec schedule;
  double temperature = 1.0;
  double friction_eta = 0.5;
  double noise_estimate = 0.0;  // gamma-hat, subtracted from the friction noise
  Eigen::Index minibatch_size = 0;  // 0: full data
  int hmc_leapfrog_steps = 10;
  double hmc_stepsize = 0.1;
  std::uint64_t seed = 0;
};

inline std::vector<std::string> violations(const SamplerConfig& c) {
  std::vector<std::string> out;
  for (auto& v : violations(c.schedule)) out.push_back("schedule." + v);
  if (!(c.temperature >= 0.0)) out.push_back("temperature: must be >= 0");
  if (!(c.friction_eta > 0.0 && c.friction_eta <= 1.0))
    out.push_back("friction_eta: must lie in (0, 1]");
  if (!(c.noise_estimate >= 0.0)) out.push_back("noise_estimate: must be >= 0");
  if (!(c.friction_eta - c.noise_estimate >= 0.0))
    out.push_back("noise_estimate: must not exceed friction_eta");
  if (c.minibatch_size < 0) out.push_back("minibatch_size: must be >= 0");
  if (c.hmc_leapfrog_steps < 1) out.push_back("hmc_leapfrog_steps: must be >= 1");
  if (!(c.hmc_stepsize > 0.0)) out.push_back("hmc_stepsize: must be > 0");
  return out;
}

inline void validate(const SamplerConfig& c) {
  auto v = violations(c);
  if (v.empty()) return;
  std::string msg = "invalid sampler config:";
  for (const auto& e : v) msg += " " + e + ";";
  throw std::invalid_argument(msg);
}

struct SamplerState {
  Vector theta;
  Vector momentum;
  std::int64_t iter = 0;
  Rng rng;

  SamplerState(Vector theta0, std::uint64_t seed)
      : theta(std::move(theta0)), momentum(Vector::Zero(theta.size())), rng(seed) {}
};

struct SampleRecord {
  Vector theta;
  std::int64_t iter = 0;
  std::int64_t cycle = 1;
  StageLabel stage = StageLabel::Sampling;
  std::optional<double> full_log_lik;
};

struct SampleSet {
  Eigen::Index dim = 0;
  std::vector<SampleRecord> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }

  /// Distinct cycle tags in ascending order.
  std::vector<std::int64_t> cycles() const {
    std::set<std::int64_t> s;
    for (const auto& r : records) s.insert(r.cycle);
    return {s.begin(), s.end()};
  }

  std::vector<Vector> points() const {
    std::vector<Vector> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.theta);
    return out;
  }

  void fill_log_likelihoods(const TargetModel& target) {
    for (auto& r : records)
      if (!r.full_log_lik) r.full_log_lik = target.full_log_likelihood(r.theta);
  }

  void append(const SampleSet& other) {
    if (dim == 0) dim = other.dim;
    records.insert(records.end(), other.records.begin(), other.records.end());
  }
};

class DivergedChain : public std::runtime_error {
 public:
  DivergedChain(std::int64_t iter, Vector theta, const std::string& what)
      : std::runtime_error("chain diverged at iteration " + std::to_string(iter) + ": " + what),
        iter_(iter),
        theta_(std::move(theta)) {}

  std::int64_t iter() const { return iter_; }
  const Vector& theta() const { return theta_; }

 private:
  std::int64_t iter_;
  Vector theta_;
};

struct Divergence {
  std::int64_t iter = 0;
  std::string message;
};

/// Output of one chain. On divergence `samples` holds what was collected
/// before the failure and `divergence` is set.
struct ChainResult {
  SampleSet samples;
  SamplerState final_state;
  std::vector<std::string> warnings;
  std::optional<Divergence> divergence;

  bool ok() const { return !divergence.has_value(); }
};

namespace detail {

inline Vector stochastic_gradient(SamplerState& s, const TargetModel& target,
                                  Eigen::Index minibatch_size, std::int64_t iter) {
  Vector g;
  const Eigen::Index n = target.data_size();
  if (n > 0 && minibatch_size > 0 && minibatch_size < n) {
    g = target.grad_potential_minibatch(s.theta, draw_minibatch(n, minibatch_size, s.rng));
  } else {
    g = target.grad_potential_full(s.theta);
  }
  if (!g.allFinite()) throw DivergedChain(iter, s.theta, "non-finite gradient");
  return g;
}

inline void add_noise(Vector& x, double scale, Rng& rng) {
  if (scale == 0.0) return;
  for (Eigen::Index j = 0; j < x.size(); ++j) x(j) += scale * rng.normal();
}

inline void check_finite(const SamplerState& s, std::int64_t iter) {
  if (!s.theta.allFinite()) throw DivergedChain(iter, s.theta, "non-finite position");
  if (!s.momentum.allFinite()) throw DivergedChain(iter, s.theta, "non-finite momentum");
}

}  // namespace detail

/// theta <- theta - alpha * grad U~(theta) + sqrt(2 alpha T) * eps.
/// At T = 0 no noise is drawn and the step is plain (stochastic) gradient
/// descent.
inline void sgld_step(SamplerState& s, const TargetModel& target, double alpha, double temperature,
                      Eigen::Index minibatch_size = 0) {
  if (!(alpha > 0.0)) throw std::invalid_argument("sgld_step: alpha must be > 0");
  const std::int64_t iter = s.iter + 1;
  const Vector g = detail::stochastic_gradient(s, target, minibatch_size, iter);
  s.theta -= alpha * g;
  detail::add_noise(s.theta, std::sqrt(2.0 * alpha * temperature), s.rng);
  s.iter = iter;
  detail::check_finite(s, iter);
}

/// theta <- theta + v, then
/// v <- v - alpha * grad U~(theta) - eta * v + sqrt(2 (eta - gamma_hat) alpha T) * eps.
/// The gradient is taken at the updated position.
inline void sghmc_step(SamplerState& s, const TargetModel& target, double alpha,
                       const SamplerConfig& cfg, double temperature) {
  if (!(alpha > 0.0)) throw std::invalid_argument("sghmc_step: alpha must be > 0");
  const double eta = cfg.friction_eta;
  if (!(eta > 0.0 && eta <= 1.0))
    throw std::invalid_argument("sghmc_step: friction_eta must lie in (0, 1]");
  if (!(eta >= cfg.noise_estimate))
    throw std::invalid_argument("sghmc_step: noise_estimate exceeds friction_eta");
  const std::int64_t iter = s.iter + 1;
  s.theta += s.momentum;
  if (!s.theta.allFinite()) throw DivergedChain(iter, s.theta, "non-finite position");
  const Vector g = detail::stochastic_gradient(s, target, cfg.minibatch_size, iter);
  s.momentum = (1.0 - eta) * s.momentum - alpha * g;
  detail::add_noise(s.momentum, std::sqrt(2.0 * (eta - cfg.noise_estimate) * alpha * temperature),
                    s.rng);
  s.iter = iter;
  detail::check_finite(s, iter);
}

namespace detail {

inline void base_step(SamplerState& s, const TargetModel& target, double alpha,
                      const SamplerConfig& cfg, double temperature) {
  switch (cfg.base) {
    case BaseSampler::SGLD:
      sgld_step(s, target, alpha, temperature, cfg.minibatch_size);
      return;
    case BaseSampler::SGHMC:
      sghmc_step(s, target, alpha, cfg, temperature);
      return;
    case BaseSampler::HMC:
      break;
  }
  throw std::invalid_argument("HMC is not a stochastic-gradient base sampler; use hmc_reference");
}

inline void check_start(const TargetModel& target, const Vector& theta0) {
  if (theta0.size() != target.dim())
    throw std::invalid_argument("initial point has dimension " + std::to_string(theta0.size()) +
                                ", target expects " + std::to_string(target.dim()));
  if (!theta0.allFinite()) throw std::invalid_argument("initial point is not finite");
}

/// Offsets (within a sampling stage of `length` iterations) of `n` records,
/// evenly spaced and ending at the last iteration. Ascending.
inline std::vector<std::int64_t> thinned_offsets(std::int64_t length, std::int64_t n) {
  std::vector<std::int64_t> out;
  if (length <= 0 || n <= 0) return out;
  n = std::min(n, length);
  out.reserve(static_cast<std::size_t>(n));
  for (std::int64_t j = n - 1; j >= 0; --j) out.push_back(length - 1 - (j * length) / n);
  return out;
}

}  // namespace detail

/// Two-stage cyclical SG-MCMC. Iterations whose cycle progress is below
/// beta run the base update at T = 0; the rest run at cfg.temperature and
/// `samples_per_cycle` of them per cycle are recorded. SGHMC momentum is
/// zeroed at the first iteration of every cycle.
inline ChainResult run_cyclical(const TargetModel& target, const SamplerConfig& cfg,
                                const Vector& theta0, std::int64_t samples_per_cycle) {
  validate(cfg);
  if (cfg.schedule.kind != ScheduleKind::CyclicalCosine)
    throw std::invalid_argument("run_cyclical: schedule must be cyclical");
  if (samples_per_cycle < 1)
    throw std::invalid_argument("run_cyclical: samples_per_cycle must be >= 1");
  detail::check_start(target, theta0);

  const ScheduleSpec& sched = cfg.schedule;
  const std::int64_t len = cycle_length(sched);
  const std::int64_t explore = exploration_length(sched);
  const std::int64_t sample_len = len - explore;

  ChainResult result{SampleSet{target.dim(), {}}, SamplerState(theta0, cfg.seed), {}, {}};
  if (sample_len == 0) {
    result.warnings.push_back("no sampling iterations: beta=" + std::to_string(sched.beta) +
                              " leaves every cycle of length " + std::to_string(len) +
                              " in the exploration stage");
  } else if (samples_per_cycle > sample_len) {
    throw std::invalid_argument("run_cyclical: samples_per_cycle=" +
                                std::to_string(samples_per_cycle) +
                                " exceeds the sampling-stage length " + std::to_string(sample_len));
  }

  auto& state = result.final_state;
  std::vector<std::int64_t> keep;  // absolute iterations to record in the current cycle
  std::size_t next_keep = 0;
  try {
    for (std::int64_t k = 1; k <= sched.total_iters; ++k) {
      const std::int64_t pos = (k - 1) % len;
      if (pos == 0) {
        const std::int64_t start = k;
        const std::int64_t end = std::min(start + len - 1, sched.total_iters);
        const std::int64_t avail = std::max<std::int64_t>(0, end - (start + explore) + 1);
        keep.clear();
        next_keep = 0;
        if (sample_len > 0) {
          for (auto off : detail::thinned_offsets(avail, samples_per_cycle))
            keep.push_back(start + explore + off);
          if (avail < samples_per_cycle)
            result.warnings.push_back("cycle " + std::to_string(cycle_index(sched, k)) +
                                      " is truncated: kept " + std::to_string(keep.size()) +
                                      " of " + std::to_string(samples_per_cycle) + " samples");
        }
        if (cfg.base == BaseSampler::SGHMC) state.momentum.setZero();
      }
      const double alpha = stepsize(sched, k);
      const StageLabel st = stage(sched, k);
      detail::base_step(state, target, alpha, cfg,
                        st == StageLabel::Exploration ? 0.0 : cfg.temperature);
      if (next_keep < keep.size() && keep[next_keep] == k) {
        ++next_keep;
        result.samples.records.push_back(
            SampleRecord{state.theta, k, cycle_index(sched, k), st, std::nullopt});
      }
    }
  } catch (const DivergedChain& e) {
    result.divergence = Divergence{e.iter(), e.what()};
  }
  return result;
}

/// Conventional SG-MCMC: `burn_in` iterations at the schedule's first
/// stepsize, then the schedule restarted at index 1. `keep` records are
/// taken evenly after burn-in, the last at the final iteration.
inline ChainResult run_plain(const TargetModel& target, const SamplerConfig& cfg,
                             const Vector& theta0, std::int64_t burn_in, std::int64_t keep) {
  validate(cfg);
  detail::check_start(target, theta0);
  const ScheduleSpec& sched = cfg.schedule;
  const std::int64_t total = sched.total_iters;
  if (burn_in < 0 || keep < 0) throw std::invalid_argument("run_plain: negative burn_in or keep");
  if (burn_in >= total && keep > 0)
    throw std::invalid_argument("run_plain: burn_in leaves no iterations to collect");
  const std::int64_t thin = keep > 0 ? (total - burn_in) / keep : 1;
  if (keep > 0 && thin < 1)
    throw std::invalid_argument("run_plain: burn_in + keep exceeds total_iters=" +
                                std::to_string(total));

  ChainResult result{SampleSet{target.dim(), {}}, SamplerState(theta0, cfg.seed), {}, {}};
  auto& state = result.final_state;
  const double burn_alpha = stepsize(sched, 1);
  const std::int64_t first_kept = total - (keep - 1) * thin;
  try {
    for (std::int64_t k = 1; k <= total; ++k) {
      const double alpha = k <= burn_in ? burn_alpha : stepsize(sched, k - burn_in);
      detail::base_step(state, target, alpha, cfg, cfg.temperature);
      if (keep > 0 && k >= first_kept && (k - first_kept) % thin == 0)
        result.samples.records.push_back(
            SampleRecord{state.theta, k, 1, StageLabel::Sampling, std::nullopt});
    }
  } catch (const DivergedChain& e) {
    result.divergence = Divergence{e.iter(), e.what()};
  }
  return result;
}

/// How a chain decides what to record.
struct CollectionPlan {
  std::int64_t samples_per_cycle = 1;  // cyclical schedules
  std::int64_t burn_in = 0;            // other schedules
  std::int64_t keep = 0;
};

/// run_cyclical for cyclical schedules, run_plain otherwise.
inline ChainResult run_chain(const TargetModel& target, const SamplerConfig& cfg,
                             const Vector& theta0, const CollectionPlan& plan) {
  if (cfg.schedule.kind == ScheduleKind::CyclicalCosine)
    return run_cyclical(target, cfg, theta0, plan.samples_per_cycle);
  return run_plain(target, cfg, theta0, plan.burn_in, plan.keep);
}

/// Independent chains; chain i uses seed derive_seed(cfg.seed, i) and a
/// budget of `per_chain_budget` iterations. Output is a pure function of the
/// inputs whatever `threads` is.
inline std::vector<ChainResult> run_parallel(const TargetModel& target, const SamplerConfig& cfg,
                                             const std::vector<Vector>& inits,
                                             std::int64_t per_chain_budget,
                                             const CollectionPlan& plan, unsigned threads = 0) {
  if (inits.empty()) throw std::invalid_argument("run_parallel: no initial points");
  SamplerConfig base = cfg;
  base.schedule.total_iters = per_chain_budget;
  validate(base);

  std::vector<std::optional<ChainResult>> slots(inits.size());
  std::vector<std::exception_ptr> errors(inits.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < inits.size(); i = next++) {
      try {
        SamplerConfig c = base;
        c.seed = derive_seed(cfg.seed, i);
        slots[i].emplace(run_chain(target, c, inits[i], plan));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(inits.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<ChainResult> out;
  out.reserve(inits.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

struct HmcResult {
  SampleSet samples;
  double acceptance_rate = 0.0;
  double max_energy_error = 0.0;  // largest |H(end) - H(start)| over trajectories
  std::vector<std::string> warnings;
};

/// Full-gradient HMC with unit mass, leapfrog integration and a Metropolis
/// test on the exact Hamiltonian. Records the state after every iteration.
inline HmcResult hmc_reference(const TargetModel& target, int leapfrog_steps, double step,
                               std::int64_t iters, std::uint64_t seed, const Vector& theta0) {
  if (leapfrog_steps < 1) throw std::invalid_argument("hmc: leapfrog_steps must be >= 1");
  if (!(step > 0.0)) throw std::invalid_argument("hmc: stepsize must be > 0");
  if (iters < 1) throw std::invalid_argument("hmc: iters must be >= 1");
  detail::check_start(target, theta0);

  HmcResult out;
  out.samples.dim = target.dim();
  out.samples.records.reserve(static_cast<std::size_t>(iters));
  Rng rng(seed);
  Vector theta = theta0;
  double u = target.potential(theta);
  Vector grad = target.grad_potential_full(theta);
  std::int64_t accepted = 0;
  Vector p(theta.size());
  for (std::int64_t it = 1; it <= iters; ++it) {
    for (Eigen::Index j = 0; j < p.size(); ++j) p(j) = rng.normal();
    const double h0 = u + 0.5 * p.squaredNorm();
    Vector q = theta;
    Vector g = grad;
    p -= 0.5 * step * g;
    for (int l = 0; l < leapfrog_steps; ++l) {
      q += step * p;
      g = target.grad_potential_full(q);
      if (l + 1 < leapfrog_steps) p -= step * g;
    }
    p -= 0.5 * step * g;
    const double u_new = target.potential(q);
    const double h1 = u_new + 0.5 * p.squaredNorm();
    const double dh = h1 - h0;
    if (std::isfinite(dh)) out.max_energy_error = std::max(out.max_energy_error, std::abs(dh));
    const double log_u = std::log(rng.uniform());
    if (std::isfinite(dh) && q.allFinite() && log_u < -dh) {
      theta = std::move(q);
      u = u_new;
      grad = std::move(g);
      ++accepted;
    }
    out.samples.records.push_back(SampleRecord{theta, it, 1, StageLabel::Sampling, std::nullopt});
  }
  out.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(iters);
  if (out.acceptance_rate < 0.1)
    out.warnings.push_back("hmc acceptance rate " + std::to_string(out.acceptance_rate) +
                           " is below 0.1; stepsize is probably too large");
  return out;
}

}  // namespace csgmcmc
