#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace csgmcmc {

enum class ScheduleKind { CyclicalCosine, PolynomialDecay, Constant };

enum class StageLabel { Exploration, Sampling };

inline std::string_view to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::CyclicalCosine: return "cyclical";
    case ScheduleKind::PolynomialDecay: return "polynomial";
    case ScheduleKind::Constant: return "constant";
  }
  return "unknown";
}

inline ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "cyclical") return ScheduleKind::CyclicalCosine;
  if (name == "polynomial") return ScheduleKind::PolynomialDecay;
  if (name == "constant") return ScheduleKind::Constant;
  throw std::invalid_argument("unknown schedule kind '" + std::string(name) +
                              "' (expected cyclical, polynomial or constant)");
}

inline std::string_view to_string(StageLabel stage) {
  return stage == StageLabel::Exploration ? "exploration" : "sampling";
}

/// Stepsize schedule over iterations k = 1..total_iters.
///
/// CyclicalCosine restarts at alpha0 every ceil(K/M) iterations and decays
/// along a half cosine; the first `beta` fraction of every cycle is the
/// exploration stage. PolynomialDecay is a * (b + k)^-gamma. Constant is
/// alpha0 everywhere.
struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::CyclicalCosine;
  double alpha0 = 0.1;
  std::int64_t num_cycles = 1;
  std::int64_t total_iters = 1;
  double beta = 0.25;
  double decay_a = 0.05;
  double decay_b = 0.0;
  double decay_gamma = 0.55;

  static ScheduleSpec cyclical(double alpha0, std::int64_t cycles, std::int64_t iters,
                               double beta) {
    ScheduleSpec s;
    s.kind = ScheduleKind::CyclicalCosine;
    s.alpha0 = alpha0;
    s.num_cycles = cycles;
    s.total_iters = iters;
    s.beta = beta;
    return s;
  }

  static ScheduleSpec polynomial(double a, double b, double gamma, std::int64_t iters) {
    ScheduleSpec s;
    s.kind = ScheduleKind::PolynomialDecay;
    s.alpha0 = a * std::pow(b + 1.0, -gamma);
    s.decay_a = a;
    s.decay_b = b;
    s.decay_gamma = gamma;
    s.total_iters = iters;
    return s;
  }

  static ScheduleSpec constant(double alpha0, std::int64_t iters) {
    ScheduleSpec s;
    s.kind = ScheduleKind::Constant;
    s.alpha0 = alpha0;
    s.total_iters = iters;
    return s;
  }
};

/// Every violated invariant, as "field: message". Empty when valid.
inline std::vector<std::string> violations(const ScheduleSpec& s) {
  std::vector<std::string> out;
  if (!(s.total_iters >= 1)) out.push_back("total_iters: must be >= 1");
  switch (s.kind) {
    case ScheduleKind::CyclicalCosine:
      if (!(s.alpha0 > 0.0)) out.push_back("alpha0: must be > 0");
      if (!(s.num_cycles >= 1)) out.push_back("num_cycles: must be >= 1");
      if (s.num_cycles >= 1 && s.total_iters < s.num_cycles)
        out.push_back("total_iters: must be >= num_cycles");
      // beta = 0 is accepted: it disables the exploration stage entirely.
      if (!(s.beta >= 0.0 && s.beta < 1.0)) out.push_back("beta: must lie in [0, 1)");
      break;
    case ScheduleKind::PolynomialDecay:
      if (!(s.decay_a > 0.0)) out.push_back("decay_a: must be > 0");
      if (!(s.decay_b >= 0.0)) out.push_back("decay_b: must be >= 0");
      if (!(s.decay_gamma > 0.5 && s.decay_gamma <= 1.0))
        out.push_back("decay_gamma: must lie in (0.5, 1]");
      break;
    case ScheduleKind::Constant:
      if (!(s.alpha0 > 0.0)) out.push_back("alpha0: must be > 0");
      break;
  }
  return out;
}

inline void validate(const ScheduleSpec& s) {
  auto v = violations(s);
  if (v.empty()) return;
  std::string msg = "invalid schedule:";
  for (const auto& e : v) msg += " " + e + ";";
  throw std::invalid_argument(msg);
}

/// ceil(K / M), the number of iterations in one cycle.
inline std::int64_t cycle_length(const ScheduleSpec& s) {
  if (s.kind != ScheduleKind::CyclicalCosine)
    throw std::invalid_argument("cycle_length: schedule is not cyclical");
  return (s.total_iters + s.num_cycles - 1) / s.num_cycles;
}

namespace detail {

inline void check_iter(const ScheduleSpec& s, std::int64_t k) {
  if (k < 1 || k > s.total_iters)
    throw std::out_of_range("iteration " + std::to_string(k) + " outside [1, " +
                            std::to_string(s.total_iters) + "]");
}

inline void require_cyclical(const ScheduleSpec& s, const char* what) {
  if (s.kind != ScheduleKind::CyclicalCosine)
    throw std::invalid_argument(std::string(what) + ": schedule is not cyclical");
}

}  // namespace detail

/// Completed proportion of the current cycle, r(k) in [0, 1).
inline double cycle_progress(const ScheduleSpec& s, std::int64_t k) {
  detail::require_cyclical(s, "cycle_progress");
  detail::check_iter(s, k);
  const std::int64_t len = cycle_length(s);
  return static_cast<double>((k - 1) % len) / static_cast<double>(len);
}

inline double stepsize(const ScheduleSpec& s, std::int64_t k) {
  detail::check_iter(s, k);
  switch (s.kind) {
    case ScheduleKind::CyclicalCosine: {
      const double r = cycle_progress(s, k);
      return 0.5 * s.alpha0 * (std::cos(std::numbers::pi * r) + 1.0);
    }
    case ScheduleKind::PolynomialDecay:
      return s.decay_a * std::pow(s.decay_b + static_cast<double>(k), -s.decay_gamma);
    case ScheduleKind::Constant:
      return s.alpha0;
  }
  throw std::logic_error("stepsize: unhandled schedule kind");
}

inline StageLabel stage(const ScheduleSpec& s, std::int64_t k) {
  detail::require_cyclical(s, "stage");
  return cycle_progress(s, k) < s.beta ? StageLabel::Exploration : StageLabel::Sampling;
}

/// Stage for any schedule kind; non-cyclical schedules always sample.
inline StageLabel stage_or_sampling(const ScheduleSpec& s, std::int64_t k) {
  if (s.kind != ScheduleKind::CyclicalCosine) {
    detail::check_iter(s, k);
    return StageLabel::Sampling;
  }
  return stage(s, k);
}

/// 1-based cycle index m of iteration k.
inline std::int64_t cycle_index(const ScheduleSpec& s, std::int64_t k) {
  detail::require_cyclical(s, "cycle_index");
  detail::check_iter(s, k);
  return 1 + (k - 1) / cycle_length(s);
}

/// Number of exploration iterations at the head of a full cycle.
inline std::int64_t exploration_length(const ScheduleSpec& s) {
  detail::require_cyclical(s, "exploration_length");
  const std::int64_t len = cycle_length(s);
  std::int64_t n = 0;
  while (n < len && static_cast<double>(n) / static_cast<double>(len) < s.beta) ++n;
  return n;
}

}  // namespace csgmcmc
