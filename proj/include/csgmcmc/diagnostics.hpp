#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "csgmcmc/random.hpp"
#include "csgmcmc/sampler.hpp"

namespace csgmcmc {

class DegenerateChain : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Effective sample size of a scalar chain against externally supplied
/// reference moments (typically from a long HMC run):
///
///   ESS = B / (1 + 2 sum_s (1 - s/B) rho_s),
///   rho_s = sum_{b>s} (x_b - mu)(x_{b-s} - mu) / (var (B - s)).
///
/// The lag sum stops at the first negative rho_s or at max_lag, and the
/// result is capped at B.
inline double ess(std::span<const double> chain, double ref_mean, double ref_var,
                  std::int64_t max_lag) {
  const auto B = static_cast<std::int64_t>(chain.size());
  if (B < 10) throw std::invalid_argument("ess: need at least 10 samples, got " + std::to_string(B));
  if (!(ref_var > 0.0)) throw std::invalid_argument("ess: reference variance must be > 0");
  if (max_lag < 0 || max_lag >= B)
    throw std::invalid_argument("ess: max_lag must lie in [0, B)");
  const auto [lo, hi] = std::minmax_element(chain.begin(), chain.end());
  if (*lo == *hi) throw DegenerateChain("ess: chain is constant");

  std::vector<double> c(chain.size());
  for (std::size_t i = 0; i < chain.size(); ++i) c[i] = chain[i] - ref_mean;
  double sum = 0.0;
  for (std::int64_t s = 1; s <= max_lag; ++s) {
    double acc = 0.0;
    for (std::int64_t b = s; b < B; ++b) acc += c[b] * c[b - s];
    const double rho = acc / (ref_var * static_cast<double>(B - s));
    if (rho < 0.0) break;
    sum += (1.0 - static_cast<double>(s) / static_cast<double>(B)) * rho;
  }
  const double value = static_cast<double>(B) / (1.0 + 2.0 * sum);
  return std::min(value, static_cast<double>(B));
}

/// Column `coord` of the records, in order.
inline std::vector<double> coordinate_trace(const SampleSet& samples, Eigen::Index coord) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& r : samples.records) out.push_back(r.theta(coord));
  return out;
}

struct ModeCoverageSpec {
  std::vector<Vector> centers;
  double radius = 0.25;
  std::int64_t min_count = 100;
};

/// Number of centers with at least min_count points within `radius`.
inline std::int64_t mode_coverage(const std::vector<Vector>& points, const ModeCoverageSpec& spec) {
  if (!(spec.radius > 0.0)) throw std::invalid_argument("mode_coverage: radius must be > 0");
  std::vector<std::int64_t> counts(spec.centers.size(), 0);
  const double r2 = spec.radius * spec.radius;
  for (const auto& p : points) {
    for (std::size_t i = 0; i < spec.centers.size(); ++i) {
      if (p.size() != spec.centers[i].size())
        throw std::invalid_argument("mode_coverage: sample and center dimensions differ");
      if ((p - spec.centers[i]).squaredNorm() <= r2) ++counts[i];
    }
  }
  return std::count_if(counts.begin(), counts.end(),
                       [&](std::int64_t c) { return c >= spec.min_count; });
}

inline std::int64_t mode_coverage(const SampleSet& samples, const ModeCoverageSpec& spec) {
  return mode_coverage(samples.points(), spec);
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with potentials, O(n^3)). Returns assignment[row] = column.
inline std::vector<std::size_t> solve_assignment(const Matrix& cost) {
  const auto n = static_cast<std::size_t>(cost.rows());
  if (cost.cols() != cost.rows()) throw std::invalid_argument("assignment: cost must be square");
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based rows/columns; column 0 is a virtual source.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) -
                           u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t j = 1; j <= n; ++j) assignment[match[j] - 1] = j - 1;
  return assignment;
}

inline constexpr std::size_t kWassersteinCap = 512;

/// Empirical 2-Wasserstein distance between equal-size point clouds by
/// exact optimal assignment. Clouds above `cap` points are subsampled
/// uniformly (without replacement) to `cap` using a stream seeded by `seed`.
inline double wasserstein2(const std::vector<Vector>& a, const std::vector<Vector>& b,
                           std::size_t cap = kWassersteinCap, std::uint64_t seed = 0) {
  if (a.size() != b.size())
    throw std::invalid_argument("wasserstein2: point sets differ in size (" +
                                std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  if (a.empty()) throw std::invalid_argument("wasserstein2: empty point sets");
  std::vector<std::size_t> ia(a.size()), ib(b.size());
  std::iota(ia.begin(), ia.end(), std::size_t{0});
  std::iota(ib.begin(), ib.end(), std::size_t{0});
  if (a.size() > cap) {
    Rng rng(derive_seed(seed, 0x5752));
    std::vector<std::size_t> sa, sb;
    std::sample(ia.begin(), ia.end(), std::back_inserter(sa), cap, rng.engine());
    std::sample(ib.begin(), ib.end(), std::back_inserter(sb), cap, rng.engine());
    ia = std::move(sa);
    ib = std::move(sb);
  }
  const auto n = static_cast<Eigen::Index>(ia.size());
  Matrix cost(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& p = a[ia[static_cast<std::size_t>(i)]];
      const auto& q = b[ib[static_cast<std::size_t>(j)]];
      if (p.size() != q.size()) throw std::invalid_argument("wasserstein2: dimension mismatch");
      cost(i, j) = (p - q).squaredNorm();
    }
  const auto assignment = solve_assignment(cost);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    total += cost(i, static_cast<Eigen::Index>(assignment[static_cast<std::size_t>(i)]));
  return std::sqrt(total / static_cast<double>(n));
}

struct ConvergenceProbe {
  std::function<double(const Vector&)> test_fn;
  double true_mean = 0.0;
  int seeds = 20;
};

struct BiasMseRow {
  std::int64_t total_iters = 0;
  double mean_estimate = 0.0;  // average of the per-seed estimates
  double bias = 0.0;           // |mean_estimate - true_mean|
  double mse = 0.0;            // mean of (estimate - true_mean)^2
  std::int64_t samples_per_chain = 0;
};

/// For each budget K, runs `probe.seeds` independent chains (seeds derived
/// from cfg.seed by chain index) and averages test_fn over every
/// sampling-stage iteration of each chain.
inline std::vector<BiasMseRow> bias_mse_probe(const TargetModel& target, const SamplerConfig& cfg,
                                              const ConvergenceProbe& probe,
                                              const std::vector<std::int64_t>& budgets,
                                              const Vector& theta0, unsigned threads = 1) {
  if (!probe.test_fn) throw std::invalid_argument("bias_mse_probe: no test function");
  if (probe.seeds < 1) throw std::invalid_argument("bias_mse_probe: seeds must be >= 1");
  if (!std::isfinite(probe.true_mean))
    throw std::invalid_argument("bias_mse_probe: true_mean must be finite");
  std::vector<BiasMseRow> rows;
  for (const auto K : budgets) {
    SamplerConfig c = cfg;
    c.schedule.total_iters = K;
    CollectionPlan plan;
    if (c.schedule.kind == ScheduleKind::CyclicalCosine) {
      plan.samples_per_cycle = std::max<std::int64_t>(1, cycle_length(c.schedule) -
                                                             exploration_length(c.schedule));
    } else {
      plan.keep = K;
    }
    const std::vector<Vector> inits(static_cast<std::size_t>(probe.seeds), theta0);
    const auto chains = run_parallel(target, c, inits, K, plan, threads);
    BiasMseRow row;
    row.total_iters = K;
    double sum_est = 0.0, sum_sq = 0.0;
    for (const auto& ch : chains) {
      if (ch.divergence) throw DivergedChain(ch.divergence->iter, ch.final_state.theta,
                                             ch.divergence->message);
      if (ch.samples.empty()) throw std::runtime_error("bias_mse_probe: chain recorded no samples");
      double acc = 0.0;
      for (const auto& r : ch.samples.records) acc += probe.test_fn(r.theta);
      const double est = acc / static_cast<double>(ch.samples.size());
      sum_est += est;
      sum_sq += (est - probe.true_mean) * (est - probe.true_mean);
      row.samples_per_chain = static_cast<std::int64_t>(ch.samples.size());
    }
    row.mean_estimate = sum_est / probe.seeds;
    row.bias = std::abs(row.mean_estimate - probe.true_mean);
    row.mse = sum_sq / probe.seeds;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace csgmcmc
