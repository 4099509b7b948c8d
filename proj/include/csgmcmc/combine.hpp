#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "csgmcmc/model.hpp"
#include "csgmcmc/sampler.hpp"

namespace csgmcmc {

/// Normalized per-cycle weights. cycles[i] is the cycle tag weights[i]
/// belongs to; log_evidence[i] is the unnormalized log estimate.
struct CycleWeights {
  std::vector<std::int64_t> cycles;
  std::vector<double> weights;
  std::vector<double> log_evidence;

  double weight_of(std::int64_t cycle) const {
    for (std::size_t i = 0; i < cycles.size(); ++i)
      if (cycles[i] == cycle) return weights[i];
    throw std::out_of_range("no weight for cycle " + std::to_string(cycle));
  }
};

class DegenerateWeights : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::map<std::int64_t, std::vector<const SampleRecord*>> group_by_cycle(
    const SampleSet& samples) {
  std::map<std::int64_t, std::vector<const SampleRecord*>> groups;
  for (const auto& r : samples.records) groups[r.cycle].push_back(&r);
  return groups;
}

inline double log_sum_exp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline CycleWeights normalize_log_weights(std::vector<std::int64_t> cycles,
                                          std::vector<double> log_w) {
  const double total = log_sum_exp(log_w);
  if (!std::isfinite(total))
    throw DegenerateWeights("cycle weights are degenerate (log normalizer " +
                            std::to_string(total) + ")");
  CycleWeights out;
  out.cycles = std::move(cycles);
  out.weights.reserve(log_w.size());
  for (double lw : log_w) out.weights.push_back(std::exp(lw - total));
  out.log_evidence = std::move(log_w);
  return out;
}

}  // namespace detail

/// Harmonic-mean estimate of each cycle's share of posterior mass,
///   w_m ∝ [ (1/K_m) sum_j 1 / p(D | theta_j) ]^-1,
/// evaluated in the log domain. Log-likelihoods already stored on records
/// are reused; missing ones are computed from `target`.
///
/// The harmonic-mean estimator has unbounded variance in general; prefer
/// uniform_weights when cycles are known to have similar likelihoods.
inline CycleWeights harmonic_weights(const SampleSet& samples, const TargetModel& target) {
  if (samples.empty()) throw std::invalid_argument("harmonic_weights: no samples");
  std::vector<std::int64_t> cycles;
  std::vector<double> log_w;
  for (const auto& [cycle, recs] : detail::group_by_cycle(samples)) {
    std::vector<double> neg_ll;
    neg_ll.reserve(recs.size());
    for (const auto* r : recs)
      neg_ll.push_back(-(r->full_log_lik ? *r->full_log_lik : target.full_log_likelihood(r->theta)));
    cycles.push_back(cycle);
    log_w.push_back(std::log(static_cast<double>(recs.size())) - detail::log_sum_exp(neg_ll));
  }
  return detail::normalize_log_weights(std::move(cycles), std::move(log_w));
}

/// Same weights when every sample already carries full_log_lik.
inline CycleWeights harmonic_weights(const SampleSet& samples) {
  for (const auto& r : samples.records)
    if (!r.full_log_lik)
      throw std::invalid_argument("harmonic_weights: record at iteration " +
                                  std::to_string(r.iter) + " has no log-likelihood");
  return harmonic_weights(samples, FlatTarget(samples.dim));
}

/// Equal weight for every cycle present.
inline CycleWeights uniform_weights(const SampleSet& samples) {
  if (samples.empty()) throw std::invalid_argument("uniform_weights: no samples");
  auto cycles = samples.cycles();
  std::vector<double> log_w(cycles.size(), 0.0);
  return detail::normalize_log_weights(std::move(cycles), std::move(log_w));
}

namespace detail {

template <typename F>
using estimate_t = std::decay_t<std::invoke_result_t<F, const Vector&>>;

template <typename T>
T zero_like(const T& x) {
  if constexpr (std::is_arithmetic_v<T>) {
    return T{0};
  } else {
    return T::Zero(x.rows(), x.cols());
  }
}

}  // namespace detail

/// sum_m w_m * (1/K_m) sum_j f(theta_j^(m)). f may return a scalar or an
/// Eigen vector. Cycles are reduced in ascending tag order.
template <typename F>
auto weighted_expectation(const SampleSet& samples, const CycleWeights& weights, F&& f)
    -> detail::estimate_t<F> {
  using T = detail::estimate_t<F>;
  if (samples.empty()) throw std::invalid_argument("weighted_expectation: no samples");
  const auto groups = detail::group_by_cycle(samples);
  if (groups.size() != weights.cycles.size())
    throw std::invalid_argument("weighted_expectation: samples have " +
                                std::to_string(groups.size()) + " cycles but weights cover " +
                                std::to_string(weights.cycles.size()));
  std::optional<T> total;
  for (const auto& [cycle, recs] : groups) {
    double w = 0.0;
    try {
      w = weights.weight_of(cycle);
    } catch (const std::out_of_range&) {
      throw std::invalid_argument("weighted_expectation: cycle " + std::to_string(cycle) +
                                  " has no weight");
    }
    std::optional<T> acc;
    for (const auto* r : recs) {
      T v = f(r->theta);
      if (!acc) acc = detail::zero_like(v);
      *acc += v;
    }
    T part = (*acc) * (w / static_cast<double>(recs.size()));
    if (!total) total = detail::zero_like(part);
    *total += part;
  }
  return *total;
}

/// Assigns points to one of `num_regions` disjoint regions, 1-based.
struct RegionClassifier {
  std::int64_t num_regions = 1;
  std::function<std::int64_t(const Vector&)> assign;
};

/// Voronoi partition around each cycle's sample centroid; region m is the
/// m-th cycle in ascending tag order.
inline RegionClassifier nearest_centroid_classifier(const SampleSet& samples) {
  if (samples.empty()) throw std::invalid_argument("nearest_centroid_classifier: no samples");
  std::vector<Vector> centroids;
  for (const auto& [cycle, recs] : detail::group_by_cycle(samples)) {
    Vector c = Vector::Zero(samples.dim);
    for (const auto* r : recs) c += r->theta;
    centroids.push_back(c / static_cast<double>(recs.size()));
  }
  RegionClassifier cls;
  cls.num_regions = static_cast<std::int64_t>(centroids.size());
  cls.assign = [centroids = std::move(centroids)](const Vector& x) {
    std::int64_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < centroids.size(); ++i) {
      const double d = (x - centroids[i]).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<std::int64_t>(i);
      }
    }
    return best + 1;
  };
  return cls;
}

/// Disjoint-region estimator: every sample is reassigned to a region, the
/// per-region means are taken over all samples landing there, and those
/// means are combined with `region_weights` (one per region, in region
/// order). Empty regions are dropped and the remaining weights rescaled.
template <typename F>
auto region_expectation(const SampleSet& samples, const RegionClassifier& classifier,
                        const std::vector<double>& region_weights, F&& f)
    -> detail::estimate_t<F> {
  using T = detail::estimate_t<F>;
  if (samples.empty()) throw std::invalid_argument("region_expectation: no samples");
  if (!classifier.assign || classifier.num_regions < 1)
    throw std::invalid_argument("region_expectation: classifier has no regions");
  if (static_cast<std::int64_t>(region_weights.size()) != classifier.num_regions)
    throw std::invalid_argument("region_expectation: need one weight per region");
  const auto R = static_cast<std::size_t>(classifier.num_regions);
  std::vector<std::optional<T>> sums(R);
  std::vector<std::int64_t> counts(R, 0);
  for (const auto& r : samples.records) {
    const std::int64_t m = classifier.assign(r.theta);
    if (m < 1 || m > classifier.num_regions)
      throw std::out_of_range("region_expectation: classifier returned region " +
                              std::to_string(m));
    const auto i = static_cast<std::size_t>(m - 1);
    T v = f(r.theta);
    if (!sums[i]) sums[i] = detail::zero_like(v);
    *sums[i] += v;
    ++counts[i];
  }
  double occupied_weight = 0.0;
  for (std::size_t i = 0; i < R; ++i)
    if (counts[i] > 0) occupied_weight += region_weights[i];
  if (!(occupied_weight > 0.0))
    throw std::invalid_argument("region_expectation: no occupied region carries weight");
  std::optional<T> total;
  for (std::size_t i = 0; i < R; ++i) {
    if (counts[i] == 0) continue;
    T part = (*sums[i]) * (region_weights[i] / (occupied_weight * static_cast<double>(counts[i])));
    if (!total) total = detail::zero_like(part);
    *total += part;
  }
  return *total;
}

/// Uniform region weights.
template <typename F>
auto region_expectation(const SampleSet& samples, const RegionClassifier& classifier, F&& f)
    -> detail::estimate_t<F> {
  const std::vector<double> w(static_cast<std::size_t>(std::max<std::int64_t>(classifier.num_regions, 0)),
                              1.0);
  return region_expectation(samples, classifier, w, std::forward<F>(f));
}

}  // namespace csgmcmc
