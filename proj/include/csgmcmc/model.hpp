#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "csgmcmc/data.hpp"
#include "csgmcmc/random.hpp"

namespace csgmcmc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Subset of data rows used for one stochastic gradient. `scale` is N / N'
/// so that the expected minibatch gradient equals the full gradient.
struct Minibatch {
  std::vector<Eigen::Index> row_indices;
  double scale = 1.0;

  bool empty() const { return row_indices.empty(); }
};

/// Validating constructor: indices in range, unique, 1 <= N' <= N.
inline Minibatch make_minibatch(std::vector<Eigen::Index> rows, Eigen::Index data_size) {
  if (rows.empty()) throw std::invalid_argument("minibatch: no rows");
  if (static_cast<Eigen::Index>(rows.size()) > data_size)
    throw std::invalid_argument("minibatch: size " + std::to_string(rows.size()) +
                                " exceeds data size " + std::to_string(data_size));
  auto sorted = rows;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() < 0 || sorted.back() >= data_size)
    throw std::out_of_range("minibatch: row index out of range");
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("minibatch: duplicate row index");
  Minibatch mb;
  mb.scale = static_cast<double>(data_size) / static_cast<double>(rows.size());
  mb.row_indices = std::move(rows);
  return mb;
}

/// Uniform draw of `size` distinct rows out of `data_size`, consuming the
/// caller's stream.
inline Minibatch draw_minibatch(Eigen::Index data_size, Eigen::Index size, Rng& rng) {
  if (size < 1 || size > data_size)
    throw std::invalid_argument("minibatch size " + std::to_string(size) +
                                " outside [1, " + std::to_string(data_size) + "]");
  Minibatch mb;
  mb.scale = static_cast<double>(data_size) / static_cast<double>(size);
  if (size == data_size) {
    mb.row_indices.resize(static_cast<std::size_t>(size));
    std::iota(mb.row_indices.begin(), mb.row_indices.end(), Eigen::Index{0});
    return mb;
  }
  // Floyd's algorithm: exactly `size` engine calls, no O(N) scratch.
  mb.row_indices.reserve(static_cast<std::size_t>(size));
  std::vector<Eigen::Index> chosen;
  chosen.reserve(static_cast<std::size_t>(size));
  for (Eigen::Index j = data_size - size; j < data_size; ++j) {
    std::uniform_int_distribution<Eigen::Index> pick(0, j);
    const Eigen::Index t = pick(rng.engine());
    const bool seen = std::find(chosen.begin(), chosen.end(), t) != chosen.end();
    chosen.push_back(seen ? j : t);
  }
  mb.row_indices = std::move(chosen);
  return mb;
}

/// Differentiable unnormalized log-posterior p(theta | D) ∝ exp(-U(theta)).
///
/// Implementations are immutable after construction and safe to share
/// between concurrently running chains.
class TargetModel {
 public:
  virtual ~TargetModel() = default;

  virtual Eigen::Index dim() const = 0;

  /// Number of data rows N; 0 for targets without a dataset.
  virtual Eigen::Index data_size() const { return 0; }

  virtual double potential(const Vector& theta) const = 0;
  virtual Vector grad_potential_full(const Vector& theta) const = 0;

  /// Stochastic gradient on a minibatch. Dataless targets ignore the batch.
  virtual Vector grad_potential_minibatch(const Vector& theta, const Minibatch&) const {
    return grad_potential_full(theta);
  }

  virtual double full_log_likelihood(const Vector& theta) const = 0;
};

using TargetPtr = std::shared_ptr<const TargetModel>;

namespace detail {

inline void check_dim(const TargetModel& t, const Vector& theta) {
  if (theta.size() != t.dim())
    throw std::invalid_argument("parameter has dimension " + std::to_string(theta.size()) +
                                ", target expects " + std::to_string(t.dim()));
}

inline double log_sum_exp(const Eigen::Ref<const Vector>& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

/// Correctly rounded sum (Shewchuk's partials), so exactly cancelling terms
/// give exactly zero regardless of order.
inline double exact_sum(const std::vector<double>& xs) {
  std::vector<double> partials;
  for (double x : xs) {
    std::size_t k = 0;
    for (double y : partials) {
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials[k++] = lo;
      x = hi;
    }
    partials.resize(k);
    partials.push_back(x);
  }
  double total = 0.0;
  for (double p : partials) total += p;
  return total;
}

/// log(1 + exp(z)) without overflow.
inline double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Gaussian mixture with a shared covariance.

struct GaussianMixtureSpec {
  std::vector<double> weights;
  std::vector<Vector> centers;
  Matrix covariance;
};

/// 25 equally weighted modes on {-4,-2,0,2,4}^2 with covariance 0.03 I.
inline GaussianMixtureSpec grid_mixture_spec() {
  GaussianMixtureSpec spec;
  const double coords[] = {-4.0, -2.0, 0.0, 2.0, 4.0};
  for (double x : coords)
    for (double y : coords) spec.centers.push_back(Vector{{x, y}});
  spec.weights.assign(spec.centers.size(), 1.0 / static_cast<double>(spec.centers.size()));
  spec.covariance = 0.03 * Matrix::Identity(2, 2);
  return spec;
}

class GaussianMixtureTarget final : public TargetModel {
 public:
  explicit GaussianMixtureTarget(GaussianMixtureSpec spec) : spec_(std::move(spec)) {
    if (spec_.centers.empty()) throw std::invalid_argument("mixture: no components");
    if (spec_.weights.size() != spec_.centers.size())
      throw std::invalid_argument("mixture: weights and centers differ in length");
    const auto d = spec_.centers.front().size();
    if (d < 1) throw std::invalid_argument("mixture: zero-dimensional centers");
    for (const auto& c : spec_.centers)
      if (c.size() != d) throw std::invalid_argument("mixture: centers differ in dimension");
    double total = 0.0;
    for (double w : spec_.weights) {
      if (!(w > 0.0)) throw std::invalid_argument("mixture: weights must be strictly positive");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw std::invalid_argument("mixture: weights must sum to 1");
    const Matrix& cov = spec_.covariance;
    if (cov.rows() != d || cov.cols() != d)
      throw std::invalid_argument("mixture: covariance shape does not match centers");
    if (!cov.isApprox(cov.transpose(), 1e-12))
      throw std::invalid_argument("mixture: covariance is not symmetric");
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success || !(llt.matrixL().toDenseMatrix().diagonal().array() > 0).all())
      throw std::invalid_argument("mixture: covariance is not positive definite");
    chol_ = llt.matrixL();
    precision_ = llt.solve(Matrix::Identity(d, d));
    const double log_det = 2.0 * chol_.diagonal().array().log().sum();
    log_norm_ = -0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + log_det);
    log_weights_.resize(static_cast<Eigen::Index>(spec_.weights.size()));
    for (std::size_t i = 0; i < spec_.weights.size(); ++i)
      log_weights_(static_cast<Eigen::Index>(i)) = std::log(spec_.weights[i]);
  }

  Eigen::Index dim() const override { return spec_.centers.front().size(); }

  const GaussianMixtureSpec& spec() const { return spec_; }

  /// log F(x) computed with log-sum-exp over components.
  double log_density(const Vector& x) const {
    detail::check_dim(*this, x);
    return detail::log_sum_exp(component_log_terms(x));
  }

  double potential(const Vector& x) const override { return -log_density(x); }

  /// Responsibility-weighted precision times displacement.
  Vector grad_potential_full(const Vector& x) const override {
    detail::check_dim(*this, x);
    const Vector terms = component_log_terms(x);
    const double lse = detail::log_sum_exp(terms);
    // Exact summation keeps symmetric configurations exactly balanced.
    std::vector<std::vector<double>> parts(static_cast<std::size_t>(dim()));
    for (std::size_t i = 0; i < spec_.centers.size(); ++i) {
      const double r = std::exp(terms(static_cast<Eigen::Index>(i)) - lse);
      for (Eigen::Index j = 0; j < dim(); ++j)
        parts[static_cast<std::size_t>(j)].push_back(r * (x(j) - spec_.centers[i](j)));
    }
    Vector weighted_disp(dim());
    for (Eigen::Index j = 0; j < dim(); ++j)
      weighted_disp(j) = detail::exact_sum(parts[static_cast<std::size_t>(j)]);
    return precision_ * weighted_disp;
  }

  double full_log_likelihood(const Vector& x) const override { return log_density(x); }

  /// Exact draw: component by weight, then Gaussian around its center.
  Vector sample(Rng& rng) const {
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t comp = spec_.weights.size() - 1;
    for (std::size_t i = 0; i < spec_.weights.size(); ++i) {
      acc += spec_.weights[i];
      if (u < acc) {
        comp = i;
        break;
      }
    }
    Vector z(dim());
    for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = rng.normal();
    return spec_.centers[comp] + chol_ * z;
  }

 private:
  Vector component_log_terms(const Vector& x) const {
    Vector terms(static_cast<Eigen::Index>(spec_.centers.size()));
    for (std::size_t i = 0; i < spec_.centers.size(); ++i) {
      const Vector diff = x - spec_.centers[i];
      terms(static_cast<Eigen::Index>(i)) =
          log_weights_(static_cast<Eigen::Index>(i)) + log_norm_ - 0.5 * diff.dot(precision_ * diff);
    }
    return terms;
  }

  GaussianMixtureSpec spec_;
  Matrix chol_;
  Matrix precision_;
  Vector log_weights_;
  double log_norm_ = 0.0;
};

inline std::shared_ptr<const GaussianMixtureTarget> mixture_target(GaussianMixtureSpec spec) {
  return std::make_shared<const GaussianMixtureTarget>(std::move(spec));
}

// ---------------------------------------------------------------------------
// Bayesian logistic regression with an isotropic Gaussian prior.

class LogisticRegressionTarget final : public TargetModel {
 public:
  /// Appends a bias column of ones to the dataset's features.
  LogisticRegressionTarget(const Dataset& data, double prior_variance)
      : prior_variance_(prior_variance) {
    if (!(prior_variance > 0.0)) throw std::invalid_argument("blr: prior_variance must be > 0");
    if (data.rows() < 1) throw std::invalid_argument("blr: empty dataset");
    if (data.labels.size() != data.rows())
      throw std::invalid_argument("blr: label count does not match row count");
    for (Eigen::Index i = 0; i < data.labels.size(); ++i) {
      const double y = data.labels(i);
      if (y != 0.0 && y != 1.0)
        throw std::invalid_argument("blr: label at row " + std::to_string(i + 1) +
                                    " is not in {0, 1}");
    }
    design_.resize(data.rows(), data.cols() + 1);
    design_.leftCols(data.cols()) = data.features;
    design_.col(data.cols()).setOnes();
    labels_ = data.labels;
  }

  Eigen::Index dim() const override { return design_.cols(); }
  Eigen::Index data_size() const override { return design_.rows(); }
  double prior_variance() const { return prior_variance_; }
  const Matrix& design() const { return design_; }

  double full_log_likelihood(const Vector& theta) const override {
    detail::check_dim(*this, theta);
    const Vector z = design_ * theta;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) ll += labels_(i) * z(i) - detail::softplus(z(i));
    return ll;
  }

  double potential(const Vector& theta) const override {
    return -full_log_likelihood(theta) + theta.squaredNorm() / (2.0 * prior_variance_);
  }

  Vector grad_potential_full(const Vector& theta) const override {
    detail::check_dim(*this, theta);
    const Vector z = design_ * theta;
    Vector resid(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) resid(i) = detail::sigmoid(z(i)) - labels_(i);
    return design_.transpose() * resid + theta / prior_variance_;
  }

  Vector grad_potential_minibatch(const Vector& theta, const Minibatch& mb) const override {
    detail::check_dim(*this, theta);
    if (mb.empty()) return grad_potential_full(theta);
    if (static_cast<Eigen::Index>(mb.row_indices.size()) > data_size())
      throw std::invalid_argument("blr: minibatch larger than dataset");
    Vector g = Vector::Zero(dim());
    for (Eigen::Index i : mb.row_indices) {
      const auto row = design_.row(i);
      const double z = row.dot(theta);
      g += (detail::sigmoid(z) - labels_(i)) * row.transpose();
    }
    return mb.scale * g + theta / prior_variance_;
  }

 private:
  Matrix design_;
  Vector labels_;
  double prior_variance_;
};

inline std::shared_ptr<const LogisticRegressionTarget> blr_target(const Dataset& data,
                                                                  double prior_variance = 100.0) {
  return std::make_shared<const LogisticRegressionTarget>(data, prior_variance);
}

// ---------------------------------------------------------------------------
// Isotropic Gaussian N(mean, variance I): every moment is known.

class GaussianTarget final : public TargetModel {
 public:
  GaussianTarget(Vector mean, double variance) : mean_(std::move(mean)), variance_(variance) {
    if (!(variance > 0.0)) throw std::invalid_argument("gaussian: variance must be > 0");
    if (mean_.size() < 1) throw std::invalid_argument("gaussian: empty mean");
  }

  Eigen::Index dim() const override { return mean_.size(); }
  const Vector& mean() const { return mean_; }
  double variance() const { return variance_; }

  double potential(const Vector& theta) const override {
    detail::check_dim(*this, theta);
    return (theta - mean_).squaredNorm() / (2.0 * variance_);
  }
  Vector grad_potential_full(const Vector& theta) const override {
    detail::check_dim(*this, theta);
    return (theta - mean_) / variance_;
  }
  double full_log_likelihood(const Vector& theta) const override { return -potential(theta); }

 private:
  Vector mean_;
  double variance_;
};

inline std::shared_ptr<const GaussianTarget> gaussian_target(Vector mean, double variance) {
  return std::make_shared<const GaussianTarget>(std::move(mean), variance);
}

/// U = 0 everywhere; SG-MCMC on it is pure injected noise.
class FlatTarget final : public TargetModel {
 public:
  explicit FlatTarget(Eigen::Index dim) : dim_(dim) {}
  Eigen::Index dim() const override { return dim_; }
  double potential(const Vector&) const override { return 0.0; }
  Vector grad_potential_full(const Vector&) const override { return Vector::Zero(dim_); }
  double full_log_likelihood(const Vector&) const override { return 0.0; }

 private:
  Eigen::Index dim_;
};

}  // namespace csgmcmc
