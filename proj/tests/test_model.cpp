#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "csgmcmc/data.hpp"
#include "csgmcmc/model.hpp"

using namespace csgmcmc;

namespace {

Vector central_difference(const TargetModel& t, const Vector& x, double h = 1e-5) {
  Vector g(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Vector xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    g(j) = (t.potential(xp) - t.potential(xm)) / (2.0 * h);
  }
  return g;
}

double rel_err(const Vector& a, const Vector& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
  const auto dir = std::filesystem::temp_directory_path() / "csgmcmc_test_model";
  std::filesystem::create_directories(dir);
  const auto p = dir / name;
  std::ofstream(p) << text;
  return p;
}

Vector random_point(Rng& rng, Eigen::Index d, double scale) {
  Vector x(d);
  for (Eigen::Index j = 0; j < d; ++j) x(j) = scale * rng.normal();
  return x;
}

}  // namespace

TEST(Mixture, PotentialAtOrigin) {
  const auto t = mixture_target(grid_mixture_spec());
  const double expect = -std::log((1.0 / 25.0) / (2.0 * M_PI * 0.03));
  EXPECT_NEAR(t->potential(Vector::Zero(2)), 1.5504, 1e-3);
  EXPECT_NEAR(t->potential(Vector::Zero(2)), expect, 1e-12);
}

TEST(Mixture, GradientAtOriginIsZero) {
  const auto t = mixture_target(grid_mixture_spec());
  const Vector g = t->grad_potential_full(Vector::Zero(2));
  EXPECT_EQ(g(0), 0.0);
  EXPECT_EQ(g(1), 0.0);
}

TEST(Mixture, FiniteDifferenceAtExamplePoint) {
  const auto t = mixture_target(grid_mixture_spec());
  const Vector x{{0.1, -0.2}};
  EXPECT_LE(rel_err(t->grad_potential_full(x), central_difference(*t, x)), 1e-6);
}

TEST(Mixture, NormalizesOnGrid) {
  const auto t = mixture_target(grid_mixture_spec());
  const int n = 1200;
  const double h = 12.0 / n;
  double total = 0.0;
  Vector x(2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      x << -6.0 + (i + 0.5) * h, -6.0 + (j + 0.5) * h;
      total += std::exp(-t->potential(x));
    }
  EXPECT_NEAR(total * h * h, 1.0, 1e-3);
}

TEST(Mixture, FarAwayIsFinite) {
  const auto t = mixture_target(grid_mixture_spec());
  const Vector x{{100.0, 100.0}};
  EXPECT_TRUE(std::isfinite(t->potential(x)));
  EXPECT_TRUE(t->grad_potential_full(x).allFinite());
  EXPECT_LE(rel_err(t->grad_potential_full(x), central_difference(*t, x, 1e-4)), 1e-5);
}

TEST(Mixture, RejectsBadSpecs) {
  auto spec = grid_mixture_spec();
  spec.covariance(0, 0) = -1.0;
  EXPECT_THROW(GaussianMixtureTarget{spec}, std::invalid_argument);
  spec = grid_mixture_spec();
  spec.covariance(0, 1) = 0.01;  // asymmetric
  EXPECT_THROW(GaussianMixtureTarget{spec}, std::invalid_argument);
  spec = grid_mixture_spec();
  spec.weights[0] += 0.1;
  EXPECT_THROW(GaussianMixtureTarget{spec}, std::invalid_argument);
  spec = grid_mixture_spec();
  spec.weights[0] = 0.0;
  spec.weights[1] += 1.0 / 25.0;
  EXPECT_THROW(GaussianMixtureTarget{spec}, std::invalid_argument);
}

TEST(Mixture, ExactSamplerVisitsModesEvenly) {
  const auto t = mixture_target(grid_mixture_spec());
  Rng rng(9);
  std::vector<int> counts(25, 0);
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const Vector x = t->sample(rng);
    const int ix = static_cast<int>(std::lround((x(0) + 4.0) / 2.0));
    const int iy = static_cast<int>(std::lround((x(1) + 4.0) / 2.0));
    ++counts[static_cast<std::size_t>(ix * 5 + iy)];
  }
  for (int c : counts) EXPECT_NEAR(c, n / 25.0, 5.0 * std::sqrt(n / 25.0));
}

TEST(TargetProperty, GradientsMatchFiniteDifferences) {
  Rng rng(123);
  const auto data = synth_logistic(200, 5, 4);
  const std::vector<std::pair<std::string, TargetPtr>> targets{
      {"mixture", mixture_target(grid_mixture_spec())},
      {"blr", blr_target(data, 100.0)},
      {"blr_tight", blr_target(data, 0.5)},
      {"gaussian", gaussian_target(Vector{{1.0, -2.0, 0.5}}, 2.5)},
  };
  for (const auto& [name, t] : targets) {
    for (int i = 0; i < 20; ++i) {
      const Vector x = random_point(rng, t->dim(), name == "mixture" ? 3.0 : 1.0);
      EXPECT_LE(rel_err(t->grad_potential_full(x), central_difference(*t, x)), 1e-5)
          << name << " at point " << i;
    }
  }
}

TEST(Blr, LogLikelihoodAtZero) {
  const auto data = synth_logistic(137, 3, 1);
  const auto t = blr_target(data);
  EXPECT_NEAR(t->full_log_likelihood(Vector::Zero(4)), -137.0 * std::log(2.0), 1e-10);
  EXPECT_EQ(t->dim(), 4);
  EXPECT_EQ(t->data_size(), 137);
}

TEST(Blr, MinibatchPartitionAveragesToFullGradient) {
  const auto data = synth_logistic(120, 4, 2);
  const auto t = blr_target(data, 10.0);
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const Vector theta = random_point(rng, t->dim(), 1.0);
    std::vector<Eigen::Index> perm(120);
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    Vector avg = Vector::Zero(t->dim());
    for (int b = 0; b < 4; ++b) {
      std::vector<Eigen::Index> rows(perm.begin() + 30 * b, perm.begin() + 30 * (b + 1));
      avg += t->grad_potential_minibatch(theta, make_minibatch(rows, 120)) / 4.0;
    }
    EXPECT_LE(rel_err(avg, t->grad_potential_full(theta)), 1e-10);
  }
}

TEST(Blr, RejectsBadInput) {
  auto data = synth_logistic(20, 2, 3);
  data.labels(4) = 2.0;
  EXPECT_THROW(blr_target(data), std::invalid_argument);
  const auto t = blr_target(synth_logistic(20, 2, 3));
  std::vector<Eigen::Index> rows(21);
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  EXPECT_THROW(make_minibatch(rows, 20), std::invalid_argument);
  EXPECT_THROW(blr_target(synth_logistic(20, 2, 3), 0.0), std::invalid_argument);
}

TEST(Minibatch, Validation) {
  EXPECT_THROW(make_minibatch({0, 1, 1}, 5), std::invalid_argument);
  EXPECT_THROW(make_minibatch({}, 5), std::invalid_argument);
  EXPECT_THROW(make_minibatch({0, 5}, 5), std::out_of_range);
  const auto mb = make_minibatch({0, 3}, 10);
  EXPECT_DOUBLE_EQ(mb.scale, 5.0);
}

TEST(Minibatch, DrawsUniqueIndices) {
  Rng rng(1);
  std::vector<int> hits(50, 0);
  for (int rep = 0; rep < 2000; ++rep) {
    const auto mb = draw_minibatch(50, 10, rng);
    std::set<Eigen::Index> seen(mb.row_indices.begin(), mb.row_indices.end());
    ASSERT_EQ(seen.size(), 10u);
    for (auto i : mb.row_indices) ++hits[static_cast<std::size_t>(i)];
  }
  for (int h : hits) EXPECT_NEAR(h, 400, 5 * std::sqrt(400.0));
  EXPECT_THROW(draw_minibatch(5, 6, rng), std::invalid_argument);
}

TEST(Gaussian, Examples) {
  const Vector mean{{1.0, 2.0, 3.0}};
  const auto t = gaussian_target(mean, 0.5);
  EXPECT_EQ(t->potential(mean), 0.0);
  EXPECT_EQ(t->grad_potential_full(mean), Vector::Zero(3));
  Vector x = mean;
  x(0) += 1.0;
  const Vector g = t->grad_potential_full(x);
  EXPECT_DOUBLE_EQ(g(0), 2.0);
  EXPECT_EQ(g(1), 0.0);
  EXPECT_EQ(g(2), 0.0);
  EXPECT_THROW(gaussian_target(mean, 0.0), std::invalid_argument);
}

TEST(Csv, SmallFile) {
  const auto p = write_temp("small.csv", "1,2,0\n3,4,1\n5,6,0\n");
  const auto d = load_csv(p.string(), false, false);
  EXPECT_EQ(d.rows(), 3);
  EXPECT_EQ(d.cols(), 2);
  EXPECT_EQ(d.labels, (Vector{{0.0, 1.0, 0.0}}));
  EXPECT_EQ(d.features(2, 1), 6.0);
}

TEST(Csv, Standardize) {
  const auto p = write_temp("small.csv", "1,2,0\n3,4,1\n5,6,0\n");
  const auto d = load_csv(p.string(), false, true);
  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    const double mean = d.features.col(j).mean();
    const double sd = std::sqrt((d.features.col(j).array() - mean).square().mean());
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(sd, 1.0, 1e-12);
  }
}

TEST(Csv, LabelsMapLexicographically) {
  const auto p = write_temp("labels.csv", "x,label\n0.5,yes\n1.5,no\n2.5,yes\n");
  const auto d = load_csv(p.string(), true, false);
  EXPECT_EQ(d.labels, (Vector{{1.0, 0.0, 1.0}}));
  const auto q = write_temp("labels12.txt", "0.1 0.2  2\n0.3\t0.4 1\n");
  const auto e = load_csv(q.string(), false, false, ' ');
  EXPECT_EQ(e.cols(), 2);
  EXPECT_EQ(e.labels, (Vector{{1.0, 0.0}}));
}

TEST(Csv, Errors) {
  const auto bad = write_temp("bad.csv", "1,2,0\n3,x,1\n");
  try {
    load_csv(bad.string(), false, false);
    FAIL() << "expected CsvError";
  } catch (const CsvError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(":2:2"), std::string::npos) << msg;
  }
  EXPECT_THROW(load_csv(write_temp("one.csv", "1\n2\n").string(), false, false), CsvError);
  EXPECT_THROW(load_csv(write_temp("ragged.csv", "1,2,0\n3,1\n").string(), false, false), CsvError);
  EXPECT_THROW(load_csv(write_temp("three.csv", "1,0\n2,1\n3,2\n").string(), false, false),
               CsvError);
  EXPECT_THROW(load_csv((std::filesystem::temp_directory_path() / "missing.csv").string(), false,
                        false),
               CsvError);
}

TEST(Csv, ConstantColumnWarns) {
  const auto p = write_temp("const.csv", "1,7,0\n2,7,1\n3,7,0\n");
  const auto d = load_csv(p.string(), false, true);
  ASSERT_EQ(d.warnings.size(), 1u);
  EXPECT_NE(d.warnings[0].find("column 2"), std::string::npos) << d.warnings[0];
  EXPECT_EQ(d.features(0, 1), 7.0);
  EXPECT_NEAR(d.features.col(0).mean(), 0.0, 1e-12);
}

TEST(Synthetic, DeterministicAndBinary) {
  const auto a = synth_logistic(100, 2, 7);
  const auto b = synth_logistic(100, 2, 7);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.labels, b.labels);
  for (Eigen::Index i = 0; i < a.labels.size(); ++i)
    EXPECT_TRUE(a.labels(i) == 0.0 || a.labels(i) == 1.0);
  EXPECT_THROW(synth_logistic(9, 2, 1), std::invalid_argument);
  EXPECT_THROW(synth_logistic(10, 0, 1), std::invalid_argument);
}

TEST(Synthetic, NonDegenerateLabels) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const double m = synth_logistic(10000, 2, seed).labels.mean();
    EXPECT_GT(m, 0.05);
    EXPECT_LT(m, 0.95);
  }
}
