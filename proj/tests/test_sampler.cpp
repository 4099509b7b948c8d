#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "csgmcmc/data.hpp"
#include "csgmcmc/sampler.hpp"

using namespace csgmcmc;

namespace {

SamplerConfig cyclical_cfg(double alpha0, std::int64_t M, std::int64_t K, double beta,
                           BaseSampler base = BaseSampler::SGLD, std::uint64_t seed = 1) {
  SamplerConfig c;
  c.base = base;
  c.schedule = ScheduleSpec::cyclical(alpha0, M, K, beta);
  c.seed = seed;
  return c;
}

bool same(const SampleSet& a, const SampleSet& b) {
  if (a.dim != b.dim || a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto &x = a.records[i], &y = b.records[i];
    if (x.iter != y.iter || x.cycle != y.cycle || x.stage != y.stage || x.theta != y.theta)
      return false;
  }
  return true;
}

double variance(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

}  // namespace

TEST(Sgld, ZeroTemperatureIsGradientStep) {
  const auto t = gaussian_target(Vector::Zero(1), 1.0);
  SamplerState s(Vector{{1.0}}, 3);
  sgld_step(s, *t, 0.1, 0.0);
  EXPECT_EQ(s.theta(0), 1.0 - 0.1 * 1.0);
  EXPECT_EQ(s.iter, 1);
  EXPECT_EQ(s.rng.normal_draws(), 0u);
}

TEST(Sgld, ZeroTemperatureMatchesGradientDescentMapExactly) {
  const auto t = mixture_target(grid_mixture_spec());
  Rng pick(17);
  for (int i = 0; i < 20; ++i) {
    const Vector x{{6.0 * pick.uniform() - 3.0, 6.0 * pick.uniform() - 3.0}};
    const double alpha = 0.001 + 0.05 * pick.uniform();
    SamplerState s(x, static_cast<std::uint64_t>(i));
    sgld_step(s, *t, alpha, 0.0);
    const Vector expect = x - alpha * t->grad_potential_full(x);
    EXPECT_EQ(s.theta, expect);
  }
}

TEST(Sgld, FlatTargetNoiseVariance) {
  const FlatTarget flat(1);
  const double alpha = 0.02;
  SamplerState s(Vector::Zero(1), 99);
  std::vector<double> inc;
  for (int i = 0; i < 100000; ++i) {
    const double before = s.theta(0);
    sgld_step(s, flat, alpha, 1.0);
    inc.push_back(s.theta(0) - before);
  }
  EXPECT_NEAR(variance(inc), 2.0 * alpha, 0.03 * 2.0 * alpha);
}

TEST(Sgld, Deterministic) {
  const auto t = mixture_target(grid_mixture_spec());
  SamplerState a(Vector{{0.3, 0.1}}, 42), b(Vector{{0.3, 0.1}}, 42);
  for (int i = 0; i < 1000; ++i) {
    sgld_step(a, *t, 0.01, 1.0);
    sgld_step(b, *t, 0.01, 1.0);
  }
  EXPECT_EQ(a.theta, b.theta);
}

TEST(Sgld, ConstantStepVarianceOnGaussian) {
  const auto t = gaussian_target(Vector::Zero(1), 1.0);
  SamplerState s(Vector::Zero(1), 2024);
  double sum = 0.0, sq = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    sgld_step(s, *t, 1e-3, 1.0);
    sum += s.theta(0);
    sq += s.theta(0) * s.theta(0);
  }
  const double var = sq / n - (sum / n) * (sum / n);
  EXPECT_GE(var, 0.9);
  EXPECT_LE(var, 1.1);
}

TEST(Sgld, Errors) {
  const auto t = gaussian_target(Vector::Zero(1), 1.0);
  SamplerState s(Vector{{1.0}}, 0);
  EXPECT_THROW(sgld_step(s, *t, 0.0, 1.0), std::invalid_argument);
  SamplerState d(Vector{{1.0}}, 0);
  try {
    for (int i = 0; i < 10000; ++i) sgld_step(d, *t, 1e200, 0.0);
    FAIL() << "expected divergence";
  } catch (const DivergedChain& e) {
    EXPECT_GE(e.iter(), 1);
    EXPECT_FALSE(e.theta().allFinite());
  }
}

TEST(Sghmc, FixedPoint) {
  const FlatTarget flat(2);
  SamplerConfig cfg;
  SamplerState s(Vector{{1.0, -1.0}}, 0);
  sghmc_step(s, flat, 0.1, cfg, 0.0);
  EXPECT_EQ(s.theta, (Vector{{1.0, -1.0}}));
  EXPECT_EQ(s.momentum, Vector::Zero(2));
}

TEST(Sghmc, FullFrictionKillsMomentum) {
  const FlatTarget flat(1);
  SamplerConfig cfg;
  cfg.friction_eta = 1.0;
  SamplerState s(Vector{{0.0}}, 0);
  s.momentum(0) = 1.0;
  sghmc_step(s, flat, 0.1, cfg, 0.0);
  EXPECT_EQ(s.theta(0), 1.0);
  EXPECT_EQ(s.momentum(0), 0.0);
}

TEST(Sghmc, GradientTakenAtUpdatedPosition) {
  const auto t = gaussian_target(Vector::Zero(1), 1.0);
  SamplerConfig cfg;
  cfg.friction_eta = 0.5;
  SamplerState s(Vector{{2.0}}, 0);
  s.momentum(0) = 0.5;
  sghmc_step(s, *t, 0.1, cfg, 0.0);
  EXPECT_EQ(s.theta(0), 2.5);
  EXPECT_EQ(s.momentum(0), 0.5 * 0.5 - 0.1 * 2.5);
}

TEST(Sghmc, StationaryMomentumVarianceMatchesLinearRecursion) {
  const FlatTarget flat(1);
  SamplerConfig cfg;
  cfg.friction_eta = 0.5;
  const double alpha = 0.01;
  SamplerState s(Vector::Zero(1), 7);
  std::vector<double> v_sampler, v_sim;
  Rng rng(8);
  double v = 0.0;
  const double noise = std::sqrt(2.0 * 0.5 * alpha);
  for (int i = 0; i < 200000; ++i) {
    sghmc_step(s, flat, alpha, cfg, 1.0);
    v = (1.0 - 0.5) * v + noise * rng.normal();
    if (i >= 1000) {
      v_sampler.push_back(s.momentum(0));
      v_sim.push_back(v);
    }
  }
  const double closed = 2.0 * 0.5 * alpha / (1.0 - 0.25);
  EXPECT_NEAR(variance(v_sampler), variance(v_sim), 0.05 * variance(v_sim));
  EXPECT_NEAR(variance(v_sampler), closed, 0.05 * closed);
}

TEST(Sghmc, Errors) {
  const FlatTarget flat(1);
  SamplerConfig cfg;
  SamplerState s(Vector::Zero(1), 0);
  cfg.friction_eta = 0.0;
  EXPECT_THROW(sghmc_step(s, flat, 0.1, cfg, 1.0), std::invalid_argument);
  cfg.friction_eta = 0.3;
  cfg.noise_estimate = 0.4;
  EXPECT_THROW(sghmc_step(s, flat, 0.1, cfg, 1.0), std::invalid_argument);
  cfg.noise_estimate = 0.0;
  EXPECT_THROW(sghmc_step(s, flat, -0.1, cfg, 1.0), std::invalid_argument);
}

TEST(SamplerConfigCheck, Violations) {
  SamplerConfig c = cyclical_cfg(0.1, 2, 10, 0.5);
  EXPECT_TRUE(violations(c).empty());
  c.temperature = -1.0;
  c.friction_eta = 0.1;
  c.noise_estimate = 0.2;
  c.schedule.beta = 2.0;
  EXPECT_EQ(violations(c).size(), 3u);
}

TEST(Cyclical, DegenerateStageSplitGivesEmptySetWithWarning) {
  const auto t = gaussian_target(Vector::Zero(1), 1.0);
  const auto r = run_cyclical(*t, cyclical_cfg(0.01, 5, 500, 0.9999), Vector::Zero(1), 1);
  EXPECT_TRUE(r.samples.empty());
  ASSERT_FALSE(r.warnings.empty());
  EXPECT_NE(r.warnings[0].find("no sampling iterations"), std::string::npos);
  EXPECT_EQ(r.final_state.iter, 500);
}

TEST(Cyclical, SingleCycleNoExplorationIsPlainCosineRun) {
  const auto t = mixture_target(grid_mixture_spec());
  const auto cfg = cyclical_cfg(0.05, 1, 400, 0.0, BaseSampler::SGLD, 11);
  EXPECT_EQ(stepsize(cfg.schedule, 1), 0.05);
  const auto r = run_cyclical(*t, cfg, Vector{{0.5, 0.5}}, 400);
  ASSERT_EQ(r.samples.size(), 400u);
  EXPECT_EQ(r.samples.records.front().iter, 1);
  SamplerState s(Vector{{0.5, 0.5}}, 11);
  for (std::int64_t k = 1; k <= 400; ++k) {
    sgld_step(s, *t, stepsize(cfg.schedule, k), 1.0);
    ASSERT_EQ(r.samples.records[static_cast<std::size_t>(k - 1)].theta, s.theta) << k;
  }
}

TEST(Cyclical, PaperSetting) {
  const auto t = mixture_target(grid_mixture_spec());
  const auto cfg = cyclical_cfg(0.09, 30, 50000, 0.25);
  const auto r = run_cyclical(*t, cfg, Vector::Zero(2), 3);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.samples.size(), 90u);
  EXPECT_EQ(r.samples.cycles().size(), 30u);
  EXPECT_TRUE(r.warnings.empty());
  // Each cycle's last record sits on the last iteration of the cycle.
  const auto len = cycle_length(cfg.schedule);
  for (const auto& rec : r.samples.records) {
    EXPECT_EQ(rec.stage, StageLabel::Sampling);
    EXPECT_EQ(rec.cycle, cycle_index(cfg.schedule, rec.iter));
  }
  for (std::int64_t m = 1; m <= 29; ++m)
    EXPECT_EQ(r.samples.records[static_cast<std::size_t>(3 * m - 1)].iter, m * len);
  EXPECT_EQ(r.samples.records.back().iter, 50000);
}

TEST(Cyclical, TruncatedLastCycleWarns) {
  const auto t = mixture_target(grid_mixture_spec());
  const auto r = run_cyclical(*t, cyclical_cfg(0.09, 30, 50000, 0.25), Vector::Zero(2), 1250);
  EXPECT_EQ(r.samples.size(), 29u * 1250u + 1240u);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("cycle 30"), std::string::npos);
  EXPECT_THROW(run_cyclical(*t, cyclical_cfg(0.09, 30, 50000, 0.25), Vector::Zero(2), 1251),
               std::invalid_argument);
}

TEST(Cyclical, StagePurityByDrawCount) {
  const auto t = mixture_target(grid_mixture_spec());
  for (double beta : {0.0, 0.25, 0.8}) {
    const auto cfg = cyclical_cfg(0.05, 7, 3000, beta);
    const auto r = run_cyclical(*t, cfg, Vector::Zero(2), 2);
    std::uint64_t sampling = 0;
    for (std::int64_t k = 1; k <= 3000; ++k) sampling += stage(cfg.schedule, k) == StageLabel::Sampling;
    EXPECT_EQ(r.final_state.rng.normal_draws(), 2 * sampling) << beta;
    for (const auto& rec : r.samples.records) EXPECT_EQ(rec.stage, StageLabel::Sampling);
  }
}

TEST(Cyclical, SghmcMatchesManualAlgorithmWithMomentumReset) {
  const auto t = mixture_target(grid_mixture_spec());
  auto cfg = cyclical_cfg(0.01, 3, 300, 0.3, BaseSampler::SGHMC, 5);
  const auto r = run_cyclical(*t, cfg, Vector{{0.2, 0.1}}, 70);
  SamplerState s(Vector{{0.2, 0.1}}, 5);
  std::vector<Vector> expect;
  for (std::int64_t k = 1; k <= 300; ++k) {
    if ((k - 1) % 100 == 0) s.momentum.setZero();
    const bool explore = stage(cfg.schedule, k) == StageLabel::Exploration;
    sghmc_step(s, *t, stepsize(cfg.schedule, k), cfg, explore ? 0.0 : 1.0);
    if (!explore) expect.push_back(s.theta);
  }
  ASSERT_EQ(r.samples.size(), expect.size());
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_EQ(r.samples.records[i].theta, expect[i]);
}

TEST(Cyclical, DivergenceKeepsPartialSamples) {
  const auto t = gaussian_target(Vector::Zero(1), 1e-3);
  const auto r = run_cyclical(*t, cyclical_cfg(0.05, 2, 2000, 0.0), Vector{{1.0}}, 1000);
  ASSERT_TRUE(r.divergence.has_value());
  EXPECT_GE(r.divergence->iter, 1);
  EXPECT_FALSE(r.ok());
}

TEST(Plain, KeepZeroReturnsFinalState) {
  const auto t = gaussian_target(Vector::Zero(1), 1.0);
  SamplerConfig cfg;
  cfg.schedule = ScheduleSpec::polynomial(0.05, 0, 0.55, 100);
  const auto r = run_plain(*t, cfg, Vector{{3.0}}, 10, 0);
  EXPECT_TRUE(r.samples.empty());
  EXPECT_EQ(r.final_state.iter, 100);
  EXPECT_NE(r.final_state.theta(0), 3.0);
}

TEST(Plain, BlrAustralianShape) {
  const auto data = synth_logistic(690, 14, 690);
  const auto t = blr_target(data);
  SamplerConfig cfg;
  cfg.schedule = ScheduleSpec::polynomial(1.2 / 690.0, 0, 0.55, 10000);
  cfg.minibatch_size = 32;
  cfg.seed = 4;
  const auto r = run_plain(*t, cfg, Vector::Zero(15), 5000, 5000);
  ASSERT_TRUE(r.ok());
  ASSERT_EQ(r.samples.size(), 5000u);
  EXPECT_EQ(r.samples.records.front().iter, 5001);
  EXPECT_EQ(r.samples.records.back().iter, 10000);
  for (const auto& rec : r.samples.records) ASSERT_EQ(rec.cycle, 1);
  const auto again = run_plain(*t, cfg, Vector::Zero(15), 5000, 5000);
  EXPECT_TRUE(same(r.samples, again.samples));
}

TEST(Plain, BurnInUsesFirstStepsize) {
  const auto t = gaussian_target(Vector::Zero(1), 1.0);
  SamplerConfig cfg;
  cfg.schedule = ScheduleSpec::polynomial(0.1, 0, 0.6, 20);
  cfg.temperature = 0.0;
  const auto r = run_plain(*t, cfg, Vector{{1.0}}, 5, 15);
  double x = 1.0;
  for (int k = 1; k <= 5; ++k) x -= 0.1 * x;
  for (int k = 1; k <= 15; ++k) {
    x -= stepsize(cfg.schedule, k) * x;
    EXPECT_EQ(r.samples.records[static_cast<std::size_t>(k - 1)].theta(0), x);
  }
  EXPECT_THROW(run_plain(*t, cfg, Vector{{1.0}}, 10, 11), std::invalid_argument);
}

TEST(Parallel, SingleChainMatchesDirectRun) {
  const auto t = mixture_target(grid_mixture_spec());
  const auto cfg = cyclical_cfg(0.09, 4, 2000, 0.25, BaseSampler::SGLD, 77);
  const CollectionPlan plan{20, 0, 0};
  const auto par = run_parallel(*t, cfg, {Vector::Zero(2)}, 2000, plan, 1);
  auto direct_cfg = cfg;
  direct_cfg.seed = derive_seed(77, 0);
  const auto direct = run_cyclical(*t, direct_cfg, Vector::Zero(2), 20);
  EXPECT_TRUE(same(par.front().samples, direct.samples));
}

TEST(Parallel, DistinctChainsAndThreadInvariance) {
  const auto t = mixture_target(grid_mixture_spec());
  auto cfg = cyclical_cfg(0.09, 4, 4000, 0.25, BaseSampler::SGHMC, 8);
  const std::vector<Vector> inits(4, Vector{{0.1, 0.1}});
  const CollectionPlan plan{50, 0, 0};
  const auto seq = run_parallel(*t, cfg, inits, 4000, plan, 1);
  const auto thr = run_parallel(*t, cfg, inits, 4000, plan, 4);
  ASSERT_EQ(seq.size(), 4u);
  std::set<double> finals;
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_TRUE(same(seq[i].samples, thr[i].samples));
    EXPECT_EQ(seq[i].final_state.theta, thr[i].final_state.theta);
    finals.insert(seq[i].samples.records.back().theta(0));
  }
  EXPECT_EQ(finals.size(), 4u);
}

TEST(Parallel, DivergenceIsPerChain) {
  const auto t = gaussian_target(Vector::Zero(1), 1.0);
  SamplerConfig cfg;
  cfg.schedule = ScheduleSpec::constant(2.5, 100);  // theta <- -1.5 theta + noise
  const std::vector<Vector> inits{Vector{{0.0}}, Vector{{1e300}}, Vector{{1.0}}};
  const auto out = run_parallel(*t, cfg, inits, 100, CollectionPlan{1, 0, 10}, 2);
  EXPECT_TRUE(out[0].ok());
  EXPECT_FALSE(out[1].ok());
  EXPECT_TRUE(out[2].ok());
  EXPECT_EQ(out[0].samples.size(), 10u);
}

TEST(Hmc, TinyStepAlwaysAccepts) {
  const auto t = gaussian_target(Vector::Zero(2), 1.0);
  const auto r = hmc_reference(*t, 5, 1e-5, 1000, 3, Vector{{0.5, -0.5}});
  EXPECT_GE(r.acceptance_rate, 0.999);
  EXPECT_TRUE(r.warnings.empty());
}

TEST(Hmc, GaussianMoments) {
  const auto t = gaussian_target(Vector::Zero(1), 1.0);
  const auto r = hmc_reference(*t, 10, 0.15, 50000, 12, Vector::Zero(1));
  double sum = 0.0, sq = 0.0;
  for (const auto& rec : r.samples.records) {
    sum += rec.theta(0);
    sq += rec.theta(0) * rec.theta(0);
  }
  const double n = static_cast<double>(r.samples.size());
  EXPECT_NEAR(sum / n, 0.0, 0.02);
  EXPECT_NEAR(sq / n - (sum / n) * (sum / n), 1.0, 0.05);
}

TEST(Hmc, EnergyDriftSmallAtSmallStep) {
  const auto t = gaussian_target(Vector::Zero(3), 1.0);
  const auto r = hmc_reference(*t, 10, 1e-3, 500, 4, Vector{{1.0, 0.0, -1.0}});
  EXPECT_LE(r.max_energy_error, 1e-4);
}

TEST(Hmc, LowAcceptanceWarns) {
  const auto t = gaussian_target(Vector::Zero(2), 1.0);
  const auto r = hmc_reference(*t, 10, 2.5, 200, 4, Vector::Zero(2));
  EXPECT_LT(r.acceptance_rate, 0.1);
  ASSERT_EQ(r.warnings.size(), 1u);
}
