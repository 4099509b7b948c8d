#include "harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>

#include "csgmcmc/csgmcmc.hpp"

namespace csgmcmc::harness {

namespace fs = std::filesystem;

ConfigError::ConfigError(std::vector<std::string> violations)
    : std::runtime_error([&] {
        std::string msg = "invalid configuration (" + std::to_string(violations.size()) +
                          " violation" + (violations.size() == 1 ? "" : "s") + "):";
        for (const auto& v : violations) msg += "\n  " + v;
        return msg;
      }()),
      violations_(std::move(violations)) {}

json load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("config: parse error: ") + e.what()});
  }
}

void apply_overrides(json& config, const std::vector<std::string>& overrides) {
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError({"override '" + ov + "': expected key=value"});
    const std::string key = ov.substr(0, eq);
    const std::string text = ov.substr(eq + 1);
    json value;
    try {
      value = json::parse(text);
    } catch (const json::parse_error&) {
      value = text;
    }
    std::string pointer;
    std::stringstream ss(key);
    std::string part;
    while (std::getline(ss, part, '.')) pointer += "/" + part;
    config[json::json_pointer(pointer)] = value;
  }
}

namespace {

// ---------------------------------------------------------------------------
// Typed extraction that records every problem instead of stopping at the first.

class Checker {
 public:
  explicit Checker(const json& root) : root_(root) {}

  const json* find(const std::string& path) const {
    const json* cur = &root_;
    std::stringstream ss(path);
    std::string part;
    while (std::getline(ss, part, '.')) {
      if (!cur->is_object()) return nullptr;
      auto it = cur->find(part);
      if (it == cur->end()) return nullptr;
      cur = &*it;
    }
    return cur;
  }

  bool has(const std::string& path) const { return find(path) != nullptr; }

  void fail(const std::string& path, const std::string& msg) { errors_.push_back(path + ": " + msg); }

  double number(const std::string& path, std::optional<double> def,
                const std::function<bool(double)>& ok = {}, const std::string& bound = "") {
    const json* v = find(path);
    if (!v) {
      if (!def) fail(path, "required field is missing");
      return def.value_or(0.0);
    }
    if (!v->is_number()) {
      fail(path, "must be a number");
      return def.value_or(0.0);
    }
    const double x = v->get<double>();
    if (ok && !ok(x)) fail(path, bound);
    return x;
  }

  std::int64_t integer(const std::string& path, std::optional<std::int64_t> def,
                       const std::function<bool(std::int64_t)>& ok = {},
                       const std::string& bound = "") {
    const json* v = find(path);
    if (!v) {
      if (!def) fail(path, "required field is missing");
      return def.value_or(0);
    }
    if (!v->is_number_integer()) {
      fail(path, "must be an integer");
      return def.value_or(0);
    }
    const auto x = v->get<std::int64_t>();
    if (ok && !ok(x)) fail(path, bound);
    return x;
  }

  bool boolean(const std::string& path, bool def) {
    const json* v = find(path);
    if (!v) return def;
    if (!v->is_boolean()) {
      fail(path, "must be true or false");
      return def;
    }
    return v->get<bool>();
  }

  std::string string(const std::string& path, std::optional<std::string> def,
                     const std::vector<std::string>& allowed = {}) {
    const json* v = find(path);
    if (!v) {
      if (!def) fail(path, "required field is missing");
      return def.value_or("");
    }
    if (!v->is_string()) {
      fail(path, "must be a string");
      return def.value_or("");
    }
    auto s = v->get<std::string>();
    if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      fail(path, "must be one of " + list + " (got '" + s + "')");
    }
    return s;
  }

  std::vector<double> numbers(const std::string& path, std::optional<std::vector<double>> def,
                              const std::function<bool(double)>& ok = {},
                              const std::string& bound = "") {
    const json* v = find(path);
    if (!v) {
      if (!def) fail(path, "required field is missing");
      return def.value_or(std::vector<double>{});
    }
    if (!v->is_array() || v->empty()) {
      fail(path, "must be a non-empty array of numbers");
      return {};
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      const auto& e = (*v)[i];
      if (!e.is_number()) {
        fail(path + "[" + std::to_string(i) + "]", "must be a number");
        continue;
      }
      const double x = e.get<double>();
      if (ok && !ok(x)) fail(path + "[" + std::to_string(i) + "]", bound);
      out.push_back(x);
    }
    return out;
  }

  std::vector<std::int64_t> integers(const std::string& path,
                                     const std::function<bool(std::int64_t)>& ok = {},
                                     const std::string& bound = "") {
    const json* v = find(path);
    if (!v) {
      fail(path, "required field is missing");
      return {};
    }
    if (!v->is_array() || v->empty()) {
      fail(path, "must be a non-empty array of integers");
      return {};
    }
    std::vector<std::int64_t> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      const auto& e = (*v)[i];
      if (!e.is_number_integer()) {
        fail(path + "[" + std::to_string(i) + "]", "must be an integer");
        continue;
      }
      const auto x = e.get<std::int64_t>();
      if (ok && !ok(x)) fail(path + "[" + std::to_string(i) + "]", bound);
      out.push_back(x);
    }
    return out;
  }

  // Skips messages for fields that already carry an error.
  void merge(const std::string& prefix, const std::vector<std::string>& errs) {
    for (const auto& e : errs) {
      const std::string field = prefix + e.substr(0, e.find(':') + 1);
      const bool seen = std::any_of(errors_.begin(), errors_.end(), [&](const std::string& x) {
        return x.compare(0, field.size(), field) == 0;
      });
      if (!seen) errors_.push_back(prefix + e);
    }
  }

  bool clean() const { return errors_.empty(); }

  std::vector<std::string>& errors() { return errors_; }

 private:
  const json& root_;
  std::vector<std::string> errors_;
};

const auto positive = [](double x) { return x > 0.0; };
const auto nonnegative = [](double x) { return x >= 0.0; };
const auto at_least = [](std::int64_t lo) { return [lo](std::int64_t x) { return x >= lo; }; };

enum class SampleOutput { None, First, All };

struct Common {
  std::string experiment;
  std::uint64_t seed = 0;
  std::int64_t repetitions = 1;
  unsigned threads = 1;
  SampleOutput write_samples = SampleOutput::First;
  SamplerConfig sampler;
};

struct MixtureCfg {
  ScheduleSpec cyclical;
  ScheduleSpec baseline;
  std::int64_t chains = 1;
  double init_box = 5.0;
  std::int64_t samples_per_cycle = 1;
  std::int64_t burn_in = 0;
  std::int64_t keep = 0;
  double radius = 0.25;
  std::int64_t min_count = 100;
  bool uniform_weights = false;
};

struct DatasetCfg {
  std::string name;
  fs::path path;
  bool has_header = false;
  bool standardize = true;
  char delimiter = ',';
  std::map<std::string, double> step_n;
  bool has_synthetic = false;
  std::int64_t syn_n = 0, syn_d = 0;
  std::uint64_t syn_seed = 0;
  bool use_synthetic = false;
};

struct BlrCfg {
  std::int64_t num_cycles = 100;
  std::int64_t total_iters = 10000;
  double beta = 0.01;
  double decay_b = 0.0;
  double decay_gamma = 0.55;
  std::vector<DatasetCfg> datasets;
  std::vector<BaseSampler> samplers;
  double prior_variance = 100.0;
  std::int64_t samples_per_cycle = 50;
  std::int64_t burn_in = 5000;
  std::int64_t keep = 5000;
  std::int64_t max_lag = -1;
  std::int64_t hmc_iters = 50000;
  std::int64_t hmc_warmup = 1000;
  int hmc_leapfrog = 10;
  double hmc_stepsize = 0.04;
  std::int64_t map_iters = 2000;
  double map_step_n = 0.5;
};

struct BiasCfg {
  std::int64_t num_cycles = 1;
  double beta = 0.0;
  Vector mean;
  double variance = 1.0;
  std::string test_function = "theta_sq";
  std::vector<std::int64_t> budgets;
  std::vector<double> alpha0_values;
  std::int64_t seeds = 20;
  Vector theta0;
};

struct W2Cfg {
  double alpha0 = 0.09;
  double beta = 0.25;
  double decay_a = 0.05, decay_b = 0.0, decay_gamma = 0.55;
  std::vector<std::int64_t> cycles;
  std::int64_t cycle_length = 1;
  std::int64_t points = 512;
  double init_box = 5.0;
};

struct Parsed {
  Common common;
  std::optional<MixtureCfg> mixture;
  std::optional<BlrCfg> blr;
  std::optional<BiasCfg> bias;
  std::optional<W2Cfg> w2;
};

void parse_common(Checker& c, Common& out) {
  out.experiment =
      c.string("experiment", std::nullopt, {"mixture25", "blr_ess", "bias_mse", "w2_probe"});
  out.seed = static_cast<std::uint64_t>(c.integer("seed", 0, at_least(0), "must be >= 0"));
  out.repetitions = c.integer("repetitions", 1, at_least(1), "must be >= 1");
  out.threads = static_cast<unsigned>(c.integer("threads", 1, at_least(0), "must be >= 0"));
  const auto ws = c.string("write_samples", "first", {"none", "first", "all"});
  out.write_samples = ws == "none" ? SampleOutput::None
                      : ws == "all" ? SampleOutput::All
                                    : SampleOutput::First;
  if (c.has("output_dir")) c.string("output_dir", std::nullopt);
  auto& s = out.sampler;
  const auto base = c.string("sampler.base", "sgld", {"sgld", "sghmc"});
  if (base == "sgld" || base == "sghmc") s.base = parse_base_sampler(base);
  s.temperature = c.number("sampler.temperature", 1.0, nonnegative, "must be >= 0");
  s.friction_eta = c.number("sampler.friction_eta", 0.5, [](double x) { return x > 0 && x <= 1; },
                            "must lie in (0, 1]");
  s.noise_estimate = c.number("sampler.noise_estimate", 0.0, nonnegative, "must be >= 0");
  if (s.noise_estimate > s.friction_eta)
    c.fail("sampler.noise_estimate", "must not exceed sampler.friction_eta");
  s.minibatch_size = c.integer("sampler.minibatch_size", 0, at_least(0), "must be >= 0");
}

// The baseline borrows total_iters from the cyclical schedule, which reports it.
void check_schedule(Checker& c, const ScheduleSpec& s, const std::string& prefix) {
  auto errs = violations(s);
  if (prefix == "baseline.")
    std::erase_if(errs, [](const std::string& e) { return e.rfind("total_iters:", 0) == 0; });
  c.merge(prefix, errs);
}

MixtureCfg parse_mixture(Checker& c) {
  MixtureCfg m;
  m.cyclical.kind = ScheduleKind::CyclicalCosine;
  m.cyclical.alpha0 = c.number("schedule.alpha0", std::nullopt);
  m.cyclical.num_cycles = c.integer("schedule.num_cycles", std::nullopt);
  m.cyclical.total_iters = c.integer("schedule.total_iters", std::nullopt);
  m.cyclical.beta = c.number("schedule.beta", std::nullopt);
  check_schedule(c, m.cyclical, "schedule.");
  m.baseline.kind = ScheduleKind::PolynomialDecay;
  m.baseline.decay_a = c.number("baseline.decay_a", std::nullopt);
  m.baseline.decay_b = c.number("baseline.decay_b", 0.0);
  m.baseline.decay_gamma = c.number("baseline.decay_gamma", std::nullopt);
  m.baseline.total_iters = m.cyclical.total_iters;
  check_schedule(c, m.baseline, "baseline.");
  m.chains = c.integer("mixture25.chains", 1, at_least(1), "must be >= 1");
  m.init_box = c.number("mixture25.init_box", 5.0, positive, "must be > 0");
  m.samples_per_cycle =
      c.integer("mixture25.samples_per_cycle", std::nullopt, at_least(1), "must be >= 1");
  m.burn_in = c.integer("mixture25.burn_in", 0, at_least(0), "must be >= 0");
  m.keep = c.integer("mixture25.keep", std::nullopt, at_least(0), "must be >= 0");
  m.radius = c.number("mixture25.coverage.radius", 0.25, positive, "must be > 0");
  m.min_count = c.integer("mixture25.coverage.min_count", 100, at_least(1), "must be >= 1");
  m.uniform_weights = c.string("mixture25.combine", "harmonic", {"harmonic", "uniform"}) == "uniform";
  if (c.clean()) {
    const auto avail = cycle_length(m.cyclical) - exploration_length(m.cyclical);
    if (avail > 0 && m.samples_per_cycle > avail)
      c.fail("mixture25.samples_per_cycle",
             "exceeds the sampling-stage length " + std::to_string(avail));
  }
  if (c.clean() && m.keep > 0 && m.burn_in + m.keep > m.cyclical.total_iters)
    c.fail("mixture25.keep", "burn_in + keep exceeds schedule.total_iters");
  return m;
}

BlrCfg parse_blr(Checker& c, const fs::path& base_dir) {
  BlrCfg b;
  b.num_cycles = c.integer("schedule.num_cycles", std::nullopt);
  b.total_iters = c.integer("schedule.total_iters", std::nullopt);
  b.beta = c.number("schedule.beta", std::nullopt);
  {
    auto probe = ScheduleSpec::cyclical(1.0, b.num_cycles, b.total_iters, b.beta);
    check_schedule(c, probe, "schedule.");
  }
  b.decay_b = c.number("baseline.decay_b", 0.0);
  b.decay_gamma = c.number("baseline.decay_gamma", std::nullopt);
  check_schedule(c, ScheduleSpec::polynomial(1.0, b.decay_b, b.decay_gamma, b.total_iters),
                 "baseline.");

  const json* samplers = c.find("blr_ess.samplers");
  if (!samplers) {
    b.samplers = {BaseSampler::SGLD, BaseSampler::SGHMC};
  } else if (!samplers->is_array() || samplers->empty()) {
    c.fail("blr_ess.samplers", "must be a non-empty array");
  } else {
    for (std::size_t i = 0; i < samplers->size(); ++i) {
      const auto& s = (*samplers)[i];
      if (s == "sgld") b.samplers.push_back(BaseSampler::SGLD);
      else if (s == "sghmc") b.samplers.push_back(BaseSampler::SGHMC);
      else c.fail("blr_ess.samplers[" + std::to_string(i) + "]", "must be sgld or sghmc");
    }
  }

  b.prior_variance = c.number("blr_ess.prior_variance", 100.0, positive, "must be > 0");
  const bool fallback = c.boolean("blr_ess.allow_synthetic_fallback", false);
  b.samples_per_cycle =
      c.integer("blr_ess.samples_per_cycle", std::nullopt, at_least(1), "must be >= 1");
  b.burn_in = c.integer("blr_ess.burn_in", std::nullopt, at_least(0), "must be >= 0");
  b.keep = c.integer("blr_ess.keep", std::nullopt, at_least(10), "must be >= 10");
  b.max_lag = c.integer("blr_ess.max_lag", b.keep - 1, at_least(1), "must be >= 1");
  if (c.clean() && b.max_lag >= b.keep) c.fail("blr_ess.max_lag", "must be < blr_ess.keep");
  if (c.clean() && b.burn_in + b.keep > b.total_iters)
    c.fail("blr_ess.keep", "burn_in + keep exceeds schedule.total_iters");
  if (c.clean()) {
    const auto probe = ScheduleSpec::cyclical(1.0, b.num_cycles, b.total_iters, b.beta);
    const auto avail = cycle_length(probe) - exploration_length(probe);
    if (b.samples_per_cycle > avail)
      c.fail("blr_ess.samples_per_cycle",
             "exceeds the sampling-stage length " + std::to_string(avail));
  }
  b.hmc_iters = c.integer("blr_ess.hmc.iters", 50000, at_least(100), "must be >= 100");
  b.hmc_warmup = c.integer("blr_ess.hmc.warmup", 1000, at_least(0), "must be >= 0");
  if (c.clean() && b.hmc_warmup + 10 > b.hmc_iters) c.fail("blr_ess.hmc.warmup", "leaves too few HMC draws");
  b.hmc_leapfrog = static_cast<int>(
      c.integer("blr_ess.hmc.leapfrog_steps", 10, at_least(1), "must be >= 1"));
  b.hmc_stepsize = c.number("blr_ess.hmc.stepsize", 0.04, positive, "must be > 0");
  b.map_iters = c.integer("blr_ess.hmc.map_iters", 2000, at_least(0), "must be >= 0");
  b.map_step_n = c.number("blr_ess.hmc.map_step_n", 0.5, positive, "must be > 0");

  const json* ds = c.find("blr_ess.datasets");
  if (!ds) {
    c.fail("blr_ess.datasets", "required field is missing");
    return b;
  }
  if (!ds->is_array() || ds->empty()) {
    c.fail("blr_ess.datasets", "must be a non-empty array");
    return b;
  }
  for (std::size_t i = 0; i < ds->size(); ++i) {
    const std::string p = "blr_ess.datasets." + std::to_string(i);
    const std::string shown = "blr_ess.datasets[" + std::to_string(i) + "]";
    if (!(*ds)[i].is_object()) {
      c.fail(shown, "must be an object");
      continue;
    }
    Checker sub((*ds)[i]);
    DatasetCfg d;
    d.name = sub.string("name", std::nullopt);
    const auto path = sub.string("path", std::nullopt);
    d.has_header = sub.boolean("has_header", false);
    d.standardize = sub.boolean("standardize", true);
    const auto delim = sub.string("delimiter", ",");
    if (delim == "whitespace" || delim == " ") d.delimiter = ' ';
    else if (delim.size() == 1) d.delimiter = delim[0];
    else sub.fail("delimiter", "must be a single character or \"whitespace\"");
    for (const auto s : b.samplers) {
      const std::string key = "step_n." + std::string(to_string(s));
      d.step_n[std::string(to_string(s))] = sub.number(key, std::nullopt, positive, "must be > 0");
    }
    if (sub.has("synthetic")) {
      d.has_synthetic = true;
      d.syn_n = sub.integer("synthetic.n", std::nullopt, at_least(10), "must be >= 10");
      d.syn_d = sub.integer("synthetic.d", std::nullopt, at_least(1), "must be >= 1");
      d.syn_seed =
          static_cast<std::uint64_t>(sub.integer("synthetic.seed", 0, at_least(0), "must be >= 0"));
    }
    if (!path.empty()) {
      d.path = fs::path(path).is_absolute() ? fs::path(path) : base_dir / path;
      if (!fs::exists(d.path)) {
        if (fallback && d.has_synthetic) {
          d.use_synthetic = true;
        } else {
          sub.fail("path", "dataset file '" + d.path.string() +
                               "' not found; set blr_ess.allow_synthetic_fallback=true and give "
                               "the dataset a \"synthetic\" block to use a generated stand-in");
        }
      }
    }
    c.merge(shown + ".", sub.errors());
    b.datasets.push_back(std::move(d));
  }
  return b;
}

BiasCfg parse_bias(Checker& c) {
  BiasCfg b;
  b.num_cycles = c.integer("schedule.num_cycles", std::nullopt, at_least(1), "must be >= 1");
  b.beta = c.number("schedule.beta", std::nullopt, [](double x) { return x >= 0 && x < 1; },
                    "must lie in [0, 1)");
  const auto mean = c.numbers("bias_mse.mean", std::vector<double>{0.0});
  b.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  b.variance = c.number("bias_mse.variance", 1.0, positive, "must be > 0");
  b.test_function = c.string("bias_mse.test_function", "theta_sq", {"theta", "theta_sq"});
  b.budgets = c.integers("bias_mse.budgets", at_least(1), "must be >= 1");
  for (std::size_t i = 0; c.clean() && i < b.budgets.size(); ++i)
    if (b.budgets[i] < b.num_cycles)
      c.fail("bias_mse.budgets[" + std::to_string(i) + "]", "must be >= schedule.num_cycles");
  b.alpha0_values = c.numbers("bias_mse.alpha0_values", std::nullopt, positive, "must be > 0");
  b.seeds = c.integer("bias_mse.seeds", 20, at_least(1), "must be >= 1");
  const auto theta0 = c.numbers("bias_mse.theta0", std::vector<double>(mean.size(), 0.0));
  b.theta0 = Eigen::Map<const Vector>(theta0.data(), static_cast<Eigen::Index>(theta0.size()));
  if (c.clean() && b.theta0.size() != b.mean.size())
    c.fail("bias_mse.theta0", "must have the same length as bias_mse.mean");
  return b;
}

W2Cfg parse_w2(Checker& c) {
  W2Cfg w;
  w.alpha0 = c.number("schedule.alpha0", std::nullopt, positive, "must be > 0");
  w.beta = c.number("schedule.beta", std::nullopt, [](double x) { return x >= 0 && x < 1; },
                    "must lie in [0, 1)");
  w.decay_a = c.number("baseline.decay_a", std::nullopt, positive, "must be > 0");
  w.decay_b = c.number("baseline.decay_b", 0.0, nonnegative, "must be >= 0");
  w.decay_gamma = c.number("baseline.decay_gamma", std::nullopt,
                           [](double x) { return x > 0.5 && x <= 1.0; }, "must lie in (0.5, 1]");
  w.cycles = c.integers("w2_probe.cycles", at_least(1), "must be >= 1");
  w.cycle_length = c.integer("w2_probe.cycle_length", std::nullopt, at_least(2), "must be >= 2");
  w.points = c.integer("w2_probe.points", 512, at_least(1), "must be >= 1");
  if (w.points > static_cast<std::int64_t>(kWassersteinCap))
    c.fail("w2_probe.points", "must be <= " + std::to_string(kWassersteinCap));
  w.init_box = c.number("w2_probe.init_box", 5.0, positive, "must be > 0");
  return w;
}

Parsed parse(const json& config, const fs::path& base_dir, std::vector<std::string>& errors) {
  Parsed p;
  if (!config.is_object()) {
    errors.push_back("config: top level must be an object");
    return p;
  }
  Checker c(config);
  parse_common(c, p.common);
  if (p.common.experiment == "mixture25") p.mixture = parse_mixture(c);
  else if (p.common.experiment == "blr_ess") p.blr = parse_blr(c, base_dir);
  else if (p.common.experiment == "bias_mse") p.bias = parse_bias(c);
  else if (p.common.experiment == "w2_probe") p.w2 = parse_w2(c);
  errors = std::move(c.errors());
  return p;
}

// ---------------------------------------------------------------------------
// Output helpers.

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

bool should_write(SampleOutput mode, std::int64_t rep) {
  return mode == SampleOutput::All || (mode == SampleOutput::First && rep == 0);
}

void write_chain(const fs::path& dir, std::size_t index, const SampleSet& samples) {
  fs::create_directories(dir);
  write_samples_csv((dir / ("chain_" + std::to_string(index) + ".csv")).string(), samples);
}

std::string label(BaseSampler base, bool cyclical) {
  return (cyclical ? "c" : "") + std::string(to_string(base));
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double stderr_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<Vector> box_inits(std::uint64_t seed, std::int64_t count, double box) {
  Rng rng(seed);
  std::vector<Vector> out;
  for (std::int64_t i = 0; i < count; ++i) {
    const double x = -box + 2.0 * box * rng.uniform();
    const double y = -box + 2.0 * box * rng.uniform();
    out.push_back(Vector{{x, y}});
  }
  return out;
}

void note_chain(Report& report, const std::string& key, const ChainResult& r) {
  if (r.divergence) report.set(key + ".diverged_at", r.divergence->iter);
  for (std::size_t i = 0; i < r.warnings.size(); ++i)
    report.set(key + ".warning_" + std::to_string(i), r.warnings[i]);
}

// ---------------------------------------------------------------------------
// Experiments.

void run_mixture(const Common& common, const MixtureCfg& m, const fs::path& dir, Report& report,
                 std::ostringstream& summary) {
  const auto target = mixture_target(grid_mixture_spec());
  const ModeCoverageSpec cov{grid_mixture_spec().centers, m.radius, m.min_count};
  struct Arm {
    bool cyclical;
    std::string name;
    std::vector<double> single, pooled;
  };
  std::vector<Arm> arms{{true, label(common.sampler.base, true), {}, {}},
                        {false, label(common.sampler.base, false), {}, {}}};
  for (std::int64_t rep = 0; rep < common.repetitions; ++rep) {
    const auto rep_seed = derive_seed(common.seed, static_cast<std::uint64_t>(rep));
    const auto inits = box_inits(derive_seed(rep_seed, 0x1417), m.chains, m.init_box);
    for (auto& arm : arms) {
      SamplerConfig cfg = common.sampler;
      cfg.seed = rep_seed;
      cfg.schedule = arm.cyclical ? m.cyclical : m.baseline;
      CollectionPlan plan{m.samples_per_cycle, m.burn_in, m.keep};
      const auto chains =
          run_parallel(*target, cfg, inits, cfg.schedule.total_iters, plan, common.threads);
      SampleSet pooled;
      const std::string key = "coverage.rep_" + std::to_string(rep) + "." + arm.name;
      for (std::size_t i = 0; i < chains.size(); ++i) {
        const auto c = mode_coverage(chains[i].samples, cov);
        report.set(key + ".chain_" + std::to_string(i), c);
        note_chain(report, key + ".chain_" + std::to_string(i), chains[i]);
        arm.single.push_back(static_cast<double>(c));
        pooled.append(chains[i].samples);
        if (should_write(common.write_samples, rep))
          write_chain(dir / "samples" / ("rep_" + std::to_string(rep)) / arm.name, i,
                      chains[i].samples);
      }
      const auto pc = mode_coverage(pooled, cov);
      report.set(key + ".pooled", pc);
      arm.pooled.push_back(static_cast<double>(pc));

      if (rep == 0 && arm.cyclical && !chains.front().samples.empty()) {
        // Per-cycle weights of the first chain and the combined posterior mean.
        SampleSet first = chains.front().samples;
        first.fill_log_likelihoods(*target);
        const auto w = m.uniform_weights ? uniform_weights(first) : harmonic_weights(first);
        const std::string ckey = "combine.rep_0.chain_0.";
        report.set(ckey + "weights", m.uniform_weights ? "uniform" : "harmonic");
        for (std::size_t i = 0; i < w.cycles.size(); ++i)
          report.set(ckey + "weight.cycle_" + std::to_string(w.cycles[i]), w.weights[i]);
        const auto identity = [](const Vector& x) { return x; };
        const Vector est = weighted_expectation(first, w, identity);
        report.set(ckey + "weighted_mean.theta_0", est(0));
        report.set(ckey + "weighted_mean.theta_1", est(1));
        const Vector reg = region_expectation(first, nearest_centroid_classifier(first), w.weights,
                                              identity);
        report.set(ckey + "region_mean.theta_0", reg(0));
        report.set(ckey + "region_mean.theta_1", reg(1));
      }
    }
  }
  summary << "sampler,setting,mean_coverage,stderr\n";
  for (const auto& arm : arms) {
    report.set("coverage." + arm.name + ".single.mean", mean_of(arm.single));
    report.set("coverage." + arm.name + ".single.stderr", stderr_of(arm.single));
    report.set("coverage." + arm.name + ".pooled.mean", mean_of(arm.pooled));
    report.set("coverage." + arm.name + ".pooled.stderr", stderr_of(arm.pooled));
    summary << arm.name << ",single," << format_double(mean_of(arm.single)) << ','
            << format_double(stderr_of(arm.single)) << '\n';
    summary << arm.name << ",pooled," << format_double(mean_of(arm.pooled)) << ','
            << format_double(stderr_of(arm.pooled)) << '\n';
  }
}

void run_blr(const Common& common, const BlrCfg& b, const fs::path& dir, Report& report,
             std::ostringstream& summary) {
  summary << "dataset,sampler,median_ess";
  for (std::int64_t r = 0; r < common.repetitions; ++r) summary << ",rep_" << r;
  summary << '\n';
  for (const auto& dcfg : b.datasets) {
    Dataset data = dcfg.use_synthetic
                       ? synth_logistic(dcfg.syn_n, dcfg.syn_d, dcfg.syn_seed)
                       : load_csv(dcfg.path.string(), dcfg.has_header, dcfg.standardize,
                                  dcfg.delimiter);
    const std::string dkey = "ess." + dcfg.name;
    report.set(dkey + ".source", dcfg.use_synthetic ? "synthetic" : "file");
    report.set(dkey + ".rows", static_cast<std::int64_t>(data.rows()));
    report.set(dkey + ".features", static_cast<std::int64_t>(data.cols()));
    for (std::size_t i = 0; i < data.warnings.size(); ++i)
      report.set(dkey + ".ingest_warning_" + std::to_string(i), data.warnings[i]);
    const auto target = blr_target(data, b.prior_variance);
    const auto N = static_cast<double>(target->data_size());
    const auto d = target->dim();

    // Reference moments: gradient descent to the mode, then long full-gradient HMC.
    Vector start = Vector::Zero(d);
    for (std::int64_t i = 0; i < b.map_iters; ++i)
      start -= (b.map_step_n / N) * target->grad_potential_full(start);
    const auto hmc = hmc_reference(*target, b.hmc_leapfrog, b.hmc_stepsize, b.hmc_iters,
                                   derive_seed(common.seed, 0x484d43), start);
    report.set(dkey + ".hmc.acceptance", hmc.acceptance_rate);
    for (std::size_t i = 0; i < hmc.warnings.size(); ++i)
      report.set(dkey + ".hmc.warning_" + std::to_string(i), hmc.warnings[i]);
    Vector mu = Vector::Zero(d), var = Vector::Zero(d);
    const auto& recs = hmc.samples.records;
    const auto n_ref = static_cast<double>(recs.size() - static_cast<std::size_t>(b.hmc_warmup));
    for (std::size_t i = static_cast<std::size_t>(b.hmc_warmup); i < recs.size(); ++i)
      mu += recs[i].theta;
    mu /= n_ref;
    for (std::size_t i = static_cast<std::size_t>(b.hmc_warmup); i < recs.size(); ++i)
      var += (recs[i].theta - mu).array().square().matrix();
    var /= n_ref;

    for (const auto base : b.samplers) {
      const double step_n = dcfg.step_n.at(std::string(to_string(base)));
      for (const bool cyclical : {false, true}) {
        const std::string name = label(base, cyclical);
        std::vector<double> per_rep;
        for (std::int64_t rep = 0; rep < common.repetitions; ++rep) {
          SamplerConfig cfg = common.sampler;
          cfg.base = base;
          cfg.seed = derive_seed(common.seed, static_cast<std::uint64_t>(rep));
          cfg.schedule = cyclical
                             ? ScheduleSpec::cyclical(step_n / N, b.num_cycles, b.total_iters, b.beta)
                             : ScheduleSpec::polynomial(step_n / N, b.decay_b, b.decay_gamma,
                                                        b.total_iters);
          const CollectionPlan plan{b.samples_per_cycle, b.burn_in, b.keep};
          auto chain = run_chain(*target, cfg, Vector::Zero(d), plan);
          const std::string rkey = dkey + "." + name + ".rep_" + std::to_string(rep);
          note_chain(report, rkey, chain);
          // Cyclical runs keep the most recent `keep` records so both arms use B = keep.
          auto& records = chain.samples.records;
          if (static_cast<std::int64_t>(records.size()) > b.keep)
            records.erase(records.begin(), records.end() - b.keep);
          if (should_write(common.write_samples, rep))
            write_chain(dir / "samples" / dcfg.name / name / ("rep_" + std::to_string(rep)), 0,
                        chain.samples);
          double med = 0.0;
          if (chain.ok() && static_cast<std::int64_t>(records.size()) >= 10) {
            std::vector<double> per_coord;
            const auto lag = std::min<std::int64_t>(b.max_lag, static_cast<std::int64_t>(records.size()) - 1);
            for (Eigen::Index j = 0; j < d; ++j) {
              try {
                per_coord.push_back(ess(coordinate_trace(chain.samples, j), mu(j), var(j), lag));
              } catch (const DegenerateChain&) {
                per_coord.push_back(0.0);
              }
            }
            med = median_of(per_coord);
          }
          report.set(rkey, med);
          per_rep.push_back(med);
        }
        const double m = median_of(per_rep);
        report.set(dkey + "." + name + ".median", m);
        summary << dcfg.name << ',' << name << ',' << format_double(m);
        for (double v : per_rep) summary << ',' << format_double(v);
        summary << '\n';
      }
    }
  }
}

void run_bias(const Common& common, const BiasCfg& b, const fs::path& dir, Report& report,
              std::ostringstream& summary) {
  const auto target = gaussian_target(b.mean, b.variance);
  ConvergenceProbe probe;
  probe.seeds = static_cast<int>(b.seeds);
  if (b.test_function == "theta") {
    probe.test_fn = [](const Vector& x) { return x(0); };
    probe.true_mean = b.mean(0);
  } else {
    probe.test_fn = [](const Vector& x) { return x(0) * x(0); };
    probe.true_mean = b.mean(0) * b.mean(0) + b.variance;
  }
  report.set("bias_mse.true_mean", probe.true_mean);
  summary << "alpha0,total_iters,mean_estimate,bias,mse\n";
  for (const double a0 : b.alpha0_values) {
    SamplerConfig cfg = common.sampler;
    cfg.base = BaseSampler::SGLD;
    cfg.seed = common.seed;
    cfg.schedule = ScheduleSpec::cyclical(a0, b.num_cycles, b.budgets.front(), b.beta);
    for (const auto K : b.budgets) {
      const auto rows = bias_mse_probe(*target, cfg, probe, {K}, b.theta0, common.threads);
      const auto& row = rows.front();
      const std::string key = "bias_mse.alpha0_" + format_double(a0) + ".K_" + std::to_string(K);
      report.set(key + ".mean_estimate", row.mean_estimate);
      report.set(key + ".bias", row.bias);
      report.set(key + ".mse", row.mse);
      summary << format_double(a0) << ',' << K << ',' << format_double(row.mean_estimate) << ','
              << format_double(row.bias) << ',' << format_double(row.mse) << '\n';
      if (common.write_samples != SampleOutput::None) {
        SamplerConfig one = cfg;
        one.schedule.total_iters = K;
        one.seed = derive_seed(cfg.seed, 0);
        const auto spc = cycle_length(one.schedule) - exploration_length(one.schedule);
        const auto chain = run_cyclical(*target, one, b.theta0, std::max<std::int64_t>(1, spc));
        write_chain(dir / "samples" / ("alpha0_" + format_double(a0)) / ("K_" + std::to_string(K)),
                    0, chain.samples);
      }
    }
  }
}

void run_w2(const Common& common, const W2Cfg& w, const fs::path& dir, Report& report,
            std::ostringstream& summary) {
  const auto target = mixture_target(grid_mixture_spec());
  summary << "sampler,cycles,budget,mean_w2,stderr\n";
  for (const auto cycles : w.cycles) {
    const std::int64_t budget = cycles * w.cycle_length;
    std::vector<double> cyc, base;
    for (std::int64_t rep = 0; rep < common.repetitions; ++rep) {
      const auto rep_seed = derive_seed(common.seed, static_cast<std::uint64_t>(rep));
      const Vector init = box_inits(derive_seed(rep_seed, 0x1417), 1, w.init_box).front();
      Rng truth_rng(derive_seed(rep_seed, 0x7472));
      std::vector<Vector> truth;
      for (std::int64_t i = 0; i < w.points; ++i) truth.push_back(target->sample(truth_rng));

      SamplerConfig cfg = common.sampler;
      cfg.base = BaseSampler::SGLD;
      cfg.seed = rep_seed;
      cfg.schedule = ScheduleSpec::cyclical(w.alpha0, cycles, budget, w.beta);
      const auto spc = cycle_length(cfg.schedule) - exploration_length(cfg.schedule);
      const auto rc = run_cyclical(*target, cfg, init, std::max<std::int64_t>(1, spc));
      cfg.schedule = ScheduleSpec::polynomial(w.decay_a, w.decay_b, w.decay_gamma, budget);
      const auto rp = run_plain(*target, cfg, init, 0, budget);

      const auto distance = [&](const ChainResult& r) {
        auto pts = r.samples.points();
        if (static_cast<std::int64_t>(pts.size()) < w.points)
          throw std::runtime_error("w2_probe: chain produced fewer than w2_probe.points samples");
        // Uniform subsample of the pooled cloud down to the truth size.
        Rng pick(derive_seed(rep_seed, 0x5355));
        std::vector<Vector> sub;
        std::sample(pts.begin(), pts.end(), std::back_inserter(sub),
                    static_cast<std::size_t>(w.points), pick.engine());
        return wasserstein2(sub, truth);
      };
      const double wc = distance(rc), wp = distance(rp);
      const std::string key = "w2.cycles_" + std::to_string(cycles) + ".rep_" + std::to_string(rep);
      report.set(key + ".csgld", wc);
      report.set(key + ".sgld", wp);
      cyc.push_back(wc);
      base.push_back(wp);
      if (should_write(common.write_samples, rep)) {
        const auto sub = fs::path("cycles_" + std::to_string(cycles)) / ("rep_" + std::to_string(rep));
        write_chain(dir / "samples" / "csgld" / sub, 0, rc.samples);
        write_chain(dir / "samples" / "sgld" / sub, 0, rp.samples);
      }
    }
    const std::string key = "w2.cycles_" + std::to_string(cycles);
    report.set(key + ".budget", budget);
    report.set(key + ".csgld.mean", mean_of(cyc));
    report.set(key + ".sgld.mean", mean_of(base));
    summary << "csgld," << cycles << ',' << budget << ',' << format_double(mean_of(cyc)) << ','
            << format_double(stderr_of(cyc)) << '\n';
    summary << "sgld," << cycles << ',' << budget << ',' << format_double(mean_of(base)) << ','
            << format_double(stderr_of(base)) << '\n';
  }
}

fs::path resolve_output_dir(const json& config, const RunOptions& options) {
  if (!options.output_dir.empty()) return options.output_dir;
  if (config.contains("output_dir") && config["output_dir"].is_string())
    return config["output_dir"].get<std::string>();
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return "runs";
}

}  // namespace

std::vector<std::string> validate_config(const json& config, const fs::path& base_dir) {
  std::vector<std::string> errors;
  parse(config, base_dir, errors);
  return errors;
}

std::vector<std::string> validate_config_file(const fs::path& path,
                                              const std::vector<std::string>& overrides) {
  json config;
  try {
    config = load_config(path);
    apply_overrides(config, overrides);
  } catch (const ConfigError& e) {
    return e.violations();
  }
  return validate_config(config, path.parent_path());
}

std::string run_id(const json& config) {
  json key = config;
  if (key.is_object()) {
    key.erase("output_dir");
    key.erase("threads");
  }
  // FNV-1a over the canonical (sorted-key) dump.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : key.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

RunOutcome run_experiment(const fs::path& config_path, const RunOptions& options) {
  json config = load_config(config_path);
  apply_overrides(config, options.overrides);
  std::vector<std::string> errors;
  const Parsed p = parse(config, config_path.parent_path(), errors);
  if (!errors.empty()) throw ConfigError(errors);

  const std::string id = run_id(config);
  const fs::path dir = resolve_output_dir(config, options) / p.common.experiment / id;
  if (fs::exists(dir)) fs::remove_all(dir);
  fs::create_directories(dir);
  write_text(dir / "config.json", config.dump(2) + "\n");

  Report report;
  report.set("experiment", p.common.experiment);
  report.set("run_id", id);
  report.set("repetitions", p.common.repetitions);
  report.set("seed", static_cast<std::int64_t>(p.common.seed));
  std::ostringstream summary;
  if (p.mixture) run_mixture(p.common, *p.mixture, dir, report, summary);
  if (p.blr) run_blr(p.common, *p.blr, dir, report, summary);
  if (p.bias) run_bias(p.common, *p.bias, dir, report, summary);
  if (p.w2) run_w2(p.common, *p.w2, dir, report, summary);
  report.set("status", "complete");

  write_text(dir / "summary.csv", summary.str());
  write_text(dir / "report.txt", report.str());
  return {dir, report};
}

// ---------------------------------------------------------------------------
// Plot tables.

namespace {

struct ScheduleTable {
  ScheduleSpec cyclical;
  std::optional<ScheduleSpec> baseline;
  std::int64_t burn_in = 0;
};

ScheduleTable schedule_for_plot(const Parsed& p) {
  ScheduleTable t;
  if (p.mixture) {
    t.cyclical = p.mixture->cyclical;
    t.baseline = p.mixture->baseline;
    t.burn_in = p.mixture->burn_in;
  } else if (p.blr) {
    // Stepsizes in alpha * N units for the first dataset and sampler.
    const auto& b = *p.blr;
    const double step_n = b.datasets.front().step_n.begin()->second;
    const auto it = b.datasets.front().step_n.find(std::string(to_string(b.samplers.front())));
    const double s = it != b.datasets.front().step_n.end() ? it->second : step_n;
    t.cyclical = ScheduleSpec::cyclical(s, b.num_cycles, b.total_iters, b.beta);
    t.baseline = ScheduleSpec::polynomial(s, b.decay_b, b.decay_gamma, b.total_iters);
    t.burn_in = b.burn_in;
  } else if (p.bias) {
    const auto& b = *p.bias;
    t.cyclical = ScheduleSpec::cyclical(b.alpha0_values.front(), b.num_cycles,
                                        *std::max_element(b.budgets.begin(), b.budgets.end()),
                                        b.beta);
  } else if (p.w2) {
    const auto& w = *p.w2;
    const auto cycles = *std::max_element(w.cycles.begin(), w.cycles.end());
    t.cyclical = ScheduleSpec::cyclical(w.alpha0, cycles, cycles * w.cycle_length, w.beta);
    t.baseline =
        ScheduleSpec::polynomial(w.decay_a, w.decay_b, w.decay_gamma, cycles * w.cycle_length);
  }
  return t;
}

}  // namespace

void emit_plot_data(const fs::path& run_dir) {
  const fs::path report_path = run_dir / "report.txt";
  const fs::path config_path = run_dir / "config.json";
  if (!fs::exists(report_path) || !fs::exists(config_path))
    throw std::runtime_error("incomplete run directory " + run_dir.string() +
                             ": report.txt or config.json is missing");
  const Report report = Report::read(report_path.string());
  if (!report.contains("status") || report.get("status") != "complete")
    throw std::runtime_error("incomplete run directory " + run_dir.string() +
                             ": run did not finish");
  const json config = load_config(config_path);
  std::vector<std::string> errors;
  // Dataset files are not needed here; validate structure only.
  json relaxed = config;
  if (relaxed.contains("blr_ess")) relaxed["blr_ess"]["allow_synthetic_fallback"] = true;
  if (relaxed.contains("blr_ess") && relaxed["blr_ess"].contains("datasets"))
    for (auto& d : relaxed["blr_ess"]["datasets"])
      if (!d.contains("synthetic")) d["synthetic"] = {{"n", 10}, {"d", 1}};
  const Parsed p = parse(relaxed, run_dir, errors);
  if (!errors.empty()) throw ConfigError(errors);
  const fs::path out = run_dir / "plot";
  fs::create_directories(out);

  {
    const auto t = schedule_for_plot(p);
    std::ostringstream os;
    os << "k,stage,cycle,alpha_cyclical";
    if (t.baseline) os << ",alpha_baseline";
    os << '\n';
    const double burn_alpha = t.baseline ? stepsize(*t.baseline, 1) : 0.0;
    for (std::int64_t k = 1; k <= t.cyclical.total_iters; ++k) {
      os << k << ',' << to_string(stage(t.cyclical, k)) << ',' << cycle_index(t.cyclical, k) << ','
         << format_double(stepsize(t.cyclical, k));
      if (t.baseline) {
        const double a = k <= t.burn_in ? burn_alpha : stepsize(*t.baseline, k - t.burn_in);
        os << ',' << format_double(a);
      }
      os << '\n';
    }
    write_text(out / "schedule.csv", os.str());
  }

  if (p.mixture) {
    const auto bins = config.value("/plot/bins"_json_pointer, 60);
    const auto range = config.value("/plot/range"_json_pointer, 6.0);
    const fs::path samples = run_dir / "samples" / "rep_0";
    if (!fs::exists(samples))
      throw std::runtime_error("incomplete run directory " + run_dir.string() +
                               ": samples/rep_0 is missing (was write_samples = none?)");
    std::vector<fs::path> arms;
    for (const auto& e : fs::directory_iterator(samples))
      if (e.is_directory()) arms.push_back(e.path());
    std::sort(arms.begin(), arms.end());
    std::ostringstream os;
    os << "sampler,ix,iy,x_center,y_center,count\n";
    const double width = 2.0 * range / bins;
    for (const auto& arm : arms) {
      std::vector<std::int64_t> grid(static_cast<std::size_t>(bins * bins), 0);
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(arm))
        if (e.path().extension() == ".csv") files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        for (const auto& r : read_samples_csv(f.string()).records) {
          const auto cell = [&](double v) {
            auto i = static_cast<std::int64_t>(std::floor((v + range) / width));
            return std::clamp<std::int64_t>(i, 0, bins - 1);
          };
          ++grid[static_cast<std::size_t>(cell(r.theta(0)) * bins + cell(r.theta(1)))];
        }
      }
      for (int ix = 0; ix < bins; ++ix)
        for (int iy = 0; iy < bins; ++iy)
          os << arm.filename().string() << ',' << ix << ',' << iy << ','
             << format_double(-range + (ix + 0.5) * width) << ','
             << format_double(-range + (iy + 0.5) * width) << ','
             << grid[static_cast<std::size_t>(ix * bins + iy)] << '\n';
    }
    write_text(out / "histogram.csv", os.str());
  }

  {
    std::ifstream in(run_dir / "summary.csv", std::ios::binary);
    if (!in) throw std::runtime_error("incomplete run directory: summary.csv is missing");
    std::ostringstream os;
    os << in.rdbuf();
    write_text(out / (p.common.experiment + "_summary.csv"), os.str());
  }
}

}  // namespace csgmcmc::harness
