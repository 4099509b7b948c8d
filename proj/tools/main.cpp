#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "harness.hpp"

namespace h = csgmcmc::harness;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kFailed = 2;

void print_violations(const std::vector<std::string>& violations) {
  for (const auto& v : violations) std::cerr << "error: " << v << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cyclical SG-MCMC experiment runner"};
  app.require_subcommand(1);

  std::string config;
  std::vector<std::string> overrides;
  std::string output_dir;
  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("config", config, "JSON config file")->required()->check(CLI::ExistingFile);
  run->add_option("--set", overrides, "Override a config field, e.g. --set schedule.beta=0.3");
  run->add_option("--output-dir", output_dir,
                  std::string("Output root (default: config, then $") + h::kOutputDirEnv +
                      ", then ./runs)");

  auto* validate = app.add_subcommand("validate", "Check a config file without running it");
  validate->add_option("config", config, "JSON config file")->required()->check(CLI::ExistingFile);
  validate->add_option("--set", overrides, "Override a config field");

  std::string run_dir;
  auto* plot = app.add_subcommand("plot-data", "Write plot-ready CSV tables for a finished run");
  plot->add_option("run_dir", run_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (*validate) {
      const auto v = h::validate_config_file(config, overrides);
      if (!v.empty()) {
        print_violations(v);
        return kInvalid;
      }
      std::cout << "ok: " << config << '\n';
      return kOk;
    }
    if (*run) {
      const auto outcome = h::run_experiment(config, {overrides, output_dir});
      std::cout << outcome.run_dir.string() << '\n';
      return kOk;
    }
    if (*plot) {
      h::emit_plot_data(run_dir);
      std::cout << (std::filesystem::path(run_dir) / "plot").string() << '\n';
      return kOk;
    }
  } catch (const h::ConfigError& e) {
    print_violations(e.violations());
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailed;
  }
  return kOk;
}
