// nlwmix: run, validate and list experiments for the stochastic damped wave
// simulator.
//
//   nlwmix run config.ini [--check] [--out DIR] [--threads K]
//   nlwmix validate config.ini
//   nlwmix list-experiments
//
// NLWMIX_SEED overrides [run] seed; NLWMIX_THREADS sets the worker count when
// --threads is absent.

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "nlwmix/config.hpp"
#include "nlwmix/csv.hpp"
#include "nlwmix/experiments.hpp"

namespace {

nlwmix::ExperimentConfig load(const std::string& path) {
  auto cfg = nlwmix::parse_config(nlwmix::read_text(path));
  if (const char* env = std::getenv("NLWMIX_SEED")) {
    char* end = nullptr;
    const unsigned long long seed = std::strtoull(env, &end, 10);
    if (!*env || *end) throw nlwmix::ConfigError("NLWMIX_SEED must be a nonnegative integer");
    cfg.run.seed = seed;
  }
  // Building the model runs the parameter and dissipativity validation.
  (void)nlwmix::build_model(cfg.model);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral-Galerkin simulator for the white-forced damped nonlinear wave equation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  unsigned threads = 0;
  bool check = false;
  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("config", config_path, "Config file")->required();
  run->add_flag("--check", check, "Exit nonzero when any report threshold fails");
  run->add_option("--out", out_dir, "Output directory (overrides [output] dir)");
  run->add_option("--threads", threads, "Worker threads (default: NLWMIX_THREADS or all cores)");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Parse and validate a config file without simulating");
  validate->add_option("config", validate_path, "Config file")->required();

  auto* list = app.add_subcommand("list-experiments", "List the available experiments and their keys");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*list) {
      for (const auto& e : nlwmix::experiment_registry()) {
        std::cout << e.name << ": " << e.summary << "\n  keys:";
        for (const auto& k : e.keys) std::cout << ' ' << k;
        std::cout << '\n';
      }
      return 0;
    }
    if (*validate) {
      const auto cfg = load(validate_path);
      std::cout << "ok: experiment '" << cfg.experiment << "', config hash "
                << nlwmix::hex64(nlwmix::fnv1a(cfg.source)) << '\n';
      return 0;
    }
    const auto cfg = load(config_path);
    const std::string dir = out_dir.empty() ? cfg.output_dir : out_dir;
    const auto output = nlwmix::run_experiment(cfg, threads);
    const auto files = nlwmix::write_experiment(cfg, output, dir);
    std::cout << "wrote " << files.size() << " files to " << dir << '\n';
    for (const auto& c : output.checks) {
      std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << "  value=" << nlwmix::format_number(c.value)
                << "  threshold=" << nlwmix::format_number(c.threshold) << '\n';
    }
    if (check && !output.all_passed()) return 3;
    return 0;
  } catch (const nlwmix::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const nlwmix::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
