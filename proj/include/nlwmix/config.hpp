#pragma once

// Experiment configuration: an INI-style file with [model], [run],
// [experiment] and [output] sections. Every key is checked against the
// section (and, for [experiment], the experiment's own key list); anything
// unknown is an error that names the line.

#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nlwmix/basis.hpp"
#include "nlwmix/errors.hpp"
#include "nlwmix/model.hpp"

namespace nlwmix {

struct ExperimentInfo {
  std::string name;
  std::string summary;
  std::vector<std::string> keys;
};

inline const std::vector<ExperimentInfo>& experiment_registry() {
  static const std::vector<ExperimentInfo> registry{
      {"energy", "mean energy decay with a fitted bound, exponential moments, zero-noise monotonicity",
       {"y0_norm", "kappa", "fit_split", "excursion_tol"}},
      {"tails", "supermartingale tail frequencies against exp(-beta r) with a calibrated K",
       {"y0_norm", "r_grid", "calibration_n", "K", "level", "tolerance"}},
      {"fp-scan", "Foias-Prodi contraction rate per projection dimension N",
       {"N_list", "amplitude", "distance", "fail_amplitude", "pairs", "fit_t0", "r2_min", "trace_pairs"}},
      {"girsanov", "Girsanov drift integrals and the total-variation bound against |y - y'|",
       {"N", "deltas", "pairs", "amplitude", "mode", "calibration_n", "r2_min"}},
      {"mixing", "W1 distance between ensembles from two starts, with an exponential fit",
       {"y0_norm", "y0b_norm", "fit_t0", "fit_t1", "observable_modes", "clip", "floor_factor", "r2_min"}},
      {"lln", "running-average error of a clipped mode coordinate along one long path",
       {"burn_in", "t_min", "t_fit_min", "reference", "pilot_T", "clip", "slope_max"}},
      {"clt", "normalized time integrals across an ensemble against a fitted normal law",
       {"t_eval", "reference", "pilot_T", "burn_in", "clip", "y0_norm", "p_min"}},
      {"hitting", "probability of being inside small balls of H at the final time",
       {"y0_norm", "d"}},
      {"split", "H^s size of the nonlinear part z in the splitting u = v + z",
       {"s", "y0_norm", "ratio_max"}},
      {"dissipativity", "dissipativity and growth constants of the nonlinearity", {"range"}},
  };
  return registry;
}

inline const ExperimentInfo* find_experiment(const std::string& name) {
  for (const auto& e : experiment_registry()) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

struct ModelConfig {
  int dim = 1;
  int modes = 32;
  double gamma = 0.12;
  std::optional<double> alpha;
  std::optional<double> nu;
  std::string nonlinearity = "sine-gordon";
  double rho = 1.0;
  double kg_lambda = 0.0;
  double b0 = 0.2;
  double decay_q = 1.0;
  std::optional<std::size_t> noise_cutoff;
  double h = 0.0;
};

struct RunConfig {
  double T = 10.0;
  double dt = 1e-3;
  std::size_t n = 1;
  std::uint64_t seed = 1;
  double checkpoint_step = 1.0;
  std::uint64_t record_every = 100;
  unsigned threads = 0;
};

struct ExperimentConfig {
  ModelConfig model;
  RunConfig run;
  std::string experiment;
  std::map<std::string, std::string> params;  // experiment-specific keys
  std::map<std::string, int> param_lines;
  std::string output_dir = "out";
  std::string source;  // normalized text, hashed into the manifest

  [[nodiscard]] bool has(const std::string& key) const { return params.count(key) > 0; }
  [[nodiscard]] double number(const std::string& key, double fallback) const;
  [[nodiscard]] std::optional<double> optional_number(const std::string& key) const;
  [[nodiscard]] std::size_t count(const std::string& key, std::size_t fallback) const;
  [[nodiscard]] std::vector<double> list(const std::string& key, std::vector<double> fallback) const;
  [[nodiscard]] std::string text(const std::string& key, const std::string& fallback) const;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string at_line(int line, const std::string& msg) {
  return line > 0 ? "config line " + std::to_string(line) + ": " + msg : "config: " + msg;
}

inline double parse_double(const std::string& v, int line, const std::string& key) {
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(x)) {
    throw ConfigError(at_line(line, "'" + key + "' expects a number, got '" + v + "'"));
  }
  return x;
}

inline std::uint64_t parse_unsigned(const std::string& v, int line, const std::string& key) {
  errno = 0;
  char* end = nullptr;
  if (v.empty() || v[0] == '-') throw ConfigError(at_line(line, "'" + key + "' expects a nonnegative integer"));
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size() || errno == ERANGE) {
    throw ConfigError(at_line(line, "'" + key + "' expects a nonnegative integer, got '" + v + "'"));
  }
  return x;
}

inline std::vector<double> parse_list(const std::string& v, int line, const std::string& key) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(trim(item), line, key));
  if (out.empty()) throw ConfigError(at_line(line, "'" + key + "' expects a comma-separated list"));
  return out;
}

}  // namespace detail

inline double ExperimentConfig::number(const std::string& key, double fallback) const {
  const auto it = params.find(key);
  return it == params.end() ? fallback : detail::parse_double(it->second, param_lines.at(key), key);
}

inline std::optional<double> ExperimentConfig::optional_number(const std::string& key) const {
  const auto it = params.find(key);
  if (it == params.end()) return std::nullopt;
  return detail::parse_double(it->second, param_lines.at(key), key);
}

inline std::size_t ExperimentConfig::count(const std::string& key, std::size_t fallback) const {
  const auto it = params.find(key);
  return it == params.end() ? fallback : detail::parse_unsigned(it->second, param_lines.at(key), key);
}

inline std::vector<double> ExperimentConfig::list(const std::string& key, std::vector<double> fallback) const {
  const auto it = params.find(key);
  return it == params.end() ? fallback : detail::parse_list(it->second, param_lines.at(key), key);
}

inline std::string ExperimentConfig::text(const std::string& key, const std::string& fallback) const {
  const auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line = 0;
  std::map<std::string, int> seen;
  std::ostringstream normalized;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find_first_of("#;");
    const std::string content = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (content.empty()) continue;
    if (content.front() == '[') {
      if (content.back() != ']') throw ConfigError(detail::at_line(line, "malformed section header"));
      section = detail::trim(content.substr(1, content.size() - 2));
      if (section != "model" && section != "run" && section != "experiment" && section != "output") {
        throw ConfigError(detail::at_line(line, "unknown section [" + section + "]"));
      }
      normalized << '[' << section << "]\n";
      continue;
    }
    const auto eq = content.find('=');
    if (eq == std::string::npos) throw ConfigError(detail::at_line(line, "expected 'key = value'"));
    const std::string key = detail::trim(content.substr(0, eq));
    const std::string value = detail::trim(content.substr(eq + 1));
    if (section.empty()) throw ConfigError(detail::at_line(line, "key '" + key + "' outside any section"));
    if (key.empty()) throw ConfigError(detail::at_line(line, "empty key"));
    const std::string full = section + "." + key;
    if (seen.count(full)) {
      throw ConfigError(detail::at_line(line, "duplicate key '" + key + "' (first set on line " +
                                                  std::to_string(seen[full]) + ")"));
    }
    seen[full] = line;
    normalized << key << '=' << value << '\n';

    auto num = [&] { return detail::parse_double(value, line, key); };
    auto uns = [&] { return detail::parse_unsigned(value, line, key); };
    auto unknown = [&] { throw ConfigError(detail::at_line(line, "unknown key '" + key + "' in [" + section + "]")); };

    if (section == "model") {
      if (key == "dim") cfg.model.dim = static_cast<int>(uns());
      else if (key == "modes") cfg.model.modes = static_cast<int>(uns());
      else if (key == "gamma") cfg.model.gamma = num();
      else if (key == "alpha") cfg.model.alpha = num();
      else if (key == "nu") cfg.model.nu = num();
      else if (key == "nonlinearity") cfg.model.nonlinearity = value;
      else if (key == "rho") cfg.model.rho = num();
      else if (key == "kg_lambda") cfg.model.kg_lambda = num();
      else if (key == "b0") cfg.model.b0 = num();
      else if (key == "decay_q") cfg.model.decay_q = num();
      else if (key == "noise_cutoff") cfg.model.noise_cutoff = static_cast<std::size_t>(uns());
      else if (key == "h") cfg.model.h = num();
      else unknown();
    } else if (section == "run") {
      if (key == "T") cfg.run.T = num();
      else if (key == "dt") cfg.run.dt = num();
      else if (key == "n") cfg.run.n = static_cast<std::size_t>(uns());
      else if (key == "seed") cfg.run.seed = uns();
      else if (key == "checkpoint_step") cfg.run.checkpoint_step = num();
      else if (key == "record_every") cfg.run.record_every = uns();
      else if (key == "threads") cfg.run.threads = static_cast<unsigned>(uns());
      else unknown();
    } else if (section == "experiment") {
      if (key == "name") {
        cfg.experiment = value;
      } else {
        cfg.params[key] = value;
        cfg.param_lines[key] = line;
      }
    } else {
      if (key == "dir") cfg.output_dir = value;
      else unknown();
    }
  }
  cfg.source = normalized.str();

  if (cfg.experiment.empty()) throw ConfigError("config: [experiment] needs a 'name'");
  const ExperimentInfo* info = find_experiment(cfg.experiment);
  if (!info) throw ConfigError(detail::at_line(seen["experiment.name"], "unknown experiment '" + cfg.experiment + "'"));
  for (const auto& [key, ln] : cfg.param_lines) {
    bool ok = false;
    for (const auto& k : info->keys) ok = ok || k == key;
    if (!ok) throw ConfigError(detail::at_line(ln, "unknown key '" + key + "' for experiment '" + cfg.experiment + "'"));
  }
  if (cfg.model.nonlinearity != "sine-gordon" && cfg.model.nonlinearity != "klein-gordon" &&
      cfg.model.nonlinearity != "zero") {
    throw ConfigError(detail::at_line(seen["model.nonlinearity"],
                                      "nonlinearity must be sine-gordon, klein-gordon or zero"));
  }
  if (!(cfg.run.T > 0.0)) throw ConfigError(detail::at_line(seen["run.T"], "T must be positive"));
  if (!(cfg.run.dt > 0.0)) throw ConfigError(detail::at_line(seen["run.dt"], "dt must be positive"));
  if (cfg.run.n < 1) throw ConfigError(detail::at_line(seen["run.n"], "n must be >= 1"));
  if (cfg.run.record_every < 1) throw ConfigError(detail::at_line(seen["run.record_every"], "record_every must be >= 1"));
  if (!(cfg.run.checkpoint_step > 0.0)) {
    throw ConfigError(detail::at_line(seen["run.checkpoint_step"], "checkpoint_step must be positive"));
  }
  return cfg;
}

/// Builds the basis and model, running every model-level validation.
inline Model build_model(const ModelConfig& mc) {
  auto basis = std::make_shared<const Basis>(mc.dim, mc.modes);
  ModelOptions opt;
  opt.gamma = mc.gamma;
  opt.alpha = mc.alpha;
  opt.nu = mc.nu;
  opt.h_amplitude = mc.h;
  if (mc.nonlinearity == "sine-gordon") opt.nonlinearity = Nonlinearity::sine_gordon();
  else if (mc.nonlinearity == "klein-gordon") opt.nonlinearity = Nonlinearity::klein_gordon(mc.rho, mc.kg_lambda);
  else opt.nonlinearity = Nonlinearity::zero();
  opt.noise.b0 = mc.b0;
  opt.noise.decay_q = mc.decay_q;
  opt.noise.cutoff = mc.noise_cutoff;
  return Model(std::move(basis), opt);
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace nlwmix
