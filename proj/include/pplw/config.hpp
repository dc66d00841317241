#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pplw {

/// Exit 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Exit 3.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string model = "linreg";  // linreg | hetreg | branching | mlp-classifier | lifted-mlp
  std::string method = "vi";     // vi | map | mcmc
  std::uint64_t seed = 0;
  std::size_t steps = 3000;
  double lr = 0.02;
  std::size_t n_samples = 1;
  std::size_t mcmc_steps = 20000;
  std::size_t burn_in = 2000;
  double step_scale = 0.05;
  std::size_t chains = 1;
  std::string data;       // CSV path
  std::string synthetic;  // e.g. "a=1.5,b=-2,sigma=0.5,n=200"
  std::string out = "pplw-out";
  std::string manifest;   // input model directory for predict, diagnose and lift
  std::string posterior;  // posterior spec text; empty keeps the model default
  double level = 0.9;
  std::size_t n_draws = 200;
  std::size_t hidden = 8;
  std::size_t pretrain_steps = 1500;
  std::string lift_layers = "2";  // "all" or comma-separated layer indices
  double prior_scale = 0.1;
  bool deterministic = false;     // mlp-classifier without random variables
  std::size_t passes = 10000;
  double demo_input = 1.0;
  /// After fitting, pin every guide scale and every positive latent at this
  /// value (builds a deliberately overconfident posterior).
  std::optional<double> freeze_scale;

  /// Canonical key -> text form of every field.
  std::map<std::string, std::string> to_map() const;
  /// FNV-1a over the canonical form, excluding the seed and output paths.
  std::uint64_t hash() const;
};

/// Keys accepted in config files and as --flags (with '-' for '_').
const std::vector<std::string>& config_keys();

/// Flat key=value text; '#' starts a comment. Throws ConfigError.
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

/// Validates and converts; unknown keys or bad values throw ConfigError.
RunConfig parse_config(const std::map<std::string, std::string>& values);

/// "k=v,k=v" -> map; throws ConfigError on malformed items.
std::map<std::string, double> parse_synthetic(const std::string& spec);

}  // namespace pplw
