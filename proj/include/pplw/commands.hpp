#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ppl/inference.hpp"
#include "ppl/manifest.hpp"
#include "pplw/config.hpp"
#include "pplw/data.hpp"
#include "pplw/models.hpp"

namespace pplw {

/// Everything a fit produces, before anything touches the disk.
struct FitOutcome {
  RunConfig config;
  Workbench model;
  ppl::Manifest manifest;
  nlohmann::json report;
  std::vector<std::string> log;
  std::optional<ppl::McmcResult> mcmc;
};

/// Reads or generates the training data (validated first), builds and fits
/// the model. Throws ConfigError, DataError or ppl::NumericalError.
FitOutcome fit_model(const RunConfig& cfg);

/// Writes manifest.json, tensors.bin, fit_report.json and run.log into cfg.out.
void write_fit(const FitOutcome& outcome);

/// A fitted model rebuilt from a manifest directory.
struct LoadedModel {
  RunConfig config;  // the configuration the model was fitted with
  Workbench model;
  ppl::Manifest manifest;
  std::optional<ppl::McmcResult> mcmc;
};

/// Throws ppl::SerializationError for unreadable or inconsistent manifests.
LoadedModel load_model(const std::filesystem::path& dir);

/// Per-row predictive summaries from `n_draws` posterior draws, each followed
/// by one draw of observation noise.
struct Prediction {
  std::size_t rows = 0;
  std::size_t n_draws = 0;
  double level = 0.0;
  bool classification = false;
  // regression
  std::vector<double> mean, sd, lower, upper, epistemic_sd, aleatoric_sd;
  std::vector<std::vector<double>> draws;  // rows x n_draws predictive samples
  // classification: probability of class 1
  std::vector<double> p1, p1_sd;
  std::vector<int> predicted;
};

/// Deterministic in (model state, x, n_draws, level, seed).
Prediction predict(Workbench& wb, const std::optional<ppl::McmcResult>& mcmc, const ppl::Tensor& x,
                   std::size_t n_draws, double level, std::uint64_t seed);

/// Coverage at `level`, a reliability table at nominal levels 0.1 .. 0.9
/// (regression) or by probability decile (classification), plus error metrics.
nlohmann::json diagnose(const Prediction& p, const std::vector<double>& truth);

/// Runs the branching model `passes` times and reports branch frequencies,
/// per-branch moments and ledger checks.
nlohmann::json demo_branching(const RunConfig& cfg);

/// Training or evaluation data for `wb` from cfg.data or cfg.synthetic.
Table load_table(const RunConfig& cfg, const Workbench& wb, bool need_target);

/// Lifts layers of a loaded model and returns the new manifest.
ppl::Manifest lift_model(LoadedModel& loaded, const std::string& which, double prior_scale,
                         std::vector<std::string>& log);

void write_predictions(const Prediction& p, const RunConfig& cfg, const std::filesystem::path& dir);

/// Header line carried by every text artifact.
std::string provenance_line(const RunConfig& cfg);

}  // namespace pplw
