#include "pplw/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <ostream>

#include "ppl/error.hpp"
#include "pplw/commands.hpp"

namespace pplw {

namespace {

using nlohmann::json;

const std::map<std::string, std::string>& key_help() {
  static const std::map<std::string, std::string> help = {
      {"model", "linreg, hetreg, branching, mlp-classifier or lifted-mlp"},
      {"method", "vi, map or mcmc"},
      {"seed", "master seed (falls back to $PPLW_SEED, then 0)"},
      {"steps", "optimizer steps for vi and map"},
      {"lr", "Adam learning rate"},
      {"n_samples", "Monte Carlo samples per ELBO estimate"},
      {"mcmc_steps", "Metropolis iterations per chain, burn-in included"},
      {"burn_in", "iterations discarded at the start of each chain"},
      {"step_scale", "random-walk proposal scale"},
      {"chains", "independent MCMC chains"},
      {"data", "CSV file with a header row"},
      {"synthetic", "generated data, e.g. n=200,sigma=0.5,seed=3 (or 'default')"},
      {"out", "output directory"},
      {"manifest", "directory of a fitted model"},
      {"posterior", "Automatic, PointMass, Normal(log_scale=x) or ScaledNormal(scaling=x)"},
      {"level", "central predictive interval level in [0, 1]"},
      {"n_draws", "posterior draws per prediction"},
      {"hidden", "hidden units of the mlp models"},
      {"pretrain_steps", "deterministic training steps before lifting"},
      {"lift_layers", "'all' or comma-separated layer indices"},
      {"prior_scale", "relative prior scale for lifted layers"},
      {"deterministic", "mlp-classifier without random variables"},
      {"passes", "passes of the branching demo"},
      {"demo_input", "data value fed to the branching demo"},
      {"freeze_scale", "pin every guide scale and positive latent at this value after fitting"},
  };
  return help;
}

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

void write_json(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path, std::ios::trunc);
  out << doc.dump(2) << "\n";
  if (!out) throw DataError("failed writing " + path.string());
}

int cmd_fit(const RunConfig& cfg, std::ostream& out) {
  const FitOutcome outcome = fit_model(cfg);
  write_fit(outcome);
  for (const auto& line : outcome.log) out << line << "\n";
  out << "wrote " << cfg.out << "/{manifest.json,tensors.bin,fit_report.json,run.log}\n";
  return kOk;
}

LoadedModel require_model(const RunConfig& cfg) {
  if (cfg.manifest.empty()) throw ConfigError("this command needs manifest=DIR (the output directory of a fit)");
  return load_model(cfg.manifest);
}

int cmd_predict(const RunConfig& cfg, std::ostream& out) {
  LoadedModel loaded = require_model(cfg);
  const Table table = load_table(cfg, loaded.model, false);
  const Prediction p = predict(loaded.model, loaded.mcmc, loaded.model.inputs(table), cfg.n_draws, cfg.level, cfg.seed);
  write_predictions(p, cfg, cfg.out);
  out << "predicted " << p.rows << " rows with " << p.n_draws << " draws; wrote " << cfg.out
      << "/{predictions.csv,predictions.json}\n";
  return kOk;
}

int cmd_diagnose(const RunConfig& cfg, std::ostream& out) {
  LoadedModel loaded = require_model(cfg);
  const Table table = load_table(cfg, loaded.model, true);
  const auto truth = loaded.model.targets(table).to_vector();
  const Prediction p = predict(loaded.model, loaded.mcmc, loaded.model.inputs(table), cfg.n_draws, cfg.level, cfg.seed);
  json doc = diagnose(p, truth);
  doc["seed"] = cfg.seed;
  doc["config_hash"] = ppl::hex64(cfg.hash());
  doc["model"] = loaded.config.model;
  doc["model_config_hash"] = ppl::hex64(loaded.manifest.config_hash);
  std::filesystem::create_directories(cfg.out);
  write_json(std::filesystem::path(cfg.out) / "diagnose.json", doc);
  if (p.classification) {
    out << "accuracy " << doc["accuracy"].get<double>() << " brier " << doc["brier"].get<double>() << "\n";
  } else {
    out << "coverage at level " << cfg.level << ": " << doc["coverage"].get<double>() << " (rmse "
        << doc["rmse"].get<double>() << ")\n";
    for (const auto& row : doc["reliability"]) {
      out << "  nominal " << row["nominal"].get<double>() << " empirical " << row["empirical"].get<double>() << "\n";
    }
  }
  out << "wrote " << cfg.out << "/diagnose.json\n";
  return kOk;
}

int cmd_demo(const RunConfig& cfg, std::ostream& out) {
  const json doc = demo_branching(cfg);
  std::filesystem::create_directories(cfg.out);
  write_json(std::filesystem::path(cfg.out) / "demo_branching.json", doc);
  out << "passes " << cfg.passes << ", guides " << doc["guide_count"].get<std::size_t>() << ", ledger "
      << (doc["ledger_ok"].get<bool>() ? "ok" : "VIOLATED") << "\n";
  for (const auto& b : doc["branches"]) {
    out << "  " << b["prior"].get<std::string>() << ": frequency " << b["frequency"].get<double>() << ", weight mean "
        << b["weight_mean"].get<double>() << "\n";
  }
  out << "wrote " << cfg.out << "/demo_branching.json\n";
  return doc["ledger_ok"].get<bool>() ? kOk : kFailure;
}

int cmd_lift(const RunConfig& cfg, std::ostream& out) {
  LoadedModel loaded = require_model(cfg);
  std::vector<std::string> log = {provenance_line(cfg).substr(2), "lift manifest=" + cfg.manifest};
  const ppl::Manifest lifted = lift_model(loaded, cfg.lift_layers, cfg.prior_scale, log);
  ppl::write_manifest(lifted, cfg.out);
  std::string text;
  for (const auto& line : log) text += line + "\n";
  std::ofstream(std::filesystem::path(cfg.out) / "lift.log", std::ios::trunc) << text;
  out << text << "wrote " << cfg.out << "/{manifest.json,tensors.bin,lift.log}\n";
  return kOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"pplw: fit, query and diagnose probabilistic models"};
  app.name("pplw");
  app.require_subcommand(1);

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"fit", "fit a model by vi, map or mcmc and save it"},
      {"predict", "posterior predictive summaries for new inputs"},
      {"diagnose", "interval coverage and calibration on held-out data"},
      {"demo-branching", "run the data-dependent branching model"},
      {"lift", "turn deterministic layers of a saved model bayesian"},
  };
  std::map<std::string, std::map<std::string, std::string>> flag_values;
  std::map<std::string, std::string> config_files;
  for (const auto& [name, desc] : commands) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", config_files[name], "key=value configuration file");
    for (const auto& key : config_keys()) {
      sub->add_option("--" + dashed(key), flag_values[name][key], key_help().at(key));
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  CLI::App* chosen = app.get_subcommands().front();
  const std::string name = chosen->get_name();
  try {
    std::map<std::string, std::string> values;
    if (!config_files[name].empty()) values = read_config_file(config_files[name]);
    if (!values.count("seed")) {
      if (const char* env = std::getenv("PPLW_SEED"); env && *env) values["seed"] = env;
    }
    for (const auto& key : config_keys()) {
      if (chosen->count("--" + dashed(key)) > 0) values[key] = flag_values[name][key];
    }
    const RunConfig cfg = parse_config(values);
    if (name == "fit") return cmd_fit(cfg, out);
    if (name == "predict") return cmd_predict(cfg, out);
    if (name == "diagnose") return cmd_diagnose(cfg, out);
    if (name == "demo-branching") return cmd_demo(cfg, out);
    return cmd_lift(cfg, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const ppl::SerializationError& e) {
    err << "manifest error: " << e.what() << "\n";
    return kDataError;
  } catch (const ppl::NumericalError& e) {
    err << "numerical error at step " << e.step() << ": " << e.what() << "\n";
    return kNumericalError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace pplw
