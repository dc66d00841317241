#include "pplw/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include "ppl/manifest.hpp"

namespace pplw {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string num(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

double to_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw ConfigError("'" + key + "' expects a number, got '" + text + "'");
  return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + text + "'");
  }
  return v;
}

bool to_bool(const std::string& key, const std::string& text) {
  if (text == "1" || text == "true" || text == "yes") return true;
  if (text == "0" || text == "false" || text == "no") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + text + "'");
}

void one_of(const std::string& key, const std::string& value, std::initializer_list<const char*> allowed) {
  std::string list;
  for (const char* a : allowed) {
    if (value == a) return;
    list += (list.empty() ? "" : ", ") + std::string(a);
  }
  throw ConfigError("'" + key + "' must be one of " + list + ", got '" + value + "'");
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "model",     "method",      "seed",          "steps",          "lr",          "n_samples",
      "mcmc_steps", "burn_in",    "step_scale",    "chains",         "data",        "synthetic",
      "out",       "manifest",    "posterior",     "level",          "n_draws",     "hidden",
      "pretrain_steps", "lift_layers", "prior_scale", "deterministic", "passes",     "demo_input",
      "freeze_scale"};
  return keys;
}

std::map<std::string, std::string> RunConfig::to_map() const {
  std::map<std::string, std::string> m = {{"model", model},
                                          {"method", method},
                                          {"seed", std::to_string(seed)},
                                          {"steps", std::to_string(steps)},
                                          {"lr", num(lr)},
                                          {"n_samples", std::to_string(n_samples)},
                                          {"mcmc_steps", std::to_string(mcmc_steps)},
                                          {"burn_in", std::to_string(burn_in)},
                                          {"step_scale", num(step_scale)},
                                          {"chains", std::to_string(chains)},
                                          {"data", data},
                                          {"synthetic", synthetic},
                                          {"out", out},
                                          {"manifest", manifest},
                                          {"posterior", posterior},
                                          {"level", num(level)},
                                          {"n_draws", std::to_string(n_draws)},
                                          {"hidden", std::to_string(hidden)},
                                          {"pretrain_steps", std::to_string(pretrain_steps)},
                                          {"lift_layers", lift_layers},
                                          {"prior_scale", num(prior_scale)},
                                          {"deterministic", deterministic ? "true" : "false"},
                                          {"passes", std::to_string(passes)},
                                          {"demo_input", num(demo_input)},
                                          {"freeze_scale", freeze_scale ? num(*freeze_scale) : ""}};
  return m;
}

std::uint64_t RunConfig::hash() const {
  std::string canonical;
  for (const auto& [k, v] : to_map()) {
    if (k == "seed" || k == "out" || k == "manifest") continue;
    canonical += k + "=" + v + "\n";
  }
  return ppl::fnv1a64(canonical);
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    std::replace(key.begin(), key.end(), '-', '_');
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

RunConfig parse_config(const std::map<std::string, std::string>& values) {
  const auto& keys = config_keys();
  for (const auto& [k, v] : values) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw ConfigError("unknown config key '" + k + "'");
  }
  RunConfig c;
  auto get = [&](const char* key) -> const std::string* {
    auto it = values.find(key);
    return it == values.end() ? nullptr : &it->second;
  };
  if (auto* v = get("model")) c.model = *v;
  if (auto* v = get("method")) c.method = *v;
  if (auto* v = get("seed")) c.seed = to_u64("seed", *v);
  if (auto* v = get("steps")) c.steps = to_u64("steps", *v);
  if (auto* v = get("lr")) c.lr = to_double("lr", *v);
  if (auto* v = get("n_samples")) c.n_samples = to_u64("n_samples", *v);
  if (auto* v = get("mcmc_steps")) c.mcmc_steps = to_u64("mcmc_steps", *v);
  if (auto* v = get("burn_in")) c.burn_in = to_u64("burn_in", *v);
  if (auto* v = get("step_scale")) c.step_scale = to_double("step_scale", *v);
  if (auto* v = get("chains")) c.chains = to_u64("chains", *v);
  if (auto* v = get("data")) c.data = *v;
  if (auto* v = get("synthetic")) c.synthetic = *v;
  if (auto* v = get("out")) c.out = *v;
  if (auto* v = get("manifest")) c.manifest = *v;
  if (auto* v = get("posterior")) c.posterior = *v;
  if (auto* v = get("level")) c.level = to_double("level", *v);
  if (auto* v = get("n_draws")) c.n_draws = to_u64("n_draws", *v);
  if (auto* v = get("hidden")) c.hidden = to_u64("hidden", *v);
  if (auto* v = get("pretrain_steps")) c.pretrain_steps = to_u64("pretrain_steps", *v);
  if (auto* v = get("lift_layers")) c.lift_layers = *v;
  if (auto* v = get("prior_scale")) c.prior_scale = to_double("prior_scale", *v);
  if (auto* v = get("deterministic")) c.deterministic = to_bool("deterministic", *v);
  if (auto* v = get("passes")) c.passes = to_u64("passes", *v);
  if (auto* v = get("demo_input")) c.demo_input = to_double("demo_input", *v);
  if (auto* v = get("freeze_scale"); v && !v->empty()) c.freeze_scale = to_double("freeze_scale", *v);

  one_of("model", c.model, {"linreg", "hetreg", "branching", "mlp-classifier", "lifted-mlp"});
  one_of("method", c.method, {"vi", "map", "mcmc"});
  if (c.n_samples == 0) throw ConfigError("'n_samples' must be at least 1");
  if (c.chains == 0) throw ConfigError("'chains' must be at least 1");
  if (c.hidden == 0) throw ConfigError("'hidden' must be at least 1");
  if (c.n_draws == 0) throw ConfigError("'n_draws' must be at least 1");
  if (!(c.lr > 0.0)) throw ConfigError("'lr' must be positive");
  if (!(c.step_scale >= 0.0)) throw ConfigError("'step_scale' must be non-negative");
  if (!(c.level >= 0.0 && c.level <= 1.0)) throw ConfigError("'level' must lie in [0, 1]");
  if (!(c.prior_scale > 0.0)) throw ConfigError("'prior_scale' must be positive");
  if (c.freeze_scale && !(*c.freeze_scale > 0.0)) throw ConfigError("'freeze_scale' must be positive");
  if (!c.data.empty() && !c.synthetic.empty()) throw ConfigError("give either 'data' or 'synthetic', not both");
  if (!c.posterior.empty()) {
    try {
      ppl::PosteriorSpec::parse(c.posterior);
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }
  if (!c.synthetic.empty()) parse_synthetic(c.synthetic);
  return c;
}

std::map<std::string, double> parse_synthetic(const std::string& spec) {
  std::map<std::string, double> out;
  if (trim(spec) == "default") return out;
  std::size_t start = 0;
  while (start <= spec.size()) {
    const auto comma = spec.find(',', start);
    const std::string item = trim(spec.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (!item.empty()) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ConfigError("synthetic item '" + item + "' is not key=value");
      const std::string key = trim(item.substr(0, eq));
      out[key] = to_double("synthetic." + key, trim(item.substr(eq + 1)));
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace pplw
