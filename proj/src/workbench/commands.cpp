#include "pplw/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "ppl/autograd.hpp"
#include "ppl/error.hpp"

namespace pplw {

namespace fs = std::filesystem;
using nlohmann::json;
using ppl::Tensor;

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

void for_each_module(ppl::PModule& m, const std::function<void(ppl::PModule&)>& fn) {
  fn(m);
  for (auto& [name, child] : m.submodules()) for_each_module(*child, fn);
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - mu) * (x - mu);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

std::string guide_name(const ppl::PModule& m, const ppl::Guide& g) {
  std::string name = m.scoped(g.leaf);
  if (g.ordinal > 0) name += "#" + std::to_string(g.ordinal);
  return name;
}

json guide_summary(ppl::PModule& root) {
  json out = json::object();
  for_each_module(root, [&](ppl::PModule& m) {
    const ppl::Posterior& post = m.posterior();
    for (std::size_t i = 0; i < post.guide_count(); ++i) {
      const ppl::Guide& g = post.guide(i);
      json entry;
      switch (g.form) {
        case ppl::GuideForm::Normal:
        case ppl::GuideForm::LogNormal: {
          entry["family"] = g.form == ppl::GuideForm::Normal ? "Normal" : "LogNormal";
          entry["loc"] = g.param("loc").to_vector();
          std::vector<double> scale;
          for (double s : g.param("log_scale").data()) scale.push_back(std::exp(s));
          entry["scale"] = scale;
          break;
        }
        case ppl::GuideForm::PointMass:
          entry["family"] = "PointMass";
          entry["value"] = g.param("value").to_vector();
          break;
        default:
          continue;
      }
      out[guide_name(m, g)] = entry;
    }
  });
  return out;
}

json mcmc_summary(const ppl::McmcResult& r) {
  json coords = json::object();
  for (std::size_t i = 0; i < r.names.size(); ++i) {
    const std::size_t n = ppl::shape_numel(r.shapes[i]);
    for (std::size_t e = 0; e < n; ++e) {
      const auto col = r.column(r.names[i], e);
      const std::string key = n == 1 ? r.names[i] : r.names[i] + "[" + std::to_string(e) + "]";
      coords[key] = {{"mean", mean_of(col)},
                     {"sd", sd_of(col)},
                     {"q05", ppl::quantile(col, 0.05)},
                     {"q95", ppl::quantile(col, 0.95)},
                     {"ess", ppl::effective_sample_size(col)}};
    }
  }
  return {{"samples", r.samples.size()},
          {"acceptance", r.acceptance},
          {"warnings", r.warnings},
          {"coordinates", coords}};
}

std::size_t freeze_scales(ppl::PModule& root, double value) {
  std::size_t count = 0;
  const double lv = std::log(value);
  for_each_module(root, [&](ppl::PModule& m) {
    ppl::Posterior& post = m.posterior();
    for (std::size_t i = 0; i < post.guide_count(); ++i) {
      ppl::Guide& g = post.guide(i);
      for (auto& [name, t] : g.params) {
        const bool pin = name == "log_scale" || (g.form == ppl::GuideForm::LogNormal && name == "loc") ||
                         (g.form == ppl::GuideForm::PointMass && g.prior.positive_support());
        if (!pin) continue;
        auto data = t.mutable_data();
        std::fill(data.begin(), data.end(), name == "value" ? value : lv);
        ++count;
      }
    }
  });
  return count;
}

std::vector<ppl::TensorRecord> pretrained_records(const Workbench& wb, const std::vector<std::size_t>& indices) {
  std::vector<ppl::TensorRecord> out;
  auto net = wb.net();
  for (std::size_t i : indices) {
    auto layer = net->at(i);
    for (const auto& [name, t] : layer->own_parameters()) out.push_back({layer->scoped(name), "pretrained", t.detach()});
  }
  return out;
}

void observe_target(Workbench& wb, const Tensor& y) { wb.root->observe({{"y", y}}); }

std::map<std::string, std::string> recorded_config(const RunConfig& cfg) {
  auto m = cfg.to_map();
  m.erase("out");
  m.erase("manifest");
  return m;
}

ppl::Manifest build_manifest(const RunConfig& cfg, const Workbench& wb, const std::vector<std::size_t>& lifted,
                             double prior_scale, const std::vector<ppl::TensorRecord>& pretrained,
                             const std::optional<ppl::McmcResult>& mcmc) {
  ppl::Manifest man = ppl::capture(*wb.root);
  man.model = cfg.model;
  man.seed = cfg.seed;
  man.config_hash = cfg.hash();
  man.meta["config"] = recorded_config(cfg);
  man.meta["lifted"] = lifted;
  man.meta["prior_scale"] = prior_scale;
  for (const auto& r : pretrained) man.tensors.push_back(r);
  if (mcmc && !mcmc->samples.empty()) {
    const std::size_t dim = mcmc->samples.front().size();
    std::vector<double> flat;
    flat.reserve(mcmc->samples.size() * dim);
    for (const auto& s : mcmc->samples) flat.insert(flat.end(), s.begin(), s.end());
    man.tensors.push_back({"mcmc.samples", "extra", Tensor::from_data(std::move(flat), {mcmc->samples.size(), dim})});
    man.meta["mcmc"] = {{"names", mcmc->names}, {"shapes", mcmc->shapes}};
  }
  return man;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace

std::string provenance_line(const RunConfig& cfg) {
  return "# pplw seed=" + std::to_string(cfg.seed) + " config_hash=" + ppl::hex64(cfg.hash());
}

Table load_table(const RunConfig& cfg, const Workbench& wb, bool need_target) {
  std::vector<std::string> cols = wb.features;
  if (need_target) cols.push_back(wb.target);
  Table t;
  if (!cfg.data.empty()) {
    t = read_csv(cfg.data, cols);
  } else if (!cfg.synthetic.empty()) {
    if (wb.generator.empty()) throw ConfigError("model '" + wb.name + "' has no synthetic generator");
    t = synthetic_table(wb.generator, parse_synthetic(cfg.synthetic), cfg.seed);
  } else {
    throw ConfigError("no data: give data=PATH or synthetic=SPEC (e.g. synthetic=n=200)");
  }
  if (t.rows() == 0) throw DataError("data has a header but no rows");
  return t;
}

FitOutcome fit_model(const RunConfig& cfg) {
  if (cfg.model == "branching") throw ConfigError("model 'branching' is run by the demo-branching command");
  FitOutcome out;
  out.config = cfg;
  auto& log = out.log;
  log.push_back(provenance_line(cfg).substr(2));
  log.push_back("fit model=" + cfg.model + " method=" + cfg.method);

  ppl::manual_seed(cfg.seed);
  Workbench wb = build_model(cfg);
  const Table table = load_table(cfg, wb, true);
  const Tensor x = wb.inputs(table);
  const Tensor y = wb.targets(table);
  log.push_back("data rows=" + std::to_string(table.rows()) +
                (cfg.data.empty() ? " synthetic=" + cfg.synthetic : " file=" + cfg.data));
  wb.set_inputs(x);
  observe_target(wb, y);

  std::vector<std::size_t> lifted;
  std::vector<ppl::TensorRecord> pretrained;
  if (cfg.model == "lifted-mlp") {
    ppl::Adam pre(cfg.lr);
    ppl::FitOptions po;
    po.steps = cfg.pretrain_steps;
    po.seed = cfg.seed;
    const auto rep = ppl::fit_vi(*wb.root, wb.pass, pre, po);
    log.push_back("pretrained deterministic network steps=" + std::to_string(cfg.pretrain_steps) +
                  " log_likelihood=" + fmt(rep.elbo_trace.empty() ? 0.0 : rep.elbo_trace.back()));
    pretrained = pretrained_records(wb, parse_layer_list(cfg.lift_layers, wb.net()->size()));
    lifted = lift_layers(wb, cfg.lift_layers, cfg.prior_scale);
    std::string list;
    for (auto i : lifted) list += (list.empty() ? "" : ",") + std::to_string(i);
    log.push_back("lifted layers " + list + " prior_scale=" + fmt(cfg.prior_scale));
  }

  if (!cfg.posterior.empty()) {
    wb.root->apply(ppl::set_posteriors(ppl::PosteriorSpec::parse(cfg.posterior)));
    log.push_back("posterior " + cfg.posterior + " applied to every module");
  }
  if ((cfg.method == "map" || cfg.method == "mcmc") && cfg.posterior != "PointMass") {
    wb.root->apply(ppl::set_posteriors(ppl::PosteriorSpec::point_mass()));
    log.push_back("method " + cfg.method + " needs point-mass guides: applied set_posteriors(PointMass)");
  }

  json report = {{"model", cfg.model},
                 {"method", cfg.method},
                 {"seed", cfg.seed},
                 {"config_hash", ppl::hex64(cfg.hash())},
                 {"config", recorded_config(cfg)},
                 {"rows", table.rows()}};
  if (cfg.method == "mcmc") {
    ppl::McmcOptions mo;
    mo.n_steps = cfg.mcmc_steps;
    mo.burn_in = cfg.burn_in;
    mo.step_scale = cfg.step_scale;
    mo.seed = cfg.seed;
    mo.chains = cfg.chains;
    out.mcmc = ppl::fit_mcmc(*wb.root, wb.pass, mo);
    report["mcmc"] = mcmc_summary(*out.mcmc);
    log.push_back("mcmc chains=" + std::to_string(cfg.chains) + " steps=" + std::to_string(cfg.mcmc_steps) +
                  " burn_in=" + std::to_string(cfg.burn_in) + " retained=" + std::to_string(out.mcmc->samples.size()) +
                  " acceptance=" + fmt(out.mcmc->acceptance_rate()));
    for (const auto& w : out.mcmc->warnings) log.push_back("warning: " + w);
  } else {
    ppl::Adam opt(cfg.lr);
    ppl::FitOptions fo;
    fo.steps = cfg.steps;
    fo.n_samples = cfg.n_samples;
    fo.seed = cfg.seed;
    const auto rep = cfg.method == "map" ? ppl::fit_map(*wb.root, wb.pass, opt, fo) : ppl::fit_vi(*wb.root, wb.pass, opt, fo);
    report["steps"] = rep.steps;
    report["n_samples"] = rep.n_samples;
    report["elbo_trace"] = rep.elbo_trace;
    report["final_elbo"] = rep.elbo_trace.empty() ? 0.0 : rep.elbo_trace.back();
    log.push_back(cfg.method + " steps=" + std::to_string(rep.steps) + " n_samples=" + std::to_string(rep.n_samples) +
                  " final_elbo=" + fmt(rep.elbo_trace.empty() ? 0.0 : rep.elbo_trace.back()));
  }
  if (cfg.freeze_scale) {
    const auto n = freeze_scales(*wb.root, *cfg.freeze_scale);
    log.push_back("freeze_scale=" + fmt(*cfg.freeze_scale) + " pinned " + std::to_string(n) + " guide tensors");
  }
  report["posterior"] = guide_summary(*wb.root);
  report["lifted"] = lifted;

  out.manifest = build_manifest(cfg, wb, lifted, cfg.prior_scale, pretrained, out.mcmc);
  report["artifacts"] = {"manifest.json", "tensors.bin", "fit_report.json", "run.log"};
  out.report = report;
  out.model = std::move(wb);
  return out;
}

void write_fit(const FitOutcome& outcome) {
  const fs::path dir = outcome.config.out;
  ppl::write_manifest(outcome.manifest, dir);
  write_text(dir / "fit_report.json", outcome.report.dump(2) + "\n");
  std::string text;
  for (const auto& line : outcome.log) text += line + "\n";
  text += "wrote manifest.json tensors.bin fit_report.json run.log\n";
  write_text(dir / "run.log", text);
}

LoadedModel load_model(const fs::path& dir) {
  LoadedModel out;
  out.manifest = ppl::read_manifest(dir);
  const auto& man = out.manifest;
  std::map<std::string, std::string> values;
  try {
    values = man.meta.at("config").get<std::map<std::string, std::string>>();
  } catch (const json::exception&) {
    throw ppl::SerializationError("manifest has no configuration record");
  }
  try {
    out.config = parse_config(values);
  } catch (const ConfigError& e) {
    throw ppl::SerializationError(std::string("manifest configuration is invalid: ") + e.what());
  }
  if (out.config.hash() != man.config_hash || out.config.seed != man.seed) {
    throw ppl::SerializationError("manifest configuration does not match its recorded hash or seed");
  }

  ppl::manual_seed(man.seed);
  out.model = build_model(out.config);
  Workbench& wb = out.model;
  const auto lifted = man.meta.value("lifted", std::vector<std::size_t>{});
  if (!lifted.empty()) {
    auto net = wb.net();
    if (!net) throw ppl::SerializationError("manifest lists lifted layers for a model without a network");
    std::string list;
    for (std::size_t i : lifted) {
      if (i >= net->size()) throw ppl::SerializationError("lifted layer index out of range");
      auto layer = net->at(i);
      for (const auto& [name, t] : layer->own_parameters()) {
        const ppl::TensorRecord* rec = man.find(layer->scoped(name), "pretrained");
        if (!rec || rec->value.shape() != t.shape()) {
          throw ppl::SerializationError("missing pretrained record for '" + layer->scoped(name) + "'");
        }
        auto live = Tensor(t).mutable_data();
        std::copy(rec->value.data().begin(), rec->value.data().end(), live.begin());
      }
      list += (list.empty() ? "" : ",") + std::to_string(i);
    }
    lift_layers(wb, list, man.meta.value("prior_scale", 0.1));
  }
  ppl::apply_posteriors(*wb.root, man);

  // One pass on placeholder data creates every random variable and guide.
  const std::size_t nf = wb.features.size();
  wb.set_inputs(nf == 1 ? Tensor::zeros({1}) : Tensor::zeros({1, nf}));
  observe_target(wb, Tensor::zeros({1}));
  {
    ppl::NoGradGuard ng;
    ppl::reset_tape();
    wb.root->begin_pass();
    wb.pass(*wb.root);
  }
  ppl::restore(*wb.root, man);

  if (const ppl::TensorRecord* rec = man.find("mcmc.samples", "extra")) {
    ppl::McmcResult r;
    try {
      r.names = man.meta.at("mcmc").at("names").get<std::vector<std::string>>();
      r.shapes = man.meta.at("mcmc").at("shapes").get<std::vector<ppl::Shape>>();
    } catch (const json::exception&) {
      throw ppl::SerializationError("manifest holds MCMC samples without coordinate names");
    }
    const auto& shape = rec->value.shape();
    if (shape.size() != 2) throw ppl::SerializationError("mcmc.samples must be a matrix");
    const auto data = rec->value.data();
    for (std::size_t s = 0; s < shape[0]; ++s) {
      r.samples.emplace_back(data.begin() + static_cast<std::ptrdiff_t>(s * shape[1]),
                             data.begin() + static_cast<std::ptrdiff_t>((s + 1) * shape[1]));
      r.chain.push_back(0);
    }
    out.mcmc = std::move(r);
  }
  return out;
}

Prediction predict(Workbench& wb, const std::optional<ppl::McmcResult>& mcmc, const Tensor& x, std::size_t n_draws,
                   double level, std::uint64_t seed) {
  if (n_draws == 0) throw ConfigError("n_draws must be at least 1");
  ppl::NoGradGuard ng;
  Prediction p;
  p.rows = x.shape().empty() ? 1 : x.shape()[0];
  p.n_draws = n_draws;
  p.level = level;
  p.classification = wb.classification;

  wb.set_inputs(x);
  wb.root->observe(std::nullopt);
  ppl::Rng noise(ppl::mix64(seed ^ 0x0B5E55EDULL));
  std::vector<std::vector<double>> locs(p.rows), scales(p.rows), probs(p.rows);
  p.draws.assign(p.rows, {});
  for (std::size_t d = 0; d < n_draws; ++d) {
    ppl::reset_tape();
    wb.root->reseed(ppl::mix64(seed + kGolden * (d + 1)));
    wb.root->begin_pass();
    if (mcmc && !mcmc->samples.empty()) {
      ppl::load_mcmc_sample(*wb.root, *mcmc, d * mcmc->samples.size() / n_draws);
    }
    wb.root->sample();
    wb.pass(*wb.root);
    const ppl::Distribution& prior = wb.root->rv("y").prior;
    if (p.classification) {
      const Tensor pr = ppl::exp(ppl::log_softmax(prior.get_if<ppl::Categorical>()->logits));
      for (std::size_t i = 0; i < p.rows; ++i) probs[i].push_back(pr.at({i, 1}));
    } else {
      const Tensor loc = prior.mean();
      const Tensor sd = prior.stddev();
      for (std::size_t i = 0; i < p.rows; ++i) {
        locs[i].push_back(loc[i]);
        scales[i].push_back(sd[i]);
        p.draws[i].push_back(loc[i] + sd[i] * noise.normal());
      }
    }
  }

  const double inf = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.rows; ++i) {
    if (p.classification) {
      p.p1.push_back(mean_of(probs[i]));
      p.p1_sd.push_back(sd_of(probs[i]));
      p.predicted.push_back(p.p1.back() > 0.5 ? 1 : 0);
      continue;
    }
    const auto& dr = p.draws[i];
    p.mean.push_back(mean_of(dr));
    p.sd.push_back(sd_of(dr));
    p.epistemic_sd.push_back(sd_of(locs[i]));
    p.aleatoric_sd.push_back(mean_of(scales[i]));
    if (level >= 1.0) {
      p.lower.push_back(-inf);
      p.upper.push_back(inf);
    } else {
      p.lower.push_back(ppl::quantile(dr, (1.0 - level) / 2.0));
      p.upper.push_back(ppl::quantile(dr, (1.0 + level) / 2.0));
    }
  }
  if (p.classification) p.draws.clear();
  return p;
}

json diagnose(const Prediction& p, const std::vector<double>& truth) {
  if (truth.size() != p.rows) throw DataError("truth has " + std::to_string(truth.size()) + " rows, prediction " +
                                              std::to_string(p.rows));
  const double n = static_cast<double>(p.rows);
  json out = {{"rows", p.rows}, {"n_draws", p.n_draws}, {"level", p.level}};
  json table = json::array();
  if (p.classification) {
    double correct = 0, brier = 0;
    std::vector<double> conf(10, 0.0), freq(10, 0.0), count(10, 0.0);
    for (std::size_t i = 0; i < p.rows; ++i) {
      correct += (p.predicted[i] == static_cast<int>(truth[i])) ? 1 : 0;
      brier += (p.p1[i] - truth[i]) * (p.p1[i] - truth[i]);
      const auto bin = std::min<std::size_t>(9, static_cast<std::size_t>(p.p1[i] * 10));
      conf[bin] += p.p1[i];
      freq[bin] += truth[i];
      count[bin] += 1;
    }
    out["accuracy"] = correct / n;
    out["brier"] = brier / n;
    for (std::size_t b = 0; b < 10; ++b) {
      json row = {{"bin", {b / 10.0, (b + 1) / 10.0}}, {"count", count[b]}};
      if (count[b] > 0) {
        row["mean_p1"] = conf[b] / count[b];
        row["observed_frequency"] = freq[b] / count[b];
      }
      table.push_back(row);
    }
    out["reliability"] = table;
    return out;
  }

  auto coverage_at = [&](double level) {
    if (level >= 1.0) return 1.0;
    double hit = 0;
    for (std::size_t i = 0; i < p.rows; ++i) {
      const double lo = ppl::quantile(p.draws[i], (1.0 - level) / 2.0);
      const double hi = ppl::quantile(p.draws[i], (1.0 + level) / 2.0);
      hit += (truth[i] >= lo && truth[i] <= hi) ? 1 : 0;
    }
    return hit / n;
  };
  double sq = 0, width = 0, hit = 0;
  for (std::size_t i = 0; i < p.rows; ++i) {
    sq += (p.mean[i] - truth[i]) * (p.mean[i] - truth[i]);
    width += p.upper[i] - p.lower[i];
    hit += (truth[i] >= p.lower[i] && truth[i] <= p.upper[i]) ? 1 : 0;
  }
  out["coverage"] = hit / n;
  out["rmse"] = std::sqrt(sq / n);
  if (std::isfinite(width)) out["mean_interval_width"] = width / n;
  for (int k = 1; k <= 9; ++k) {
    const double nominal = k / 10.0;
    table.push_back({{"nominal", nominal}, {"empirical", coverage_at(nominal)}});
  }
  out["reliability"] = table;
  return out;
}

json demo_branching(const RunConfig& cfg) {
  ppl::manual_seed(cfg.seed);
  auto root = std::make_shared<ppl::PModule>();
  root->reseed(cfg.seed);
  const Tensor data(cfg.demo_input);

  struct Branch {
    std::string prior;
    std::vector<double> weight, output;
  };
  std::vector<Branch> branches;
  std::size_t violations = 0;
  for (std::size_t pass = 0; pass < cfg.passes; ++pass) {
    ppl::reset_tape();
    root->begin_pass();
    root->sample();
    const Tensor out = branching_forward(*root, data);
    const auto ledger = root->ledger();
    if (ledger.size() != 1 || ledger[0] != "weight") ++violations;
    const auto& rv = root->rv("weight");
    const auto* n = rv.prior.get_if<ppl::Normal>();
    const std::string label = "Normal(" + fmt(n->loc.item()) + ", " + fmt(n->scale.item()) + ")";
    auto it = std::find_if(branches.begin(), branches.end(), [&](const Branch& b) { return b.prior == label; });
    if (it == branches.end()) {
      branches.push_back({label, {}, {}});
      it = branches.end() - 1;
    }
    it->weight.push_back(rv.value.item());
    it->output.push_back(out.item());
  }

  json rows = json::array();
  for (const auto& b : branches) {
    rows.push_back({{"prior", b.prior},
                    {"count", b.weight.size()},
                    {"frequency", static_cast<double>(b.weight.size()) / static_cast<double>(cfg.passes)},
                    {"weight_mean", mean_of(b.weight)},
                    {"weight_sd", sd_of(b.weight)},
                    {"output_mean", mean_of(b.output)},
                    {"output_sd", sd_of(b.output)}});
  }
  return {{"seed", cfg.seed},
          {"config_hash", ppl::hex64(cfg.hash())},
          {"passes", cfg.passes},
          {"input", cfg.demo_input},
          {"branches", rows},
          {"ledger_ok", violations == 0},
          {"ledger_violations", violations},
          {"guide_count", root->posterior().guide_count()},
          {"parameter_count", root->parameters().size()}};
}

ppl::Manifest lift_model(LoadedModel& loaded, const std::string& which, double prior_scale,
                         std::vector<std::string>& log) {
  Workbench& wb = loaded.model;
  auto net = wb.net();
  if (!net) throw ConfigError("model '" + wb.name + "' has no network to lift");
  const auto requested = parse_layer_list(which, net->size());
  std::vector<std::size_t> fresh;
  for (std::size_t i : requested) {
    const auto kind = net->at(i)->kind();
    const bool liftable = (kind == "linear" || kind == "conv2d") && net->at(i)->rv_names().empty();
    if (liftable) fresh.push_back(i);
    else log.push_back("layer " + std::to_string(i) + " (" + kind + ") has nothing to lift");
  }
  auto pretrained = pretrained_records(wb, fresh);
  std::string list;
  for (auto i : fresh) list += (list.empty() ? "" : ",") + std::to_string(i);
  if (!list.empty()) lift_layers(wb, list, prior_scale);
  log.push_back("lifted layers [" + list + "] prior_scale=" + fmt(prior_scale));

  auto lifted = loaded.manifest.meta.value("lifted", std::vector<std::size_t>{});
  if (!lifted.empty() && !fresh.empty() && loaded.manifest.meta.value("prior_scale", prior_scale) != prior_scale) {
    throw ConfigError("model already has layers lifted with a different prior_scale");
  }
  for (const auto* r : loaded.manifest.with_role("pretrained")) pretrained.push_back(*r);
  lifted.insert(lifted.end(), fresh.begin(), fresh.end());
  std::sort(lifted.begin(), lifted.end());
  return build_manifest(loaded.config, wb, lifted, prior_scale, pretrained, loaded.mcmc);
}

void write_predictions(const Prediction& p, const RunConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  std::string csv = provenance_line(cfg) + "\n";
  json doc = {{"seed", cfg.seed},
              {"config_hash", ppl::hex64(cfg.hash())},
              {"rows", p.rows},
              {"n_draws", p.n_draws},
              {"level", p.level}};
  if (p.classification) {
    csv += "row,p1,p1_sd,predicted\n";
    for (std::size_t i = 0; i < p.rows; ++i) {
      csv += std::to_string(i) + "," + fmt(p.p1[i]) + "," + fmt(p.p1_sd[i]) + "," + std::to_string(p.predicted[i]) + "\n";
    }
    doc["p1"] = p.p1;
    doc["p1_sd"] = p.p1_sd;
    doc["predicted"] = p.predicted;
  } else {
    csv += "row,mean,sd,lower,upper,epistemic_sd,aleatoric_sd\n";
    for (std::size_t i = 0; i < p.rows; ++i) {
      csv += std::to_string(i) + "," + fmt(p.mean[i]) + "," + fmt(p.sd[i]) + "," + fmt(p.lower[i]) + "," +
             fmt(p.upper[i]) + "," + fmt(p.epistemic_sd[i]) + "," + fmt(p.aleatoric_sd[i]) + "\n";
    }
    doc["mean"] = p.mean;
    doc["sd"] = p.sd;
    doc["epistemic_sd"] = p.epistemic_sd;
    doc["aleatoric_sd"] = p.aleatoric_sd;
    if (p.level < 1.0) {
      doc["lower"] = p.lower;
      doc["upper"] = p.upper;
    } else {
      doc["interval"] = "unbounded";
    }
  }
  write_text(dir / "predictions.csv", csv);
  write_text(dir / "predictions.json", doc.dump(2) + "\n");
}

}  // namespace pplw
