#include "ppl/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "ppl/autograd.hpp"
#include "ppl/error.hpp"

namespace ppl {

namespace {

void visit_modules(PModule& m, const std::function<void(PModule&)>& fn) {
  fn(m);
  for (auto& [name, child] : m.submodules()) visit_modules(*child, fn);
}

void visit_modules(const PModule& m, const std::function<void(const PModule&)>& fn) {
  fn(m);
  for (const auto& [name, child] : m.submodules()) visit_modules(static_cast<const PModule&>(*child), fn);
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + (s.empty() ? std::string("<root>") : s);
  return out;
}

void require_point_mass(const PModule& m, const char* who) {
  const auto bad = non_point_mass_scopes(m);
  if (!bad.empty()) {
    throw InferenceError(std::string(who) + " needs PointMass posteriors; offending modules: " + join(bad) +
                         " (apply set_posteriors(PointMass) first)");
  }
}

struct Coord {
  std::string name;
  Tensor value;
  bool positive = false;
};

std::vector<Coord> point_mass_coords(PModule& m) {
  std::vector<Coord> out;
  visit_modules(m, [&](PModule& mod) {
    Posterior& post = mod.posterior();
    for (std::size_t i = 0; i < post.guide_count(); ++i) {
      const Guide& g = post.guide(i);
      if (g.form != GuideForm::PointMass) continue;
      std::string name = mod.scoped(g.leaf);
      if (g.ordinal > 0) name += "#" + std::to_string(g.ordinal);
      out.push_back({name, g.param("value"), g.prior.positive_support()});
    }
  });
  return out;
}

std::vector<Coord> collect_coords(PModule& m) {
  visit_modules(m, [&](PModule& mod) {
    for (const auto& leaf : mod.rv_names()) {
      const RandomVariable& rv = mod.rv(leaf);
      if (rv.observed) continue;
      if (rv.prior.discrete()) {
        throw InferenceError("fit_mcmc supports continuous latents only; '" + rv.scope + "' is " + rv.prior.name());
      }
    }
  });
  return point_mass_coords(m);
}

struct ChainOutput {
  std::vector<std::vector<double>> samples;
  std::vector<double> log_joint;
  double acceptance = 0.0;
};

ChainOutput run_chain(PModule& m, const ModelPass& pass, const McmcOptions& opt, std::vector<Coord>& coords) {
  ChainOutput out;
  Rng& rng = m.rng();

  std::size_t dim = 0;
  for (const auto& c : coords) dim += c.value.numel();
  std::vector<double> u(dim);  // unconstrained state
  auto load = [&] {
    std::size_t k = 0;
    for (const auto& c : coords)
      for (double v : c.value.data()) u[k++] = c.positive ? std::log(v) : v;
  };
  auto store = [&](const std::vector<double>& state) {
    std::size_t k = 0;
    for (auto& c : coords)
      for (double& v : c.value.mutable_data()) {
        v = c.positive ? std::exp(state[k]) : state[k];
        ++k;
      }
  };
  auto target = [&](const std::vector<double>& state) {
    reset_tape();
    double lj = log_joint(m, pass);
    std::size_t k = 0;
    for (const auto& c : coords) {
      for (std::size_t i = 0; i < c.value.numel(); ++i, ++k)
        if (c.positive) lj += state[k];
    }
    return lj;
  };
  auto constrained = [&] {
    std::vector<double> x;
    x.reserve(dim);
    for (const auto& c : coords)
      for (double v : c.value.data()) x.push_back(v);
    return x;
  };

  load();
  double current = target(u);
  std::size_t accepted = 0;
  std::vector<double> proposal(dim);
  for (std::size_t step = 0; step < opt.n_steps; ++step) {
    for (std::size_t k = 0; k < dim; ++k) proposal[k] = u[k] + opt.step_scale * rng.normal();
    store(proposal);
    const double candidate = target(proposal);
    const bool accept = std::isfinite(candidate) && std::log(rng.uniform()) < candidate - current;
    if (accept) {
      u = proposal;
      current = candidate;
    } else {
      store(u);
    }
    if (step >= opt.burn_in) {
      if (accept) ++accepted;
      out.samples.push_back(constrained());
      out.log_joint.push_back(current);
    }
  }
  // Leave the model's values consistent with the final state.
  store(u);
  const std::size_t kept = opt.n_steps > opt.burn_in ? opt.n_steps - opt.burn_in : 0;
  out.acceptance = kept ? static_cast<double>(accepted) / static_cast<double>(kept) : 0.0;
  return out;
}

}  // namespace

ElboEstimate elbo(PModule& m, const ModelPass& pass, std::size_t n_samples) {
  if (n_samples == 0) throw InferenceError("elbo needs at least one sample");
  ElboEstimate est;
  est.n_samples = n_samples;
  Tensor total(0.0);
  for (std::size_t s = 0; s < n_samples; ++s) {
    m.begin_pass();
    m.sample();
    pass(m);
    std::vector<PqTerm> terms = m.pq_terms();
    for (const auto& term : terms) {
      const Tensor diff = term.log_p - term.log_q;
      if (!est.nonfinite_scope && !std::isfinite(diff.item())) est.nonfinite_scope = term.scope;
      total = total + diff;
    }
    if (s + 1 == n_samples) est.terms = std::move(terms);
  }
  est.value = n_samples == 1 ? total : total / static_cast<double>(n_samples);
  return est;
}

double log_joint(PModule& m, const ModelPass& pass) {
  NoGradGuard no_grad;
  m.begin_pass();
  m.sample();
  pass(m);
  double total = 0.0;
  for (const auto& term : m.pq_terms()) total += term.log_p.item();
  return total;
}

void Sgd::step(const std::vector<Parameter>& params) {
  for (const auto& p : params) {
    const auto g = p.value.grad();
    if (!g) throw InferenceError("parameter '" + p.name + "' has no gradient");
    Tensor v = p.value;
    auto data = v.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) data[i] -= lr_ * (*g)[i];
  }
  ++steps_;
}

void Adam::step(const std::vector<Parameter>& params) {
  for (const auto& p : params) {
    const auto g = p.value.grad();
    if (!g) throw InferenceError("parameter '" + p.name + "' has no gradient");
    Moments& mo = state_[p.name];
    if (mo.m.size() != p.value.numel()) {
      mo.m.assign(p.value.numel(), 0.0);
      mo.v.assign(p.value.numel(), 0.0);
      mo.t = 0;
    }
    ++mo.t;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(mo.t));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(mo.t));
    Tensor v = p.value;
    auto data = v.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double gi = (*g)[i];
      mo.m[i] = beta1_ * mo.m[i] + (1.0 - beta1_) * gi;
      mo.v[i] = beta2_ * mo.v[i] + (1.0 - beta2_) * gi * gi;
      data[i] -= lr_ * (mo.m[i] / c1) / (std::sqrt(mo.v[i] / c2) + eps_);
    }
  }
  ++steps_;
}

FitReport fit_vi(PModule& m, const ModelPass& pass, Optimizer& opt, const FitOptions& options) {
  FitReport report;
  report.n_samples = options.n_samples;
  report.seed = options.seed;
  if (options.seed) m.reseed(*options.seed);
  for (std::size_t step = 0; step < options.steps; ++step) {
    reset_tape();
    const ElboEstimate est = elbo(m, pass, options.n_samples);
    const double value = est.value.item();
    if (!std::isfinite(value)) {
      throw NumericalError("nonfinite ELBO at step " + std::to_string(step) +
                               (est.nonfinite_scope ? " (first nonfinite term: '" + *est.nonfinite_scope + "')" : ""),
                           step);
    }
    std::vector<Parameter> params = m.parameters();
    for (auto& p : params) p.value.clear_grad();
    backward(-est.value);
    std::vector<Parameter> touched;
    for (auto& p : params)
      if (p.value.grad()) touched.push_back(p);
    opt.step(touched);
    report.elbo_trace.push_back(value);
    report.steps = step + 1;
    if (options.on_step) options.on_step(step, value);
  }
  reset_tape();
  for (const auto& p : m.parameters()) report.final_params.push_back({p.name, p.value.detach()});
  return report;
}

std::vector<std::string> non_point_mass_scopes(const PModule& m) {
  std::vector<std::string> bad;
  visit_modules(m, [&](const PModule& mod) {
    if (mod.posterior().kind() == PosteriorKind::PointMass) return;
    for (const auto& leaf : mod.rv_names()) {
      if (!mod.rv(leaf).observed) {
        bad.push_back(mod.scope());
        return;
      }
    }
  });
  return bad;
}

FitReport fit_map(PModule& m, const ModelPass& pass, Optimizer& opt, FitOptions options) {
  require_point_mass(m, "fit_map");
  options.n_samples = 1;
  const auto seed = options.seed;
  if (seed) m.reseed(*seed);
  options.seed.reset();
  // Random variables created by the first pass are only known afterwards,
  // so the guide check is repeated before any parameter moves.
  if (options.steps > 0) {
    reset_tape();
    NoGradGuard no_grad;
    m.begin_pass();
    pass(m);
  }
  require_point_mass(m, "fit_map");
  FitReport report = fit_vi(m, pass, opt, options);
  report.seed = seed;
  return report;
}

std::vector<double> McmcResult::column(const std::string& name, std::size_t element) const {
  std::size_t offset = 0;
  std::size_t i = 0;
  for (; i < names.size(); ++i) {
    if (names[i] == name) break;
    offset += shape_numel(shapes[i]);
  }
  if (i == names.size()) throw InferenceError("no MCMC coordinate named '" + name + "'");
  if (element >= shape_numel(shapes[i])) throw InferenceError("element out of range for '" + name + "'");
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s[offset + element]);
  return out;
}

double McmcResult::acceptance_rate() const {
  if (acceptance.empty()) return 0.0;
  return std::accumulate(acceptance.begin(), acceptance.end(), 0.0) / static_cast<double>(acceptance.size());
}

McmcResult fit_mcmc(PModule& m, const ModelPass& pass, const McmcOptions& options) {
  if (options.chains == 0) throw InferenceError("fit_mcmc needs at least one chain");
  if (!(options.step_scale >= 0.0)) throw InferenceError("fit_mcmc step_scale must be non-negative");
  const std::uint64_t seed = options.seed.value_or(m.rng().seed());
  m.reseed(seed);
  {
    reset_tape();
    NoGradGuard no_grad;
    m.begin_pass();
    m.sample();
    pass(m);
  }
  require_point_mass(m, "fit_mcmc");
  collect_coords(m);  // validates latents before any chain starts

  McmcResult result;
  std::vector<ChainOutput> outputs(options.chains);
  if (options.chains == 1) {
    auto coords = collect_coords(m);
    outputs[0] = run_chain(m, pass, options, coords);
  } else {
    std::vector<std::shared_ptr<PModule>> replicas;
    for (std::size_t c = 0; c < options.chains; ++c) {
      replicas.push_back(m.clone());
      replicas.back()->reseed(mix64(seed + 0x9E3779B97F4A7C15ULL * (c + 1)));
    }
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(options.chains);
    for (std::size_t c = 0; c < options.chains; ++c) {
      threads.emplace_back([&, c] {
        try {
          auto coords = collect_coords(*replicas[c]);
          outputs[c] = run_chain(*replicas[c], pass, options, coords);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  for (const auto& c : collect_coords(m)) {
    result.names.push_back(c.name);
    result.shapes.push_back(c.value.shape());
  }
  for (std::size_t c = 0; c < outputs.size(); ++c) {
    auto& out = outputs[c];
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
      result.samples.push_back(std::move(out.samples[i]));
      result.log_joint.push_back(out.log_joint[i]);
      result.chain.push_back(c);
    }
    result.acceptance.push_back(out.acceptance);
    if (options.n_steps > options.burn_in && out.acceptance < 0.01) {
      result.warnings.push_back("chain " + std::to_string(c) + " acceptance rate " + std::to_string(out.acceptance) +
                                " is below 0.01; reduce step_scale");
    }
  }
  return result;
}

void load_mcmc_sample(PModule& m, const McmcResult& result, std::size_t index) {
  if (index >= result.samples.size()) throw InferenceError("MCMC sample index out of range");
  const auto& state = result.samples[index];
  std::size_t offset = 0;
  for (std::size_t i = 0; i < result.names.size(); ++i) {
    const std::size_t n = shape_numel(result.shapes[i]);
    for (auto& c : point_mass_coords(m)) {
      if (c.name != result.names[i]) continue;
      if (c.value.shape() != result.shapes[i]) {
        throw InferenceError("MCMC coordinate '" + c.name + "' changed shape");
      }
      auto dst = c.value.mutable_data();
      std::copy(state.begin() + static_cast<std::ptrdiff_t>(offset),
                state.begin() + static_cast<std::ptrdiff_t>(offset + n), dst.begin());
    }
    offset += n;
  }
}

double effective_sample_size(const std::vector<double>& trace) {
  const std::size_t n = trace.size();
  if (n < 4) return static_cast<double>(n);
  const double mu = std::accumulate(trace.begin(), trace.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double x : trace) var += (x - mu) * (x - mu);
  var /= static_cast<double>(n);
  if (var == 0.0) return static_cast<double>(n);
  auto rho = [&](std::size_t lag) {
    double acc = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) acc += (trace[i] - mu) * (trace[i + lag] - mu);
    return acc / (static_cast<double>(n) * var);
  };
  // Geyer: sum consecutive autocorrelation pairs while their sum stays positive.
  double tau = -1.0;
  for (std::size_t k = 0; k + 1 < n; k += 2) {
    const double pair = rho(k) + rho(k + 1);
    if (pair <= 0.0) break;
    tau += 2.0 * pair;
  }
  tau = std::max(tau, 1.0 / static_cast<double>(n));
  return static_cast<double>(n) / tau;
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw InferenceError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(p, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

}  // namespace ppl
