#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "ppl/autograd.hpp"
#include "ppl/error.hpp"
#include "ppl/inference.hpp"
#include "ppl/module.hpp"

using namespace ppl;

namespace {

const Tensor kY = Tensor::vector({1.0, 2.0, 3.0});

// mu ~ N(0, 1), y_i ~ N(mu, 1); the posterior given kY is N(1.5, 0.5).
void conjugate(PModule& m) {
  m["mu"] = Normal(0.0, 1.0);
  m.set("y", Normal(expand(m.get("mu"), {3}), 1.0));
}

std::shared_ptr<PModule> conjugate_model(const PosteriorSpec& spec) {
  auto m = std::make_shared<PModule>(spec.make());
  m->observe({{"y", kY}});
  reset_tape();
  m->begin_pass();
  conjugate(*m);
  return m;
}

// log N(kY; 0, I + 11^T)
double conjugate_evidence() {
  const double n = 3.0, sum = 6.0, sq = 14.0;
  return -0.5 * n * std::log(2.0 * std::numbers::pi) - 0.5 * std::log(1.0 + n) -
         0.5 * (sq - sum * sum / (1.0 + n));
}

double param(const PModule& m, const std::string& suffix) {
  for (const auto& p : m.parameters())
    if (p.name.size() >= suffix.size() && p.name.compare(p.name.size() - suffix.size(), suffix.size(), suffix) == 0)
      return p.value.item();
  FAIL("no parameter ending in " << suffix);
  return 0.0;
}

double sample_sd(const std::vector<double>& xs) {
  double mu = 0.0;
  for (double x : xs) mu += x;
  mu /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double sample_mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

}  // namespace

TEST_CASE("elbo at the prior mode with a PointMass guide") {
  manual_seed(1);
  PModule m(PosteriorSpec::point_mass().make());
  m.observe({{"y", Tensor(0.0)}});
  reset_tape();
  m.begin_pass();
  m.set("z", Normal(0.0, 1.0), Tensor(0.0));
  const auto pass = [](PModule& mod) {
    mod["z"] = Normal(0.0, 1.0);
    mod.set("y", Normal(mod.get("z"), 1.0));
  };
  CHECK(elbo(m, pass).value.item() == doctest::Approx(-1.8378771).epsilon(1e-7));
  CHECK(log_joint(m, pass) == doctest::Approx(-1.8378771).epsilon(1e-7));
}

TEST_CASE("without latents the elbo is the log-likelihood") {
  PModule m;
  m.observe({{"y", Tensor::vector({0.5, -1.0})}});
  const auto pass = [](PModule& mod) { mod.set("y", Normal(Tensor::vector({0.0, 0.0}), 2.0)); };
  const double expected = 2 * (-std::log(2.0) - 0.5 * std::log(2 * std::numbers::pi)) - (0.25 + 1.0) / 8.0;
  CHECK(elbo(m, pass, 3).value.item() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("VI on the conjugate model recovers the exact posterior") {
  manual_seed(2);
  auto m = conjugate_model(PosteriorSpec::normal());
  Adam opt(1e-2);
  FitOptions o;
  o.steps = 5000;
  o.n_samples = 10;
  o.seed = 2;
  const FitReport r = fit_vi(*m, conjugate, opt, o);
  CHECK(r.elbo_trace.size() == 5000);
  CHECK(std::abs(param(*m, ".loc") - 1.5) < 0.05);
  CHECK(std::abs(std::exp(param(*m, ".log_scale")) - 0.5) < 0.05);

  // 100-step moving averages rise over the first 2000 steps; drops under 0.1 count as noise
  std::size_t windows = 0, large_dips = 0;
  double prev = sample_mean({r.elbo_trace.begin(), r.elbo_trace.begin() + 100});
  for (std::size_t start = 1; start + 100 <= 2000; ++start) {
    const double avg = sample_mean({r.elbo_trace.begin() + start, r.elbo_trace.begin() + start + 100});
    ++windows;
    if (prev - avg >= 0.1) ++large_dips;
    prev = avg;
  }
  CHECK(static_cast<double>(large_dips) <= 0.05 * static_cast<double>(windows));

  // the fitted elbo bounds the evidence from below
  std::vector<double> draws;
  for (int i = 0; i < 1000; ++i) draws.push_back(elbo(*m, conjugate).value.item());
  const double se = sample_sd(draws) / std::sqrt(1000.0);
  CHECK(sample_mean(draws) <= conjugate_evidence() + 3 * se);
  CHECK(sample_mean(draws) > conjugate_evidence() - 0.05);
}

TEST_CASE("identical seeds give identical fits") {
  std::vector<double> traces[2];
  for (auto& t : traces) {
    manual_seed(3);
    auto m = conjugate_model(PosteriorSpec::normal());
    Adam opt(1e-2);
    FitOptions o;
    o.steps = 200;
    o.seed = 3;
    t = fit_vi(*m, conjugate, opt, o).elbo_trace;
  }
  CHECK(traces[0] == traces[1]);
}

TEST_CASE("a zero-step fit changes nothing") {
  manual_seed(4);
  auto m = conjugate_model(PosteriorSpec::normal());
  const double loc = param(*m, ".loc");
  Adam opt(1e-2);
  FitOptions o;
  o.steps = 0;
  const FitReport r = fit_vi(*m, conjugate, opt, o);
  CHECK(r.elbo_trace.empty());
  CHECK(param(*m, ".loc") == loc);
}

TEST_CASE("MAP on the conjugate model finds the mode") {
  manual_seed(5);
  auto m = conjugate_model(PosteriorSpec::normal());
  m->apply(set_posteriors(PosteriorSpec::point_mass()));
  Adam opt(1e-2);
  FitOptions o;
  o.steps = 3000;
  fit_map(*m, conjugate, opt, o);
  CHECK(std::abs(m->get("mu").item() - 1.5) < 0.01);
}

TEST_CASE("MAP with a flat prior matches least squares") {
  manual_seed(6);
  Rng rng(6);
  std::vector<double> xs(30), ys(30);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xs[i] = -3.0 + 6.0 * rng.uniform();
    ys[i] = 0.7 - 1.3 * xs[i] + 0.4 * rng.normal();
  }
  double mx = sample_mean(xs), my = sample_mean(ys), sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  const double slope = sxy / sxx;

  const Tensor x = Tensor::from_data(xs, {xs.size()});
  PModule m(PosteriorSpec::point_mass().make());
  m.observe({{"y", Tensor::from_data(ys, {ys.size()})}});
  const auto pass = [&](PModule& mod) {
    mod["a"] = Normal(0.0, 1e3);
    mod["b"] = Normal(0.0, 1e3);
    mod.set("y", Normal(mod.get("b") * x + mod.get("a"), 1.0));
  };
  reset_tape();
  m.begin_pass();
  m.set("a", Normal(0.0, 1e3), Tensor(0.0));
  m.set("b", Normal(0.0, 1e3), Tensor(0.0));
  Sgd opt(2e-3);
  FitOptions o;
  o.steps = 4000;
  fit_map(m, pass, opt, o);
  CHECK(std::abs(m.get("b").item() - slope) < 1e-3);
}

TEST_CASE("MAP does not move from a stationary point") {
  manual_seed(7);
  PModule m(PosteriorSpec::point_mass().make());
  m.observe({{"y", Tensor(0.0)}});
  const auto pass = [](PModule& mod) {
    mod["z"] = Normal(0.0, 1.0);
    mod.set("y", Normal(mod.get("z"), 1.0));
  };
  reset_tape();
  m.begin_pass();
  m.set("z", Normal(0.0, 1.0), Tensor(0.0));
  Adam opt(0.1);
  FitOptions o;
  o.steps = 20;
  fit_map(m, pass, opt, o);
  CHECK(m.get("z").item() == 0.0);
}

TEST_CASE("fit_map refuses non-PointMass guides and names them") {
  manual_seed(8);
  auto root = std::make_shared<PModule>(PosteriorSpec::point_mass().make());
  auto child = root->add_module("enc", std::make_shared<PModule>(PosteriorSpec::normal().make()));
  const auto pass = [&](PModule& mod) {
    mod["a"] = Normal(0.0, 1.0);
    child->set("w", Normal(0.0, 1.0));
  };
  reset_tape();
  root->begin_pass();
  pass(*root);
  CHECK(non_point_mass_scopes(*root) == std::vector<std::string>{"enc"});
  Adam opt(0.1);
  FitOptions o;
  o.steps = 1;
  try {
    fit_map(*root, pass, opt, o);
    FAIL("expected InferenceError");
  } catch (const InferenceError& e) {
    CHECK(std::string(e.what()).find("enc") != std::string::npos);
  }
}

TEST_CASE("a nonfinite elbo stops the fit at its step") {
  manual_seed(9);
  PModule m;
  m.observe({{"y", Tensor(1.0)}});
  int calls = 0;
  const auto pass = [&](PModule& mod) {
    mod["z"] = Normal(0.0, 1.0);
    const double shift = ++calls > 3 ? std::numeric_limits<double>::infinity() : 0.0;
    mod.set("y", Normal(mod.get("z") + shift, 1.0));
  };
  reset_tape();
  m.begin_pass();
  pass(m);
  calls = 0;
  Adam opt(0.01);
  FitOptions o;
  o.steps = 10;
  try {
    fit_vi(m, pass, opt, o);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(e.step() == 3);
  }
}

TEST_CASE("MCMC on the conjugate model") {
  manual_seed(10);
  auto m = conjugate_model(PosteriorSpec::point_mass());
  McmcOptions o;
  o.n_steps = 20000;
  o.burn_in = 2000;
  o.step_scale = 0.5;
  o.seed = 10;
  const McmcResult r = fit_mcmc(*m, conjugate, o);
  const auto mu = r.column("mu");
  CHECK(mu.size() == 18000);
  const double ess = effective_sample_size(mu);
  CHECK(ess > 100.0);
  CHECK(std::abs(sample_mean(mu) - 1.5) < 3.0 * 0.5 / std::sqrt(ess));
  CHECK(std::abs(sample_sd(mu) - 0.5) < 0.1);
  CHECK(r.acceptance_rate() > 0.3);
  CHECK(r.warnings.empty());
}

TEST_CASE("MCMC draws from a standard normal target") {
  manual_seed(11);
  PModule m(PosteriorSpec::point_mass().make());
  const auto pass = [](PModule& mod) { mod["z"] = Normal(0.0, 1.0); };
  reset_tape();
  m.begin_pass();
  pass(m);
  McmcOptions o;
  o.n_steps = 200000;
  o.burn_in = 1000;
  o.step_scale = 2.4;
  o.seed = 11;
  auto z = fit_mcmc(m, pass, o).column("z");
  std::sort(z.begin(), z.end());
  const double n = static_cast<double>(z.size());
  double d = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double f = 0.5 * std::erfc(-z[i] / std::numbers::sqrt2);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  CHECK(d < 0.02);
}

TEST_CASE("a vanishing proposal is always accepted and never moves") {
  manual_seed(12);
  auto m = conjugate_model(PosteriorSpec::point_mass());
  McmcOptions o;
  o.n_steps = 2000;
  o.burn_in = 100;
  o.step_scale = 1e-9;
  o.seed = 12;
  const McmcResult r = fit_mcmc(*m, conjugate, o);
  CHECK(r.acceptance_rate() > 0.99);
  CHECK(sample_sd(r.column("mu")) < 1e-6);
}

TEST_CASE("a huge proposal warns about acceptance") {
  manual_seed(13);
  auto m = conjugate_model(PosteriorSpec::point_mass());
  McmcOptions o;
  o.n_steps = 2000;
  o.burn_in = 100;
  o.step_scale = 1e4;
  o.seed = 13;
  const McmcResult r = fit_mcmc(*m, conjugate, o);
  CHECK(r.acceptance_rate() < 0.01);
  CHECK_FALSE(r.warnings.empty());
}

TEST_CASE("MCMC rejects discrete latents") {
  manual_seed(14);
  PModule m(PosteriorSpec::point_mass().make());
  const auto pass = [](PModule& mod) { mod["c"] = Categorical(Tensor::vector({0.0, 0.0})); };
  reset_tape();
  m.begin_pass();
  pass(m);
  McmcOptions o;
  o.n_steps = 10;
  o.burn_in = 0;
  CHECK_THROWS_AS(fit_mcmc(m, pass, o), InferenceError);
}

TEST_CASE("several chains leave the model alone") {
  manual_seed(15);
  auto m = conjugate_model(PosteriorSpec::point_mass());
  const double before = m->get("mu").item();
  McmcOptions o;
  o.n_steps = 3000;
  o.burn_in = 500;
  o.step_scale = 0.5;
  o.chains = 3;
  o.seed = 15;
  const McmcResult r = fit_mcmc(*m, conjugate, o);
  CHECK(r.samples.size() == 3 * 2500);
  CHECK(r.acceptance.size() == 3);
  CHECK(m->get("mu").item() == before);
  CHECK(std::count(r.chain.begin(), r.chain.end(), 2u) == 2500);

  load_mcmc_sample(*m, r, 7);
  reset_tape();
  m->begin_pass();
  m->sample();
  conjugate(*m);
  CHECK(m->get("mu").item() == r.samples[7][0]);
}

TEST_CASE("optimizer steps") {
  Tensor theta = Tensor(1.0).set_requires_grad(true);
  reset_tape();
  backward(theta * 2.0);
  Sgd(0.1).step({{"theta", theta}});
  CHECK(theta.item() == doctest::Approx(0.8).epsilon(1e-15));

  for (double g : {1e-3, 1.0, 250.0}) {
    Tensor p = Tensor(1.0).set_requires_grad(true);
    reset_tape();
    backward(p * g);
    Adam(0.01).step({{"p", p}});
    CHECK(std::abs((1.0 - p.item()) - 0.01) < 1e-6);
  }

  Tensor still = Tensor(3.0).set_requires_grad(true);
  reset_tape();
  backward(still * 0.0);
  Sgd(0.1).step({{"s", still}});
  Adam(0.1).step({{"s", still}});
  CHECK(still.item() == 3.0);

  Tensor bare = Tensor(1.0).set_requires_grad(true);
  CHECK_THROWS_AS(Sgd(0.1).step({{"bare", bare}}), InferenceError);
  CHECK_THROWS_AS(Adam(0.1).step({{"bare", bare}}), InferenceError);
}

TEST_CASE("effective sample size and quantiles") {
  Rng rng(16);
  std::vector<double> iid(20000), sticky(20000);
  double prev = 0.0;
  for (std::size_t i = 0; i < iid.size(); ++i) {
    iid[i] = rng.normal();
    prev = 0.95 * prev + std::sqrt(1 - 0.95 * 0.95) * rng.normal();
    sticky[i] = prev;
  }
  CHECK(effective_sample_size(iid) > 15000.0);
  // AR(1) with phi = 0.95 has ESS ~ n (1 - phi) / (1 + phi)
  const double expected = 20000.0 * 0.05 / 1.95;
  CHECK(std::abs(effective_sample_size(sticky) - expected) < 0.35 * expected);

  CHECK(quantile({3.0, 1.0, 2.0}, 0.5) == 2.0);
  CHECK(quantile({0.0, 10.0}, 0.25) == 2.5);
  CHECK(quantile({4.0}, 0.9) == 4.0);
  CHECK_THROWS_AS(quantile({}, 0.5), InferenceError);
}
