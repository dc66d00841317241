#include "ppl/posterior.hpp"

#include <charconv>
#include <cmath>

#include "ppl/autograd.hpp"
#include "ppl/error.hpp"

namespace ppl {

namespace {

std::string shortest(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

Tensor leaf_param(const Tensor& init) {
  Tensor t = init.detach();
  t.set_requires_grad(true);
  return t;
}

// `init` broadcast (detached) to `shape`.
Tensor start_value(const Distribution& prior, Rng& rng, const std::optional<Tensor>& init, const Shape& shape) {
  NoGradGuard no_grad;
  if (!init) return prior.sample(rng);
  if (init->shape() == shape) return init->detach();
  return expand(*init, shape).detach();
}

Tensor prior_scale(const Distribution& prior) {
  NoGradGuard no_grad;
  if (const auto* n = prior.get_if<Normal>()) return n->scale;
  if (const auto* h = prior.get_if<HalfNormal>()) return h->scale;
  if (const auto* l = prior.get_if<LogNormal>()) return l->scale;
  return prior.stddev();
}

// Normal guide (LogNormal for positive support) with per-element initial
// log-scale `log_scale`.
Guide normal_family_guide(std::string_view leaf, const Distribution& prior, bool dynamic, Rng& rng,
                          const std::optional<Tensor>& init, const Tensor& log_scale) {
  Guide g(std::string(leaf), prior);
  g.dynamic = dynamic;
  if (prior.discrete()) {
    g.form = GuideForm::Prior;
    return g;
  }
  const Shape shape = prior.batch_shape();
  Tensor start = start_value(prior, rng, init, shape);
  Tensor raw;
  {
    NoGradGuard no_grad;
    raw = log_scale.shape() == shape ? log_scale.detach() : expand(log_scale, shape).detach();
  }
  if (prior.positive_support()) {
    std::vector<double> logs(start.numel());
    for (std::size_t i = 0; i < logs.size(); ++i) logs[i] = std::log(std::max(start[i], 1e-300));
    g.form = GuideForm::LogNormal;
    g.params = {{"loc", leaf_param(Tensor::from_data(std::move(logs), shape))}, {"log_scale", leaf_param(raw)}};
  } else {
    g.form = GuideForm::Normal;
    g.params = {{"loc", leaf_param(start)}, {"log_scale", leaf_param(raw)}};
  }
  return g;
}

}  // namespace

Guide::Guide(std::string leaf_name, Distribution prior_dist)
    : leaf(std::move(leaf_name)), prior(std::move(prior_dist)) {}

const Tensor& Guide::param(std::string_view name) const {
  for (const auto& [n, t] : params)
    if (n == name) return t;
  throw ModelError("guide " + key() + " has no parameter '" + std::string(name) + "'");
}

std::string Guide::key() const { return leaf + "#" + std::to_string(ordinal); }

// ---------------------------------------------------------------------------

std::string PosteriorSpec::to_string() const {
  switch (kind) {
    case PosteriorKind::Automatic: return "Automatic";
    case PosteriorKind::Normal: return "Normal(log_scale=" + shortest(log_scale) + ")";
    case PosteriorKind::ScaledNormal: return "ScaledNormal(scaling=" + shortest(scaling) + ")";
    case PosteriorKind::PointMass: return "PointMass";
    case PosteriorKind::Manual: return "Manual";
  }
  return "?";
}

PosteriorSpec PosteriorSpec::parse(std::string_view text) {
  auto fail = [&]() -> PosteriorSpec { throw ModelError("unrecognized posterior '" + std::string(text) + "'"); };
  const auto open = text.find('(');
  const std::string_view name = text.substr(0, open);
  std::string_view arg;
  if (open != std::string_view::npos) {
    if (text.back() != ')') return fail();
    arg = text.substr(open + 1, text.size() - open - 2);
  }
  auto number = [&](std::string_view key, double fallback) {
    if (arg.empty()) return fallback;
    if (arg.substr(0, key.size()) != key || arg.size() <= key.size() || arg[key.size()] != '=') fail();
    const std::string_view digits = arg.substr(key.size() + 1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
    if (ec != std::errc() || ptr != digits.data() + digits.size()) fail();
    return v;
  };
  if (name == "Automatic" && arg.empty()) return automatic();
  if (name == "PointMass" && arg.empty()) return point_mass();
  if (name == "Normal") return normal(number("log_scale", -3.0));
  if (name == "ScaledNormal") return scaled_normal(number("scaling", 1e-2));
  return fail();
}

std::unique_ptr<Posterior> PosteriorSpec::make() const {
  switch (kind) {
    case PosteriorKind::Automatic: return std::make_unique<AutomaticPosterior>();
    case PosteriorKind::Normal: return std::make_unique<NormalPosterior>(log_scale);
    case PosteriorKind::ScaledNormal: return std::make_unique<ScaledNormalPosterior>(scaling);
    case PosteriorKind::PointMass: return std::make_unique<PointMassPosterior>();
    case PosteriorKind::Manual: break;
  }
  throw ModelError("manual posteriors cannot be built from a spec");
}

// ---------------------------------------------------------------------------

Posterior::Posterior(const Posterior& other) {
  guides_.reserve(other.guides_.size());
  for (const auto& g : other.guides_) {
    auto copy = std::make_unique<Guide>(*g);
    for (auto& [name, t] : copy->params) t = t.clone();
    guides_.push_back(std::move(copy));
  }
}

std::optional<std::size_t> Posterior::find(std::string_view leaf, const Distribution& prior, bool dynamic) const {
  for (std::size_t i = 0; i < guides_.size(); ++i) {
    const Guide& g = *guides_[i];
    if (g.leaf != leaf) continue;
    if (dynamic && g.dynamic) return i;
    if (!dynamic && !g.dynamic && g.prior.same_constants(prior)) return i;
  }
  return std::nullopt;
}

std::size_t Posterior::build_guide(std::string_view scope, std::string_view leaf, const Distribution& prior,
                                   bool dynamic, Rng& rng, const std::optional<Tensor>& init) {
  Guide g = make_guide(scope, leaf, prior, dynamic, rng, init);
  std::size_t ordinal = 0;
  for (const auto& existing : guides_)
    if (existing->leaf == leaf) ++ordinal;
  g.ordinal = ordinal;
  guides_.push_back(std::make_unique<Guide>(std::move(g)));
  return guides_.size() - 1;
}

Distribution Posterior::refresh_dynamic(std::size_t index, const Distribution& prior) {
  Guide& g = guide(index);
  if (!g.dynamic) throw ModelError("refresh_dynamic called on non-dynamic guide " + g.key());
  g.prior = prior;
  return distribution(index, g.leaf);
}

Distribution Posterior::distribution(std::size_t index, std::string_view scope) const {
  const Guide& g = guide(index);
  switch (g.form) {
    case GuideForm::Prior: return g.prior;
    case GuideForm::Normal: return Normal(g.param("loc"), exp(g.param("log_scale")));
    case GuideForm::LogNormal: return LogNormal(g.param("loc"), exp(g.param("log_scale")));
    case GuideForm::PointMass: return PointMass(g.param("value"));
    case GuideForm::Manual: break;
  }
  throw MissingGuide("no manual guide available for '" + std::string(scope) + "'");
}

std::vector<std::pair<std::string, Tensor>> Posterior::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& g : guides_)
    for (const auto& [name, t] : g->params) out.emplace_back(g->key() + "." + name, t);
  return out;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Posterior> AutomaticPosterior::clone() const {
  return std::unique_ptr<Posterior>(new AutomaticPosterior(*this));
}
std::unique_ptr<Posterior> AutomaticPosterior::fresh() const { return std::make_unique<AutomaticPosterior>(); }

Guide AutomaticPosterior::make_guide(std::string_view, std::string_view leaf, const Distribution& prior,
                                     bool dynamic, Rng& rng, const std::optional<Tensor>& init) const {
  if (dynamic || prior.discrete()) {
    Guide g(std::string(leaf), prior);
    g.form = GuideForm::Prior;
    g.dynamic = dynamic;
    return g;
  }
  return normal_family_guide(leaf, prior, dynamic, rng, init, Tensor(-3.0));
}

std::string NormalPosterior::describe() const { return PosteriorSpec::normal(log_scale_).to_string(); }
std::unique_ptr<Posterior> NormalPosterior::clone() const {
  return std::unique_ptr<Posterior>(new NormalPosterior(*this));
}
std::unique_ptr<Posterior> NormalPosterior::fresh() const { return std::make_unique<NormalPosterior>(log_scale_); }

Guide NormalPosterior::make_guide(std::string_view, std::string_view leaf, const Distribution& prior,
                                  bool dynamic, Rng& rng, const std::optional<Tensor>& init) const {
  return normal_family_guide(leaf, prior, dynamic, rng, init, Tensor(log_scale_));
}

std::string ScaledNormalPosterior::describe() const {
  return PosteriorSpec::scaled_normal(scaling_).to_string();
}
std::unique_ptr<Posterior> ScaledNormalPosterior::clone() const {
  return std::unique_ptr<Posterior>(new ScaledNormalPosterior(*this));
}
std::unique_ptr<Posterior> ScaledNormalPosterior::fresh() const {
  return std::make_unique<ScaledNormalPosterior>(scaling_);
}

Guide ScaledNormalPosterior::make_guide(std::string_view, std::string_view leaf, const Distribution& prior,
                                        bool dynamic, Rng& rng, const std::optional<Tensor>& init) const {
  Tensor raw;
  {
    NoGradGuard no_grad;
    const Tensor s = prior_scale(prior);
    std::vector<double> logs(s.numel());
    for (std::size_t i = 0; i < logs.size(); ++i) logs[i] = std::log(scaling_ * s[i]);
    raw = Tensor::from_data(std::move(logs), s.shape());
  }
  return normal_family_guide(leaf, prior, dynamic, rng, init, raw);
}

std::unique_ptr<Posterior> PointMassPosterior::clone() const {
  return std::unique_ptr<Posterior>(new PointMassPosterior(*this));
}
std::unique_ptr<Posterior> PointMassPosterior::fresh() const { return std::make_unique<PointMassPosterior>(); }

Guide PointMassPosterior::make_guide(std::string_view, std::string_view leaf, const Distribution& prior,
                                     bool dynamic, Rng& rng, const std::optional<Tensor>& init) const {
  Guide g(std::string(leaf), prior);
  g.dynamic = dynamic;
  g.form = GuideForm::PointMass;
  g.params = {{"value", leaf_param(start_value(prior, rng, init, prior.batch_shape()))}};
  return g;
}

// ---------------------------------------------------------------------------

ManualPosterior::ManualPosterior(const ManualPosterior& other)
    : Posterior(other), hook_(other.hook_), guides_by_leaf_(other.guides_by_leaf_) {
  for (const auto& [name, t] : other.params_) params_.emplace_back(name, t.clone());
}

std::unique_ptr<Posterior> ManualPosterior::clone() const {
  return std::unique_ptr<Posterior>(new ManualPosterior(*this));
}

std::unique_ptr<Posterior> ManualPosterior::fresh() const {
  auto p = std::make_unique<ManualPosterior>(hook_);
  for (const auto& [name, t] : params_) p->params_.emplace_back(name, t.clone());
  p->guides_by_leaf_ = guides_by_leaf_;
  return p;
}

void ManualPosterior::before_pass() {
  if (hook_) hook_(*this);
}

Tensor ManualPosterior::add_parameter(const std::string& name, Tensor init) {
  for (const auto& [n, t] : params_)
    if (n == name) throw NameCollision("manual posterior already has parameter '" + name + "'");
  Tensor p = leaf_param(init);
  params_.emplace_back(name, p);
  return p;
}

const Tensor& ManualPosterior::parameter(std::string_view name) const {
  for (const auto& [n, t] : params_)
    if (n == name) return t;
  throw ModelError("manual posterior has no parameter '" + std::string(name) + "'");
}

void ManualPosterior::set_guide(const std::string& leaf, Distribution guide) {
  for (auto& [n, d] : guides_by_leaf_) {
    if (n == leaf) {
      d = std::move(guide);
      return;
    }
  }
  guides_by_leaf_.emplace_back(leaf, std::move(guide));
}

bool ManualPosterior::has_guide(std::string_view leaf) const {
  for (const auto& [n, d] : guides_by_leaf_)
    if (n == leaf) return true;
  return false;
}

Distribution ManualPosterior::distribution(std::size_t index, std::string_view scope) const {
  const Guide& g = guide(index);
  for (const auto& [n, d] : guides_by_leaf_)
    if (n == g.leaf) return d;
  throw MissingGuide("no manual guide registered for '" + std::string(scope) + "'");
}

std::vector<std::pair<std::string, Tensor>> ManualPosterior::named_parameters() const { return params_; }

Guide ManualPosterior::make_guide(std::string_view scope, std::string_view leaf, const Distribution& prior,
                                  bool dynamic, Rng&, const std::optional<Tensor>&) const {
  if (!has_guide(leaf)) {
    throw MissingGuide("no manual guide registered for '" + std::string(scope) + "'");
  }
  Guide g(std::string(leaf), prior);
  g.dynamic = dynamic;
  g.form = GuideForm::Manual;
  return g;
}

bool dynamic_detect(const Distribution& prior) {
  for (const auto& t : prior.params())
    if (t.computed_this_pass()) return true;
  return false;
}

}  // namespace ppl
