#include "ppl/module.hpp"

#include <algorithm>

#include "ppl/autograd.hpp"
#include "ppl/error.hpp"

namespace ppl {

namespace {

bool valid_name(const std::string& name) {
  if (name.empty()) return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
  });
}

const char* kind_word(int k) {
  static const char* words[] = {"random variable", "parameter", "buffer", "submodule"};
  return words[k];
}

template <class V>
auto find_named(V& items, const std::string& name) -> decltype(&items.front()) {
  for (auto& item : items)
    if (item.first == name) return &item;
  return nullptr;
}

Tensor summed(const Tensor& t) { return t.rank() == 0 ? t : sum(t); }

}  // namespace

RandomVariable::RandomVariable(std::string n, std::string s, Distribution p)
    : name(std::move(n)), scope(std::move(s)), prior(std::move(p)) {}

// ---------------------------------------------------------------------------

AttrRef& AttrRef::operator=(const Distribution& prior) {
  module_.set(name_, prior);
  return *this;
}

AttrRef& AttrRef::operator=(const Tensor& buffer) {
  module_.set_buffer(name_, buffer);
  return *this;
}

AttrRef& AttrRef::operator=(const Parameter& parameter) {
  module_.register_parameter(name_, parameter.value);
  return *this;
}

AttrRef& AttrRef::operator=(std::shared_ptr<PModule> submodule) {
  module_.add_module(name_, std::move(submodule));
  return *this;
}

AttrRef::operator Tensor() const { return module_.get(name_); }
Tensor AttrRef::value() const { return module_.get(name_); }

// ---------------------------------------------------------------------------

PModule::PModule(std::unique_ptr<Posterior> posterior)
    : posterior_(posterior ? std::move(posterior) : std::make_unique<AutomaticPosterior>()),
      rng_(init_rng().split()) {}

PModule::PModule(const PModule& other)
    : name_(other.name_),
      posterior_(other.posterior_->clone()),
      buffers_(other.buffers_),
      rvs_(other.rvs_),
      observations_(other.observations_),
      pending_(other.pending_),
      ledger_(other.ledger_),
      pass_count_(other.pass_count_),
      rng_(init_rng().split()) {
  for (const auto& [name, t] : other.params_) params_.emplace_back(name, t.clone());
  for (auto& [name, t] : buffers_) t = t.clone();
  NoGradGuard no_grad;
  for (auto& rv : rvs_) {
    if (rv.observed) continue;
    rv.value = rv.value.detach();
    if (rv.guide_index && !rv.dynamic) rv.guide_dist = posterior_->distribution(*rv.guide_index, rv.scope);
  }
  for (const auto& [name, child] : other.modules_) {
    auto copy = child->clone();
    copy->parent_ = this;
    modules_.emplace_back(name, std::move(copy));
  }
}

std::shared_ptr<PModule> PModule::clone() const { return std::shared_ptr<PModule>(new PModule(*this)); }

std::optional<PModule::Kind> PModule::kind_of(const std::string& name) const {
  if (find_rv(name)) return Kind::Rv;
  if (find_named(params_, name)) return Kind::Param;
  if (find_named(buffers_, name)) return Kind::Buffer;
  if (find_named(modules_, name)) return Kind::Module;
  return std::nullopt;
}

void PModule::check_name(const std::string& name, Kind kind) const {
  if (!valid_name(name)) throw ModelError("invalid attribute name '" + name + "'");
  const auto existing = kind_of(name);
  if (existing && *existing != kind) {
    throw NameCollision("'" + scoped(name) + "' is already a " + kind_word(static_cast<int>(*existing)) +
                        ", cannot rebind it as a " + kind_word(static_cast<int>(kind)));
  }
}

RandomVariable* PModule::find_rv(const std::string& name) {
  for (auto& rv : rvs_)
    if (rv.name == name) return &rv;
  return nullptr;
}

const RandomVariable* PModule::find_rv(const std::string& name) const {
  for (const auto& rv : rvs_)
    if (rv.name == name) return &rv;
  return nullptr;
}

std::string PModule::scope() const {
  if (!parent_) return "";
  const std::string up = parent_->scope();
  return up.empty() ? name_ : up + "." + name_;
}

std::string PModule::scoped(const std::string& leaf) const {
  const std::string s = scope();
  return s.empty() ? leaf : s + "." + leaf;
}

void PModule::touch(std::size_t index) {
  if (std::find(ledger_.begin(), ledger_.end(), index) == ledger_.end()) ledger_.push_back(index);
}

Tensor PModule::draw(const Distribution& d) { return d.reparameterizable() ? d.rsample(rng_) : d.sample(rng_); }

std::size_t PModule::ensure_guide(RandomVariable& rv, const std::optional<Tensor>& init) {
  if (auto found = posterior_->find(rv.name, rv.prior, rv.dynamic)) return *found;
  return posterior_->build_guide(rv.scope, rv.name, rv.prior, rv.dynamic, rng_, init);
}

void PModule::draw_from_guide(RandomVariable& rv) {
  const std::size_t index = *rv.guide_index;
  rv.guide_dist = rv.dynamic ? posterior_->refresh_dynamic(index, rv.prior) : posterior_->distribution(index, rv.scope);
  rv.value = draw(*rv.guide_dist);
  rv.stale = false;
}

Tensor PModule::set(const std::string& name, const Distribution& prior, const std::optional<Tensor>& init) {
  check_name(name, Kind::Rv);
  RandomVariable* rv = find_rv(name);
  if (!rv) {
    rvs_.emplace_back(name, scoped(name), prior);
    rv = &rvs_.back();
    if (auto it = observations_.find(name); it != observations_.end()) {
      rv->observed = true;
      rv->value = it->second;
    }
  }
  rv->prior = prior;
  rv->scope = scoped(name);
  rv->dynamic = dynamic_detect(prior);
  const std::size_t index = static_cast<std::size_t>(rv - rvs_.data());

  if (!rv->observed) {
    const std::size_t before = posterior_->guide_count();
    const std::size_t g = ensure_guide(*rv, init);
    const bool created = posterior_->guide_count() != before;
    const bool switched = !rv->guide_index || *rv->guide_index != g;
    rv->guide_index = g;
    const Guide& guide = posterior_->guide(g);
    if (rv->dynamic) {
      rv->guide_dist = posterior_->refresh_dynamic(g, prior);
      if (guide.form == GuideForm::Prior || guide.form == GuideForm::Manual || created || switched || rv->stale) {
        rv->value = draw(*rv->guide_dist);
        rv->stale = false;
      }
    } else if (created) {
      // A new guide starts at its location so that an explicit `init`
      // reproduces the initialising tensor exactly.
      rv->guide_dist = posterior_->distribution(g, rv->scope);
      switch (guide.form) {
        case GuideForm::Normal: rv->value = guide.param("loc") + 0.0; break;
        case GuideForm::LogNormal: rv->value = exp(guide.param("loc")); break;
        case GuideForm::PointMass: rv->value = guide.param("value") + 0.0; break;
        case GuideForm::Prior:
        case GuideForm::Manual: rv->value = draw(*rv->guide_dist); break;
      }
      rv->stale = false;
    } else if (switched || rv->stale) {
      draw_from_guide(*rv);
    }
  }
  touch(index);
  return rv->value;
}

Tensor PModule::register_parameter(const std::string& name, const Tensor& init) {
  check_name(name, Kind::Param);
  Tensor p = init.detach();
  p.set_requires_grad(true);
  if (auto* existing = find_named(params_, name)) {
    existing->second = p;
  } else {
    params_.emplace_back(name, p);
  }
  return p;
}

void PModule::set_buffer(const std::string& name, const Tensor& value) {
  check_name(name, Kind::Buffer);
  if (auto* existing = find_named(buffers_, name)) {
    existing->second = value;
  } else {
    buffers_.emplace_back(name, value);
  }
}

void PModule::refresh_scopes() {
  for (auto& rv : rvs_) rv.scope = scoped(rv.name);
  for (auto& [name, child] : modules_) child->refresh_scopes();
}

void PModule::attach_module(const std::string& name, std::shared_ptr<PModule> module) {
  check_name(name, Kind::Module);
  if (!module) throw ModelError("cannot attach a null submodule as '" + scoped(name) + "'");
  module->parent_ = this;
  module->name_ = name;
  if (auto* existing = find_named(modules_, name)) {
    existing->second = module;
  } else {
    modules_.emplace_back(name, module);
  }
  module->refresh_scopes();
  std::map<std::string, Tensor> forward;
  const std::string prefix = name + ".";
  for (auto it = pending_.begin(); it != pending_.end();) {
    if (it->first.compare(0, prefix.size(), prefix) == 0) {
      forward.emplace(it->first.substr(prefix.size()), it->second);
      it = pending_.erase(it);
    } else {
      ++it;
    }
  }
  if (!forward.empty()) module->observe(forward);
}

Tensor PModule::get(const std::string& name) {
  if (RandomVariable* rv = find_rv(name)) {
    if (!rv->observed && (rv->stale || !rv->guide_index)) {
      rv->guide_index = ensure_guide(*rv, std::nullopt);
      draw_from_guide(*rv);
    }
    touch(static_cast<std::size_t>(rv - rvs_.data()));
    return rv->value;
  }
  if (const auto* p = find_named(params_, name)) return p->second;
  if (const auto* b = find_named(buffers_, name)) return b->second;
  if (find_named(modules_, name)) throw ModelError("'" + scoped(name) + "' is a submodule, not a tensor");
  throw ModelError("no attribute '" + scoped(name) + "'");
}

void PModule::assign_value(const std::string& name, const Tensor& value) {
  RandomVariable* rv = find_rv(name);
  if (!rv) throw ModelError("no random variable '" + scoped(name) + "'");
  if (rv->observed) throw ModelError("cannot assign a value to observed '" + rv->scope + "'");
  if (value.shape() != rv->prior.batch_shape()) {
    throw ShapeError("value for '" + rv->scope + "' has shape " + shape_str(value.shape()) + ", expected " +
                     shape_str(rv->prior.batch_shape()));
  }
  rv->value = value;
  rv->stale = false;
}

bool PModule::has(const std::string& name) const { return kind_of(name).has_value(); }

const RandomVariable& PModule::rv(const std::string& name) const {
  if (const auto* r = find_rv(name)) return *r;
  throw ModelError("no random variable '" + scoped(name) + "'");
}

bool PModule::has_rv(const std::string& name) const { return find_rv(name) != nullptr; }

std::shared_ptr<PModule> PModule::submodule(const std::string& name) const {
  const auto dot = name.find('.');
  const std::string head = name.substr(0, dot);
  for (const auto& [n, m] : modules_) {
    if (n != head) continue;
    return dot == std::string::npos ? m : m->submodule(name.substr(dot + 1));
  }
  throw ModelError("no submodule '" + scoped(name) + "'");
}

std::vector<std::string> PModule::rv_names() const {
  std::vector<std::string> out;
  for (const auto& rv : rvs_) out.push_back(rv.name);
  return out;
}

// ---------------------------------------------------------------------------

void PModule::observe(const std::map<std::string, Tensor>& bindings) {
  for (const auto& [name, value] : bindings) {
    const auto dot = name.find('.');
    if (dot != std::string::npos) {
      const std::string head = name.substr(0, dot);
      if (auto* m = find_named(modules_, head)) {
        m->second->observe({{name.substr(dot + 1), value}});
      } else {
        pending_[name] = value;
      }
      continue;
    }
    const auto kind = kind_of(name);
    if (kind && *kind != Kind::Rv) {
      throw NameCollision("cannot observe '" + scoped(name) + "': it is a " + kind_word(static_cast<int>(*kind)));
    }
    observations_[name] = value;
    if (RandomVariable* rv = find_rv(name)) {
      rv->observed = true;
      rv->value = value;
      rv->stale = false;
    }
  }
}

void PModule::observe(std::nullopt_t) {
  observations_.clear();
  pending_.clear();
  for (auto& rv : rvs_) {
    if (!rv.observed) continue;
    rv.observed = false;
    rv.stale = true;
  }
  for (auto& [name, child] : modules_) child->observe(std::nullopt);
}

void PModule::collect_unmatched(const std::string& prefix, std::vector<std::string>& out) const {
  for (const auto& [name, t] : observations_)
    if (!find_rv(name)) out.push_back(prefix + name);
  for (const auto& [name, t] : pending_) out.push_back(prefix + name);
  for (const auto& [name, child] : modules_) child->collect_unmatched(prefix + name + ".", out);
}

std::vector<std::string> PModule::unmatched_observations() const {
  std::vector<std::string> out;
  collect_unmatched("", out);
  return out;
}

// ---------------------------------------------------------------------------

void PModule::begin_pass() {
  ledger_.clear();
  ++pass_count_;
  posterior_->before_pass();
  for (auto& [name, child] : modules_) child->begin_pass();
}

void PModule::sample() {
  for (auto& rv : rvs_) {
    if (rv.observed) continue;
    if (!rv.guide_index) rv.guide_index = ensure_guide(rv, std::nullopt);
    draw_from_guide(rv);
  }
  for (auto& [name, child] : modules_) child->sample();
}

std::vector<std::string> PModule::ledger() const {
  std::vector<std::string> out;
  for (std::size_t i : ledger_) out.push_back(rvs_[i].scope);
  return out;
}

void PModule::collect_terms(std::vector<PqTerm>& out) const {
  for (std::size_t i : ledger_) {
    const RandomVariable& rv = rvs_[i];
    PqTerm term{rv.scope, summed(rv.prior.log_prob(rv.value)), Tensor(0.0), rv.observed};
    if (!rv.observed && rv.guide_dist && rv.guide_dist->family() != Family::PointMass) {
      term.log_q = summed(rv.guide_dist->log_prob(rv.value));
    }
    out.push_back(std::move(term));
  }
  for (const auto& [name, child] : modules_) child->collect_terms(out);
}

std::vector<PqTerm> PModule::pq_terms() const {
  if (pass_count_ == 0) throw ModelError("pq_terms on '" + scope() + "' before any pass: the ledger is stale");
  std::vector<PqTerm> out;
  collect_terms(out);
  return out;
}

void PModule::collect_parameters(std::vector<Parameter>& out, std::vector<const void*>& seen) const {
  auto add = [&](const std::string& name, const Tensor& t) {
    if (std::find(seen.begin(), seen.end(), t.id()) != seen.end()) return;
    seen.push_back(t.id());
    out.push_back({scoped(name), t});
  };
  for (const auto& [name, t] : params_) add(name, t);
  for (const auto& [name, t] : posterior_->named_parameters()) add(name, t);
  for (const auto& [name, child] : modules_) child->collect_parameters(out, seen);
}

std::vector<Parameter> PModule::parameters() const {
  std::vector<Parameter> out;
  std::vector<const void*> seen;
  collect_parameters(out, seen);
  return out;
}

PModule& PModule::apply(const std::function<void(PModule&)>& fn) {
  for (auto& [name, child] : modules_) child->apply(fn);
  fn(*this);
  return *this;
}

void PModule::set_posterior(std::unique_ptr<Posterior> posterior) {
  if (!posterior) throw ModelError("set_posterior needs a posterior");
  posterior_ = std::move(posterior);
  for (auto& rv : rvs_) {
    rv.guide_index.reset();
    rv.guide_dist.reset();
  }
  if (posterior_->kind() == PosteriorKind::Manual) return;
  for (auto& rv : rvs_) {
    if (rv.observed || rv.stale) continue;
    rv.guide_index = ensure_guide(rv, rv.value.detach());
    if (rv.dynamic) {
      rv.guide_dist = posterior_->refresh_dynamic(*rv.guide_index, rv.prior);
    } else {
      rv.guide_dist = posterior_->distribution(*rv.guide_index, rv.scope);
    }
  }
}

void PModule::reseed(std::uint64_t seed) {
  Rng root(seed);
  rng_ = root.split();
  for (auto& [name, child] : modules_) child->reseed(root.next_u64());
}

std::function<void(PModule&)> set_posteriors(PosteriorSpec spec) {
  return [spec](PModule& m) { m.set_posterior(spec.make()); };
}

}  // namespace ppl
