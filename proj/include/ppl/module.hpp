#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ppl/distributions.hpp"
#include "ppl/posterior.hpp"
#include "ppl/rng.hpp"
#include "ppl/tensor.hpp"

namespace ppl {

/// A learnable leaf tensor and its scope path.
struct Parameter {
  std::string name;
  Tensor value;
};

/// A named node unifying a prior with the tensor currently standing in for it.
struct RandomVariable {
  RandomVariable(std::string name, std::string scope, Distribution prior);

  std::string name;
  std::string scope;
  Distribution prior;
  Tensor value;
  bool observed = false;
  /// The distribution that produced `value` when not observed.
  std::optional<Distribution> guide_dist;
  bool dynamic = false;
  /// Index of the guide in the owning module's posterior.
  std::optional<std::size_t> guide_index;
  /// Set when an observation is lifted; the next read or assignment redraws.
  bool stale = false;
};

struct PqTerm {
  std::string scope;
  Tensor log_p;
  Tensor log_q;
  bool observed = false;
};

class PModule;

/// Proxy returned by PModule::operator[] so that
///   m["weights"] = Normal(0, 1);
///   Tensor w = m["weights"];
/// read like attribute assignment.
class AttrRef {
 public:
  AttrRef(PModule& module, std::string name) : module_(module), name_(std::move(name)) {}

  AttrRef& operator=(const Distribution& prior);
  AttrRef& operator=(const Tensor& buffer);
  AttrRef& operator=(const Parameter& parameter);
  AttrRef& operator=(std::shared_ptr<PModule> submodule);

  operator Tensor() const;  // NOLINT(google-explicit-constructor)
  Tensor value() const;

 private:
  PModule& module_;
  std::string name_;
};

/// Tree of submodules, parameters, buffers and random variables with an
/// attached posterior. Attribute names are unique across all four kinds.
///
/// A pass is: begin_pass() (clears ledgers, runs posterior hooks), optionally
/// sample(), then user code that assigns and reads attributes. Random
/// variables keep their value between passes until sample() redraws them.
class PModule {
 public:
  explicit PModule(std::unique_ptr<Posterior> posterior = nullptr);
  virtual ~PModule() = default;
  PModule& operator=(const PModule&) = delete;

  /// Deep copy: cloned parameters and guides, fresh RNG stream.
  virtual std::shared_ptr<PModule> clone() const;

  AttrRef operator[](std::string name) { return AttrRef(*this, std::move(name)); }

  /// Creates or updates a random variable and returns its current value.
  /// `init`, if given, places a newly built guide at that tensor instead of
  /// a prior draw.
  Tensor set(const std::string& name, const Distribution& prior,
             const std::optional<Tensor>& init = std::nullopt);
  Tensor register_parameter(const std::string& name, const Tensor& init);
  void set_buffer(const std::string& name, const Tensor& value);
  template <class M>
  std::shared_ptr<M> add_module(const std::string& name, std::shared_ptr<M> module) {
    attach_module(name, module);
    return module;
  }

  /// Reads an attribute; random-variable reads are recorded in the ledger.
  Tensor get(const std::string& name);
  bool has(const std::string& name) const;

  /// Overwrites the current value of an existing, unobserved random variable
  /// (used when restoring saved state).
  void assign_value(const std::string& name, const Tensor& value);

  const RandomVariable& rv(const std::string& name) const;
  bool has_rv(const std::string& name) const;
  std::shared_ptr<PModule> submodule(const std::string& name) const;
  const std::vector<std::pair<std::string, std::shared_ptr<PModule>>>& submodules() const { return modules_; }
  const std::vector<std::pair<std::string, Tensor>>& own_parameters() const { return params_; }
  const std::vector<std::pair<std::string, Tensor>>& buffers() const { return buffers_; }
  std::vector<std::string> rv_names() const;

  /// Conditions random variables on the given tensors. Names resolve within
  /// this module's subtree; dotted paths reach submodules. Bindings for
  /// variables that do not exist yet apply when they are first assigned.
  void observe(const std::map<std::string, Tensor>& bindings);
  /// Lifts every observation in the subtree.
  void observe(std::nullopt_t);
  /// Bindings (as dotted paths) that have not matched any variable yet.
  std::vector<std::string> unmatched_observations() const;

  void begin_pass();
  /// Redraws every unobserved random variable in the subtree from its guide.
  void sample();
  /// One entry per ledger variable in the subtree, depth first.
  std::vector<PqTerm> pq_terms() const;
  /// Depth-first, creation-ordered, deduplicated learnable tensors,
  /// including guide parameters.
  std::vector<Parameter> parameters() const;

  /// Applies `fn` to every module in the tree, children first.
  PModule& apply(const std::function<void(PModule&)>& fn);
  /// Replaces the posterior and rebuilds guides for existing unobserved
  /// variables, initialised at their current values.
  void set_posterior(std::unique_ptr<Posterior> posterior);
  Posterior& posterior() { return *posterior_; }
  const Posterior& posterior() const { return *posterior_; }

  /// Scope paths of the random variables assigned or read during this pass.
  std::vector<std::string> ledger() const;
  std::size_t pass_count() const { return pass_count_; }

  /// Dotted path from the root ("" for the root itself).
  std::string scope() const;
  std::string scoped(const std::string& leaf) const;
  const PModule* parent() const { return parent_; }

  void reseed(std::uint64_t seed);
  Rng& rng() { return rng_; }

 protected:
  PModule(const PModule& other);

 private:
  enum class Kind { Rv, Param, Buffer, Module };

  void attach_module(const std::string& name, std::shared_ptr<PModule> module);
  void refresh_scopes();
  void check_name(const std::string& name, Kind kind) const;
  std::optional<Kind> kind_of(const std::string& name) const;
  RandomVariable* find_rv(const std::string& name);
  const RandomVariable* find_rv(const std::string& name) const;
  void touch(std::size_t index);
  std::size_t ensure_guide(RandomVariable& rv, const std::optional<Tensor>& init);
  Tensor draw(const Distribution& d);
  void draw_from_guide(RandomVariable& rv);
  void collect_terms(std::vector<PqTerm>& out) const;
  void collect_parameters(std::vector<Parameter>& out, std::vector<const void*>& seen) const;
  void collect_unmatched(const std::string& prefix, std::vector<std::string>& out) const;

  std::string name_;
  PModule* parent_ = nullptr;
  std::unique_ptr<Posterior> posterior_;
  std::vector<std::pair<std::string, std::shared_ptr<PModule>>> modules_;
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<std::pair<std::string, Tensor>> buffers_;
  std::vector<RandomVariable> rvs_;
  std::map<std::string, Tensor> observations_;
  std::map<std::string, Tensor> pending_;  // dotted bindings for submodules not attached yet
  std::vector<std::size_t> ledger_;  // indices into rvs_
  std::size_t pass_count_ = 0;
  Rng rng_;
};

/// CRTP helper giving a derived module a correct clone().
template <class Derived, class Base = PModule>
class Cloneable : public Base {
 public:
  using Base::Base;
  std::shared_ptr<PModule> clone() const override {
    return std::make_shared<Derived>(static_cast<const Derived&>(*this));
  }
};

/// Free-function spelling of PModule::sample.
inline void sample(PModule& m) { m.sample(); }

/// Module transformer replacing every posterior with a fresh `spec` posterior.
std::function<void(PModule&)> set_posteriors(PosteriorSpec spec);

}  // namespace ppl
