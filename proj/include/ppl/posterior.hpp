#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ppl/distributions.hpp"
#include "ppl/rng.hpp"
#include "ppl/tensor.hpp"

namespace ppl {

enum class PosteriorKind { Automatic, Normal, ScaledNormal, PointMass, Manual };

/// How a guide turns its parameters into a distribution.
enum class GuideForm {
  Prior,      // the prior itself, no learnable parameters
  Normal,     // Normal(loc, exp(log_scale))
  LogNormal,  // exp of Normal(loc, exp(log_scale)); positive-support priors
  PointMass,  // delta at `value`
  Manual,     // whatever the manual posterior currently holds for the leaf
};

struct Guide {
  Guide(std::string leaf, Distribution prior);

  std::string leaf;
  std::size_t ordinal = 0;  // creation index among guides sharing `leaf`
  GuideForm form = GuideForm::Prior;
  bool dynamic = false;
  /// Prior at creation (identity key); dynamic guides track the latest prior.
  Distribution prior;
  std::vector<std::pair<std::string, Tensor>> params;

  const Tensor& param(std::string_view name) const;
  /// "<leaf>#<ordinal>"; parameters are named "<leaf>#<ordinal>.<param>".
  std::string key() const;
};

class Posterior;

/// Value description of the automatically-built posterior kinds, e.g.
/// "Normal(log_scale=-3)". Manual posteriors are built in code.
struct PosteriorSpec {
  PosteriorKind kind = PosteriorKind::Automatic;
  double log_scale = -3.0;
  double scaling = 1e-2;

  static PosteriorSpec automatic() { return {}; }
  static PosteriorSpec normal(double log_scale = -3.0) { return {PosteriorKind::Normal, log_scale, 1e-2}; }
  static PosteriorSpec scaled_normal(double scaling) { return {PosteriorKind::ScaledNormal, -3.0, scaling}; }
  static PosteriorSpec point_mass() { return {PosteriorKind::PointMass, -3.0, 1e-2}; }

  std::string to_string() const;
  /// Inverse of to_string(); throws ModelError on anything else.
  static PosteriorSpec parse(std::string_view text);
  std::unique_ptr<Posterior> make() const;
};

/// Manufactures one guide per (random-variable leaf, prior identity) and owns
/// the guides' learnable parameters.
class Posterior {
 public:
  virtual ~Posterior() = default;

  virtual PosteriorKind kind() const = 0;
  virtual std::string describe() const = 0;
  /// Deep copy, guides and parameters included.
  virtual std::unique_ptr<Posterior> clone() const = 0;
  /// Same settings, no guides.
  virtual std::unique_ptr<Posterior> fresh() const = 0;
  /// Runs before every model pass.
  virtual void before_pass() {}

  /// Guide matching (leaf, prior identity), if any. Dynamic priors match on
  /// the leaf alone; constant priors need identical family and parameters.
  std::optional<std::size_t> find(std::string_view leaf, const Distribution& prior, bool dynamic) const;
  /// Builds and stores a guide. `init` places its location (or point value)
  /// at the given tensor instead of a prior draw.
  std::size_t build_guide(std::string_view scope, std::string_view leaf, const Distribution& prior,
                          bool dynamic, Rng& rng, const std::optional<Tensor>& init = std::nullopt);
  /// Points a dynamic guide at this pass's prior and returns the guide
  /// distribution. Throws ModelError for non-dynamic guides.
  Distribution refresh_dynamic(std::size_t index, const Distribution& prior);

  virtual Distribution distribution(std::size_t index, std::string_view scope) const;

  const Guide& guide(std::size_t index) const { return *guides_.at(index); }
  Guide& guide(std::size_t index) { return *guides_.at(index); }
  std::size_t guide_count() const { return guides_.size(); }

  /// Learnable tensors, in creation order, with module-relative names.
  virtual std::vector<std::pair<std::string, Tensor>> named_parameters() const;

 protected:
  Posterior() = default;
  Posterior(const Posterior& other);
  Posterior& operator=(const Posterior&) = delete;

  virtual Guide make_guide(std::string_view scope, std::string_view leaf, const Distribution& prior,
                           bool dynamic, Rng& rng, const std::optional<Tensor>& init) const = 0;

 private:
  std::vector<std::unique_ptr<Guide>> guides_;
};

class AutomaticPosterior final : public Posterior {
 public:
  AutomaticPosterior() = default;
  PosteriorKind kind() const override { return PosteriorKind::Automatic; }
  std::string describe() const override { return "Automatic"; }
  std::unique_ptr<Posterior> clone() const override;
  std::unique_ptr<Posterior> fresh() const override;

 protected:
  Guide make_guide(std::string_view scope, std::string_view leaf, const Distribution& prior, bool dynamic,
                   Rng& rng, const std::optional<Tensor>& init) const override;
};

class NormalPosterior final : public Posterior {
 public:
  explicit NormalPosterior(double log_scale = -3.0) : log_scale_(log_scale) {}
  PosteriorKind kind() const override { return PosteriorKind::Normal; }
  std::string describe() const override;
  std::unique_ptr<Posterior> clone() const override;
  std::unique_ptr<Posterior> fresh() const override;
  double log_scale() const { return log_scale_; }

 protected:
  Guide make_guide(std::string_view scope, std::string_view leaf, const Distribution& prior, bool dynamic,
                   Rng& rng, const std::optional<Tensor>& init) const override;

 private:
  double log_scale_;
};

/// Normal guide whose initial scale is `scaling` times the prior's scale.
class ScaledNormalPosterior final : public Posterior {
 public:
  explicit ScaledNormalPosterior(double scaling = 1e-2) : scaling_(scaling) {}
  PosteriorKind kind() const override { return PosteriorKind::ScaledNormal; }
  std::string describe() const override;
  std::unique_ptr<Posterior> clone() const override;
  std::unique_ptr<Posterior> fresh() const override;
  double scaling() const { return scaling_; }

 protected:
  Guide make_guide(std::string_view scope, std::string_view leaf, const Distribution& prior, bool dynamic,
                   Rng& rng, const std::optional<Tensor>& init) const override;

 private:
  double scaling_;
};

class PointMassPosterior final : public Posterior {
 public:
  PointMassPosterior() = default;
  PosteriorKind kind() const override { return PosteriorKind::PointMass; }
  std::string describe() const override { return "PointMass"; }
  std::unique_ptr<Posterior> clone() const override;
  std::unique_ptr<Posterior> fresh() const override;

 protected:
  Guide make_guide(std::string_view scope, std::string_view leaf, const Distribution& prior, bool dynamic,
                   Rng& rng, const std::optional<Tensor>& init) const override;
};

/// User-written guides. Parameters and guide distributions are attributes of
/// the posterior itself; the hook runs before every pass and typically
/// reassigns the guides from the parameters.
class ManualPosterior final : public Posterior {
 public:
  using Hook = std::function<void(ManualPosterior&)>;

  ManualPosterior() = default;
  explicit ManualPosterior(Hook hook) : hook_(std::move(hook)) {}

  PosteriorKind kind() const override { return PosteriorKind::Manual; }
  std::string describe() const override { return "Manual"; }
  std::unique_ptr<Posterior> clone() const override;
  std::unique_ptr<Posterior> fresh() const override;
  void before_pass() override;

  /// Registers a learnable tensor (a leaf with requires_grad set).
  Tensor add_parameter(const std::string& name, Tensor init);
  const Tensor& parameter(std::string_view name) const;
  void set_guide(const std::string& leaf, Distribution guide);
  bool has_guide(std::string_view leaf) const;
  void set_hook(Hook hook) { hook_ = std::move(hook); }

  Distribution distribution(std::size_t index, std::string_view scope) const override;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const override;

 protected:
  Guide make_guide(std::string_view scope, std::string_view leaf, const Distribution& prior, bool dynamic,
                   Rng& rng, const std::optional<Tensor>& init) const override;

 private:
  ManualPosterior(const ManualPosterior& other);

  Hook hook_;
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<std::pair<std::string, Distribution>> guides_by_leaf_;
};

/// True when any parameter of `prior` was produced during the current pass
/// (since the calling thread's tape was last reset).
bool dynamic_detect(const Distribution& prior);

}  // namespace ppl
