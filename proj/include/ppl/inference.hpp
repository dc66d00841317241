#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ppl/module.hpp"
#include "ppl/tensor.hpp"

namespace ppl {

/// Model code run once per pass; it assigns and reads attributes of the module.
using ModelPass = std::function<void(PModule&)>;

struct ElboEstimate {
  Tensor value;
  std::size_t n_samples = 0;
  /// Terms of the last Monte Carlo sample.
  std::vector<PqTerm> terms;
  /// Scope of the first term whose log_p - log_q was NaN or infinite.
  std::optional<std::string> nonfinite_scope;
};

/// Averages sum(log_p - log_q) over `n_samples` runs of sample() + pass.
ElboEstimate elbo(PModule& m, const ModelPass& pass, std::size_t n_samples = 1);

/// Sum of log_p over a fresh pass, without recording gradients.
double log_joint(PModule& m, const ModelPass& pass);

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  /// Updates every parameter in place from its gradient; throws
  /// InferenceError if a parameter has no gradient.
  virtual void step(const std::vector<Parameter>& params) = 0;
  std::size_t step_count() const { return steps_; }

 protected:
  std::size_t steps_ = 0;
};

class Sgd final : public Optimizer {
 public:
  explicit Sgd(double lr) : lr_(lr) {}
  void step(const std::vector<Parameter>& params) override;

 private:
  double lr_;
};

class Adam final : public Optimizer {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(const std::vector<Parameter>& params) override;

 private:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t t = 0;
  };
  double lr_, beta1_, beta2_, eps_;
  std::map<std::string, Moments> state_;
};

struct FitOptions {
  std::size_t steps = 1000;
  std::size_t n_samples = 1;
  /// Reseeds the model before fitting when set.
  std::optional<std::uint64_t> seed;
  std::function<void(std::size_t step, double elbo)> on_step;
};

struct FitReport {
  std::vector<double> elbo_trace;
  std::vector<Parameter> final_params;  // detached copies
  std::size_t steps = 0;
  std::size_t n_samples = 0;
  std::optional<std::uint64_t> seed;
};

/// Stochastic variational inference: gradient steps on -elbo over m.parameters().
/// Throws NumericalError carrying the step index when the ELBO is not finite.
FitReport fit_vi(PModule& m, const ModelPass& pass, Optimizer& opt, const FitOptions& options);

/// fit_vi with one sample, restricted to trees whose random variables all
/// have PointMass guides.
FitReport fit_map(PModule& m, const ModelPass& pass, Optimizer& opt, FitOptions options);

/// Scopes of modules holding latent random variables under a non-PointMass posterior.
std::vector<std::string> non_point_mass_scopes(const PModule& m);

struct McmcOptions {
  /// Total Metropolis iterations per chain, burn-in included.
  std::size_t n_steps = 20000;
  std::size_t burn_in = 2000;
  double step_scale = 0.5;
  std::optional<std::uint64_t> seed;
  std::size_t chains = 1;
};

struct McmcResult {
  /// One entry per latent coordinate tensor (scope path of the random variable).
  std::vector<std::string> names;
  std::vector<Shape> shapes;
  /// One flattened state (all coordinates concatenated) per retained iteration.
  std::vector<std::vector<double>> samples;
  std::vector<std::size_t> chain;      // chain index of each sample
  std::vector<double> log_joint;       // log-joint of each sample
  std::vector<double> acceptance;      // post-burn-in acceptance rate per chain
  std::vector<std::string> warnings;

  /// Trace of one element of one named coordinate, all chains concatenated.
  std::vector<double> column(const std::string& name, std::size_t element = 0) const;
  double acceptance_rate() const;
};

/// Random-walk Metropolis over the PointMass guide values. Positive-support
/// latents move in log space with the matching Jacobian term. With more than
/// one chain, each runs on its own deep copy of `m` in its own thread and `m`
/// is left untouched; a single chain runs on `m` and leaves it at the last state.
McmcResult fit_mcmc(PModule& m, const ModelPass& pass, const McmcOptions& options);

/// Writes retained sample `index` back into the matching PointMass guide values.
void load_mcmc_sample(PModule& m, const McmcResult& result, std::size_t index);

/// Effective sample size from the initial positive sequence of autocorrelations.
double effective_sample_size(const std::vector<double>& trace);

/// Linearly interpolated empirical quantile, p in [0, 1].
double quantile(std::vector<double> values, double p);

}  // namespace ppl
