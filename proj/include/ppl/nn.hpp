#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ppl/distributions.hpp"
#include "ppl/module.hpp"
#include "ppl/posterior.hpp"
#include "ppl/tensor.hpp"

namespace ppl::nn {

/// A module with a forward function.
class Layer : public PModule {
 public:
  Layer() = default;
  virtual Tensor forward(const Tensor& x) = 0;
  Tensor operator()(const Tensor& x) { return forward(x); }
  /// "linear", "conv2d", "sequential", "relu", "flatten", "max_pool2d".
  virtual std::string kind() const = 0;
  std::shared_ptr<Layer> clone_layer() const { return std::static_pointer_cast<Layer>(clone()); }

 protected:
  Layer(const Layer& other) = default;
};

/// Scalar-parameter priors broadcast to every element of a layer's weight and bias.
struct PriorSpec {
  Distribution weight = Normal(0.0, 1.0);
  Distribution bias = Normal(0.0, 1.0);
};

/// y = x W^T + b with W of shape (out, in). Deterministic layers hold
/// parameters; bayesian layers hold random variables "weight" and "bias".
class Linear final : public Cloneable<Linear, Layer> {
 public:
  /// Deterministic, initialised from U(-1/sqrt(in), 1/sqrt(in)).
  Linear(std::size_t in_features, std::size_t out_features);
  /// Bayesian with broadcast priors.
  Linear(std::size_t in_features, std::size_t out_features, const PriorSpec& prior,
         const PosteriorSpec& posterior = PosteriorSpec::normal(-3.0));
  /// Bayesian with full-shape priors and guides started at the given tensors.
  Linear(const Distribution& weight_prior, const Distribution& bias_prior, const PosteriorSpec& posterior,
         const Tensor& weight_init, const Tensor& bias_init);

  Tensor forward(const Tensor& x) override;
  std::string kind() const override { return "linear"; }
  bool bayesian() const { return bayesian_; }
  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  Tensor weight() { return get("weight"); }
  Tensor bias() { return get("bias"); }

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  bool bayesian_ = false;
};

/// Stride-1, unpadded 2-D convolution over (N, C, H, W) inputs.
class Conv2d final : public Cloneable<Conv2d, Layer> {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size);
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size, const PriorSpec& prior,
         const PosteriorSpec& posterior = PosteriorSpec::normal(-3.0));
  Conv2d(const Distribution& weight_prior, const Distribution& bias_prior, const PosteriorSpec& posterior,
         const Tensor& weight_init, const Tensor& bias_init);

  Tensor forward(const Tensor& x) override;
  std::string kind() const override { return "conv2d"; }
  bool bayesian() const { return bayesian_; }
  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }
  std::size_t kernel_size() const { return k_; }
  Tensor weight() { return get("weight"); }
  Tensor bias() { return get("bias"); }

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  std::size_t k_ = 0;
  bool bayesian_ = false;
};

class ReLU final : public Cloneable<ReLU, Layer> {
 public:
  Tensor forward(const Tensor& x) override { return relu(x); }
  std::string kind() const override { return "relu"; }
};

class Flatten final : public Cloneable<Flatten, Layer> {
 public:
  Tensor forward(const Tensor& x) override;
  std::string kind() const override { return "flatten"; }
};

class MaxPool2d final : public Cloneable<MaxPool2d, Layer> {
 public:
  MaxPool2d(std::size_t kh, std::size_t kw) : kh_(kh), kw_(kw) {}
  Tensor forward(const Tensor& x) override { return max_pool2d(x, kh_, kw_); }
  std::string kind() const override { return "max_pool2d"; }
  std::size_t kh() const { return kh_; }
  std::size_t kw() const { return kw_; }

 private:
  std::size_t kh_;
  std::size_t kw_;
};

/// Children are named "0", "1", ... and applied in order.
class Sequential final : public Cloneable<Sequential, Layer> {
 public:
  Sequential() = default;
  explicit Sequential(std::vector<std::shared_ptr<Layer>> layers);

  Sequential& push_back(std::shared_ptr<Layer> layer);
  std::size_t size() const { return submodules().size(); }
  std::shared_ptr<Layer> at(std::size_t i) const;
  /// Replaces child i in place (same name, same position).
  void replace(std::size_t i, std::shared_ptr<Layer> layer);

  Tensor forward(const Tensor& x) override;
  std::string kind() const override { return "sequential"; }
};

/// (N, ...) -> (N, rest) when keep_batch, otherwise a rank-1 view.
Tensor flatten(const Tensor& x, bool keep_batch = true);

/// Builds "linear" (dims {in, out}) or "conv2d" (dims {in, out, k}). The
/// layer is bayesian when a prior or a posterior is given; missing pieces
/// default to N(0, 1) priors and Normal(log_scale=-3).
std::shared_ptr<Layer> make_layer(const std::string& kind, const std::vector<std::size_t>& dims,
                                  const std::optional<PriorSpec>& prior = std::nullopt,
                                  const std::optional<PosteriorSpec>& posterior = std::nullopt);

/// Returns a bayesian copy of `net`: every deterministic Linear/Conv2d gets
/// the prior Normal(w, default_prior_scale * (|w| + 0.01)) elementwise and a
/// guide starting at w. Containers are rebuilt recursively; anything else is
/// copied unchanged.
std::shared_ptr<Layer> lift(const Layer& net, double default_prior_scale = 0.1,
                            const PosteriorSpec& posterior = PosteriorSpec::normal(-3.0));

}  // namespace ppl::nn
