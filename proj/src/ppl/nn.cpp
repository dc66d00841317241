#include "ppl/nn.hpp"

#include <cmath>

#include "ppl/autograd.hpp"
#include "ppl/error.hpp"

namespace ppl::nn {

namespace {

Tensor uniform_init(const Shape& shape, double bound, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = bound * (2.0 * rng.uniform() - 1.0);
  return Tensor::from_data(std::move(v), shape);
}

void require_positive(std::initializer_list<std::size_t> dims, const char* layer) {
  for (std::size_t d : dims)
    if (d == 0) throw ShapeError(std::string(layer) + " dimensions must be positive");
}

// Normal(w, scale * (|w| + 0.01)) with constant (detached) parameters.
Distribution anchored_prior(const Tensor& w, double scale) {
  std::vector<double> s(w.numel());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = scale * (std::abs(w[i]) + 0.01);
  return Normal(w.detach(), Tensor::from_data(std::move(s), w.shape()));
}

Tensor own_param(const Layer& layer, const std::string& name) {
  for (const auto& [n, t] : layer.own_parameters())
    if (n == name) return t.detach();
  throw ModelError("layer '" + layer.scope() + "' has no parameter '" + name + "'");
}

}  // namespace

Linear::Linear(std::size_t in_features, std::size_t out_features) : in_(in_features), out_(out_features) {
  require_positive({in_features, out_features}, "Linear");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
  register_parameter("weight", uniform_init({out_, in_}, bound, rng()));
  register_parameter("bias", uniform_init({out_}, bound, rng()));
}

Linear::Linear(std::size_t in_features, std::size_t out_features, const PriorSpec& prior,
               const PosteriorSpec& posterior)
    : in_(in_features), out_(out_features), bayesian_(true) {
  require_positive({in_features, out_features}, "Linear");
  set_posterior(posterior.make());
  set("weight", prior.weight.expand({out_, in_}));
  set("bias", prior.bias.expand({out_}));
}

Linear::Linear(const Distribution& weight_prior, const Distribution& bias_prior, const PosteriorSpec& posterior,
               const Tensor& weight_init, const Tensor& bias_init)
    : bayesian_(true) {
  if (weight_init.rank() != 2 || bias_init.rank() != 1 || bias_init.shape()[0] != weight_init.shape()[0]) {
    throw ShapeError("Linear needs weight (out, in) and bias (out), got " + shape_str(weight_init.shape()) + " and " +
                     shape_str(bias_init.shape()));
  }
  out_ = weight_init.shape()[0];
  in_ = weight_init.shape()[1];
  set_posterior(posterior.make());
  set("weight", weight_prior.expand(weight_init.shape()), weight_init);
  set("bias", bias_prior.expand(bias_init.shape()), bias_init);
}

Tensor Linear::forward(const Tensor& x) {
  if (x.rank() == 1) return reshape(forward(reshape(x, {1, x.shape()[0]})), {out_});
  if (x.rank() != 2 || x.shape()[1] != in_) {
    throw ShapeError("Linear(" + std::to_string(in_) + ", " + std::to_string(out_) + ") got input " +
                     shape_str(x.shape()));
  }
  return matmul(x, transpose(weight())) + bias();
}

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size)
    : in_(in_channels), out_(out_channels), k_(kernel_size) {
  require_positive({in_channels, out_channels, kernel_size}, "Conv2d");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_ * k_ * k_));
  register_parameter("weight", uniform_init({out_, in_, k_, k_}, bound, rng()));
  register_parameter("bias", uniform_init({out_}, bound, rng()));
}

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size, const PriorSpec& prior,
               const PosteriorSpec& posterior)
    : in_(in_channels), out_(out_channels), k_(kernel_size), bayesian_(true) {
  require_positive({in_channels, out_channels, kernel_size}, "Conv2d");
  set_posterior(posterior.make());
  set("weight", prior.weight.expand({out_, in_, k_, k_}));
  set("bias", prior.bias.expand({out_}));
}

Conv2d::Conv2d(const Distribution& weight_prior, const Distribution& bias_prior, const PosteriorSpec& posterior,
               const Tensor& weight_init, const Tensor& bias_init)
    : bayesian_(true) {
  const Shape& ws = weight_init.shape();
  if (ws.size() != 4 || ws[2] != ws[3] || bias_init.rank() != 1 || bias_init.shape()[0] != ws[0]) {
    throw ShapeError("Conv2d needs weight (O, C, k, k) and bias (O), got " + shape_str(ws) + " and " +
                     shape_str(bias_init.shape()));
  }
  out_ = ws[0];
  in_ = ws[1];
  k_ = ws[2];
  set_posterior(posterior.make());
  set("weight", weight_prior.expand(ws), weight_init);
  set("bias", bias_prior.expand(bias_init.shape()), bias_init);
}

Tensor Conv2d::forward(const Tensor& x) { return conv2d(x, weight(), bias()); }

Tensor Flatten::forward(const Tensor& x) { return flatten(x, true); }

Sequential::Sequential(std::vector<std::shared_ptr<Layer>> layers) {
  for (auto& l : layers) push_back(std::move(l));
}

Sequential& Sequential::push_back(std::shared_ptr<Layer> layer) {
  add_module(std::to_string(size()), std::move(layer));
  return *this;
}

std::shared_ptr<Layer> Sequential::at(std::size_t i) const {
  if (i >= size()) throw ModelError("Sequential index " + std::to_string(i) + " out of range");
  return std::static_pointer_cast<Layer>(submodules()[i].second);
}

void Sequential::replace(std::size_t i, std::shared_ptr<Layer> layer) {
  if (i >= size()) throw ModelError("Sequential index " + std::to_string(i) + " out of range");
  add_module(std::to_string(i), std::move(layer));
}

Tensor Sequential::forward(const Tensor& x) {
  Tensor h = x;
  for (std::size_t i = 0; i < size(); ++i) h = at(i)->forward(h);
  return h;
}

Tensor flatten(const Tensor& x, bool keep_batch) {
  if (!keep_batch || x.rank() == 0) return reshape(x, {x.numel()});
  const std::size_t n = x.shape()[0];
  return reshape(x, {n, n == 0 ? 0 : x.numel() / n});
}

std::shared_ptr<Layer> make_layer(const std::string& kind, const std::vector<std::size_t>& dims,
                                  const std::optional<PriorSpec>& prior,
                                  const std::optional<PosteriorSpec>& posterior) {
  const bool bayes = prior.has_value() || posterior.has_value();
  const PriorSpec p = prior.value_or(PriorSpec{});
  const PosteriorSpec q = posterior.value_or(PosteriorSpec::normal(-3.0));
  if (kind == "linear") {
    if (dims.size() != 2) throw ShapeError("linear layer needs dims {in, out}");
    if (bayes) return std::make_shared<Linear>(dims[0], dims[1], p, q);
    return std::make_shared<Linear>(dims[0], dims[1]);
  }
  if (kind == "conv2d") {
    if (dims.size() != 3) throw ShapeError("conv2d layer needs dims {in, out, k}");
    if (bayes) return std::make_shared<Conv2d>(dims[0], dims[1], dims[2], p, q);
    return std::make_shared<Conv2d>(dims[0], dims[1], dims[2]);
  }
  throw ModelError("unknown layer kind '" + kind + "'");
}

std::shared_ptr<Layer> lift(const Layer& net, double default_prior_scale, const PosteriorSpec& posterior) {
  if (!(default_prior_scale > 0.0)) throw ModelError("lift needs a positive prior scale");
  if (const auto* lin = dynamic_cast<const Linear*>(&net); lin && !lin->bayesian()) {
    const Tensor w = own_param(net, "weight");
    const Tensor b = own_param(net, "bias");
    return std::make_shared<Linear>(anchored_prior(w, default_prior_scale), anchored_prior(b, default_prior_scale),
                                    posterior, w, b);
  }
  if (const auto* conv = dynamic_cast<const Conv2d*>(&net); conv && !conv->bayesian()) {
    const Tensor w = own_param(net, "weight");
    const Tensor b = own_param(net, "bias");
    return std::make_shared<Conv2d>(anchored_prior(w, default_prior_scale), anchored_prior(b, default_prior_scale),
                                    posterior, w, b);
  }
  if (const auto* seq = dynamic_cast<const Sequential*>(&net)) {
    auto out = std::make_shared<Sequential>();
    for (std::size_t i = 0; i < seq->size(); ++i) out->push_back(lift(*seq->at(i), default_prior_scale, posterior));
    return out;
  }
  return net.clone_layer();
}

}  // namespace ppl::nn
