#pragma once

#include <string>
#include <variant>
#include <vector>

#include "ppl/rng.hpp"
#include "ppl/tensor.hpp"

namespace ppl {

enum class Family { Normal, HalfNormal, Categorical, PointMass, LogNormal };

std::string family_name(Family f);

/// Normal(loc, scale); scale is a standard deviation and must be > 0.
struct Normal {
  Normal(Tensor loc, Tensor scale);
  Tensor loc;
  Tensor scale;
};

/// |X| for X ~ Normal(0, scale); support [0, inf).
struct HalfNormal {
  explicit HalfNormal(Tensor scale);
  Tensor scale;
};

/// Classes index the last axis of `logits`.
struct Categorical {
  explicit Categorical(Tensor logits);
  Tensor logits;
};

/// Delta at `value`. Its log-density is 0 everywhere by convention, which
/// turns the ELBO into the log-joint.
struct PointMass {
  explicit PointMass(Tensor value);
  Tensor value;
};

/// exp(Y) for Y ~ Normal(loc, scale). Used by Normal-family guides for
/// positive latents; log_prob carries the -log(value) Jacobian term.
struct LogNormal {
  LogNormal(Tensor loc, Tensor scale);
  Tensor loc;
  Tensor scale;
};

class Distribution {
 public:
  Distribution(Normal d) : d_(std::move(d)) {}          // NOLINT
  Distribution(HalfNormal d) : d_(std::move(d)) {}      // NOLINT
  Distribution(Categorical d) : d_(std::move(d)) {}     // NOLINT
  Distribution(PointMass d) : d_(std::move(d)) {}       // NOLINT
  Distribution(LogNormal d) : d_(std::move(d)) {}       // NOLINT

  Family family() const;
  std::string name() const { return family_name(family()); }

  /// Broadcast shape of the parameters (for Categorical, logits minus the class axis).
  Shape batch_shape() const;
  bool reparameterizable() const { return family() != Family::Categorical; }
  bool positive_support() const;
  bool discrete() const { return family() == Family::Categorical; }

  /// Detached draw.
  Tensor sample(Rng& rng) const;
  /// Draw written as a differentiable function of the parameters.
  Tensor rsample(Rng& rng) const;
  Tensor log_prob(const Tensor& value) const;

  Tensor mean() const;
  Tensor stddev() const;

  std::vector<Tensor> params() const;
  Distribution expand(const Shape& shape) const;
  /// Same family and bitwise-identical parameters.
  bool same_constants(const Distribution& other) const;

  template <class T>
  const T* get_if() const {
    return std::get_if<T>(&d_);
  }

 private:
  std::variant<Normal, HalfNormal, Categorical, PointMass, LogNormal> d_;
};

/// KL(q || p) elementwise; only Normal/Normal is supported.
Tensor kl_divergence(const Distribution& q, const Distribution& p);

}  // namespace ppl
