#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ppl/autograd.hpp"
#include "ppl/rng.hpp"
#include "ppl/tensor.hpp"

namespace testing {

using ppl::Tensor;
using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

inline Tensor random_tensor(ppl::Rng& rng, const ppl::Shape& shape, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(ppl::shape_numel(shape));
  for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
  return Tensor::from_data(std::move(v), shape);
}

/// Largest error between the tape gradient of f and central differences
/// with step h, over every element of every input. The error of one element
/// is |analytic - numeric| / max(1, |analytic|, |numeric|): relative for
/// gradients above one, absolute below.
inline double gradcheck(const ScalarFn& f, std::vector<Tensor> inputs, double h = 1e-5) {
  for (auto& t : inputs) t = t.detach().set_requires_grad(true);
  ppl::reset_tape();
  Tensor out = f(inputs);
  ppl::backward(out);
  std::vector<std::vector<double>> analytic;
  for (const auto& t : inputs) {
    auto g = t.grad();
    analytic.push_back(g ? g->to_vector() : std::vector<double>(t.numel(), 0.0));
  }

  double worst = 0.0;
  ppl::NoGradGuard ng;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].numel(); ++i) {
      auto eval = [&](double delta) {
        std::vector<Tensor> shifted;
        for (std::size_t j = 0; j < inputs.size(); ++j) {
          Tensor c = inputs[j].detach();
          if (j == k) c.mutable_data()[i] += delta;
          shifted.push_back(c);
        }
        return f(shifted).item();
      };
      const double numeric = (eval(h) - eval(-h)) / (2.0 * h);
      const double a = analytic[k][i];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

/// sum(op(inputs) * w) for a fixed random weighting w, which exercises every
/// entry of the op's Jacobian through one scalar.
inline ScalarFn weighted(const std::function<Tensor(const std::vector<Tensor>&)>& op, std::uint64_t seed) {
  return [op, seed](const std::vector<Tensor>& in) {
    Tensor y = op(in);
    ppl::Rng rng(seed);
    return ppl::sum(y * random_tensor(rng, y.shape(), 0.5, 1.5));
  };
}

}  // namespace testing
