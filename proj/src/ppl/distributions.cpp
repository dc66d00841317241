#include "ppl/distributions.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "ppl/autograd.hpp"
#include "ppl/error.hpp"

namespace ppl {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2 pi)
constexpr double kInf = std::numeric_limits<double>::infinity();

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_positive(const Tensor& t, const char* what) {
  for (double v : t.data()) {
    if (!(v > 0.0)) {
      throw DistributionError(std::string(what) + " must be strictly positive, got " + std::to_string(v));
    }
  }
}

Tensor standard_normal(const Shape& shape, Rng& rng) {
  std::vector<double> eps(shape_numel(shape));
  for (auto& e : eps) e = rng.normal();
  return Tensor::from_data(std::move(eps), shape);
}

// Constant tensor holding -inf where `bad(v)` and 0 elsewhere.
template <class Pred>
Tensor support_mask(const Tensor& value, Pred bad, bool& any) {
  std::vector<double> mask(value.numel(), 0.0);
  any = false;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (bad(value[i])) {
      mask[i] = -kInf;
      any = true;
    }
  }
  return Tensor::from_data(std::move(mask), value.shape());
}

Tensor normal_log_prob(const Tensor& loc, const Tensor& scale, const Tensor& value) {
  const Tensor z = (value - loc) / scale;
  return Tensor(-kHalfLog2Pi) - log(scale) - square(z) * 0.5;
}

}  // namespace

std::string family_name(Family f) {
  switch (f) {
    case Family::Normal: return "Normal";
    case Family::HalfNormal: return "HalfNormal";
    case Family::Categorical: return "Categorical";
    case Family::PointMass: return "PointMass";
    case Family::LogNormal: return "LogNormal";
  }
  return "?";
}

Normal::Normal(Tensor l, Tensor s) : loc(std::move(l)), scale(std::move(s)) {
  broadcast_shapes(loc.shape(), scale.shape());
  require_positive(scale, "Normal scale");
}

HalfNormal::HalfNormal(Tensor s) : scale(std::move(s)) { require_positive(scale, "HalfNormal scale"); }

Categorical::Categorical(Tensor l) : logits(std::move(l)) {
  if (logits.rank() == 0 || logits.shape().back() == 0) {
    throw DistributionError("Categorical logits need a non-empty class axis");
  }
}

PointMass::PointMass(Tensor v) : value(std::move(v)) {}

LogNormal::LogNormal(Tensor l, Tensor s) : loc(std::move(l)), scale(std::move(s)) {
  broadcast_shapes(loc.shape(), scale.shape());
  require_positive(scale, "LogNormal scale");
}

Family Distribution::family() const {
  return std::visit(Overloaded{[](const Normal&) { return Family::Normal; },
                               [](const HalfNormal&) { return Family::HalfNormal; },
                               [](const Categorical&) { return Family::Categorical; },
                               [](const PointMass&) { return Family::PointMass; },
                               [](const LogNormal&) { return Family::LogNormal; }},
                    d_);
}

Shape Distribution::batch_shape() const {
  return std::visit(Overloaded{[](const Normal& d) { return broadcast_shapes(d.loc.shape(), d.scale.shape()); },
                               [](const HalfNormal& d) { return d.scale.shape(); },
                               [](const Categorical& d) {
                                 return Shape(d.logits.shape().begin(), d.logits.shape().end() - 1);
                               },
                               [](const PointMass& d) { return d.value.shape(); },
                               [](const LogNormal& d) { return broadcast_shapes(d.loc.shape(), d.scale.shape()); }},
                    d_);
}

bool Distribution::positive_support() const {
  const Family f = family();
  return f == Family::HalfNormal || f == Family::LogNormal;
}

Tensor Distribution::sample(Rng& rng) const {
  NoGradGuard no_grad;
  if (const auto* c = get_if<Categorical>()) {
    const Tensor logp = log_softmax(c->logits);
    const std::size_t K = c->logits.shape().back();
    const Shape batch = batch_shape();
    std::vector<double> out(shape_numel(batch));
    for (std::size_t r = 0; r < out.size(); ++r) {
      const double u = rng.uniform();
      double cum = 0.0;
      std::size_t k = 0;
      for (; k + 1 < K; ++k) {
        cum += std::exp(logp[r * K + k]);
        if (u < cum) break;
      }
      out[r] = static_cast<double>(k);
    }
    return Tensor::from_data(std::move(out), batch);
  }
  return rsample(rng).detach();
}

Tensor Distribution::rsample(Rng& rng) const {
  const Shape shape = batch_shape();
  return std::visit(
      Overloaded{[&](const Normal& d) -> Tensor { return d.loc + d.scale * standard_normal(shape, rng); },
                 [&](const HalfNormal& d) -> Tensor { return d.scale * abs(standard_normal(shape, rng)); },
                 [&](const Categorical&) -> Tensor {
                   throw NotReparameterizable("Categorical has no reparameterized sampler");
                 },
                 [&](const PointMass& d) -> Tensor { return d.value + 0.0; },
                 [&](const LogNormal& d) -> Tensor { return exp(d.loc + d.scale * standard_normal(shape, rng)); }},
      d_);
}

Tensor Distribution::log_prob(const Tensor& value) const {
  return std::visit(
      Overloaded{
          [&](const Normal& d) -> Tensor { return normal_log_prob(d.loc, d.scale, value); },
          [&](const HalfNormal& d) -> Tensor {
            bool any = false;
            const Tensor mask = support_mask(value, [](double v) { return v < 0.0; }, any);
            Tensor lp = Tensor(std::numbers::ln2 - kHalfLog2Pi) - log(d.scale) - square(value / d.scale) * 0.5;
            return any ? lp + mask : lp;
          },
          [&](const Categorical& d) -> Tensor {
            const std::size_t K = d.logits.shape().back();
            for (double v : value.data()) {
              if (!(v >= 0.0) || v >= static_cast<double>(K) || v != std::floor(v)) {
                throw DistributionError("Categorical class index " + std::to_string(v) + " outside [0, " +
                                        std::to_string(K) + ")");
              }
            }
            const Shape batch = broadcast_shapes(batch_shape(), value.shape());
            Shape full = batch;
            full.push_back(K);
            const Tensor logits = d.logits.shape() == full ? d.logits : ppl::expand(d.logits, full);
            const Tensor index = value.shape() == batch ? value : ppl::expand(value, batch);
            return take_last(log_softmax(logits), index);
          },
          [&](const PointMass& d) -> Tensor {
            return Tensor::zeros(broadcast_shapes(d.value.shape(), value.shape()));
          },
          [&](const LogNormal& d) -> Tensor {
            bool any = false;
            const Tensor mask = support_mask(value, [](double v) { return !(v > 0.0); }, any);
            Tensor safe = value;
            if (any) {
              std::vector<double> fix(value.numel(), 0.0);
              for (std::size_t i = 0; i < fix.size(); ++i)
                if (!(value[i] > 0.0)) fix[i] = 1.0 - value[i];
              safe = value + Tensor::from_data(std::move(fix), value.shape());
            }
            const Tensor log_v = log(safe);
            Tensor lp = normal_log_prob(d.loc, d.scale, log_v) - log_v;
            return any ? lp + mask : lp;
          }},
      d_);
}

Tensor Distribution::mean() const {
  return std::visit(
      Overloaded{[](const Normal& d) -> Tensor { return ppl::expand(d.loc, broadcast_shapes(d.loc.shape(), d.scale.shape())); },
                 [](const HalfNormal& d) -> Tensor { return d.scale * std::sqrt(2.0 / std::numbers::pi); },
                 [](const Categorical&) -> Tensor { throw DistributionError("Categorical has no scalar mean"); },
                 [](const PointMass& d) -> Tensor { return d.value; },
                 [](const LogNormal& d) -> Tensor { return exp(d.loc + square(d.scale) * 0.5); }},
      d_);
}

Tensor Distribution::stddev() const {
  return std::visit(
      Overloaded{[](const Normal& d) -> Tensor { return ppl::expand(d.scale, broadcast_shapes(d.loc.shape(), d.scale.shape())); },
                 [](const HalfNormal& d) -> Tensor { return d.scale * std::sqrt(1.0 - 2.0 / std::numbers::pi); },
                 [](const Categorical&) -> Tensor { throw DistributionError("Categorical has no scalar stddev"); },
                 [](const PointMass& d) -> Tensor { return Tensor::zeros(d.value.shape()); },
                 [](const LogNormal& d) -> Tensor {
                   const Tensor s2 = square(d.scale);
                   return sqrt((exp(s2) - 1.0) * exp(d.loc * 2.0 + s2));
                 }},
      d_);
}

std::vector<Tensor> Distribution::params() const {
  return std::visit(Overloaded{[](const Normal& d) { return std::vector<Tensor>{d.loc, d.scale}; },
                               [](const HalfNormal& d) { return std::vector<Tensor>{d.scale}; },
                               [](const Categorical& d) { return std::vector<Tensor>{d.logits}; },
                               [](const PointMass& d) { return std::vector<Tensor>{d.value}; },
                               [](const LogNormal& d) { return std::vector<Tensor>{d.loc, d.scale}; }},
                    d_);
}

Distribution Distribution::expand(const Shape& shape) const {
  // Constant parameters stay constant leaves so the expanded prior is not
  // mistaken for one computed during the current pass.
  auto expand = [&](const Tensor& t, const Shape& s) {
    if (t.requires_grad() || t.computed_this_pass()) return ppl::expand(t, s);
    NoGradGuard no_grad;
    return ppl::expand(t, s).detach();
  };
  return std::visit(
      Overloaded{[&](const Normal& d) -> Distribution { return Normal(expand(d.loc, shape), expand(d.scale, shape)); },
                 [&](const HalfNormal& d) -> Distribution { return HalfNormal(expand(d.scale, shape)); },
                 [&](const Categorical& d) -> Distribution {
                   Shape full = shape;
                   full.push_back(d.logits.shape().back());
                   return Categorical(expand(d.logits, full));
                 },
                 [&](const PointMass& d) -> Distribution { return PointMass(expand(d.value, shape)); },
                 [&](const LogNormal& d) -> Distribution {
                   return LogNormal(expand(d.loc, shape), expand(d.scale, shape));
                 }},
      d_);
}

bool Distribution::same_constants(const Distribution& other) const {
  if (family() != other.family()) return false;
  const auto a = params();
  const auto b = other.params();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].bitwise_equal(b[i])) return false;
  }
  return true;
}

Tensor kl_divergence(const Distribution& q, const Distribution& p) {
  const auto* nq = q.get_if<Normal>();
  const auto* np = p.get_if<Normal>();
  if (!nq || !np) {
    throw DistributionError("kl_divergence: unsupported pair " + q.name() + " || " + p.name());
  }
  const Tensor var_ratio_num = square(nq->scale) + square(nq->loc - np->loc);
  return log(np->scale / nq->scale) + var_ratio_num / (square(np->scale) * 2.0) - 0.5;
}

}  // namespace ppl
