#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "ppl/tensor.hpp"

namespace ppl {

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::unique_ptr<std::vector<double>> grad;
  // Identity of the tape the producing op was recorded on, and its slot.
  std::uint64_t tape_id = 0;
  std::size_t node = static_cast<std::size_t>(-1);
  // Tape id current when the tensor was produced by an op (0 for leaves).
  std::uint64_t stamp = 0;
};

/// Given the output gradient, writes input gradients into `in_grads`.
/// Entries for inputs that do not need a gradient are left empty.
using BackwardFn =
    std::function<void(std::span<const double> out_grad, std::vector<std::vector<double>>& in_grads)>;

struct TapeNode {
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  BackwardFn backward;
};

}  // namespace detail

/// Append-only record of differentiable operations for the calling thread.
class Tape {
 public:
  Tape();
  std::uint64_t id() const { return id_; }
  std::size_t size() const { return nodes_.size(); }
  const detail::TapeNode& node(std::size_t i) const { return nodes_[i]; }

  std::size_t record(detail::TapeNode node);
  /// Drops every node; outstanding outputs become constants.
  void reset();

 private:
  std::uint64_t id_;
  std::vector<detail::TapeNode> nodes_;
};

Tape& current_tape();
inline void reset_tape() { current_tape().reset(); }

bool grad_enabled();

/// Disables recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Reverse-mode sweep from a scalar root. Gradients accumulate into the
/// grad slot of every reachable leaf that requires grad.
void backward(const Tensor& root);

namespace detail {

/// Builds an op output and records it when any input needs a gradient.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   BackwardFn backward);

}  // namespace detail

}  // namespace ppl
