#include "ppl/autograd.hpp"

#include <atomic>

#include "ppl/error.hpp"

namespace ppl {

namespace {

std::atomic<std::uint64_t> next_tape_id{1};

thread_local bool grad_mode = true;

bool routes_to_node(const detail::TensorImpl& impl, const Tape& tape) {
  return impl.tape_id == tape.id() && impl.node != static_cast<std::size_t>(-1);
}

bool needs_grad(const detail::TensorImpl& impl, const Tape& tape) {
  return impl.requires_grad || routes_to_node(impl, tape);
}

void accumulate(std::vector<double>& into, const std::vector<double>& from) {
  if (into.empty()) {
    into = from;
    return;
  }
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += from[i];
}

}  // namespace

Tape::Tape() : id_(next_tape_id.fetch_add(1)) {}

std::size_t Tape::record(detail::TapeNode node) {
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

void Tape::reset() {
  nodes_.clear();
  id_ = next_tape_id.fetch_add(1);
}

Tape& current_tape() {
  thread_local Tape tape;
  return tape;
}

bool grad_enabled() { return grad_mode; }

NoGradGuard::NoGradGuard() : previous_(grad_mode) { grad_mode = false; }
NoGradGuard::~NoGradGuard() { grad_mode = previous_; }

void backward(const Tensor& root) {
  if (root.numel() != 1) {
    throw AutogradError("backward: root must be a scalar, got shape " + shape_str(root.shape()));
  }
  auto impl = root.impl();
  Tape& tape = current_tape();
  if (!routes_to_node(*impl, tape)) {
    if (impl->requires_grad) {
      if (!impl->grad) impl->grad = std::make_unique<std::vector<double>>(1, 0.0);
      (*impl->grad)[0] += 1.0;
      return;
    }
    throw AutogradError("backward: root is detached from the active tape");
  }

  std::vector<std::vector<double>> node_grads(impl->node + 1);
  node_grads[impl->node] = {1.0};

  for (std::size_t i = impl->node + 1; i-- > 0;) {
    if (node_grads[i].empty()) continue;
    const detail::TapeNode& node = tape.node(i);
    std::vector<std::vector<double>> in_grads(node.inputs.size());
    for (std::size_t j = 0; j < node.inputs.size(); ++j) {
      if (needs_grad(*node.inputs[j], tape)) in_grads[j].assign(node.inputs[j]->data.size(), 0.0);
    }
    node.backward(node_grads[i], in_grads);
    for (std::size_t j = 0; j < node.inputs.size(); ++j) {
      auto& input = *node.inputs[j];
      if (in_grads[j].empty()) continue;
      if (routes_to_node(input, tape)) {
        accumulate(node_grads[input.node], in_grads[j]);
      } else if (input.requires_grad) {
        if (!input.grad) input.grad = std::make_unique<std::vector<double>>(input.data.size(), 0.0);
        for (std::size_t k = 0; k < in_grads[j].size(); ++k) (*input.grad)[k] += in_grads[j][k];
      }
    }
    // Each node is visited once; free its gradient early.
    std::vector<double>().swap(node_grads[i]);
  }
}

namespace detail {

Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   BackwardFn backward) {
  auto out = std::make_shared<TensorImpl>();
  out->shape = std::move(shape);
  out->data = std::move(data);
  Tape& tape = current_tape();
  out->stamp = tape.id();
  if (grad_mode) {
    bool any = false;
    for (const auto& t : inputs) any = any || needs_grad(*t.impl(), tape);
    if (any) {
      TapeNode node;
      node.inputs.reserve(inputs.size());
      for (const auto& t : inputs) node.inputs.push_back(t.impl());
      node.backward = std::move(backward);
      out->tape_id = tape.id();
      out->node = tape.record(std::move(node));
    }
  }
  return Tensor(std::move(out));
}

}  // namespace detail

}  // namespace ppl
