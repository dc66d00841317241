#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ppl/inference.hpp"
#include "ppl/module.hpp"
#include "ppl/nn.hpp"
#include "pplw/config.hpp"
#include "pplw/data.hpp"

namespace pplw {

/// A model the workbench knows how to fit and query. The pass reads the
/// buffer "x" and assigns the random variable "y" at the root.
struct Workbench {
  std::string name;
  std::shared_ptr<ppl::PModule> root;
  ppl::ModelPass pass;
  std::vector<std::string> features;
  std::string target;
  std::string generator;  // synthetic data generator
  bool classification = false;

  /// Feature columns as the tensor the pass expects in "x".
  ppl::Tensor inputs(const Table& table) const;
  ppl::Tensor targets(const Table& table) const;
  void set_inputs(const ppl::Tensor& x) { root->set_buffer("x", x); }
  /// The network of the mlp models (child "net" of the root), else null.
  std::shared_ptr<ppl::nn::Sequential> net() const;
};

/// Builds the model named in the config; constructor randomness comes from
/// the thread's init generator, so call ppl::manual_seed first.
Workbench build_model(const RunConfig& cfg);

/// weight ~ Normal(-1, 1) or Normal(1, 10) on a fair coin from the module
/// stream, then returns data * exp(weight).
ppl::Tensor branching_forward(ppl::PModule& m, const ppl::Tensor& data);

/// Lifts the listed layers of the workbench network ("all" lifts the whole
/// network). Returns the indices lifted.
std::vector<std::size_t> lift_layers(Workbench& wb, const std::string& which, double prior_scale);

/// Parses "all" or "0,2"; throws ConfigError for indices outside [0, size).
std::vector<std::size_t> parse_layer_list(const std::string& which, std::size_t size);

}  // namespace pplw
