#include "pplw/models.hpp"

#include <charconv>

#include "ppl/distributions.hpp"

namespace pplw {

using ppl::Tensor;

namespace {

void linreg_pass(ppl::PModule& m) {
  Tensor x = m.get("x");
  Tensor b = m.set("b", ppl::Normal(0.0, 3.0));
  Tensor a = m.set("a", ppl::Normal(0.0, 3.0));
  Tensor sigma = m.set("sigma", ppl::HalfNormal(1.0));
  m.set("y", ppl::Normal(b * x + a, sigma));
}

void hetreg_pass(ppl::PModule& m) {
  Tensor x = m.get("x");
  Tensor b = m.set("b", ppl::Normal(0.0, 3.0));
  Tensor a = m.set("a", ppl::Normal(0.0, 3.0));
  Tensor s0 = m.set("s0", ppl::HalfNormal(1.0));
  Tensor s1 = m.set("s1", ppl::HalfNormal(1.0));
  m.set("y", ppl::Normal(b * x + a, s0 + s1 * ppl::abs(x)));
}

void classifier_pass(ppl::PModule& m) {
  auto net = std::static_pointer_cast<ppl::nn::Layer>(m.submodule("net"));
  m.set("y", ppl::Categorical(net->forward(m.get("x"))));
}

std::shared_ptr<ppl::nn::Sequential> make_mlp(std::size_t hidden, bool bayesian) {
  auto net = std::make_shared<ppl::nn::Sequential>();
  if (bayesian) {
    net->push_back(std::make_shared<ppl::nn::Linear>(2, hidden, ppl::nn::PriorSpec{}));
    net->push_back(std::make_shared<ppl::nn::ReLU>());
    net->push_back(std::make_shared<ppl::nn::Linear>(hidden, 2, ppl::nn::PriorSpec{}));
  } else {
    net->push_back(std::make_shared<ppl::nn::Linear>(2, hidden));
    net->push_back(std::make_shared<ppl::nn::ReLU>());
    net->push_back(std::make_shared<ppl::nn::Linear>(hidden, 2));
  }
  return net;
}

}  // namespace

Tensor Workbench::inputs(const Table& table) const {
  const std::size_t n = table.rows();
  if (features.size() == 1) return Tensor::from_data(table.column(features[0]), {n});
  std::vector<double> data(n * features.size());
  for (std::size_t j = 0; j < features.size(); ++j) {
    const auto& col = table.column(features[j]);
    for (std::size_t i = 0; i < n; ++i) data[i * features.size() + j] = col[i];
  }
  return Tensor::from_data(std::move(data), {n, features.size()});
}

Tensor Workbench::targets(const Table& table) const {
  const auto& col = table.column(target);
  if (classification) {
    for (std::size_t i = 0; i < col.size(); ++i) {
      if (col[i] != 0.0 && col[i] != 1.0) {
        throw DataError("column '" + target + "' row " + std::to_string(i + 1) + " holds " + std::to_string(col[i]) +
                        "; labels must be 0 or 1");
      }
    }
  }
  return Tensor::from_data(col, {col.size()});
}

std::shared_ptr<ppl::nn::Sequential> Workbench::net() const {
  for (const auto& [name, child] : root->submodules())
    if (name == "net") return std::dynamic_pointer_cast<ppl::nn::Sequential>(child);
  return nullptr;
}

Workbench build_model(const RunConfig& cfg) {
  Workbench wb;
  wb.name = cfg.model;
  wb.root = std::make_shared<ppl::PModule>();
  if (cfg.model == "linreg" || cfg.model == "hetreg") {
    wb.pass = cfg.model == "linreg" ? linreg_pass : hetreg_pass;
    wb.features = {"x"};
    wb.target = "y";
    wb.generator = cfg.model;
  } else if (cfg.model == "mlp-classifier" || cfg.model == "lifted-mlp") {
    wb.root->add_module("net", make_mlp(cfg.hidden, cfg.model == "mlp-classifier" && !cfg.deterministic));
    wb.pass = classifier_pass;
    wb.features = {"x1", "x2"};
    wb.target = "label";
    wb.generator = "blobs";
    wb.classification = true;
  } else if (cfg.model == "branching") {
    wb.pass = [](ppl::PModule& m) { branching_forward(m, m.get("x")); };
    wb.features = {"x"};
    wb.target = "y";
  } else {
    throw ConfigError("unknown model '" + cfg.model + "'");
  }
  return wb;
}

Tensor branching_forward(ppl::PModule& m, const Tensor& data) {
  const ppl::Distribution prior =
      m.rng().normal() > 0.0 ? ppl::Distribution(ppl::Normal(-1.0, 1.0)) : ppl::Distribution(ppl::Normal(1.0, 10.0));
  m["weight"] = prior;
  return data * ppl::exp(m["weight"]);
}

std::vector<std::size_t> parse_layer_list(const std::string& which, std::size_t size) {
  std::vector<std::size_t> out;
  if (which == "all") {
    for (std::size_t i = 0; i < size; ++i) out.push_back(i);
    return out;
  }
  std::size_t start = 0;
  while (start <= which.size()) {
    const auto comma = which.find(',', start);
    const std::string item = which.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size() || v >= size) {
      throw ConfigError("layer list '" + which + "': '" + item + "' is not an index below " + std::to_string(size));
    }
    out.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<std::size_t> lift_layers(Workbench& wb, const std::string& which, double prior_scale) {
  auto net = wb.net();
  if (!net) throw ConfigError("model '" + wb.name + "' has no network to lift");
  const auto indices = parse_layer_list(which, net->size());
  for (std::size_t i : indices) net->replace(i, ppl::nn::lift(*net->at(i), prior_scale));
  return indices;
}

}  // namespace pplw
