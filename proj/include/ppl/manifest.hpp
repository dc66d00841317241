#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ppl/module.hpp"
#include "ppl/tensor.hpp"

namespace ppl {

/// One saved tensor. Roles: "parameter" (module parameter), "guide" (guide
/// parameter), "value" (current value of a latent random variable), "extra".
struct TensorRecord {
  std::string scope;
  std::string role;
  Tensor value;
};

/// Saved model state: manifest.json (human readable index) plus tensors.bin,
/// which is "PPLWBLOB", u64 seed, u64 config hash, then back-to-back PTNS
/// tensor records whose offsets and lengths the JSON lists.
struct Manifest {
  std::string model;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  /// Module scope ("" is the root) -> posterior description or "deterministic".
  std::map<std::string, std::string> posteriors;
  std::vector<TensorRecord> tensors;
  /// Free-form metadata (configuration, architecture, fit summary).
  nlohmann::json meta = nlohmann::json::object();

  const TensorRecord* find(const std::string& scope, const std::string& role) const;
  std::vector<const TensorRecord*> with_role(const std::string& role) const;
};

/// "deterministic" for modules without random variables or guides, else
/// the posterior's description.
std::string posterior_label(const PModule& m);

/// Parameters, guide parameters, latent values and posterior kinds of the tree.
Manifest capture(const PModule& m);

void write_manifest(const Manifest& manifest, const std::filesystem::path& dir);
/// Throws SerializationError on malformed or inconsistent files.
Manifest read_manifest(const std::filesystem::path& dir);

/// Replaces posteriors whose recorded description differs from the live one.
void apply_posteriors(PModule& m, const Manifest& manifest);
/// Copies every saved parameter, guide parameter and latent value into the
/// live tree. Every live learnable tensor must have a record of equal shape.
void restore(PModule& m, const Manifest& manifest);

std::string hex64(std::uint64_t v);
std::uint64_t fnv1a64(const std::string& text);

}  // namespace ppl
