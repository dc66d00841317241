#include "ppl/manifest.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "ppl/error.hpp"
#include "ppl/serialize.hpp"

namespace ppl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kBlobMagic[8] = {'P', 'P', 'L', 'W', 'B', 'L', 'O', 'B'};

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::vector<std::uint8_t>& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[at + i]) << (8 * i);
  return v;
}

void capture_into(const PModule& m, Manifest& out) {
  out.posteriors[m.scope()] = posterior_label(m);
  for (const auto& [name, t] : m.own_parameters()) out.tensors.push_back({m.scoped(name), "parameter", t.detach()});
  for (const auto& [name, t] : m.posterior().named_parameters()) {
    out.tensors.push_back({m.scoped(name), "guide", t.detach()});
  }
  for (const auto& leaf : m.rv_names()) {
    const RandomVariable& rv = m.rv(leaf);
    if (!rv.observed) out.tensors.push_back({rv.scope, "value", rv.value.detach()});
  }
  for (const auto& [name, child] : m.submodules()) capture_into(*child, out);
}

void for_each_module(PModule& m, const std::function<void(PModule&)>& fn) {
  fn(m);
  for (auto& [name, child] : m.submodules()) for_each_module(*child, fn);
}

void copy_into(Tensor live, const TensorRecord& rec) {
  if (live.shape() != rec.value.shape()) {
    throw ModelError("saved " + rec.role + " '" + rec.scope + "' has shape " + shape_str(rec.value.shape()) +
                     ", model expects " + shape_str(live.shape()));
  }
  auto dst = live.mutable_data();
  auto src = rec.value.data();
  std::copy(src.begin(), src.end(), dst.begin());
}

}  // namespace

const TensorRecord* Manifest::find(const std::string& scope, const std::string& role) const {
  for (const auto& r : tensors)
    if (r.scope == scope && r.role == role) return &r;
  return nullptr;
}

std::vector<const TensorRecord*> Manifest::with_role(const std::string& role) const {
  std::vector<const TensorRecord*> out;
  for (const auto& r : tensors)
    if (r.role == role) out.push_back(&r);
  return out;
}

std::string posterior_label(const PModule& m) {
  if (m.rv_names().empty() && m.posterior().guide_count() == 0) return "deterministic";
  return m.posterior().describe();
}

Manifest capture(const PModule& m) {
  Manifest out;
  capture_into(m, out);
  return out;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_manifest(const Manifest& manifest, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<std::uint8_t> blob(kBlobMagic, kBlobMagic + 8);
  put_u64(blob, manifest.seed);
  put_u64(blob, manifest.config_hash);

  json entries = json::array();
  for (const auto& rec : manifest.tensors) {
    const auto bytes = encode_tensor(rec.value);
    entries.push_back({{"scope", rec.scope},
                       {"role", rec.role},
                       {"shape", rec.value.shape()},
                       {"offset", blob.size()},
                       {"length", bytes.size()}});
    blob.insert(blob.end(), bytes.begin(), bytes.end());
  }
  json posteriors = json::object();
  for (const auto& [scope, label] : manifest.posteriors) posteriors[scope] = label;
  const json doc = {{"format", "pplw-manifest"},
                    {"version", 1},
                    {"model", manifest.model},
                    {"seed", manifest.seed},
                    {"config_hash", hex64(manifest.config_hash)},
                    {"blob", "tensors.bin"},
                    {"posteriors", posteriors},
                    {"tensors", entries},
                    {"meta", manifest.meta}};

  std::ofstream bin(dir / "tensors.bin", std::ios::binary | std::ios::trunc);
  bin.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  std::ofstream js(dir / "manifest.json", std::ios::trunc);
  js << doc.dump(2) << "\n";
  if (!bin || !js) throw SerializationError("failed writing manifest to " + dir.string());
}

Manifest read_manifest(const fs::path& dir) {
  std::ifstream js(dir / "manifest.json");
  if (!js) throw SerializationError("cannot open " + (dir / "manifest.json").string());
  json doc;
  try {
    js >> doc;
  } catch (const json::exception& e) {
    throw SerializationError("malformed manifest.json: " + std::string(e.what()));
  }
  std::ifstream bin(dir / "tensors.bin", std::ios::binary);
  if (!bin) throw SerializationError("cannot open " + (dir / "tensors.bin").string());
  std::vector<std::uint8_t> blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  if (blob.size() < 24 || !std::equal(kBlobMagic, kBlobMagic + 8, blob.begin())) {
    throw SerializationError("tensors.bin has a bad header");
  }

  Manifest out;
  try {
    if (doc.at("format") != "pplw-manifest" || doc.at("version") != 1) {
      throw SerializationError("unsupported manifest format");
    }
    out.model = doc.at("model").get<std::string>();
    out.seed = doc.at("seed").get<std::uint64_t>();
    out.config_hash = std::stoull(doc.at("config_hash").get<std::string>(), nullptr, 16);
    if (get_u64(blob, 8) != out.seed || get_u64(blob, 16) != out.config_hash) {
      throw SerializationError("tensors.bin does not belong to this manifest (seed or config hash differ)");
    }
    for (const auto& [scope, label] : doc.at("posteriors").items()) out.posteriors[scope] = label.get<std::string>();
    for (const auto& e : doc.at("tensors")) {
      const auto offset = e.at("offset").get<std::size_t>();
      const auto length = e.at("length").get<std::size_t>();
      if (offset + length > blob.size() || offset + length < offset) {
        throw SerializationError("tensor record '" + e.at("scope").get<std::string>() + "' lies outside tensors.bin");
      }
      std::vector<std::uint8_t> bytes(blob.begin() + static_cast<std::ptrdiff_t>(offset),
                                      blob.begin() + static_cast<std::ptrdiff_t>(offset + length));
      Tensor t = decode_tensor(bytes);
      if (t.shape() != e.at("shape").get<Shape>()) {
        throw SerializationError("shape mismatch for '" + e.at("scope").get<std::string>() + "'");
      }
      out.tensors.push_back({e.at("scope").get<std::string>(), e.at("role").get<std::string>(), t});
    }
    out.meta = doc.value("meta", json::object());
  } catch (const json::exception& e) {
    throw SerializationError("malformed manifest.json: " + std::string(e.what()));
  }
  return out;
}

void apply_posteriors(PModule& m, const Manifest& manifest) {
  for_each_module(m, [&](PModule& mod) {
    const auto it = manifest.posteriors.find(mod.scope());
    if (it == manifest.posteriors.end() || it->second == "deterministic") return;
    if (it->second == mod.posterior().describe()) return;
    mod.set_posterior(PosteriorSpec::parse(it->second).make());
  });
}

void restore(PModule& m, const Manifest& manifest) {
  for (const auto& p : m.parameters()) {
    const TensorRecord* rec = manifest.find(p.name, "parameter");
    if (!rec) rec = manifest.find(p.name, "guide");
    if (!rec) throw ModelError("manifest has no record for parameter '" + p.name + "'");
    copy_into(p.value, *rec);
  }
  for_each_module(m, [&](PModule& mod) {
    for (const auto& leaf : mod.rv_names()) {
      const RandomVariable& rv = mod.rv(leaf);
      if (rv.observed) continue;
      if (const TensorRecord* rec = manifest.find(rv.scope, "value")) mod.assign_value(leaf, rec->value.clone());
    }
  });
}

}  // namespace ppl
