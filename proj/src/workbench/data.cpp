#include "pplw/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "ppl/rng.hpp"
#include "pplw/config.hpp"

namespace pplw {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    std::string f = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    const auto b = f.find_first_not_of(" \t\r");
    const auto e = f.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : f.substr(b, e - b + 1));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ", ") + s;
  return out;
}

double spec_or(const std::map<std::string, double>& spec, const std::string& key, double fallback) {
  auto it = spec.find(key);
  return it == spec.end() ? fallback : it->second;
}

}  // namespace

const std::vector<double>& Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return values[i];
  throw DataError("no column '" + name + "'; available: " + join(columns));
}

bool Table::has(const std::string& name) const {
  return std::find(columns.begin(), columns.end(), name) != columns.end();
}

Table read_csv(const std::filesystem::path& path, const std::vector<std::string>& required) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file " + path.string());
  Table t;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_fields(line);
    if (!header) {
      t.columns = fields;
      t.values.assign(fields.size(), {});
      std::vector<std::string> missing;
      for (const auto& r : required)
        if (!t.has(r)) missing.push_back(r);
      if (!missing.empty()) {
        throw DataError(path.string() + ": missing column(s) " + join(missing) + "; expected " + join(required) +
                        ", found " + join(t.columns));
      }
      header = true;
      continue;
    }
    if (fields.size() != t.columns.size()) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(t.columns.size()) + " fields, found " + std::to_string(fields.size()));
    }
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const std::string& f = fields[i];
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (f.empty() || ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(v)) {
        throw DataError(path.string() + ":" + std::to_string(lineno) + ": column '" + t.columns[i] +
                        "' has non-numeric value '" + f + "'");
      }
      t.values[i].push_back(v);
    }
  }
  if (!header) throw DataError(path.string() + ": empty file, expected a header with " + join(required));
  return t;
}

Table synthetic_table(const std::string& generator, const std::map<std::string, double>& spec,
                      std::uint64_t fallback_seed) {
  const auto seed = spec.count("seed") ? static_cast<std::uint64_t>(spec.at("seed")) : ppl::mix64(fallback_seed ^ 0xDA7AULL);
  ppl::Rng rng(seed);
  const double n_raw = spec_or(spec, "n", 200);
  if (!(n_raw >= 0) || n_raw != std::floor(n_raw)) throw ConfigError("synthetic n must be a non-negative integer");
  const auto n = static_cast<std::size_t>(n_raw);
  Table t;
  if (generator == "linreg" || generator == "hetreg") {
    const double a = spec_or(spec, "a", 1.5), b = spec_or(spec, "b", -2.0);
    const double lo = spec_or(spec, "lo", -3.0), hi = spec_or(spec, "hi", 3.0);
    const double sigma = spec_or(spec, "sigma", 0.5);
    const double s0 = spec_or(spec, "s0", 0.1), s1 = spec_or(spec, "s1", 0.5);
    t.columns = {"x", "y"};
    t.values.assign(2, {});
    for (std::size_t i = 0; i < n; ++i) {
      const double x = lo + (hi - lo) * rng.uniform();
      const double s = generator == "linreg" ? sigma : s0 + s1 * std::abs(x);
      t.values[0].push_back(x);
      t.values[1].push_back(a + b * x + s * rng.normal());
    }
  } else if (generator == "blobs") {
    const double sep = spec_or(spec, "sep", 2.5);
    t.columns = {"x1", "x2", "label"};
    t.values.assign(3, {});
    for (std::size_t i = 0; i < n; ++i) {
      const double label = static_cast<double>(i % 2);
      const double c = label == 0.0 ? -sep / 2 : sep / 2;
      t.values[0].push_back(c + rng.normal());
      t.values[1].push_back(c + rng.normal());
      t.values[2].push_back(label);
    }
  } else {
    throw ConfigError("no synthetic generator for '" + generator + "'");
  }
  return t;
}

}  // namespace pplw
