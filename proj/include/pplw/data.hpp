#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace pplw {

/// Column-major numeric table.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> values;  // one vector per column
  std::size_t rows() const { return values.empty() ? 0 : values.front().size(); }
  const std::vector<double>& column(const std::string& name) const;
  bool has(const std::string& name) const;
};

/// Reads a comma-separated file with a header row. Every name in `required`
/// must be present; other columns are kept. Lines starting with '#' are
/// skipped. Numbers parse independently of the process locale. Throws
/// DataError naming the line of the first malformed row.
Table read_csv(const std::filesystem::path& path, const std::vector<std::string>& required);

/// Synthetic data for a model. Keys in `spec` override generator defaults;
/// "seed" picks the data stream, otherwise `fallback_seed` does.
///   linreg:  x ~ U(lo, hi), y = a + b x + sigma e          (a=1.5 b=-2 sigma=0.5 n=200 lo=-3 hi=3)
///   hetreg:  y = a + b x + (s0 + s1 |x|) e                 (a=1.5 b=-2 s0=0.1 s1=0.5 n=200)
///   blobs:   two Gaussian classes at +-(sep/2, sep/2)      (n=200 sep=2.5)
Table synthetic_table(const std::string& generator, const std::map<std::string, double>& spec,
                      std::uint64_t fallback_seed);

}  // namespace pplw
