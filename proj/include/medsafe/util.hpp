#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace medsafe {

template <typename Range>
std::string join(const Range& items, std::string_view sep) {
  std::string out;
  bool first = true;
  for (const auto& item : items) {
    if (!first) out += sep;
    out += item;
    first = false;
  }
  return out;
}

/// Shortest round-trip decimal form ("41", "7.25", "0.1").
std::string format_number(double value);

/// Fixed-point with `digits` decimals, for CSV columns.
std::string format_fixed(double value, int digits);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);

std::string read_file(const std::string& path);
nlohmann::json read_json_file(const std::string& path);

/// Writes to a sibling temp file, fsyncs, then renames over `path`. Readers
/// see either the previous content or the new content, never a torn file.
void write_file_atomic(const std::string& path, std::string_view content);

std::string sha256_hex(std::string_view data);

/// CSV field quoting per RFC 4180 (quotes only when needed).
std::string csv_field(std::string_view s);

/// Seeded RNG with platform-independent draws (std distributions are
/// implementation-defined, these are not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  /// Uniform double in [0, 1).
  double uniform();
  bool bernoulli(double p) { return uniform() < p; }
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Index drawn from unnormalised non-negative weights.
  std::size_t weighted_index(const std::vector<double>& weights);

 private:
  std::mt19937_64 engine_;
};

}  // namespace medsafe
