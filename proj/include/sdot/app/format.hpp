#pragma once

// Deterministic text output: shortest round-trip numbers, CSV tables and JSON-lines records.

#include "sdot/core.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace sdot::app {

inline std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <std::integral T>
std::string num(T v) {
  return std::to_string(v);
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int k = 15; k >= 0; --k, v >>= 4) out[std::size_t(k)] = digits[v & 0xf];
  return out;
}

/// Provenance carried by every output file.
struct Provenance {
  std::string config_hash;
  std::uint64_t seed = 0;
};

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  void add(std::vector<std::string> row) {
    if (row.size() != columns_.size()) fail(Errc::invalid_argument, "row width differs from header");
    rows_.push_back(std::move(row));
  }

  std::size_t size() const { return rows_.size(); }

  void write(const std::filesystem::path& path, const Provenance& prov) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "# config_hash=" << prov.config_hash << " seed=" << prov.seed << '\n';
    write_row(out, columns_);
    for (const auto& r : rows_) write_row(out, r);
  }

 private:
  static void write_row(std::ofstream& out, const std::vector<std::string>& row) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k) out << ',';
      const bool quote = row[k].find_first_of(",\"\n") != std::string::npos;
      if (!quote) {
        out << row[k];
        continue;
      }
      out << '"';
      for (char c : row[k]) out << (c == '"' ? "\"\"" : std::string(1, c));
      out << '"';
    }
    out << '\n';
  }

  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

/// One JSON object per draw, each stamped with provenance.
inline void write_draws_jsonl(const std::filesystem::path& path, const Provenance& prov, const std::string& tag,
                              const std::string& backend, std::uint64_t draw_seed, const std::vector<double>& draws) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (std::size_t k = 0; k < draws.size(); ++k) {
    nlohmann::ordered_json rec;
    rec["config_hash"] = prov.config_hash;
    rec["seed"] = prov.seed;
    rec["tag"] = tag;
    rec["backend"] = backend;
    rec["draw_seed"] = draw_seed;
    rec["index"] = k;
    rec["value"] = draws[k];
    out << rec.dump() << '\n';
  }
}

}  // namespace sdot::app
