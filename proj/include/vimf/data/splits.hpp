#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vimf/core/rng.hpp"

namespace vimf::data {

struct Split {
  std::uint64_t seed = 0;
  std::vector<std::size_t> train;  // sorted
  std::vector<std::size_t> test;   // sorted

  bool operator==(const Split&) const = default;
};

inline std::size_t test_size(std::size_t n_records, double test_fraction) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("make_splits: test_fraction must lie in (0, 1)");
  }
  return static_cast<std::size_t>(std::floor(static_cast<double>(n_records) * test_fraction));
}

/// Split k shuffles 0..n-1 with seed master_seed + k and holds out the first
/// floor(n * test_fraction) positions.
inline Split make_split(std::size_t n_records, double test_fraction, std::uint64_t seed) {
  const std::size_t n_test = test_size(n_records, test_fraction);
  if (n_records == 0) throw std::invalid_argument("make_splits: empty dataset");
  if (n_test == 0) {
    throw std::invalid_argument("make_splits: test set would be empty (floor(" + std::to_string(n_records) + " * " +
                                std::to_string(test_fraction) + ") = 0)");
  }
  std::vector<std::size_t> order(n_records);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  Split s;
  s.seed = seed;
  s.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

inline std::vector<Split> make_splits(std::size_t n_records, std::size_t n_splits, double test_fraction,
                                      std::uint64_t master_seed) {
  std::vector<Split> out;
  for (std::size_t k = 0; k < n_splits; ++k) out.push_back(make_split(n_records, test_fraction, master_seed + k));
  return out;
}

/// Complement of `test` in 0..n_records-1.
inline std::vector<std::size_t> complement(std::span<const std::size_t> test, std::size_t n_records) {
  std::vector<bool> held(n_records, false);
  for (std::size_t i : test) {
    if (i >= n_records) throw std::invalid_argument("split index " + std::to_string(i) + " out of range");
    if (held[i]) throw std::invalid_argument("split lists index " + std::to_string(i) + " twice");
    held[i] = true;
  }
  std::vector<std::size_t> out;
  out.reserve(n_records - test.size());
  for (std::size_t i = 0; i < n_records; ++i)
    if (!held[i]) out.push_back(i);
  return out;
}

template <class T>
std::vector<T> select(std::span<const T> records, std::span<const std::size_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(records[i]);
  return out;
}

inline nlohmann::json split_to_json(const Split& s) { return {{"seed", s.seed}, {"test_indices", s.test}}; }

inline Split split_from_json(const nlohmann::json& j, std::size_t n_records) {
  Split s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.test = j.at("test_indices").get<std::vector<std::size_t>>();
  std::sort(s.test.begin(), s.test.end());
  s.train = complement(s.test, n_records);
  return s;
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << j.dump(1) << '\n';
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

inline nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("invalid JSON in '" + path + "': " + e.what());
  }
}

}  // namespace vimf::data
