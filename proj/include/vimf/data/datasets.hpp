#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vimf/core/errors.hpp"
#include "vimf/core/tensor.hpp"
#include "vimf/mf/nnmf.hpp"
#include "vimf/sbm/sbm.hpp"

namespace vimf::data {

using mf::Observation;
using sbm::Pair;

/// Dense 0-based ids assigned in increasing order of the raw ids.
class IdMap {
 public:
  IdMap() = default;
  explicit IdMap(const std::set<std::int64_t>& raw) : raw_(raw.begin(), raw.end()) {
    for (std::size_t k = 0; k < raw_.size(); ++k) index_.emplace(raw_[k], k);
  }
  std::size_t size() const { return raw_.size(); }
  std::int64_t raw(std::size_t dense) const { return raw_.at(dense); }
  std::optional<std::size_t> dense(std::int64_t raw) const {
    const auto it = index_.find(raw);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  const std::vector<std::int64_t>& raw_ids() const { return raw_; }

 private:
  std::vector<std::int64_t> raw_;
  std::map<std::int64_t, std::size_t> index_;
};

struct RatingsDataset {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::vector<Observation> triples;
  IdMap users;
  IdMap items;
  std::optional<Tensor> genres;  // n_items x 19
  std::vector<std::string> warnings;
};

struct GraphDataset {
  std::size_t n_nodes = 0;
  std::vector<Pair> pairs;  // all C(n, 2) pairs, i < j, row-major order
  std::size_t duplicate_edges = 0;
  std::size_t self_loops = 0;
  std::vector<std::string> warnings;
};

inline constexpr std::size_t kGenreCount = 19;

namespace detail {

inline std::vector<std::string_view> split(std::string_view line, std::string_view sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + sep.size();
  }
}

inline std::vector<std::string_view> split_whitespace(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

inline std::int64_t parse_int(std::string_view s, std::size_t line, const char* what) {
  s = trim(s);
  std::int64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ParseError(std::string("expected integer ") + what + ", got '" + std::string(s) + "'", line);
  }
  return v;
}

inline double parse_double(std::string_view s, std::size_t line, const char* what) {
  s = trim(s);
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ParseError(std::string("expected number ") + what + ", got '" + std::string(s) + "'", line);
  }
  return v;
}

inline std::ifstream open(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return in;
}

struct RawRating {
  std::int64_t user;
  std::int64_t item;
  double rating;
  std::size_t line;
};

inline RatingsDataset build_ratings(std::vector<RawRating> raw) {
  std::set<std::int64_t> users;
  std::set<std::int64_t> items;
  for (const RawRating& r : raw) {
    users.insert(r.user);
    items.insert(r.item);
  }
  RatingsDataset d;
  d.users = IdMap(users);
  d.items = IdMap(items);
  d.n_users = d.users.size();
  d.n_items = d.items.size();
  std::set<std::pair<std::size_t, std::size_t>> seen;
  d.triples.reserve(raw.size());
  for (const RawRating& r : raw) {
    const std::size_t u = *d.users.dense(r.user);
    const std::size_t m = *d.items.dense(r.item);
    if (!seen.emplace(u, m).second) {
      throw ParseError("duplicate rating for user " + std::to_string(r.user) + ", item " + std::to_string(r.item),
                       r.line);
    }
    d.triples.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(m), r.rating});
  }
  return d;
}

inline RatingsDataset load_ratings(std::istream& in, std::string_view sep, std::size_t expected_fields) {
  std::vector<RawRating> raw;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    const auto f = split(view, sep);
    if (f.size() != expected_fields) {
      throw ParseError("expected " + std::to_string(expected_fields) + " fields, got " + std::to_string(f.size()),
                       lineno);
    }
    const double rating = parse_double(f[2], lineno, "rating");
    if (!(rating >= 1.0 && rating <= 5.0)) throw ParseError("rating outside [1, 5]", lineno);
    raw.push_back({parse_int(f[0], lineno, "user id"), parse_int(f[1], lineno, "item id"), rating, lineno});
  }
  return build_ratings(std::move(raw));
}

inline void check_counts(RatingsDataset& d, std::size_t users, std::size_t items, std::size_t ratings,
                         const char* name) {
  if (d.triples.empty()) return;
  if (d.n_users != users || d.n_items != items || d.triples.size() != ratings) {
    std::ostringstream os;
    os << name << ": expected (" << users << " users, " << items << " items, " << ratings << " ratings), got ("
       << d.n_users << ", " << d.n_items << ", " << d.triples.size() << ")";
    d.warnings.push_back(os.str());
  }
}

}  // namespace detail

/// Tab-separated `user item rating timestamp` lines.
inline RatingsDataset parse_movielens_100k(std::istream& in) {
  RatingsDataset d = detail::load_ratings(in, "\t", 4);
  detail::check_counts(d, 943, 1682, 100000, "MovieLens 100K");
  return d;
}

inline RatingsDataset load_movielens_100k(const std::string& path) {
  auto in = detail::open(path);
  return parse_movielens_100k(in);
}

/// `user::item::rating::timestamp` lines.
inline RatingsDataset parse_movielens_1m(std::istream& in) {
  RatingsDataset d = detail::load_ratings(in, "::", 4);
  detail::check_counts(d, 6040, 3706, 1000209, "MovieLens 1M");
  return d;
}

inline RatingsDataset load_movielens_1m(const std::string& path) {
  auto in = detail::open(path);
  return parse_movielens_1m(in);
}

/// Pipe-separated item records whose last 19 fields are 0/1 genre flags.
/// Rows follow `items` (the rating remapping); rated items with no record
/// keep a zero row and produce a warning.
inline Tensor parse_genres_100k(std::istream& in, const IdMap& items, std::vector<std::string>* warnings = nullptr) {
  Tensor g = Tensor::matrix(items.size(), kGenreCount);
  std::vector<bool> found(items.size(), false);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view view = detail::trim(line);
    if (view.empty()) continue;
    const auto f = detail::split(view, "|");
    if (f.size() < kGenreCount + 1) {
      throw ParseError("expected an item id and " + std::to_string(kGenreCount) + " genre flags, got " +
                           std::to_string(f.size()) + " fields",
                       lineno);
    }
    if (f.size() != kGenreCount + 5) {
      throw ParseError("expected " + std::to_string(kGenreCount) + " trailing genre flags after 5 item fields, got " +
                           std::to_string(f.size()) + " fields",
                       lineno);
    }
    const std::int64_t id = detail::parse_int(f[0], lineno, "item id");
    const auto dense = items.dense(id);
    if (!dense) continue;
    for (std::size_t k = 0; k < kGenreCount; ++k) {
      const std::string_view flag = detail::trim(f[f.size() - kGenreCount + k]);
      if (flag != "0" && flag != "1") throw ParseError("genre flag must be 0 or 1", lineno);
      g(*dense, k) = flag == "1" ? 1.0 : 0.0;
    }
    found[*dense] = true;
  }
  const auto missing = static_cast<std::size_t>(std::count(found.begin(), found.end(), false));
  if (missing > 0 && warnings != nullptr) {
    warnings->push_back(std::to_string(missing) + " rated items have no genre record");
  }
  return g;
}

inline Tensor load_genres_100k(const std::string& path, const IdMap& items,
                               std::vector<std::string>* warnings = nullptr) {
  auto in = detail::open(path);
  return parse_genres_100k(in, items, warnings);
}

/// Whitespace-separated `i j` lines for linked pairs; '#' starts a comment.
/// Every unordered pair is materialized, links get x = 1.
inline GraphDataset parse_edge_list(std::istream& in, std::size_t n_nodes, bool one_based) {
  if (n_nodes < 2) throw std::invalid_argument("load_edge_list: need at least two nodes");
  std::set<std::pair<std::size_t, std::size_t>> edges;
  GraphDataset g;
  g.n_nodes = n_nodes;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    const auto f = detail::split_whitespace(view);
    if (f.empty()) continue;
    if (f.size() != 2) throw ParseError("expected two node indices", lineno);
    std::int64_t a = detail::parse_int(f[0], lineno, "node index");
    std::int64_t b = detail::parse_int(f[1], lineno, "node index");
    if (one_based) {
      --a;
      --b;
    }
    if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= n_nodes || static_cast<std::size_t>(b) >= n_nodes) {
      throw ParseError("node index out of range [" + std::string(one_based ? "1" : "0") + ", " +
                           std::to_string(one_based ? n_nodes : n_nodes - 1) + "]",
                       lineno);
    }
    if (a == b) {
      ++g.self_loops;
      continue;
    }
    const std::pair<std::size_t, std::size_t> key{static_cast<std::size_t>(std::min(a, b)),
                                                   static_cast<std::size_t>(std::max(a, b))};
    if (!edges.insert(key).second) ++g.duplicate_edges;
  }
  if (g.duplicate_edges > 0) g.warnings.push_back(std::to_string(g.duplicate_edges) + " duplicate edges dropped");
  if (g.self_loops > 0) g.warnings.push_back(std::to_string(g.self_loops) + " self-loops dropped");
  g.pairs.reserve(n_nodes * (n_nodes - 1) / 2);
  for (std::size_t i = 0; i < n_nodes; ++i) {
    for (std::size_t j = i + 1; j < n_nodes; ++j) {
      g.pairs.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                         edges.contains({i, j}) ? 1.0 : 0.0});
    }
  }
  return g;
}

inline GraphDataset load_edge_list(const std::string& path, std::size_t n_nodes, bool one_based = false) {
  auto in = detail::open(path);
  return parse_edge_list(in, n_nodes, one_based);
}

/// Ratings view of a graph: each unordered pair appears in both orientations.
inline std::vector<Observation> symmetric_observations(std::span<const Pair> pairs) {
  std::vector<Observation> out;
  out.reserve(2 * pairs.size());
  for (const Pair& e : pairs) {
    out.push_back({e.i, e.j, e.x});
    out.push_back({e.j, e.i, e.x});
  }
  return out;
}

}  // namespace vimf::data
