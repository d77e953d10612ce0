#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "vimf/eval/metrics.hpp"

namespace vimf::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string model = "vi";  // svd | bias-mf | nn | vi | vi-side | sbm
  std::string name;          // run directory; empty derives one from model and hidden_layers
  std::string dataset;
  std::string format = "ml-100k";  // ml-100k | ml-1m | edges
  std::string dataset_name;        // empty uses format
  std::string genres;              // u.item path for vi-side
  std::size_t n_nodes = 0;         // edges only
  bool one_based = false;
  std::string splits_dir = "splits";
  std::string output_dir = "runs";

  std::size_t n_splits = 5;
  double test_fraction = 0.1;
  std::uint64_t seed = 0;

  std::size_t K = 10;
  std::size_t K_prime = 1;
  std::size_t D = 60;
  std::size_t hidden_layers = 0;
  std::size_t hidden_width = 50;
  std::size_t T = 7;
  double lambda = 0.0;
  std::vector<double> lambda_grid{0.01, 0.1, 1.0, 10.0};
  double validation_fraction = 0.1;
  double sigma = 1.0;
  double alpha = 1.0;
  std::string eta_init = "noise";
  std::size_t eta_warmup = 0;
  double prior_std = 1.0;
  bool optimize_priors = false;
  double init_std = 0.05;
  double init_log_std = -3.0;
  std::size_t rank = 60;
  std::string fill = "mean";

  double lr = 0.001;
  double stick_lr = 0.0;
  std::size_t batch_size = 0;
  std::size_t epochs = 2000;
  std::size_t mc_samples = 1;
  std::size_t eval_every = 0;

  bool operator==(const RunConfig&) const = default;

  bool graph() const { return format == "edges"; }
  std::string data_label() const { return dataset_name.empty() ? format : dataset_name; }
  std::string run_name() const {
    if (!name.empty()) return name;
    if (model == "nn" || model == "vi" || model == "vi-side") return model + std::to_string(hidden_layers);
    return model;
  }

  void validate() const;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <class T>
T parse_number(std::string_view key, std::string_view v) {
  v = trim(v);
  T out{};
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError("invalid value '" + std::string(v) + "' for '" + std::string(key) + "'");
  }
  return out;
}

inline bool parse_bool(std::string_view key, std::string_view v) {
  v = trim(v);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("invalid boolean '" + std::string(v) + "' for '" + std::string(key) + "'");
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

template <class T>
Field number(std::string key, T RunConfig::*member) {
  return {key,
          [member](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return format_double(c.*member);
            } else {
              return std::to_string(c.*member);
            }
          },
          [member, key](RunConfig& c, std::string_view v) { c.*member = parse_number<T>(key, v); }};
}

inline Field text(std::string key, std::string RunConfig::*member) {
  return {key, [member](const RunConfig& c) { return c.*member; },
          [member](RunConfig& c, std::string_view v) { c.*member = std::string(trim(v)); }};
}

inline Field flag(std::string key, bool RunConfig::*member) {
  return {key, [member](const RunConfig& c) { return std::string(c.*member ? "true" : "false"); },
          [member, key](RunConfig& c, std::string_view v) { c.*member = parse_bool(key, v); }};
}

inline Field number_list(std::string key, std::vector<double> RunConfig::*member) {
  return {key,
          [member](const RunConfig& c) {
            std::string s;
            for (std::size_t i = 0; i < (c.*member).size(); ++i) {
              if (i > 0) s += ',';
              s += format_double((c.*member)[i]);
            }
            return s;
          },
          [member, key](RunConfig& c, std::string_view v) {
            std::vector<double> out;
            v = trim(v);
            while (!v.empty()) {
              const auto comma = v.find(',');
              out.push_back(parse_number<double>(key, v.substr(0, comma)));
              if (comma == std::string_view::npos) break;
              v.remove_prefix(comma + 1);
            }
            c.*member = std::move(out);
          }};
}

}  // namespace detail

/// Every config key in emission order.
inline const std::vector<detail::Field>& config_fields() {
  using namespace detail;
  static const std::vector<Field> fields{
      text("model", &RunConfig::model),
      text("name", &RunConfig::name),
      text("dataset", &RunConfig::dataset),
      text("format", &RunConfig::format),
      text("dataset_name", &RunConfig::dataset_name),
      text("genres", &RunConfig::genres),
      number("n_nodes", &RunConfig::n_nodes),
      flag("one_based", &RunConfig::one_based),
      text("splits_dir", &RunConfig::splits_dir),
      text("output_dir", &RunConfig::output_dir),
      number("n_splits", &RunConfig::n_splits),
      number("test_fraction", &RunConfig::test_fraction),
      number("seed", &RunConfig::seed),
      number("K", &RunConfig::K),
      number("K_prime", &RunConfig::K_prime),
      number("D", &RunConfig::D),
      number("hidden_layers", &RunConfig::hidden_layers),
      number("hidden_width", &RunConfig::hidden_width),
      number("T", &RunConfig::T),
      number("lambda", &RunConfig::lambda),
      number_list("lambda_grid", &RunConfig::lambda_grid),
      number("validation_fraction", &RunConfig::validation_fraction),
      number("sigma", &RunConfig::sigma),
      number("alpha", &RunConfig::alpha),
      text("eta_init", &RunConfig::eta_init),
      number("eta_warmup", &RunConfig::eta_warmup),
      number("prior_std", &RunConfig::prior_std),
      flag("optimize_priors", &RunConfig::optimize_priors),
      number("init_std", &RunConfig::init_std),
      number("init_log_std", &RunConfig::init_log_std),
      number("rank", &RunConfig::rank),
      text("fill", &RunConfig::fill),
      number("lr", &RunConfig::lr),
      number("stick_lr", &RunConfig::stick_lr),
      number("batch_size", &RunConfig::batch_size),
      number("epochs", &RunConfig::epochs),
      number("mc_samples", &RunConfig::mc_samples),
      number("eval_every", &RunConfig::eval_every),
  };
  return fields;
}

inline void set_field(RunConfig& c, std::string_view key, std::string_view value) {
  for (const auto& f : config_fields()) {
    if (f.key == key) {
      f.set(c, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

/// `key = value` lines; '#' and ';' start comments, `[section]` headers are
/// ignored. Keys not set keep their defaults (or the values in `base`).
inline RunConfig parse_config(std::istream& in, RunConfig base = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view v = line;
    if (const auto c = v.find_first_of("#;"); c != std::string_view::npos) v = v.substr(0, c);
    v = detail::trim(v);
    if (v.empty() || v.front() == '[') continue;
    const auto eq = v.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    try {
      set_field(base, detail::trim(v.substr(0, eq)), v.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return parse_config(in, std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline std::string emit_config(const RunConfig& c) {
  std::string out;
  for (const auto& f : config_fields()) out += f.key + " = " + f.get(c) + "\n";
  return out;
}

inline std::string config_hash(const RunConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(eval::fnv1a(emit_config(c))));
  return buf;
}

inline void RunConfig::validate() const {
  const std::vector<std::string> models{"svd", "bias-mf", "nn", "vi", "vi-side", "sbm"};
  if (std::find(models.begin(), models.end(), model) == models.end()) {
    throw ConfigError("unknown model '" + model + "'");
  }
  if (format != "ml-100k" && format != "ml-1m" && format != "edges") {
    throw ConfigError("unknown format '" + format + "' (ml-100k, ml-1m or edges)");
  }
  if (dataset.empty()) throw ConfigError("dataset path is required");
  if (model == "sbm" && !graph()) throw ConfigError("model sbm requires a graph dataset (format = edges)");
  if (model == "vi-side") {
    if (format != "ml-100k") throw ConfigError("model vi-side requires format ml-100k");
    if (genres.empty()) throw ConfigError("model vi-side requires a genres file");
  }
  if (graph() && n_nodes < 2) throw ConfigError("format edges requires n_nodes >= 2");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
  if (n_splits == 0) throw ConfigError("n_splits must be positive");
  if (model == "bias-mf" && hidden_layers != 0) throw ConfigError("bias-mf has no hidden layers; use model nn");
  if (model == "bias-mf" || model == "nn") {
    if (lambda_grid.empty() && lambda < 0.0) throw ConfigError("lambda must be non-negative");
    for (double l : lambda_grid)
      if (l < 0.0) throw ConfigError("lambda_grid entries must be non-negative");
    if (!lambda_grid.empty() && !(validation_fraction > 0.0 && validation_fraction < 1.0)) {
      throw ConfigError("validation_fraction must lie in (0, 1)");
    }
  }
  if (K == 0 || K_prime == 0) throw ConfigError("K and K_prime must be positive");
  if (hidden_layers > 0 && hidden_width == 0) throw ConfigError("hidden_width must be positive");
  if (model == "sbm" && T == 0) throw ConfigError("T must be positive");
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (!(prior_std > 0.0)) throw ConfigError("prior_std must be positive");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (stick_lr < 0.0) throw ConfigError("stick_lr must be non-negative");
  if (mc_samples == 0) throw ConfigError("mc_samples must be positive");
  if (eta_init != "noise" && eta_init != "spectral") throw ConfigError("eta_init must be noise or spectral");
  if (fill != "mean" && fill != "zero") throw ConfigError("fill must be mean or zero");
  if (model == "svd" && rank == 0) throw ConfigError("rank must be positive");
}

}  // namespace vimf::cli
