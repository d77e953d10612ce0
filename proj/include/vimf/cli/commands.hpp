#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vimf/cli/config.hpp"
#include "vimf/core/errors.hpp"
#include "vimf/core/rng.hpp"
#include "vimf/data/datasets.hpp"
#include "vimf/data/splits.hpp"
#include "vimf/eval/metrics.hpp"
#include "vimf/io/checkpoint.hpp"
#include "vimf/mf/nnmf.hpp"
#include "vimf/mf/train.hpp"
#include "vimf/sbm/sbm.hpp"
#include "vimf/sbm/spectral.hpp"
#include "vimf/sbm/svi.hpp"

namespace vimf::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kNumericalFailure = 3 };

/// A loaded dataset. Ratings records are triples, graph records are the
/// C(n, 2) node pairs; splits index into whichever applies.
struct LoadedData {
  bool graph = false;
  data::RatingsDataset ratings;
  data::GraphDataset graph_data;

  std::size_t n_records() const { return graph ? graph_data.pairs.size() : ratings.triples.size(); }
  std::size_t n_rows() const { return graph ? graph_data.n_nodes : ratings.n_users; }
  std::size_t n_cols() const { return graph ? graph_data.n_nodes : ratings.n_items; }
};

inline LoadedData load_data(const RunConfig& c, std::ostream& log) {
  LoadedData d;
  d.graph = c.graph();
  std::vector<std::string>* warnings = nullptr;
  if (d.graph) {
    d.graph_data = data::load_edge_list(c.dataset, c.n_nodes, c.one_based);
    warnings = &d.graph_data.warnings;
  } else {
    d.ratings = c.format == "ml-1m" ? data::load_movielens_1m(c.dataset) : data::load_movielens_100k(c.dataset);
    if (c.model == "vi-side") d.ratings.genres = data::load_genres_100k(c.genres, d.ratings.items, &d.ratings.warnings);
    warnings = &d.ratings.warnings;
  }
  for (const auto& w : *warnings) log << "warning: " << w << "\n";
  return d;
}

inline fs::path split_path(const RunConfig& c, std::size_t k) {
  return fs::path(c.splits_dir) / ("split_" + std::to_string(k) + ".json");
}

inline fs::path run_dir(const RunConfig& c) { return fs::path(c.output_dir) / c.data_label() / c.run_name(); }

inline fs::path checkpoint_path(const RunConfig& c, std::size_t k) {
  return run_dir(c) / ("split_" + std::to_string(k) + ".vmfk");
}

inline std::vector<std::size_t> resolve_splits(const RunConfig& c, const std::vector<std::size_t>& requested) {
  if (requested.empty()) {
    std::vector<std::size_t> all(c.n_splits);
    for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
    return all;
  }
  for (std::size_t k : requested) {
    if (k >= c.n_splits) {
      throw ConfigError("split " + std::to_string(k) + " out of range (n_splits = " + std::to_string(c.n_splits) + ")");
    }
  }
  return requested;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

/// Writes split_<k>.json for every split plus manifest.json.
inline int cmd_split(const RunConfig& c, std::ostream& log) {
  c.validate();
  const LoadedData d = load_data(c, log);
  if (d.n_records() == 0) throw ConfigError("dataset '" + c.dataset + "' is empty");
  const auto splits = data::make_splits(d.n_records(), c.n_splits, c.test_fraction, c.seed);
  fs::create_directories(c.splits_dir);
  nlohmann::json manifest{{"dataset", c.dataset},
                          {"format", c.format},
                          {"n_records", d.n_records()},
                          {"n_splits", c.n_splits},
                          {"test_fraction", c.test_fraction},
                          {"master_seed", c.seed},
                          {"files", nlohmann::json::array()}};
  for (std::size_t k = 0; k < splits.size(); ++k) {
    const fs::path p = split_path(c, k);
    data::write_json(p.string(), data::split_to_json(splits[k]));
    manifest["files"].push_back(p.filename().string());
    log << "wrote " << p.string() << " (" << splits[k].test.size() << " test records)\n";
  }
  data::write_json((fs::path(c.splits_dir) / "manifest.json").string(), manifest);
  return kOk;
}

inline data::Split read_split(const RunConfig& c, std::size_t k, std::size_t n_records) {
  const fs::path p = split_path(c, k);
  if (!fs::exists(p)) throw ConfigError("split file '" + p.string() + "' not found; run `vimf split` first");
  const fs::path manifest = fs::path(c.splits_dir) / "manifest.json";
  if (fs::exists(manifest)) {
    const auto m = data::read_json(manifest.string());
    if (m.at("n_records").get<std::size_t>() != n_records) {
      throw ConfigError("split manifest lists " + std::to_string(m.at("n_records").get<std::size_t>()) +
                        " records but the dataset has " + std::to_string(n_records));
    }
  }
  try {
    return data::split_from_json(data::read_json(p.string()), n_records);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

/// Ratings view of a record subset: triples, or both orientations of node pairs.
inline std::vector<mf::Observation> observations(const LoadedData& d, const std::vector<std::size_t>& idx) {
  if (!d.graph) return data::select<mf::Observation>(d.ratings.triples, idx);
  const auto pairs = data::select<sbm::Pair>(d.graph_data.pairs, idx);
  return data::symmetric_observations(pairs);
}

inline double clip_lo(const LoadedData& d) { return d.graph ? 0.0 : 1.0; }
inline double clip_hi(const LoadedData& d) { return d.graph ? 1.0 : 5.0; }

inline mf::NnmfHyperparams nnmf_hyperparams(const RunConfig& c, double lambda) {
  mf::NnmfHyperparams hp;
  hp.K = c.K;
  hp.K_prime = c.K_prime;
  hp.D = c.D;
  hp.hidden_layers = c.hidden_layers;
  hp.hidden_width = c.hidden_width;
  hp.side_info_width = c.model == "vi-side" ? data::kGenreCount : 0;
  hp.noise_sigma = c.sigma;
  hp.prior_std_U = hp.prior_std_V = hp.prior_std_U_prime = hp.prior_std_V_prime = hp.prior_std_theta = c.prior_std;
  hp.lambda = lambda;
  hp.init_std = c.init_std;
  hp.init_log_std = c.init_log_std;
  return hp;
}

inline sbm::SbmHyperparams sbm_hyperparams(const RunConfig& c) {
  sbm::SbmHyperparams hp;
  hp.T = c.T;
  hp.K = c.K;
  hp.K_prime = c.K_prime;
  hp.D = c.D;
  hp.hidden_layers = c.hidden_layers;
  hp.hidden_width = c.hidden_width;
  hp.prior_std_U = hp.prior_std_U_prime = hp.prior_std_theta = c.prior_std;
  hp.init_std = c.init_std;
  hp.init_log_std = c.init_log_std;
  hp.alpha_init = c.alpha;
  return hp;
}

inline mf::TrainConfig nnmf_train_config(const RunConfig& c, const LoadedData& d) {
  mf::TrainConfig t;
  t.epochs = c.epochs;
  t.batch_size = c.batch_size;
  t.adam.learning_rate = c.lr;
  t.mc_samples = c.mc_samples;
  t.eval_every = c.eval_every;
  t.optimize_priors = c.optimize_priors;
  t.clip_min = clip_lo(d);
  t.clip_max = clip_hi(d);
  return t;
}

struct TraceLine {
  std::size_t step = 0;
  double objective = 0.0;
  double validation_rmse = std::numeric_limits<double>::quiet_NaN();
};

inline std::string trace_csv(const std::vector<TraceLine>& rows) {
  std::ostringstream os;
  os << std::setprecision(17) << "step,objective,validation_rmse\n";
  for (const auto& r : rows) {
    os << r.step << ',' << r.objective << ',';
    if (!std::isnan(r.validation_rmse)) os << r.validation_rmse;
    os << '\n';
  }
  return os.str();
}


/// Plug-in predictions for held-out records, clipped to the data range.
inline std::vector<double> predict_records(const io::Checkpoint& ck, const LoadedData& d,
                                           const std::vector<std::size_t>& idx) {
  std::vector<double> out;
  out.reserve(idx.size());
  const double lo = clip_lo(d);
  const double hi = clip_hi(d);
  const std::string kind = ck.kind();
  if (d.graph) {
    const auto pairs = data::select<sbm::Pair>(d.graph_data.pairs, idx);
    if (kind == "sbm") {
      for (const auto& p : sbm::predict_pairs(ck.sbm(), pairs)) out.push_back(p);
    } else if (kind == "svd") {
      for (const auto& p : pairs)
        out.push_back(0.5 * (ck.svd().predict(p.i, p.j) + ck.svd().predict(p.j, p.i)));
    } else {
      std::vector<mf::Observation> both;
      for (const auto& p : pairs) {
        both.push_back({p.i, p.j, 0.0});
        both.push_back({p.j, p.i, 0.0});
      }
      const auto pred = mf::predict_many(ck.nnmf(), both);
      for (std::size_t k = 0; k < pairs.size(); ++k) out.push_back(0.5 * (pred[2 * k] + pred[2 * k + 1]));
    }
  } else {
    const auto obs = data::select<mf::Observation>(d.ratings.triples, idx);
    if (kind == "svd") {
      out = ck.svd().predict(obs);
    } else {
      const Tensor* side = d.ratings.genres ? &*d.ratings.genres : nullptr;
      out = mf::predict_many(ck.nnmf(), obs, side);
    }
  }
  for (double& v : out) v = std::clamp(v, lo, hi);
  return out;
}

inline std::vector<double> record_targets(const LoadedData& d, const std::vector<std::size_t>& idx) {
  std::vector<double> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(d.graph ? d.graph_data.pairs[i].x : d.ratings.triples[i].value);
  return out;
}

namespace detail {

struct Fitted {
  io::Checkpoint checkpoint;
  std::vector<TraceLine> trace;
  nlohmann::json extra = nlohmann::json::object();
};

inline io::Checkpoint wrap(mf::NnmfModel m) {
  io::Checkpoint c;
  c.meta = {{"kind", "nnmf"}};
  c.model = std::move(m);
  return c;
}

inline Fitted fit_nnmf(const RunConfig& c, const LoadedData& d, const std::vector<std::size_t>& train_idx,
                       const std::vector<std::size_t>& monitor_idx, double lambda, Rng init_rng, Rng train_rng) {
  const bool vi = c.model == "vi" || c.model == "vi-side";
  const auto train_obs = observations(d, train_idx);
  const auto monitor_obs = observations(d, monitor_idx);
  const Tensor* side = d.graph || !d.ratings.genres ? nullptr : &*d.ratings.genres;
  mf::NnmfModel model = mf::NnmfModel::create(nnmf_hyperparams(c, lambda), vi ? mf::FitMode::vi : mf::FitMode::map,
                                              d.n_rows(), d.n_cols(), init_rng, mf::mean_value(train_obs));
  const mf::RatingsView train{train_obs, side};
  const mf::RatingsView monitor{monitor_obs, side};
  const auto trace = mf::train(model, train, nnmf_train_config(c, d), train_rng, &monitor);
  Fitted f;
  for (const auto& r : trace.rows) f.trace.push_back({r.step, r.objective, r.validation_rmse});
  f.checkpoint = wrap(std::move(model));
  return f;
}

inline double validation_rmse(const io::Checkpoint& ck, const LoadedData& d, const std::vector<std::size_t>& idx) {
  return eval::rmse(predict_records(ck, d, idx), record_targets(d, idx));
}

/// MAP models: picks lambda on a validation slice of the training records,
/// then refits on all of them.
inline Fitted fit_map(const RunConfig& c, const LoadedData& d, const std::vector<std::size_t>& train_idx,
                      const std::vector<std::size_t>& test_idx, const Rng& base, std::ostream& log) {
  double lambda = c.lambda;
  nlohmann::json grid = nlohmann::json::array();
  if (!c.lambda_grid.empty()) {
    const data::Split inner = data::make_split(train_idx.size(), c.validation_fraction, base.fork(7).next_u64());
    std::vector<std::size_t> fit_idx;
    std::vector<std::size_t> val_idx;
    for (std::size_t k : inner.train) fit_idx.push_back(train_idx[k]);
    for (std::size_t k : inner.test) val_idx.push_back(train_idx[k]);
    double best = std::numeric_limits<double>::infinity();
    for (double l : c.lambda_grid) {
      const Fitted f = fit_nnmf(c, d, fit_idx, {}, l, base.fork(0), base.fork(1));
      const double r = validation_rmse(f.checkpoint, d, val_idx);
      log << "  lambda " << l << ": validation rmse " << r << "\n";
      grid.push_back({{"lambda", l}, {"validation_rmse", r}});
      if (r < best) {
        best = r;
        lambda = l;
      }
    }
    log << "  selected lambda " << lambda << "\n";
  }
  Fitted f = fit_nnmf(c, d, train_idx, test_idx, lambda, base.fork(0), base.fork(1));
  f.extra["lambda"] = lambda;
  if (!grid.empty()) f.extra["lambda_grid"] = grid;
  return f;
}

inline Fitted fit_sbm(const RunConfig& c, const LoadedData& d, const std::vector<std::size_t>& train_idx,
                      const std::vector<std::size_t>& test_idx, const Rng& base) {
  const auto train = data::select<sbm::Pair>(d.graph_data.pairs, train_idx);
  Rng init = base.fork(0);
  sbm::SbmModel model =
      sbm::SbmModel::create(sbm_hyperparams(c), d.graph_data.n_nodes, init, sbm::density_logit(train));
  if (c.eta_init == "spectral") {
    Rng spectral = base.fork(2);
    sbm::spectral_init(model, train, spectral);
  }
  Fitted f;
  if (c.epochs > 0) {
    sbm::SviConfig svi;
    svi.steps = c.epochs;
    svi.batch_size = c.batch_size;
    svi.mc_samples = c.mc_samples;
    svi.adam.learning_rate = c.lr;
    svi.stick_learning_rate = c.stick_lr;
    svi.eta_warmup = c.eta_warmup;
    sbm::SbmTrainer trainer(model, train, svi, base.fork(1));
    const auto test = data::select<sbm::Pair>(d.graph_data.pairs, test_idx);
    std::vector<double> targets;
    for (const auto& p : test) targets.push_back(p.x);
    for (std::size_t s = 1; s <= c.epochs; ++s) {
      const auto diag = trainer.step();
      const bool due = (c.eval_every > 0 && s % c.eval_every == 0) || s == c.epochs;
      TraceLine row{s, diag.elbo, std::numeric_limits<double>::quiet_NaN()};
      if (due && !test.empty()) row.validation_rmse = eval::rmse(sbm::predict_pairs(model, test), targets);
      f.trace.push_back(row);
    }
  }
  f.extra["effective_clusters"] = sbm::effective_cluster_count(model);
  f.extra["alpha"] = model.alpha();
  f.checkpoint.meta = {{"kind", "sbm"}};
  f.checkpoint.model = std::move(model);
  return f;
}

inline Fitted fit_svd(const RunConfig& c, const LoadedData& d, const std::vector<std::size_t>& train_idx) {
  const auto obs = observations(d, train_idx);
  const std::size_t rank = std::min({c.rank, d.n_rows(), d.n_cols()});
  if (rank != c.rank) throw ConfigError("rank " + std::to_string(c.rank) + " exceeds the matrix dimensions");
  Fitted f;
  f.checkpoint.meta = {{"kind", "svd"}};
  f.checkpoint.model = eval::SvdBaseline(d.n_rows(), d.n_cols(), obs, rank,
                                         c.fill == "zero" ? eval::FillStrategy::zero : eval::FillStrategy::mean);
  return f;
}

inline void save(const io::Checkpoint& ck, const fs::path& path, std::uint64_t seed, const nlohmann::json& extra) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  std::visit([&](const auto& m) { io::write_checkpoint(out, m, seed, extra); }, ck.model);
}

}  // namespace detail

/// Trains one model per requested split; writes split_<k>.vmfk and
/// split_<k>_trace.csv under output_dir/<dataset>/<run>/.
inline int cmd_train(const RunConfig& c, const std::vector<std::size_t>& requested, std::ostream& log) {
  c.validate();
  const auto splits = resolve_splits(c, requested);
  const LoadedData d = load_data(c, log);
  const fs::path dir = run_dir(c);
  fs::create_directories(dir);
  write_text(dir / "config.ini", emit_config(c));
  for (std::size_t k : splits) {
    const data::Split split = read_split(c, k, d.n_records());
    const Rng base = Rng(c.seed).fork(k);
    log << c.run_name() << " split " << k << ": " << split.train.size() << " train / " << split.test.size()
        << " test records\n";
    const auto start = std::chrono::steady_clock::now();
    detail::Fitted f;
    try {
      if (c.model == "svd") {
        f = detail::fit_svd(c, d, split.train);
      } else if (c.model == "sbm") {
        f = detail::fit_sbm(c, d, split.train, split.test, base);
      } else if (c.model == "bias-mf" || c.model == "nn") {
        f = detail::fit_map(c, d, split.train, split.test, base, log);
      } else {
        f = detail::fit_nnmf(c, d, split.train, split.test, c.lambda, base.fork(0), base.fork(1));
      }
    } catch (const NumericalError& e) {
      throw NumericalError("split " + std::to_string(k) + ": " + e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    nlohmann::json extra = f.extra;
    extra["model"] = c.model;
    extra["run"] = c.run_name();
    extra["dataset"] = c.data_label();
    extra["format"] = c.format;
    extra["split"] = k;
    extra["split_seed"] = split.seed;
    extra["config_hash"] = config_hash(c);
    detail::save(f.checkpoint, checkpoint_path(c, k), c.seed, extra);
    write_text(dir / ("split_" + std::to_string(k) + "_trace.csv"), trace_csv(f.trace));
    if (!f.trace.empty()) {
      const auto& last = f.trace.back();
      log << "  final objective " << last.objective << ", held-out rmse " << last.validation_rmse << "\n";
    }
    std::ostringstream took;
    took << std::fixed << std::setprecision(1) << seconds;
    log << "  trained in " << took.str() << " s\n";
  }
  return kOk;
}

inline void check_compatible(const io::Checkpoint& ck, const RunConfig& c, const LoadedData& d,
                             const std::string& path) {
  const auto& extra = ck.meta.at("extra");
  if (extra.value("model", "") != c.model) {
    throw ConfigError(path + ": checkpoint was trained as '" + extra.value("model", "?") + "', config says '" +
                      c.model + "'");
  }
  std::size_t rows = 0;
  std::size_t cols = 0;
  const std::string kind = ck.kind();
  if (kind == "nnmf") {
    rows = ck.nnmf().n_users();
    cols = ck.nnmf().n_items();
  } else if (kind == "sbm") {
    rows = cols = ck.sbm().n_nodes();
  } else {
    rows = ck.svd().n_rows();
    cols = ck.svd().n_cols();
  }
  if (rows != d.n_rows() || cols != d.n_cols()) {
    throw ConfigError(path + ": checkpoint covers a " + std::to_string(rows) + "x" + std::to_string(cols) +
                      " matrix, dataset is " + std::to_string(d.n_rows()) + "x" + std::to_string(d.n_cols()));
  }
  if (kind == "nnmf" && ck.nnmf().hyperparams().side_info_width != (d.ratings.genres ? data::kGenreCount : 0)) {
    throw ConfigError(path + ": side-information width does not match the dataset");
  }
}

struct EvaluateOptions {
  std::vector<std::size_t> splits;
  std::string checkpoint;  // overrides the run-directory checkpoint; needs exactly one split
  bool on_train = false;
  bool write = true;
};

/// Scores checkpoints on their splits' test records (or training records).
/// Writes metrics.json / metrics.csv (metrics_train.* for on_train) and
/// timing.json under the run directory.
inline eval::MetricsReport cmd_evaluate(const RunConfig& c, const EvaluateOptions& opt, std::ostream& log) {
  c.validate();
  const auto splits = resolve_splits(c, opt.splits);
  if (!opt.checkpoint.empty() && splits.size() != 1) {
    throw ConfigError("an explicit checkpoint needs exactly one --split");
  }
  const LoadedData d = load_data(c, log);
  eval::MetricsReport report;
  report.model = c.run_name();
  report.dataset = c.data_label();
  report.config_hash = config_hash(c);
  report.extra = {{"family", c.model},
                  {"hidden_layers", c.hidden_layers},
                  {"kind", d.graph ? "graph" : "ratings"},
                  {"records", opt.on_train ? "train" : "test"}};
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t k : splits) {
    const std::string path = opt.checkpoint.empty() ? checkpoint_path(c, k).string() : opt.checkpoint;
    if (!fs::exists(path)) throw ConfigError("checkpoint '" + path + "' not found; run `vimf train` first");
    const io::Checkpoint ck = io::load_checkpoint(path);
    check_compatible(ck, c, d, path);
    const data::Split split = read_split(c, k, d.n_records());
    const auto& idx = opt.on_train ? split.train : split.test;
    if (idx.empty()) throw UndefinedMetricError("split " + std::to_string(k) + " has no records to evaluate");
    const auto pred = predict_records(ck, d, idx);
    const auto targets = record_targets(d, idx);
    eval::SplitMetrics m;
    m.split = k;
    m.seed = split.seed;
    m.rmse = eval::rmse(pred, targets);
    if (d.graph) {
      try {
        m.auc = eval::auc(pred, targets);
      } catch (const UndefinedMetricError& e) {
        log << "warning: split " << k << ": " << e.what() << "\n";
      }
    }
    if (ck.kind() == "sbm") {
      report.extra["effective_clusters"].push_back(sbm::effective_cluster_count(ck.sbm()));
    }
    log << report.model << " split " << k << ": rmse " << m.rmse;
    if (m.auc) log << ", auc " << *m.auc;
    log << "\n";
    report.splits.push_back(m);
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (opt.write) {
    const fs::path dir = run_dir(c);
    fs::create_directories(dir);
    const std::string stem = opt.on_train ? "metrics_train" : "metrics";
    write_text(dir / (stem + ".json"), report.to_json(false).dump(1) + "\n");
    std::ostringstream csv;
    report.write_csv(csv);
    write_text(dir / (stem + ".csv"), csv.str());
    write_text(dir / "timing.json", nlohmann::json{{"evaluate_seconds", report.wall_seconds}}.dump(1) + "\n");
  }
  const auto r = report.rmses();
  log << report.model << " on " << report.dataset << ": rmse " << eval::MetricsReport::mean(r) << " +- "
      << eval::MetricsReport::stddev(r) << "\n";
  return report;
}

// ---- tables ----------------------------------------------------------------

inline std::string column_label(const std::string& family, std::size_t hidden, bool graph) {
  if (family == "svd") return "SVD";
  if (family == "bias-mf") return "Bias-MF";
  if (family == "sbm") return "SBM";
  if (family == "nn") return "NN(" + std::to_string(hidden) + ")";
  if (family == "vi" && graph && hidden == 0) return "VI";
  if (family == "vi") return "VI(" + std::to_string(hidden) + ")";
  if (family == "vi-side") return "VI(" + std::to_string(hidden) + ")+S";
  return family;
}

inline std::string dataset_label(const std::string& d) {
  if (d == "ml-100k") return "Movielens 100K";
  if (d == "ml-1m") return "Movielens 1M";
  if (d == "nips") return "NIPS";
  return d;
}

inline std::string mean_std_cell(const std::vector<double>& v) {
  if (v.empty()) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << eval::MetricsReport::mean(v) << "±"
     << eval::MetricsReport::stddev(v);
  return os.str();
}

struct Table {
  std::string title;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline std::size_t display_width(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char ch : s)
    if ((ch & 0xC0) != 0x80) ++n;
  return n;
}

inline std::string render_text(const Table& t) {
  std::vector<std::size_t> w(t.header.size(), 0);
  auto widen = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) w[i] = std::max(w[i], display_width(r[i]));
  };
  widen(t.header);
  for (const auto& r : t.rows) widen(r);
  std::ostringstream os;
  os << t.title << "\n";
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i > 0) os << "  ";
      os << r[i];
      if (i + 1 < r.size()) os << std::string(w[i] - display_width(r[i]), ' ');
    }
    os << "\n";
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  return os.str();
}

inline std::string render_csv(const Table& t) {
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i > 0 ? "," : "") << r[i];
    os << "\n";
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  return os.str();
}

/// Collects metrics.json reports from files or (recursively) directories.
inline std::vector<eval::MetricsReport> collect_reports(const std::vector<std::string>& inputs) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file() && e.path().filename() == "metrics.json") files.push_back(e.path());
    } else if (fs::is_regular_file(p)) {
      files.push_back(p);
    } else {
      throw ConfigError("table input '" + in + "' does not exist");
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<eval::MetricsReport> out;
  for (const auto& f : files) {
    try {
      out.push_back(eval::MetricsReport::from_json(data::read_json(f.string())));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(f.string() + ": not a metrics report (" + e.what() + ")");
    }
  }
  return out;
}

/// Ratings datasets become rows of an RMSE table with the fixed column set
/// of the MovieLens comparison; graph datasets become one RMSE/AUC table each.
inline std::vector<Table> build_tables(const std::vector<eval::MetricsReport>& reports) {
  std::vector<std::string> columns{"SVD", "Bias-MF", "NN(3)", "NN(4)", "VI(0)", "VI(3)", "VI(0)+S", "VI(3)+S"};
  const std::vector<std::string> graph_columns{"SVD", "Bias-MF", "VI", "SBM"};
  std::map<std::string, std::map<std::string, const eval::MetricsReport*>> ratings;
  std::map<std::string, std::map<std::string, const eval::MetricsReport*>> graphs;
  std::vector<std::string> extra_columns;
  for (const auto& r : reports) {
    const bool graph = r.extra.value("kind", "ratings") == "graph";
    const std::string label =
        column_label(r.extra.value("family", r.model), r.extra.value("hidden_layers", std::size_t{0}), graph);
    (graph ? graphs : ratings)[r.dataset][label] = &r;
    if (!graph && std::find(columns.begin(), columns.end(), label) == columns.end() &&
        std::find(extra_columns.begin(), extra_columns.end(), label) == extra_columns.end()) {
      extra_columns.push_back(label);
    }
  }
  columns.insert(columns.end(), extra_columns.begin(), extra_columns.end());

  std::vector<Table> tables;
  if (!ratings.empty()) {
    Table t;
    t.title = "RMSE";
    t.header.push_back("Data set");
    t.header.insert(t.header.end(), columns.begin(), columns.end());
    std::vector<std::string> order;
    for (const char* known : {"ml-100k", "ml-1m"})
      if (ratings.contains(known)) order.push_back(known);
    for (const auto& [name, cells] : ratings)
      if (name != "ml-100k" && name != "ml-1m") order.push_back(name);
    for (const auto& name : order) {
      std::vector<std::string> row{dataset_label(name)};
      for (const auto& col : columns) {
        const auto it = ratings[name].find(col);
        row.push_back(it == ratings[name].end() ? "-" : mean_std_cell(it->second->rmses()));
      }
      t.rows.push_back(std::move(row));
    }
    tables.push_back(std::move(t));
  }
  for (const auto& [name, cells] : graphs) {
    std::vector<std::string> cols = graph_columns;
    for (const auto& [label, r] : cells)
      if (std::find(cols.begin(), cols.end(), label) == cols.end()) cols.push_back(label);
    Table t;
    t.title = "RMSE and AUC, " + dataset_label(name);
    t.header.push_back("Metric");
    t.header.insert(t.header.end(), cols.begin(), cols.end());
    std::vector<std::string> rmse_row{"RMSE"};
    std::vector<std::string> auc_row{"AUC"};
    for (const auto& col : cols) {
      const auto it = cells.find(col);
      rmse_row.push_back(it == cells.end() ? "-" : mean_std_cell(it->second->rmses()));
      auc_row.push_back(it == cells.end() ? "-" : mean_std_cell(it->second->aucs()));
    }
    t.rows.push_back(std::move(rmse_row));
    t.rows.push_back(std::move(auc_row));
    tables.push_back(std::move(t));
  }
  return tables;
}

/// Prints the tables; with a non-empty csv_path also writes them as CSV
/// blocks separated by blank lines.
inline int cmd_table(const std::vector<std::string>& inputs, const std::string& csv_path, std::ostream& out) {
  const auto reports = collect_reports(inputs);
  const auto tables = build_tables(reports);
  std::string csv;
  for (std::size_t i = 0; i < tables.size(); ++i) {
    if (i > 0) {
      out << "\n";
      csv += "\n";
    }
    out << render_text(tables[i]);
    csv += render_csv(tables[i]);
  }
  if (!csv_path.empty()) write_text(csv_path, csv);
  return kOk;
}

}  // namespace vimf::cli
