#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "vimf/core/errors.hpp"
#include "vimf/mf/nnmf.hpp"

namespace vimf::eval {

inline double rmse(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size()) throw std::invalid_argument("rmse: length mismatch");
  if (predictions.empty()) throw std::invalid_argument("rmse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double e = predictions[i] - targets[i];
    s += e * e;
  }
  return std::sqrt(s / static_cast<double>(predictions.size()));
}

/// Mann-Whitney AUC with half credit for ties, via average ranks.
inline double auc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc: length mismatch");
  std::size_t n_pos = 0;
  for (double l : labels) {
    if (l != 0.0 && l != 1.0) throw std::invalid_argument("auc: labels must be 0 or 1");
    if (l == 1.0) ++n_pos;
  }
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedMetricError("auc: both classes must be present");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  for (std::size_t k = 0; k < order.size();) {
    std::size_t end = k;
    while (end < order.size() && scores[order[end]] == scores[order[k]]) ++end;
    const double avg_rank = 0.5 * static_cast<double>(k + 1 + end);  // ranks k+1 .. end
    for (std::size_t r = k; r < end; ++r)
      if (labels[order[r]] == 1.0) pos_rank_sum += avg_rank;
    k = end;
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

enum class FillStrategy { mean, zero };

/// Rank-r reconstruction of a ratings matrix completed by filling unobserved
/// entries with the training mean (or zero).
class SvdBaseline {
 public:
  SvdBaseline(std::size_t n_rows, std::size_t n_cols, std::span<const mf::Observation> train, std::size_t rank,
              FillStrategy fill = FillStrategy::mean) {
    if (rank == 0 || rank > std::min(n_rows, n_cols)) {
      throw std::invalid_argument("svd_baseline: rank " + std::to_string(rank) + " must lie in [1, " +
                                  std::to_string(std::min(n_rows, n_cols)) + "]");
    }
    double mean = 0.0;
    for (const auto& o : train) mean += o.value;
    fill_value_ = (fill == FillStrategy::mean && !train.empty()) ? mean / static_cast<double>(train.size()) : 0.0;
    Eigen::MatrixXd X = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n_rows),
                                                  static_cast<Eigen::Index>(n_cols), fill_value_);
    for (const auto& o : train) {
      if (o.user >= n_rows || o.item >= n_cols) throw std::invalid_argument("svd_baseline: index out of range");
      X(o.user, o.item) = o.value;
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto r = static_cast<Eigen::Index>(rank);
    singular_values_ = svd.singularValues();
    left_ = svd.matrixU().leftCols(r) * svd.singularValues().head(r).asDiagonal();
    right_ = svd.matrixV().leftCols(r);
  }

  double predict(std::size_t row, std::size_t col) const {
    return left_.row(static_cast<Eigen::Index>(row)).dot(right_.row(static_cast<Eigen::Index>(col)));
  }

  std::vector<double> predict(std::span<const mf::Observation> obs) const {
    std::vector<double> out;
    out.reserve(obs.size());
    for (const auto& o : obs) out.push_back(predict(o.user, o.item));
    return out;
  }

  /// Rebuilds a baseline from stored factors; predictions are left * right^T.
  static SvdBaseline from_factors(Eigen::MatrixXd left, Eigen::MatrixXd right, double fill_value) {
    if (left.cols() != right.cols()) throw std::invalid_argument("svd_baseline: factor rank mismatch");
    SvdBaseline b;
    b.left_ = std::move(left);
    b.right_ = std::move(right);
    b.fill_value_ = fill_value;
    return b;
  }

  Eigen::MatrixXd reconstruction() const { return left_ * right_.transpose(); }
  const Eigen::MatrixXd& left() const { return left_; }
  const Eigen::MatrixXd& right() const { return right_; }
  std::size_t n_rows() const { return static_cast<std::size_t>(left_.rows()); }
  std::size_t n_cols() const { return static_cast<std::size_t>(right_.rows()); }
  const Eigen::VectorXd& singular_values() const { return singular_values_; }
  double fill_value() const { return fill_value_; }

 private:
  SvdBaseline() = default;

  Eigen::MatrixXd left_;
  Eigen::MatrixXd right_;
  Eigen::VectorXd singular_values_;
  double fill_value_ = 0.0;
};

inline std::vector<double> targets_of(std::span<const mf::Observation> obs) {
  std::vector<double> out;
  out.reserve(obs.size());
  for (const auto& o : obs) out.push_back(o.value);
  return out;
}

/// 64-bit FNV-1a, used to fingerprint emitted configs.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct SplitMetrics {
  std::size_t split = 0;
  std::uint64_t seed = 0;
  double rmse = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> auc;
};

struct MetricsReport {
  std::string model;
  std::string dataset;
  std::string config_hash;
  double wall_seconds = 0.0;
  std::vector<SplitMetrics> splits;
  nlohmann::json extra = nlohmann::json::object();

  static double mean(const std::vector<double>& v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  }
  /// Sample standard deviation (n - 1 denominator); 0 for a single split.
  static double stddev(const std::vector<double>& v) {
    if (v.size() < 2) return v.empty() ? std::numeric_limits<double>::quiet_NaN() : 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
  }

  std::vector<double> rmses() const {
    std::vector<double> v;
    for (const auto& s : splits) v.push_back(s.rmse);
    return v;
  }
  std::vector<double> aucs() const {
    std::vector<double> v;
    for (const auto& s : splits)
      if (s.auc) v.push_back(*s.auc);
    return v;
  }

  /// Wall time is left out when `with_timing` is false so reruns compare equal.
  nlohmann::json to_json(bool with_timing = true) const {
    nlohmann::json j;
    j["model"] = model;
    j["dataset"] = dataset;
    j["config_hash"] = config_hash;
    if (with_timing) j["wall_seconds"] = wall_seconds;
    j["splits"] = nlohmann::json::array();
    for (const auto& s : splits) {
      nlohmann::json row{{"split", s.split}, {"seed", s.seed}, {"rmse", s.rmse}};
      if (s.auc) row["auc"] = *s.auc;
      j["splits"].push_back(row);
    }
    j["rmse_mean"] = mean(rmses());
    j["rmse_std"] = stddev(rmses());
    if (!aucs().empty()) {
      j["auc_mean"] = mean(aucs());
      j["auc_std"] = stddev(aucs());
    }
    if (!extra.empty()) j["extra"] = extra;
    return j;
  }

  static MetricsReport from_json(const nlohmann::json& j) {
    MetricsReport r;
    r.model = j.at("model").get<std::string>();
    r.dataset = j.at("dataset").get<std::string>();
    r.config_hash = j.value("config_hash", "");
    r.wall_seconds = j.value("wall_seconds", 0.0);
    for (const auto& row : j.at("splits")) {
      SplitMetrics s;
      s.split = row.at("split").get<std::size_t>();
      s.seed = row.at("seed").get<std::uint64_t>();
      s.rmse = row.at("rmse").get<double>();
      if (row.contains("auc")) s.auc = row.at("auc").get<double>();
      r.splits.push_back(s);
    }
    if (j.contains("extra")) r.extra = j.at("extra");
    return r;
  }

  /// One CSV row per split: model,dataset,split,seed,rmse,auc.
  void write_csv(std::ostream& os, bool header = true) const {
    if (header) os << "model,dataset,split,seed,rmse,auc\n";
    const auto old = os.precision(17);
    for (const auto& s : splits) {
      os << model << ',' << dataset << ',' << s.split << ',' << s.seed << ',' << s.rmse << ',';
      if (s.auc) os << *s.auc;
      os << '\n';
    }
    os.precision(old);
  }
};

}  // namespace vimf::eval
