#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vimf/core/autodiff.hpp"
#include "vimf/core/errors.hpp"
#include "vimf/core/mlp.hpp"
#include "vimf/core/rng.hpp"
#include "vimf/core/variational.hpp"

namespace vimf::mf {

enum class FitMode { map, vi };

inline const char* to_string(FitMode m) { return m == FitMode::map ? "map" : "vi"; }

/// One observed matrix entry X[user, item] = value.
struct Observation {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  double value = 0.0;
};

struct NnmfHyperparams {
  std::size_t K = 10;        // width of the U_n / V_m blocks
  std::size_t K_prime = 1;   // width of each factor U'_{n,d}
  std::size_t D = 60;        // number of elementwise-product factors
  std::size_t hidden_layers = 0;
  std::size_t hidden_width = 50;
  std::size_t side_info_width = 0;
  double noise_sigma = 1.0;
  double prior_std_U = 1.0;
  double prior_std_V = 1.0;
  double prior_std_U_prime = 1.0;
  double prior_std_V_prime = 1.0;
  double prior_std_theta = 1.0;
  double lambda = 0.0;  // MAP only
  double init_std = 0.05;
  double init_log_std = -3.0;

  std::size_t factor_width() const { return K_prime * D; }
  std::size_t input_width() const { return 2 * K + K_prime * D + side_info_width; }

  void validate() const {
    if (K == 0) throw std::invalid_argument("NnmfHyperparams: K must be positive");
    if (K_prime == 0) throw std::invalid_argument("NnmfHyperparams: K_prime must be positive");
    if (hidden_layers > 0 && hidden_width == 0) {
      throw std::invalid_argument("NnmfHyperparams: hidden_width must be positive");
    }
    if (!(noise_sigma > 0.0)) throw std::invalid_argument("NnmfHyperparams: noise_sigma must be positive");
    for (double s : {prior_std_U, prior_std_V, prior_std_U_prime, prior_std_V_prime, prior_std_theta}) {
      if (!(s > 0.0)) throw std::invalid_argument("NnmfHyperparams: prior stds must be positive");
    }
    if (lambda < 0.0) throw std::invalid_argument("NnmfHyperparams: lambda must be non-negative");
  }
};

/// A model parameter array. `log_std` is present exactly in VI mode, in
/// which case `value` holds the variational mean.
struct ParamArray {
  std::string name;
  Tensor value;
  std::optional<Tensor> log_std;
  double prior_std = 1.0;

  bool variational() const { return log_std.has_value(); }
  VariationalGaussian q() const {
    if (!log_std) throw InvalidStateError("ParamArray '" + name + "' is a point estimate");
    return VariationalGaussian(value, *log_std, prior_std);
  }
};

/// Neural network matrix factorization in point-estimate (MAP) or
/// mean-field Gaussian (VI) form.
///
/// Array order, which is also the checkpoint order: U (N x K), V (M x K),
/// U' (N x D x K'), V' (M x D x K'), then weight/bias pairs for each layer.
class NnmfModel {
 public:
  static constexpr std::size_t kU = 0;
  static constexpr std::size_t kV = 1;
  static constexpr std::size_t kUPrime = 2;
  static constexpr std::size_t kVPrime = 3;
  static constexpr std::size_t kFirstTheta = 4;

  NnmfModel() = default;

  /// Means drawn from N(0, init_std^2), log-stds at init_log_std. The output
  /// bias starts at `output_bias` (callers pass the training mean).
  static NnmfModel create(const NnmfHyperparams& hp, FitMode mode, std::size_t n_users,
                          std::size_t n_items, Rng& rng, double output_bias = 0.0) {
    hp.validate();
    NnmfModel m;
    m.hp_ = hp;
    m.mode_ = mode;
    m.n_users_ = n_users;
    m.n_items_ = n_items;
    const std::size_t K = hp.K;
    auto add = [&](std::string name, Tensor::Shape shape, double prior) {
      ParamArray a;
      a.name = std::move(name);
      a.value = rng.normal_tensor(shape, 0.0, hp.init_std);
      if (mode == FitMode::vi) a.log_std = Tensor(shape, hp.init_log_std);
      a.prior_std = prior;
      m.arrays_.push_back(std::move(a));
    };
    add("U", {n_users, K}, hp.prior_std_U);
    add("V", {n_items, K}, hp.prior_std_V);
    add("U_prime", {n_users, hp.D, hp.K_prime}, hp.prior_std_U_prime);
    add("V_prime", {n_items, hp.D, hp.K_prime}, hp.prior_std_V_prime);
    const auto sizes = mlp_layer_sizes(hp.input_width(), hp.hidden_layers, hp.hidden_width);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      add("W" + std::to_string(l), {sizes[l], sizes[l + 1]}, hp.prior_std_theta);
      add("b" + std::to_string(l), {1, sizes[l + 1]}, hp.prior_std_theta);
    }
    m.arrays_.back().value[0] = output_bias;
    return m;
  }

  /// Reassembles a model from stored arrays (checkpoint loading).
  static NnmfModel from_arrays(const NnmfHyperparams& hp, FitMode mode, std::size_t n_users,
                               std::size_t n_items, std::vector<ParamArray> arrays) {
    NnmfModel m;
    m.hp_ = hp;
    m.mode_ = mode;
    m.n_users_ = n_users;
    m.n_items_ = n_items;
    m.arrays_ = std::move(arrays);
    m.validate();
    return m;
  }

  void validate() const {
    hp_.validate();
    const auto sizes = mlp_layer_sizes(hp_.input_width(), hp_.hidden_layers, hp_.hidden_width);
    const std::size_t expected = kFirstTheta + 2 * (sizes.size() - 1);
    if (arrays_.size() != expected) {
      throw std::invalid_argument("NnmfModel: expected " + std::to_string(expected) +
                                  " parameter arrays, got " + std::to_string(arrays_.size()));
    }
    auto check = [&](std::size_t i, std::size_t rows, std::size_t cols) {
      const ParamArray& a = arrays_[i];
      if (a.value.rows() != rows || a.value.cols() != cols) {
        throw std::invalid_argument("NnmfModel: array '" + a.name + "' has shape " +
                                    Tensor::shape_string(a.value.shape()));
      }
      if (a.variational() != (mode_ == FitMode::vi)) {
        throw std::invalid_argument("NnmfModel: array '" + a.name + "' does not match fit mode");
      }
      if (a.log_std && !a.log_std->same_shape(a.value)) {
        throw std::invalid_argument("NnmfModel: array '" + a.name + "' log_std shape mismatch");
      }
    };
    check(kU, n_users_, hp_.K);
    check(kV, n_items_, hp_.K);
    check(kUPrime, n_users_, hp_.factor_width());
    check(kVPrime, n_items_, hp_.factor_width());
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      check(kFirstTheta + 2 * l, sizes[l], sizes[l + 1]);
      check(kFirstTheta + 2 * l + 1, 1, sizes[l + 1]);
    }
  }

  const NnmfHyperparams& hyperparams() const { return hp_; }
  FitMode mode() const { return mode_; }
  std::size_t n_users() const { return n_users_; }
  std::size_t n_items() const { return n_items_; }

  std::vector<ParamArray>& arrays() { return arrays_; }
  const std::vector<ParamArray>& arrays() const { return arrays_; }
  const ParamArray& array(std::size_t i) const { return arrays_.at(i); }
  ParamArray& array(std::size_t i) { return arrays_.at(i); }

  std::size_t num_layers() const { return (arrays_.size() - kFirstTheta) / 2; }
  bool is_theta(std::size_t i) const { return i >= kFirstTheta; }

  /// The network at point values (MAP) or variational means (VI).
  Mlp point_net() const {
    Mlp net;
    net.layer_sizes = mlp_layer_sizes(hp_.input_width(), hp_.hidden_layers, hp_.hidden_width);
    net.output_activation = OutputActivation::identity;
    for (std::size_t l = 0; l < num_layers(); ++l) {
      net.weights.push_back(arrays_[kFirstTheta + 2 * l].value);
      net.biases.push_back(arrays_[kFirstTheta + 2 * l + 1].value);
    }
    return net;
  }

 private:
  NnmfHyperparams hp_;
  FitMode mode_ = FitMode::map;
  std::size_t n_users_ = 0;
  std::size_t n_items_ = 0;
  std::vector<ParamArray> arrays_;
};

/// Per-node input-parameter count N * (K + K' * D) used when comparing
/// against the blockmodel's T * (K + K' * D).
inline std::size_t per_node_parameter_count(std::size_t n_nodes, const NnmfHyperparams& hp) {
  return n_nodes * (hp.K + hp.K_prime * hp.D);
}

/// [U_n, V_m, side, U'_{n,1} * V'_{m,1}, ..., U'_{n,D} * V'_{m,D}] at the
/// point values / means.
inline Tensor build_input(const NnmfModel& model, std::size_t n, std::size_t m,
                          std::span<const double> side = {}) {
  const NnmfHyperparams& hp = model.hyperparams();
  if (n >= model.n_users()) {
    throw std::invalid_argument("build_input: user index " + std::to_string(n) + " out of range");
  }
  if (m >= model.n_items()) {
    throw std::invalid_argument("build_input: item index " + std::to_string(m) + " out of range");
  }
  if (side.size() != hp.side_info_width) {
    throw std::invalid_argument("build_input: side information width " + std::to_string(side.size()) +
                                " does not match " + std::to_string(hp.side_info_width));
  }
  std::vector<double> x;
  x.reserve(hp.input_width());
  const auto u = model.array(NnmfModel::kU).value.row_span(n);
  const auto v = model.array(NnmfModel::kV).value.row_span(m);
  x.insert(x.end(), u.begin(), u.end());
  x.insert(x.end(), v.begin(), v.end());
  x.insert(x.end(), side.begin(), side.end());
  const auto up = model.array(NnmfModel::kUPrime).value.row_span(n);
  const auto vp = model.array(NnmfModel::kVPrime).value.row_span(m);
  for (std::size_t i = 0; i < up.size(); ++i) x.push_back(up[i] * vp[i]);
  return Tensor::row(std::move(x));
}

/// f_theta at point values (MAP) or at the variational means (VI).
inline double predict_rating(const NnmfModel& model, std::size_t n, std::size_t m,
                             std::span<const double> side = {}) {
  return mlp_forward(model.point_net(), build_input(model, n, m, side));
}

/// Tape values standing in for each parameter array during one evaluation.
struct RecordedArrays {
  std::vector<Var> values;
};

/// Records the (B x input_width) input matrix for a batch.
inline Var record_inputs(Tape& tape, const RecordedArrays& arrays, const NnmfModel& model,
                         std::span<const Observation> batch, const Tensor* side_info) {
  const NnmfHyperparams& hp = model.hyperparams();
  std::vector<std::size_t> users(batch.size());
  std::vector<std::size_t> items(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    users[b] = batch[b].user;
    items[b] = batch[b].item;
  }
  std::vector<Var> parts;
  parts.push_back(tape.gather_rows(arrays.values[NnmfModel::kU], users));
  parts.push_back(tape.gather_rows(arrays.values[NnmfModel::kV], items));
  if (hp.side_info_width > 0) {
    if (side_info == nullptr || side_info->cols() != hp.side_info_width ||
        side_info->rows() != model.n_items()) {
      throw std::invalid_argument("record_inputs: side information matrix missing or mis-shaped");
    }
    Tensor side = Tensor::matrix(batch.size(), hp.side_info_width);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto row = side_info->row_span(items[b]);
      std::copy(row.begin(), row.end(), side.row_span(b).begin());
    }
    parts.push_back(tape.constant(std::move(side)));
  }
  if (hp.factor_width() > 0) {
    Var up = tape.gather_rows(arrays.values[NnmfModel::kUPrime], users);
    Var vp = tape.gather_rows(arrays.values[NnmfModel::kVPrime], items);
    parts.push_back(tape.mul(up, vp));
  }
  return tape.concat_cols(parts);
}

/// (B x 1) network outputs for a batch.
inline Var record_predictions(Tape& tape, const RecordedArrays& arrays, const NnmfModel& model,
                              std::span<const Observation> batch, const Tensor* side_info) {
  Var x = record_inputs(tape, arrays, model, batch, side_info);
  std::vector<Var> w;
  std::vector<Var> b;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    w.push_back(arrays.values[NnmfModel::kFirstTheta + 2 * l]);
    b.push_back(arrays.values[NnmfModel::kFirstTheta + 2 * l + 1]);
  }
  return record_mlp_logits(tape, w, b, x);
}

inline void check_indices(const NnmfModel& model, std::span<const Observation> batch) {
  for (const Observation& o : batch) {
    if (o.user >= model.n_users() || o.item >= model.n_items()) {
      throw std::invalid_argument("observation (" + std::to_string(o.user) + ", " +
                                  std::to_string(o.item) + ") out of range");
    }
  }
}

/// Point / posterior-mean plug-in predictions for many entries at once.
inline std::vector<double> predict_many(const NnmfModel& model, std::span<const Observation> obs,
                                        const Tensor* side_info = nullptr) {
  if (obs.empty()) return {};
  check_indices(model, obs);
  Tape tape;
  RecordedArrays rec;
  for (const ParamArray& a : model.arrays()) rec.values.push_back(tape.constant(a.value));
  const Tensor& out = tape.value(record_predictions(tape, rec, model, obs, side_info));
  return {out.data().begin(), out.data().end()};
}

/// Monte-Carlo predictive mean: average of f over `samples` joint draws from q.
inline std::vector<double> predict_many_mc(const NnmfModel& model, std::span<const Observation> obs,
                                           std::size_t samples, Rng& rng,
                                           const Tensor* side_info = nullptr) {
  if (model.mode() != FitMode::vi) throw InvalidStateError("predict_many_mc requires a VI model");
  if (samples == 0) throw std::invalid_argument("predict_many_mc: samples must be positive");
  check_indices(model, obs);
  std::vector<double> acc(obs.size(), 0.0);
  for (std::size_t s = 0; s < samples; ++s) {
    Tape tape;
    RecordedArrays rec;
    for (const ParamArray& a : model.arrays()) {
      rec.values.push_back(tape.constant(reparameterize_sample(a.q(), rng)));
    }
    const Tensor& out = tape.value(record_predictions(tape, rec, model, obs, side_info));
    for (std::size_t i = 0; i < obs.size(); ++i) acc[i] += out[i];
  }
  for (double& v : acc) v /= static_cast<double>(samples);
  return acc;
}

}  // namespace vimf::mf
