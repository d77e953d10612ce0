#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "vimf/core/autodiff.hpp"
#include "vimf/core/errors.hpp"
#include "vimf/core/rng.hpp"
#include "vimf/core/variational.hpp"
#include "vimf/mf/nnmf.hpp"

namespace vimf::mf {

/// Which arrays receive gradients in one evaluation.
enum class ParamGroup { theta, embeddings, all };

inline bool in_group(const NnmfModel& model, std::size_t i, ParamGroup g) {
  switch (g) {
    case ParamGroup::theta: return model.is_theta(i);
    case ParamGroup::embeddings: return !model.is_theta(i);
    case ParamGroup::all: return true;
  }
  return false;
}

/// Tape handles for the model parameters. For arrays outside the active
/// group `mean`/`log_std` are invalid Vars.
struct ParamLeaves {
  std::vector<bool> active;
  std::vector<Var> mean;
  std::vector<Var> log_std;
};

struct ObjectiveRecord {
  Var objective;       // quantity to minimize
  Var log_likelihood;  // VI only
  Var kl;              // VI only
  ParamLeaves leaves;
};

/// Squared error (scaled by `data_scale`) plus lambda times the squared norms
/// of every row of U, V, U', V'. The network weights are not regularized.
inline ObjectiveRecord record_map_objective(Tape& tape, const NnmfModel& model,
                                            std::span<const Observation> batch,
                                            const Tensor* side_info, double data_scale,
                                            ParamGroup group) {
  if (model.mode() != FitMode::map) throw InvalidStateError("map_loss requires a MAP-mode model");
  check_indices(model, batch);
  ObjectiveRecord rec;
  RecordedArrays values;
  const auto& arrays = model.arrays();
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    const bool active = in_group(model, i, group);
    rec.leaves.active.push_back(active);
    Var v = active ? tape.leaf(arrays[i].value) : tape.constant(arrays[i].value);
    rec.leaves.mean.push_back(active ? v : Var{});
    rec.leaves.log_std.push_back(Var{});
    values.values.push_back(v);
  }
  Var total = tape.constant(Tensor::scalar(0.0));
  if (!batch.empty()) {
    Tensor targets = Tensor::matrix(batch.size(), 1);
    for (std::size_t b = 0; b < batch.size(); ++b) targets[b] = batch[b].value;
    Var pred = record_predictions(tape, values, model, batch, side_info);
    Var resid = tape.sub(pred, tape.constant(std::move(targets)));
    total = tape.scale(tape.sum(tape.square(resid)), data_scale);
  }
  const double lambda = model.hyperparams().lambda;
  if (lambda > 0.0) {
    for (std::size_t i = 0; i < NnmfModel::kFirstTheta; ++i) {
      total = tape.add(total, tape.scale(tape.sum(tape.square(values.values[i])), lambda));
    }
  }
  rec.objective = total;
  return rec;
}

/// Negative minibatch ELBO: -( data_scale * mean_s sum_b log N(x_b; f(sample_s), sigma^2) - KL ).
/// Noise is drawn for every array in declaration order, then per MC sample.
inline ObjectiveRecord record_negative_elbo(Tape& tape, const NnmfModel& model,
                                            std::span<const Observation> batch,
                                            const Tensor* side_info, double data_scale,
                                            std::size_t mc_samples, Rng& rng, ParamGroup group) {
  if (model.mode() != FitMode::vi) throw InvalidStateError("elbo requires a VI-mode model");
  if (batch.empty()) throw std::invalid_argument("elbo_minibatch: empty batch");
  if (mc_samples == 0) throw std::invalid_argument("elbo_minibatch: mc_samples must be positive");
  check_indices(model, batch);

  const auto& arrays = model.arrays();
  ObjectiveRecord rec;
  std::vector<Var> stds(arrays.size());
  Var kl = tape.constant(Tensor::scalar(0.0));
  double kl_inactive = 0.0;
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    const bool active = in_group(model, i, group);
    rec.leaves.active.push_back(active);
    if (active) {
      Var m = tape.leaf(arrays[i].value);
      Var ls = tape.leaf(*arrays[i].log_std);
      rec.leaves.mean.push_back(m);
      rec.leaves.log_std.push_back(ls);
      stds[i] = tape.exp(ls);
      kl = tape.add(kl, record_kl(tape, m, ls, arrays[i].prior_std));
    } else {
      rec.leaves.mean.push_back(Var{});
      rec.leaves.log_std.push_back(Var{});
      kl_inactive += gaussian_kl(arrays[i].q());
    }
  }
  kl = tape.add_scalar(kl, kl_inactive);

  Tensor targets = Tensor::matrix(batch.size(), 1);
  for (std::size_t b = 0; b < batch.size(); ++b) targets[b] = batch[b].value;
  Var target = tape.constant(std::move(targets));

  const double sigma = model.hyperparams().noise_sigma;
  const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi * sigma * sigma);
  Var sq_sum = tape.constant(Tensor::scalar(0.0));
  for (std::size_t s = 0; s < mc_samples; ++s) {
    RecordedArrays values;
    for (std::size_t i = 0; i < arrays.size(); ++i) {
      Tensor noise = rng.normal_tensor(arrays[i].value.shape());
      if (rec.leaves.active[i]) {
        values.values.push_back(
            tape.add(rec.leaves.mean[i], tape.mul(stds[i], tape.constant(std::move(noise)))));
      } else {
        values.values.push_back(tape.constant(reparameterize_sample(arrays[i].q(), noise)));
      }
    }
    Var pred = record_predictions(tape, values, model, batch, side_info);
    sq_sum = tape.add(sq_sum, tape.sum(tape.square(tape.sub(pred, target))));
  }
  const double n = static_cast<double>(batch.size());
  const double per_sample = data_scale / static_cast<double>(mc_samples);
  Var loglik = tape.add_scalar(tape.scale(sq_sum, -per_sample / (2.0 * sigma * sigma)),
                               data_scale * n * log_norm);
  rec.log_likelihood = loglik;
  rec.kl = kl;
  rec.objective = tape.sub(kl, loglik);
  return rec;
}

/// Regularized squared-error loss over `batch` with lambda from the model.
inline double map_loss(const NnmfModel& model, std::span<const Observation> batch,
                       const Tensor* side_info = nullptr) {
  Tape tape;
  return tape.scalar(record_map_objective(tape, model, batch, side_info, 1.0, ParamGroup::theta).objective);
}

struct ElboEstimate {
  double value = 0.0;
  double log_likelihood = 0.0;  // already scaled by |O| / |batch|
  double kl = 0.0;
};

/// Unbiased estimate of the full ELBO from a minibatch of `n_observed` entries.
inline ElboEstimate elbo_minibatch(const NnmfModel& model, std::span<const Observation> batch,
                                   std::size_t n_observed, std::size_t mc_samples, Rng& rng,
                                   const Tensor* side_info = nullptr) {
  if (batch.empty()) throw std::invalid_argument("elbo_minibatch: empty batch");
  const double scale = static_cast<double>(n_observed) / static_cast<double>(batch.size());
  Tape tape;
  const ObjectiveRecord rec =
      record_negative_elbo(tape, model, batch, side_info, scale, mc_samples, rng, ParamGroup::theta);
  ElboEstimate e;
  e.log_likelihood = tape.scalar(rec.log_likelihood);
  e.kl = tape.scalar(rec.kl);
  e.value = e.log_likelihood - e.kl;
  return e;
}

}  // namespace vimf::mf
