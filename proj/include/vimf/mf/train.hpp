#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "vimf/core/adam.hpp"
#include "vimf/core/errors.hpp"
#include "vimf/core/rng.hpp"
#include "vimf/mf/nnmf.hpp"
#include "vimf/mf/objectives.hpp"

namespace vimf::mf {

/// Observations plus the optional (n_items x width) side-information matrix.
struct RatingsView {
  std::span<const Observation> observations;
  const Tensor* side_info = nullptr;
};

struct TrainConfig {
  std::size_t epochs = 0;
  std::size_t batch_size = 0;  // 0 means full batch
  AdamConfig adam;
  std::size_t mc_samples = 1;
  std::size_t eval_every = 0;  // 0: validation only after the last epoch
  bool optimize_priors = false;
  double clip_min = -std::numeric_limits<double>::infinity();
  double clip_max = std::numeric_limits<double>::infinity();
};

struct TraceRow {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double objective = 0.0;  // ELBO estimate (VI) or regularized loss (MAP)
  double validation_rmse = std::numeric_limits<double>::quiet_NaN();
};

struct TrainingTrace {
  std::vector<TraceRow> rows;
};

inline double clipped_rmse(std::span<const double> pred, std::span<const Observation> obs,
                           double lo, double hi) {
  double s = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const double e = std::clamp(pred[i], lo, hi) - obs[i].value;
    s += e * e;
  }
  return std::sqrt(s / static_cast<double>(obs.size()));
}

/// Alternating Adam optimizer over the network parameters and the
/// embedding arrays. Each iteration takes one step on theta, then one step
/// on (U, V, U', V'), each with its own gradient evaluation.
class NnmfTrainer {
 public:
  NnmfTrainer(NnmfModel& model, TrainConfig config, Rng rng)
      : model_(model), config_(std::move(config)), rng_(rng) {
    for (std::size_t i = 0; i < model_.arrays().size(); ++i) {
      mean_state_.emplace_back(config_.adam);
      log_std_state_.emplace_back(config_.adam);
    }
  }

  /// One gradient step on `group`. Returns the objective at the pre-step
  /// parameters (negative ELBO or MAP loss).
  double step(std::span<const Observation> batch, std::size_t n_observed, const Tensor* side_info,
              ParamGroup group) {
    const double scale = static_cast<double>(n_observed) / static_cast<double>(batch.size());
    Tape tape;
    const ObjectiveRecord rec =
        model_.mode() == FitMode::vi
            ? record_negative_elbo(tape, model_, batch, side_info, scale, config_.mc_samples, rng_, group)
            : record_map_objective(tape, model_, batch, side_info, scale, group);
    const double objective = tape.scalar(rec.objective);
    if (!std::isfinite(objective)) {
      throw NumericalError("non-finite objective at step " + std::to_string(steps_) + " (" +
                           (group == ParamGroup::theta ? "theta" : "embedding") + " update)");
    }
    tape.backward(rec.objective);
    auto& arrays = model_.arrays();
    for (std::size_t i = 0; i < arrays.size(); ++i) {
      if (!rec.leaves.active[i]) continue;
      const Tensor& g = tape.grad(rec.leaves.mean[i]);
      if (!g.all_finite()) {
        throw NumericalError("non-finite gradient for '" + arrays[i].name + "' at step " +
                             std::to_string(steps_));
      }
      adam_update(mean_state_[i], arrays[i].value, g);
      if (arrays[i].log_std) adam_update(log_std_state_[i], *arrays[i].log_std, tape.grad(rec.leaves.log_std[i]));
      if (config_.optimize_priors && arrays[i].log_std) update_prior(arrays[i]);
    }
    ++steps_;
    return objective;
  }

  TrainingTrace run(const RatingsView& train, const RatingsView* validation = nullptr) {
    TrainingTrace trace;
    const std::size_t n = train.observations.size();
    if (config_.epochs == 0) return trace;
    if (n == 0) throw std::invalid_argument("train: empty training set");
    const std::size_t batch = (config_.batch_size == 0 || config_.batch_size >= n) ? n : config_.batch_size;
    std::vector<Observation> order(train.observations.begin(), train.observations.end());
    const double sign = model_.mode() == FitMode::vi ? -1.0 : 1.0;

    for (std::size_t epoch = 1; epoch <= config_.epochs; ++epoch) {
      if (batch < n) rng_.shuffle(order);
      double acc = 0.0;
      std::size_t iters = 0;
      for (std::size_t start = 0; start < n; start += batch) {
        const std::span<const Observation> mb(order.data() + start, std::min(batch, n - start));
        step(mb, n, train.side_info, ParamGroup::theta);
        acc += step(mb, n, train.side_info, ParamGroup::embeddings);
        ++iters;
      }
      TraceRow row;
      row.epoch = epoch;
      row.step = steps_;
      row.objective = sign * acc / static_cast<double>(iters);
      const bool last = epoch == config_.epochs;
      const bool due = config_.eval_every > 0 && epoch % config_.eval_every == 0;
      if (validation != nullptr && !validation->observations.empty() && (last || due)) {
        const auto pred = predict_many(model_, validation->observations, validation->side_info);
        row.validation_rmse = clipped_rmse(pred, validation->observations, config_.clip_min, config_.clip_max);
      }
      trace.rows.push_back(row);
    }
    return trace;
  }

  std::size_t steps() const { return steps_; }

 private:
  /// Closed-form maximizer of the ELBO in the shared prior variance.
  static void update_prior(ParamArray& a) {
    if (a.value.empty()) return;
    double s = 0.0;
    for (std::size_t i = 0; i < a.value.size(); ++i) {
      s += a.value[i] * a.value[i] + std::exp(2.0 * (*a.log_std)[i]);
    }
    a.prior_std = std::max(std::sqrt(s / static_cast<double>(a.value.size())), 1e-6);
  }

  NnmfModel& model_;
  TrainConfig config_;
  Rng rng_;
  std::vector<AdamState> mean_state_;
  std::vector<AdamState> log_std_state_;
  std::size_t steps_ = 0;
};

/// Trains `model` in place. The trace is a pure function of (model, data, config, rng).
inline TrainingTrace train(NnmfModel& model, const RatingsView& data, const TrainConfig& config,
                           Rng rng, const RatingsView* validation = nullptr) {
  NnmfTrainer trainer(model, config, rng);
  return trainer.run(data, validation);
}

inline double mean_value(std::span<const Observation> obs) {
  if (obs.empty()) return 0.0;
  double s = 0.0;
  for (const Observation& o : obs) s += o.value;
  return s / static_cast<double>(obs.size());
}

}  // namespace vimf::mf
