#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vimf/core/adam.hpp"
#include "vimf/core/errors.hpp"
#include "vimf/core/rng.hpp"
#include "vimf/sbm/sbm.hpp"

namespace vimf::sbm {

struct SviConfig {
  std::size_t steps = 0;
  std::size_t batch_size = 0;  // pairs per step; 0 means all training pairs
  std::size_t mc_samples = 1;
  AdamConfig adam;
  double stick_learning_rate = 0.0;  // rho and alpha; 0 means adam.learning_rate
  std::size_t eval_every = 0;  // 0: diagnostics only for the last step
  std::size_t eta_warmup = 0;  // steps that keep eta fixed before responsibility updates start
};

struct StepDiagnostics {
  std::size_t step = 0;
  std::size_t batch_pairs = 0;
  std::size_t nodes_updated = 0;
  double elbo = 0.0;  // minibatch estimate of the full ELBO before the theta update
};

struct SviTrace {
  std::vector<StepDiagnostics> rows;
};

/// Algorithm state for stochastic variational inference on a fixed set of
/// training pairs: per-node training degrees and one Adam state per
/// optimized quantity.
class SbmTrainer {
 public:
  SbmTrainer(SbmModel& model, std::span<const Pair> train, SviConfig config, Rng rng)
      : model_(model),
        train_(train.begin(), train.end()),
        config_(std::move(config)),
        rng_(rng),
        rho_state_(stick_adam(config_)),
        alpha_state_(stick_adam(config_)),
        degree_(model.n_nodes(), 0) {
    check_pairs(model_, train_);
    for (const Pair& e : train_) {
      ++degree_[e.i];
      ++degree_[e.j];
    }
    for (std::size_t i = 0; i < model_.arrays().size(); ++i) {
      mean_state_.emplace_back(config_.adam);
      log_std_state_.emplace_back(config_.adam);
    }
    index_.resize(train_.size());
    std::iota(index_.begin(), index_.end(), std::size_t{0});
  }

  /// One pass of the five sub-steps: sample pairs, update eta for the nodes
  /// they touch, update q(V) and alpha, update q(theta), update the cluster
  /// features.
  StepDiagnostics step() {
    if (train_.empty()) throw std::invalid_argument("svi_step: no training pairs");
    const std::size_t n = train_.size();
    const std::size_t b = (config_.batch_size == 0 || config_.batch_size >= n) ? n : config_.batch_size;
    std::vector<Pair> batch;
    if (b == n) {
      batch = train_;
    } else {
      partial_shuffle(b);
      batch.reserve(b);
      for (std::size_t k = 0; k < b; ++k) batch.push_back(train_[index_[k]]);
    }
    try {
      StepDiagnostics d;
      d.step = ++steps_;
      d.batch_pairs = batch.size();
      d.nodes_updated = steps_ > config_.eta_warmup ? update_responsibilities(batch) : 0;
      update_sticks();
      const double scale = static_cast<double>(n) / static_cast<double>(b);
      const double edge_elbo = update_arrays(batch, scale, SbmGroup::theta);
      update_arrays(batch, scale, SbmGroup::features);
      d.elbo = edge_elbo + stick_elbo(model_) + assignment_entropy(model_);
      return d;
    } catch (const NumericalError& e) {
      throw NumericalError("svi step " + std::to_string(steps_) + ": " + e.what());
    }
  }

  SviTrace run() {
    SviTrace trace;
    for (std::size_t s = 1; s <= config_.steps; ++s) {
      const StepDiagnostics d = step();
      const bool due = config_.eval_every > 0 && s % config_.eval_every == 0;
      if (due || s == config_.steps) trace.rows.push_back(d);
    }
    return trace;
  }

  std::size_t steps() const { return steps_; }

 private:
  static AdamConfig stick_adam(const SviConfig& c) {
    AdamConfig a = c.adam;
    if (c.stick_learning_rate > 0.0) a.learning_rate = c.stick_learning_rate;
    return a;
  }

  void partial_shuffle(std::size_t b) {
    for (std::size_t k = 0; k < b; ++k) {
      const std::size_t r = k + static_cast<std::size_t>(rng_.below(index_.size() - k));
      std::swap(index_[k], index_[r]);
    }
  }

  /// Jacobi update: every new row reads the responsibilities from before the
  /// step. Each node draws its own Monte-Carlo estimate of the pair terms.
  std::size_t update_responsibilities(std::span<const Pair> batch) {
    std::vector<std::vector<Neighbor>> nbrs(model_.n_nodes());
    for (const Pair& e : batch) {
      nbrs[e.i].push_back({e.j, e.x});
      nbrs[e.j].push_back({e.i, e.x});
    }
    const StickExpectations sticks = expected_log_sticks(model_);
    const Tensor previous = model_.eta();
    std::size_t updated = 0;
    for (std::size_t i = 0; i < model_.n_nodes(); ++i) {
      if (nbrs[i].empty()) continue;
      const PairLogLik table = expected_pair_loglik(model_, config_.mc_samples, rng_);
      const double scale = static_cast<double>(degree_[i]) / static_cast<double>(nbrs[i].size());
      const auto row = update_eta(sticks, previous, nbrs[i], table, scale);
      std::copy(row.begin(), row.end(), model_.eta().row_span(i).begin());
      ++updated;
    }
    return updated;
  }

  void update_sticks() {
    if (model_.T() < 2) return;
    StickGradients g = stick_elbo_gradients(model_);
    if (!g.log_rho.all_finite() || !std::isfinite(g.log_alpha)) {
      throw NumericalError("non-finite gradient for rho or alpha");
    }
    for (double& v : g.log_rho.storage()) v = -v;
    adam_update(rho_state_, model_.log_rho(), g.log_rho);
    adam_update(alpha_state_, model_.log_alpha(), -g.log_alpha);
  }

  /// Returns the edge part of the ELBO estimate (log-likelihood - KL).
  double update_arrays(std::span<const Pair> batch, double scale, SbmGroup group) {
    Tape tape;
    const SbmObjectiveRecord rec =
        record_sbm_negative_elbo(tape, model_, batch, scale, config_.mc_samples, rng_, group);
    const double objective = tape.scalar(rec.objective);
    if (!std::isfinite(objective)) {
      throw NumericalError(std::string("non-finite objective (") +
                           (group == SbmGroup::theta ? "theta" : "feature") + " update)");
    }
    tape.backward(rec.objective);
    auto& arrays = model_.arrays();
    for (std::size_t i = 0; i < arrays.size(); ++i) {
      if (!rec.active[i]) continue;
      const Tensor& gm = tape.grad(rec.mean[i]);
      const Tensor& gs = tape.grad(rec.log_std[i]);
      if (!gm.all_finite() || !gs.all_finite()) {
        throw NumericalError("non-finite gradient for '" + arrays[i].name + "'");
      }
      adam_update(mean_state_[i], arrays[i].value, gm);
      adam_update(log_std_state_[i], *arrays[i].log_std, gs);
    }
    return -objective;
  }

  SbmModel& model_;
  std::vector<Pair> train_;
  SviConfig config_;
  Rng rng_;
  std::vector<AdamState> mean_state_;
  std::vector<AdamState> log_std_state_;
  AdamState rho_state_;
  AdamState alpha_state_;
  std::vector<std::size_t> degree_;
  std::vector<std::size_t> index_;
  std::size_t steps_ = 0;
};

inline SviTrace train_sbm(SbmModel& model, std::span<const Pair> train, const SviConfig& config, Rng rng) {
  SbmTrainer trainer(model, train, config, rng);
  return trainer.run();
}

/// Logit of the link density, used as the initial output bias.
inline double density_logit(std::span<const Pair> pairs) {
  if (pairs.empty()) return 0.0;
  double links = 0.0;
  for (const Pair& e : pairs) links += e.x;
  const double p = std::clamp(links / static_cast<double>(pairs.size()), 1e-6, 1.0 - 1e-6);
  return std::log(p / (1.0 - p));
}

}  // namespace vimf::sbm
