#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vimf/core/autodiff.hpp"
#include "vimf/core/errors.hpp"
#include "vimf/core/mlp.hpp"
#include "vimf/core/rng.hpp"
#include "vimf/core/special.hpp"
#include "vimf/core/tensor.hpp"
#include "vimf/core/variational.hpp"
#include "vimf/mf/nnmf.hpp"

namespace vimf::sbm {

using mf::ParamArray;

/// One unordered node pair with its link indicator, stored with i < j.
struct Pair {
  std::uint32_t i = 0;
  std::uint32_t j = 0;
  double x = 0.0;
};

struct SbmHyperparams {
  std::size_t T = 7;
  std::size_t K = 10;
  std::size_t K_prime = 1;
  std::size_t D = 60;
  std::size_t hidden_layers = 0;
  std::size_t hidden_width = 50;
  double prior_std_U = 1.0;
  double prior_std_U_prime = 1.0;
  double prior_std_theta = 1.0;
  double init_std = 0.05;
  double init_log_std = -3.0;
  double alpha_init = 1.0;
  double eta_init_noise = 0.01;

  std::size_t factor_width() const { return K_prime * D; }
  std::size_t input_width() const { return 2 * K + K_prime * D; }
  std::size_t num_pair_types() const { return T * (T + 1) / 2; }

  void validate() const {
    if (T == 0) throw std::invalid_argument("SbmHyperparams: T must be positive");
    if (K_prime == 0) throw std::invalid_argument("SbmHyperparams: K_prime must be positive");
    if (input_width() == 0) throw std::invalid_argument("SbmHyperparams: empty network input");
    if (hidden_layers > 0 && hidden_width == 0) {
      throw std::invalid_argument("SbmHyperparams: hidden_width must be positive");
    }
    if (!(prior_std_U > 0 && prior_std_U_prime > 0 && prior_std_theta > 0)) {
      throw std::invalid_argument("SbmHyperparams: prior standard deviations must be positive");
    }
    if (!(alpha_init > 0)) throw std::invalid_argument("SbmHyperparams: alpha must be positive");
  }
};

/// Index of the unordered cluster pair {s, t} among the T(T+1)/2 pair types.
inline std::size_t canonical_pair(std::size_t s, std::size_t t, std::size_t T) {
  if (s > t) std::swap(s, t);
  return s * (2 * T - s + 1) / 2 + (t - s);
}

/// Inverse of canonical_pair, listing (s, t) with s <= t in index order.
inline std::vector<std::pair<std::size_t, std::size_t>> pair_types(std::size_t T) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t s = 0; s < T; ++s)
    for (std::size_t t = s; t < T; ++t) out.emplace_back(s, t);
  return out;
}

class SbmModel {
 public:
  static constexpr std::size_t kU = 0;
  static constexpr std::size_t kUPrime = 1;
  static constexpr std::size_t kFirstTheta = 2;

  SbmModel() = default;

  /// alpha = alpha_init, rho rows (1, alpha), eta a softmax of small noise,
  /// feature and weight means N(0, init_std^2). The output bias starts at
  /// `output_bias` (callers pass the logit of the training density).
  static SbmModel create(const SbmHyperparams& hp, std::size_t n_nodes, Rng& rng, double output_bias = 0.0) {
    hp.validate();
    SbmModel m;
    m.hp_ = hp;
    m.n_nodes_ = n_nodes;
    m.log_alpha_ = std::log(hp.alpha_init);
    m.log_rho_ = Tensor({hp.T - 1, 2});
    for (std::size_t c = 0; c + 1 < hp.T; ++c) m.log_rho_(c, 1) = m.log_alpha_;
    m.eta_ = Tensor::matrix(n_nodes, hp.T);
    for (std::size_t i = 0; i < n_nodes; ++i) {
      std::vector<double> logits(hp.T);
      for (double& l : logits) l = hp.eta_init_noise * rng.normal();
      const auto row = normalize_logits(logits);
      std::copy(row.begin(), row.end(), m.eta_.row_span(i).begin());
    }
    auto add = [&](std::string name, Tensor::Shape shape, double prior) {
      ParamArray a;
      a.name = std::move(name);
      a.value = rng.normal_tensor(shape, 0.0, hp.init_std);
      a.log_std = Tensor(shape, hp.init_log_std);
      a.prior_std = prior;
      m.arrays_.push_back(std::move(a));
    };
    add("U", {hp.T, hp.K}, hp.prior_std_U);
    add("U_prime", {hp.T, hp.D, hp.K_prime}, hp.prior_std_U_prime);
    const auto sizes = mlp_layer_sizes(hp.input_width(), hp.hidden_layers, hp.hidden_width);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      add("W" + std::to_string(l), {sizes[l], sizes[l + 1]}, hp.prior_std_theta);
      add("b" + std::to_string(l), {1, sizes[l + 1]}, hp.prior_std_theta);
    }
    m.arrays_.back().value[0] = output_bias;
    return m;
  }

  /// Reassembles a model from stored state (checkpoint loading).
  static SbmModel from_state(const SbmHyperparams& hp, Tensor eta, Tensor log_rho, double log_alpha,
                             std::vector<ParamArray> arrays) {
    SbmModel m;
    m.hp_ = hp;
    m.n_nodes_ = eta.rows();
    m.eta_ = std::move(eta);
    m.log_rho_ = std::move(log_rho);
    m.log_alpha_ = log_alpha;
    m.arrays_ = std::move(arrays);
    m.validate();
    return m;
  }

  void validate() const {
    hp_.validate();
    if (eta_.rows() != n_nodes_ || eta_.cols() != hp_.T) throw std::invalid_argument("SbmModel: eta shape");
    for (std::size_t i = 0; i < n_nodes_; ++i) {
      double s = 0.0;
      for (double v : eta_.row_span(i)) {
        if (!(v >= 0.0)) throw std::invalid_argument("SbmModel: negative responsibility");
        s += v;
      }
      if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("SbmModel: eta row does not sum to one");
    }
    if (log_rho_.rows() != hp_.T - 1 || (hp_.T > 1 && log_rho_.cols() != 2)) {
      throw std::invalid_argument("SbmModel: rho must have T-1 rows of 2");
    }
    if (!log_rho_.all_finite() || !std::isfinite(log_alpha_)) {
      throw std::invalid_argument("SbmModel: rho and alpha must be positive and finite");
    }
    const auto sizes = mlp_layer_sizes(hp_.input_width(), hp_.hidden_layers, hp_.hidden_width);
    if (arrays_.size() != kFirstTheta + 2 * (sizes.size() - 1)) {
      throw std::invalid_argument("SbmModel: wrong number of parameter arrays");
    }
    for (const ParamArray& a : arrays_) {
      if (!a.log_std) throw std::invalid_argument("SbmModel: array '" + a.name + "' lacks log_std");
      (void)a.q();
    }
  }

  const SbmHyperparams& hyperparams() const { return hp_; }
  std::size_t T() const { return hp_.T; }
  std::size_t n_nodes() const { return n_nodes_; }

  const Tensor& eta() const { return eta_; }
  Tensor& eta() { return eta_; }
  const Tensor& log_rho() const { return log_rho_; }
  Tensor& log_rho() { return log_rho_; }
  double rho(std::size_t c, std::size_t k) const { return std::exp(log_rho_(c, k)); }
  double log_alpha() const { return log_alpha_; }
  double& log_alpha() { return log_alpha_; }
  double alpha() const { return std::exp(log_alpha_); }

  std::vector<ParamArray>& arrays() { return arrays_; }
  const std::vector<ParamArray>& arrays() const { return arrays_; }
  ParamArray& array(std::size_t i) { return arrays_.at(i); }
  const ParamArray& array(std::size_t i) const { return arrays_.at(i); }
  std::size_t num_layers() const { return (arrays_.size() - kFirstTheta) / 2; }
  bool is_theta(std::size_t i) const { return i >= kFirstTheta; }

  /// Log-sum-exp normalization of one row of unnormalized log weights.
  static std::vector<double> normalize_logits(std::span<const double> logits) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double l : logits) {
      if (std::isnan(l)) throw NumericalError("eta update: NaN logit");
      mx = std::max(mx, l);
    }
    if (!std::isfinite(mx)) {
      throw NumericalError("eta update: no finite logit (max = " + std::to_string(mx) + ")");
    }
    std::vector<double> out(logits.size());
    double s = 0.0;
    for (std::size_t t = 0; t < logits.size(); ++t) s += out[t] = std::exp(logits[t] - mx);
    for (double& v : out) v /= s;
    return out;
  }

 private:
  SbmHyperparams hp_;
  std::size_t n_nodes_ = 0;
  Tensor eta_;
  Tensor log_rho_;
  double log_alpha_ = 0.0;
  std::vector<ParamArray> arrays_;
};

// ---- stick breaking ---------------------------------------------------------

inline std::vector<double> stick_breaking_weights(std::span<const double> v) {
  std::vector<double> pi(v.size());
  double remaining = 1.0;
  for (std::size_t c = 0; c < v.size(); ++c) {
    if (!(v[c] > 0.0 && v[c] <= 1.0)) {
      throw std::invalid_argument("stick_breaking_weights: stick proportions must lie in (0, 1]");
    }
    pi[c] = v[c] * remaining;
    remaining *= 1.0 - v[c];
  }
  return pi;
}

struct StickExpectations {
  std::vector<double> log_v;    // E[log V_c]
  std::vector<double> log_1mv;  // E[log(1 - V_c)]
};

inline std::pair<double, double> expected_log_stick(double a, double b) {
  if (!(a > 0.0 && b > 0.0)) throw std::domain_error("expected_log_stick: beta parameters must be positive");
  const double ds = digamma(a + b);
  return {digamma(a) - ds, digamma(b) - ds};
}

/// Expectations for every row of a (rows x 2) beta-parameter matrix.
inline StickExpectations expected_log_sticks(const Tensor& rho) {
  StickExpectations e;
  for (std::size_t c = 0; c < rho.rows(); ++c) {
    const auto [lv, l1mv] = expected_log_stick(rho(c, 0), rho(c, 1));
    e.log_v.push_back(lv);
    e.log_1mv.push_back(l1mv);
  }
  return e;
}

/// Expectations for the model's T sticks, with V_T fixed at 1.
inline StickExpectations expected_log_sticks(const SbmModel& model) {
  Tensor rho({model.T() - 1, 2});
  for (std::size_t c = 0; c + 1 < model.T(); ++c) {
    rho(c, 0) = model.rho(c, 0);
    rho(c, 1) = model.rho(c, 1);
  }
  StickExpectations e = expected_log_sticks(rho);
  e.log_v.push_back(0.0);
  e.log_1mv.push_back(-std::numeric_limits<double>::infinity());
  return e;
}

/// E[log pi_t] = E[log V_t] + sum_{l<t} E[log(1 - V_l)].
inline std::vector<double> prior_logits(const StickExpectations& e) {
  std::vector<double> out(e.log_v.size());
  double acc = 0.0;
  for (std::size_t t = 0; t < out.size(); ++t) {
    out[t] = e.log_v[t] + acc;
    acc += e.log_1mv[t];
  }
  return out;
}

// ---- network evaluation -----------------------------------------------------

/// Per-pair-type expected Bernoulli log-likelihoods, indexed by canonical_pair.
struct PairLogLik {
  std::vector<double> log_p1;
  std::vector<double> log_p0;
};

/// (P x 1) network outputs for the P = T(T+1)/2 canonical cluster pairs.
/// `values` holds one Var per model array.
inline Var record_pair_logits(Tape& tape, std::span<const Var> values, const SbmModel& model) {
  const SbmHyperparams& hp = model.hyperparams();
  const auto types = pair_types(hp.T);
  std::vector<std::size_t> a(types.size());
  std::vector<std::size_t> b(types.size());
  for (std::size_t p = 0; p < types.size(); ++p) {
    a[p] = types[p].first;
    b[p] = types[p].second;
  }
  std::vector<Var> parts;
  if (hp.K > 0) {
    parts.push_back(tape.gather_rows(values[SbmModel::kU], a));
    parts.push_back(tape.gather_rows(values[SbmModel::kU], b));
  }
  if (hp.factor_width() > 0) {
    parts.push_back(tape.mul(tape.gather_rows(values[SbmModel::kUPrime], a),
                             tape.gather_rows(values[SbmModel::kUPrime], b)));
  }
  Var x = tape.concat_cols(parts);
  std::vector<Var> w;
  std::vector<Var> bias;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    w.push_back(values[SbmModel::kFirstTheta + 2 * l]);
    bias.push_back(values[SbmModel::kFirstTheta + 2 * l + 1]);
  }
  return record_mlp_logits(tape, w, bias, x);
}

/// Logits for every canonical pair type at the variational means.
inline std::vector<double> mean_pair_logits(const SbmModel& model) {
  Tape tape;
  std::vector<Var> values;
  for (const ParamArray& a : model.arrays()) values.push_back(tape.constant(a.value));
  const Tensor& z = tape.value(record_pair_logits(tape, values, model));
  return {z.data().begin(), z.data().end()};
}

/// Monte-Carlo estimate of E_q[log Bernoulli(x | sigmoid(f))] for every
/// pair type, drawing all feature and network arrays from q per sample.
inline PairLogLik expected_pair_loglik(const SbmModel& model, std::size_t mc_samples, Rng& rng) {
  if (mc_samples == 0) throw std::invalid_argument("expected_pair_loglik: mc_samples must be positive");
  const std::size_t P = model.hyperparams().num_pair_types();
  PairLogLik out{std::vector<double>(P, 0.0), std::vector<double>(P, 0.0)};
  for (std::size_t s = 0; s < mc_samples; ++s) {
    Tape tape;
    std::vector<Var> values;
    for (const ParamArray& a : model.arrays()) values.push_back(tape.constant(reparameterize_sample(a.q(), rng)));
    const Tensor& z = tape.value(record_pair_logits(tape, values, model));
    for (std::size_t p = 0; p < P; ++p) {
      out.log_p1[p] += log_sigmoid(z[p]);
      out.log_p0[p] += log_sigmoid(-z[p]);
    }
  }
  for (std::size_t p = 0; p < P; ++p) {
    out.log_p1[p] /= static_cast<double>(mc_samples);
    out.log_p0[p] /= static_cast<double>(mc_samples);
  }
  return out;
}

inline double bernoulli_loglik_mc(const SbmModel& model, double x, std::size_t t_i, std::size_t t_j,
                                  std::size_t mc_samples, Rng& rng) {
  if (t_i >= model.T() || t_j >= model.T()) throw std::invalid_argument("bernoulli_loglik_mc: cluster out of range");
  const PairLogLik table = expected_pair_loglik(model, mc_samples, rng);
  const std::size_t p = canonical_pair(t_i, t_j, model.T());
  return x * table.log_p1[p] + (1.0 - x) * table.log_p0[p];
}

// ---- responsibilities -------------------------------------------------------

/// A pair seen from one endpoint: the partner node and the link indicator.
struct Neighbor {
  std::uint32_t node = 0;
  double x = 0.0;
};

/// eta_i from its prior logits plus `scale` times the summed expected
/// log-likelihood of its neighbor pairs, partners marginalized under `eta`.
inline std::vector<double> update_eta(const StickExpectations& sticks, const Tensor& eta,
                                      std::span<const Neighbor> neighbors, const PairLogLik& table,
                                      double scale) {
  const std::size_t T = sticks.log_v.size();
  std::vector<double> logits = prior_logits(sticks);
  if (!neighbors.empty()) {
    std::vector<double> lik(T, 0.0);
    for (const Neighbor& nb : neighbors) {
      const auto eta_j = eta.row_span(nb.node);
      for (std::size_t t = 0; t < T; ++t) {
        double s = 0.0;
        for (std::size_t u = 0; u < T; ++u) {
          const std::size_t p = canonical_pair(t, u, T);
          s += eta_j[u] * (nb.x * table.log_p1[p] + (1.0 - nb.x) * table.log_p0[p]);
        }
        lik[t] += s;
      }
    }
    for (std::size_t t = 0; t < T; ++t) logits[t] += scale * lik[t];
  }
  return SbmModel::normalize_logits(logits);
}

inline std::vector<double> update_eta(const SbmModel& model, std::span<const Neighbor> neighbors,
                                      const PairLogLik& table, double scale) {
  return update_eta(expected_log_sticks(model), model.eta(), neighbors, table, scale);
}

// ---- stick and concentration terms -------------------------------------------

/// ELBO terms that depend on q(V) and alpha:
/// sum_i E[log p(z_i | V)] + sum_{c<T} E[log p(V_c | alpha)] + H[q(V)].
inline double stick_elbo(const SbmModel& model) {
  const StickExpectations e = expected_log_sticks(model);
  const std::vector<double> prior = prior_logits(e);
  const std::size_t T = model.T();
  double total = 0.0;
  for (std::size_t i = 0; i < model.n_nodes(); ++i)
    for (std::size_t t = 0; t < T; ++t) total += model.eta()(i, t) * prior[t];
  const double alpha = model.alpha();
  for (std::size_t c = 0; c + 1 < T; ++c) {
    const double a = model.rho(c, 0);
    const double b = model.rho(c, 1);
    total += std::log(alpha) + (alpha - 1.0) * e.log_1mv[c];
    total += log_beta(a, b) - (a - 1.0) * digamma(a) - (b - 1.0) * digamma(b) + (a + b - 2.0) * digamma(a + b);
  }
  return total;
}

struct StickGradients {
  Tensor log_rho;  // d stick_elbo / d log rho, (T-1) x 2
  double log_alpha = 0.0;
};

inline StickGradients stick_elbo_gradients(const SbmModel& model) {
  const std::size_t T = model.T();
  const double alpha = model.alpha();
  StickGradients g{Tensor({T - 1, 2}), 0.0};
  // Column sums of eta and their tails.
  std::vector<double> mass(T, 0.0);
  for (std::size_t i = 0; i < model.n_nodes(); ++i)
    for (std::size_t t = 0; t < T; ++t) mass[t] += model.eta()(i, t);
  double tail = 0.0;
  std::vector<double> beyond(T, 0.0);
  for (std::size_t t = T; t-- > 0;) {
    beyond[t] = tail;
    tail += mass[t];
  }
  double dalpha = static_cast<double>(T - 1) / alpha;
  for (std::size_t c = 0; c + 1 < T; ++c) {
    const double a = model.rho(c, 0);
    const double b = model.rho(c, 1);
    const double S = a + b;
    const double A = mass[c];
    const double B = beyond[c] + alpha - 1.0;
    const double ts = trigamma(S);
    const double da = A * (trigamma(a) - ts) - B * ts - (a - 1.0) * trigamma(a) + (S - 2.0) * ts;
    const double db = -A * ts + B * (trigamma(b) - ts) - (b - 1.0) * trigamma(b) + (S - 2.0) * ts;
    g.log_rho(c, 0) = a * da;
    g.log_rho(c, 1) = b * db;
    dalpha += digamma(b) - digamma(S);
  }
  g.log_alpha = alpha * dalpha;
  return g;
}

/// Entropy of the factorized categorical q(Z).
inline double assignment_entropy(const SbmModel& model) {
  double h = 0.0;
  for (double v : model.eta().data())
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

// ---- edge terms on the tape ---------------------------------------------------

enum class SbmGroup { theta, features, all };

inline bool in_group(const SbmModel& model, std::size_t i, SbmGroup g) {
  switch (g) {
    case SbmGroup::theta: return model.is_theta(i);
    case SbmGroup::features: return !model.is_theta(i);
    case SbmGroup::all: return true;
  }
  return false;
}

struct SbmObjectiveRecord {
  Var objective;       // -(edge log-likelihood - KL)
  Var log_likelihood;  // scaled edge term
  Var kl;              // KL of features and network weights
  std::vector<bool> active;
  std::vector<Var> mean;
  std::vector<Var> log_std;
};

/// Coefficients of log sigmoid(z_p) and log sigmoid(-z_p) in the expected
/// edge log-likelihood of `batch`, scaled by `scale`.
inline std::pair<Tensor, Tensor> pair_coefficients(const SbmModel& model, std::span<const Pair> batch, double scale) {
  const std::size_t T = model.T();
  const std::size_t P = model.hyperparams().num_pair_types();
  Tensor c1 = Tensor::matrix(P, 1);
  Tensor c0 = Tensor::matrix(P, 1);
  for (const Pair& e : batch) {
    const auto ei = model.eta().row_span(e.i);
    const auto ej = model.eta().row_span(e.j);
    for (std::size_t s = 0; s < T; ++s) {
      for (std::size_t t = 0; t < T; ++t) {
        const double w = scale * ei[s] * ej[t];
        const std::size_t p = canonical_pair(s, t, T);
        c1[p] += w * e.x;
        c0[p] += w * (1.0 - e.x);
      }
    }
  }
  return {std::move(c1), std::move(c0)};
}

inline void check_pairs(const SbmModel& model, std::span<const Pair> batch) {
  for (const Pair& e : batch) {
    if (e.i >= model.n_nodes() || e.j >= model.n_nodes() || e.i == e.j) {
      throw std::invalid_argument("sbm: invalid pair (" + std::to_string(e.i) + ", " + std::to_string(e.j) + ")");
    }
  }
}

/// Negative of the eta-weighted expected edge log-likelihood (scaled by
/// `scale`, averaged over `mc_samples` reparameterized draws) plus the KL of
/// the feature and network posteriors. Noise is drawn for every array in
/// declaration order, then per sample.
inline SbmObjectiveRecord record_sbm_negative_elbo(Tape& tape, const SbmModel& model, std::span<const Pair> batch,
                                                   double scale, std::size_t mc_samples, Rng& rng, SbmGroup group) {
  if (mc_samples == 0) throw std::invalid_argument("sbm elbo: mc_samples must be positive");
  check_pairs(model, batch);
  const auto& arrays = model.arrays();
  SbmObjectiveRecord rec;
  std::vector<Var> stds(arrays.size());
  Var kl = tape.constant(Tensor::scalar(0.0));
  double kl_inactive = 0.0;
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    const bool active = in_group(model, i, group);
    rec.active.push_back(active);
    if (active) {
      Var m = tape.leaf(arrays[i].value);
      Var ls = tape.leaf(*arrays[i].log_std);
      rec.mean.push_back(m);
      rec.log_std.push_back(ls);
      stds[i] = tape.exp(ls);
      kl = tape.add(kl, record_kl(tape, m, ls, arrays[i].prior_std));
    } else {
      rec.mean.push_back(Var{});
      rec.log_std.push_back(Var{});
      kl_inactive += gaussian_kl(arrays[i].q());
    }
  }
  kl = tape.add_scalar(kl, kl_inactive);

  auto [c1, c0] = pair_coefficients(model, batch, scale / static_cast<double>(mc_samples));
  Var w1 = tape.constant(std::move(c1));
  Var w0 = tape.constant(std::move(c0));
  Var loglik = tape.constant(Tensor::scalar(0.0));
  for (std::size_t s = 0; s < mc_samples; ++s) {
    std::vector<Var> values;
    for (std::size_t i = 0; i < arrays.size(); ++i) {
      Tensor noise = rng.normal_tensor(arrays[i].value.shape());
      if (rec.active[i]) {
        values.push_back(tape.add(rec.mean[i], tape.mul(stds[i], tape.constant(std::move(noise)))));
      } else {
        values.push_back(tape.constant(reparameterize_sample(arrays[i].q(), noise)));
      }
    }
    Var z = record_pair_logits(tape, values, model);
    loglik = tape.add(loglik, tape.sum(tape.mul(w1, tape.log_sigmoid(z))));
    loglik = tape.add(loglik, tape.sum(tape.mul(w0, tape.log_sigmoid(tape.scale(z, -1.0)))));
  }
  rec.log_likelihood = loglik;
  rec.kl = kl;
  rec.objective = tape.sub(kl, loglik);
  return rec;
}

// ---- prediction and summaries -------------------------------------------------

inline double predict_link_prob(const SbmModel& model, std::size_t i, std::size_t j,
                                std::span<const double> pair_logits) {
  if (i == j) throw std::invalid_argument("predict_link_prob: self-pairs are undefined");
  if (i >= model.n_nodes() || j >= model.n_nodes()) throw std::invalid_argument("predict_link_prob: node out of range");
  if (i > j) std::swap(i, j);
  const std::size_t T = model.T();
  const auto ei = model.eta().row_span(i);
  const auto ej = model.eta().row_span(j);
  double p = 0.0;
  for (std::size_t s = 0; s < T; ++s)
    for (std::size_t t = 0; t < T; ++t) p += ei[s] * ej[t] * sigmoid(pair_logits[canonical_pair(s, t, T)]);
  return p;
}

inline double predict_link_prob(const SbmModel& model, std::size_t i, std::size_t j) {
  return predict_link_prob(model, i, j, mean_pair_logits(model));
}

inline std::vector<double> predict_pairs(const SbmModel& model, std::span<const Pair> pairs) {
  const std::vector<double> logits = mean_pair_logits(model);
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const Pair& e : pairs) out.push_back(predict_link_prob(model, e.i, e.j, logits));
  return out;
}

inline std::size_t effective_cluster_count(const SbmModel& model, double threshold = 1.0) {
  std::size_t count = 0;
  for (std::size_t t = 0; t < model.T(); ++t) {
    double mass = 0.0;
    for (std::size_t i = 0; i < model.n_nodes(); ++i) mass += model.eta()(i, t);
    if (mass > threshold) ++count;
  }
  return count;
}

/// Input parameters: T (K + K' D) cluster features.
inline std::size_t parameter_count(const SbmHyperparams& hp) { return hp.T * (hp.K + hp.K_prime * hp.D); }
inline std::size_t parameter_count(const SbmModel& model) { return parameter_count(model.hyperparams()); }

inline std::vector<std::size_t> hard_assignments(const SbmModel& model) {
  std::vector<std::size_t> out(model.n_nodes());
  for (std::size_t i = 0; i < model.n_nodes(); ++i) {
    const auto row = model.eta().row_span(i);
    out[i] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

/// CSV rows: node_id, argmax cluster, then T responsibilities.
inline void write_clusters_csv(const SbmModel& model, std::ostream& os) {
  os << "node_id,cluster";
  for (std::size_t t = 0; t < model.T(); ++t) os << ",eta_" << t;
  os << '\n';
  const auto z = hard_assignments(model);
  const auto old_precision = os.precision(17);
  for (std::size_t i = 0; i < model.n_nodes(); ++i) {
    os << i << ',' << z[i];
    for (double v : model.eta().row_span(i)) os << ',' << v;
    os << '\n';
  }
  os.precision(old_precision);
}

}  // namespace vimf::sbm
