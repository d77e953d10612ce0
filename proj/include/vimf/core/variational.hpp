#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "vimf/core/autodiff.hpp"
#include "vimf/core/rng.hpp"
#include "vimf/core/tensor.hpp"

namespace vimf {

/// Fully factorized Gaussian q over an array, with a shared zero-mean
/// Gaussian prior N(0, prior_std^2) on every element.
struct VariationalGaussian {
  Tensor mean;
  Tensor log_std;
  double prior_std = 1.0;

  VariationalGaussian() = default;
  VariationalGaussian(Tensor m, Tensor ls, double prior)
      : mean(std::move(m)), log_std(std::move(ls)), prior_std(prior) {
    require_same_shape(mean, log_std, "VariationalGaussian");
  }

  friend bool operator==(const VariationalGaussian&, const VariationalGaussian&) = default;
};

/// mean + exp(log_std) * noise.
inline Tensor reparameterize_sample(const VariationalGaussian& q, const Tensor& noise) {
  require_same_shape(q.mean, noise, "reparameterize_sample");
  require_same_shape(q.mean, q.log_std, "reparameterize_sample");
  Tensor out(q.mean.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = q.mean[i] + std::exp(q.log_std[i]) * noise[i];
  }
  return out;
}

inline Tensor reparameterize_sample(const VariationalGaussian& q, Rng& rng) {
  return reparameterize_sample(q, rng.normal_tensor(q.mean.shape()));
}

/// KL(q || N(0, prior_std^2)) summed over elements.
inline double gaussian_kl(const VariationalGaussian& q) {
  if (!(q.prior_std > 0.0)) {
    throw std::invalid_argument("gaussian_kl: prior_std must be positive, got " +
                                std::to_string(q.prior_std));
  }
  require_same_shape(q.mean, q.log_std, "gaussian_kl");
  const double s = q.prior_std;
  const double log_s = std::log(s);
  const double inv_2s2 = 0.5 / (s * s);
  double kl = 0.0;
  for (std::size_t i = 0; i < q.mean.size(); ++i) {
    const double mu = q.mean[i];
    const double ls = q.log_std[i];
    kl += (log_s - ls) + (std::exp(2.0 * ls) + mu * mu) * inv_2s2 - 0.5;
  }
  return kl;
}

/// Tape handles for one variational array: the two leaves and the draw.
struct SampledArray {
  Var mean;
  Var log_std;
  Var sample;
};

/// Records mean + exp(log_std) * noise on the tape with both inputs as leaves.
inline SampledArray record_sample(Tape& tape, const VariationalGaussian& q, const Tensor& noise) {
  require_same_shape(q.mean, noise, "record_sample");
  SampledArray s;
  s.mean = tape.leaf(q.mean);
  s.log_std = tape.leaf(q.log_std);
  Var scaled = tape.mul(tape.exp(s.log_std), tape.constant(noise));
  s.sample = tape.add(s.mean, scaled);
  return s;
}

/// Tape version of gaussian_kl.
inline Var record_kl(Tape& tape, Var mean, Var log_std, double prior_std) {
  if (!(prior_std > 0.0)) throw std::invalid_argument("record_kl: prior_std must be positive");
  const double n = static_cast<double>(tape.value(mean).size());
  const double inv_2s2 = 0.5 / (prior_std * prior_std);
  Var quad = tape.scale(tape.sum(tape.add(tape.exp(tape.scale(log_std, 2.0)), tape.square(mean))),
                        inv_2s2);
  Var neg_ls = tape.scale(tape.sum(log_std), -1.0);
  return tape.add_scalar(tape.add(quad, neg_ls), n * (std::log(prior_std) - 0.5));
}

}  // namespace vimf
