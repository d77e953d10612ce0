#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vimf/core/autodiff.hpp"
#include "vimf/core/special.hpp"
#include "vimf/core/tensor.hpp"

namespace vimf {

enum class OutputActivation { identity, sigmoid };

/// Feed-forward net with sigmoid hidden units and a single output.
/// weights[l] is (layer_sizes[l] x layer_sizes[l+1]), biases[l] is (1 x layer_sizes[l+1]).
struct Mlp {
  std::vector<std::size_t> layer_sizes;
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
  OutputActivation output_activation = OutputActivation::identity;

  static Mlp zeros(std::vector<std::size_t> sizes, OutputActivation out) {
    if (sizes.size() < 2) throw std::invalid_argument("Mlp: need at least input and output widths");
    if (sizes.back() != 1) throw std::invalid_argument("Mlp: output width must be 1");
    Mlp net;
    net.layer_sizes = std::move(sizes);
    net.output_activation = out;
    for (std::size_t l = 0; l + 1 < net.layer_sizes.size(); ++l) {
      net.weights.push_back(Tensor::matrix(net.layer_sizes[l], net.layer_sizes[l + 1]));
      net.biases.push_back(Tensor::matrix(1, net.layer_sizes[l + 1]));
    }
    return net;
  }

  std::size_t input_width() const { return layer_sizes.front(); }
  std::size_t num_layers() const { return weights.size(); }

  void validate() const {
    if (layer_sizes.size() < 2 || weights.size() + 1 != layer_sizes.size() ||
        biases.size() != weights.size()) {
      throw std::invalid_argument("Mlp: inconsistent layer count");
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].rows() != layer_sizes[l] || weights[l].cols() != layer_sizes[l + 1] ||
          biases[l].size() != layer_sizes[l + 1]) {
        throw std::invalid_argument("Mlp: layer " + std::to_string(l) + " has incompatible shape");
      }
    }
  }
};

/// {input, width x hidden_layers, 1}.
inline std::vector<std::size_t> mlp_layer_sizes(std::size_t input, std::size_t hidden_layers,
                                                std::size_t hidden_width) {
  std::vector<std::size_t> s{input};
  for (std::size_t h = 0; h < hidden_layers; ++h) s.push_back(hidden_width);
  s.push_back(1);
  return s;
}

/// Output before the final activation.
inline double mlp_logit(const Mlp& net, std::span<const double> input) {
  if (input.size() != net.input_width()) {
    throw std::invalid_argument("mlp_forward: input width " + std::to_string(input.size()) +
                                " does not match " + std::to_string(net.input_width()));
  }
  std::vector<double> act(input.begin(), input.end());
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const Tensor& W = net.weights[l];
    const Tensor& b = net.biases[l];
    std::vector<double> next(b.data().begin(), b.data().end());
    for (std::size_t i = 0; i < act.size(); ++i) {
      const double a = act[i];
      if (a == 0.0) continue;
      for (std::size_t j = 0; j < next.size(); ++j) next[j] += a * W(i, j);
    }
    if (l + 1 < net.num_layers()) {
      for (double& v : next) v = sigmoid(v);
    }
    act = std::move(next);
  }
  return act[0];
}

inline double mlp_forward(const Mlp& net, std::span<const double> input) {
  const double z = mlp_logit(net, input);
  return net.output_activation == OutputActivation::sigmoid ? sigmoid(z) : z;
}

inline double mlp_forward(const Mlp& net, const Tensor& input) {
  return mlp_forward(net, input.data());
}

/// Batched forward on the tape: input is (B x width), result is the (B x 1)
/// pre-activation output. Callers apply the output link themselves so the
/// Bernoulli likelihood can use log_sigmoid directly.
inline Var record_mlp_logits(Tape& tape, std::span<const Var> weights, std::span<const Var> biases,
                             Var input) {
  if (weights.size() != biases.size() || weights.empty()) {
    throw std::invalid_argument("record_mlp_logits: weights/biases mismatch");
  }
  Var act = input;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    act = tape.add_row(tape.matmul(act, weights[l]), biases[l]);
    if (l + 1 < weights.size()) act = tape.sigmoid(act);
  }
  return act;
}

}  // namespace vimf
