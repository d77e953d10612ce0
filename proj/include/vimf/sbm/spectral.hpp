#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "vimf/core/rng.hpp"
#include "vimf/sbm/sbm.hpp"

namespace vimf::sbm {

struct SpectralConfig {
  std::size_t restarts = 10;
  std::size_t max_iterations = 100;
  double smoothing = 0.1;  // mass spread uniformly over the T clusters
};

namespace detail {

/// Lloyd's algorithm with k-means++ seeding; returns labels of the best restart.
inline std::vector<std::size_t> kmeans(const Eigen::MatrixXd& x, std::size_t k, const SpectralConfig& cfg, Rng& rng) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::size_t> best(n, 0);
  double best_inertia = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < std::max<std::size_t>(cfg.restarts, 1); ++r) {
    Eigen::MatrixXd centers(k, x.cols());
    centers.row(0) = x.row(static_cast<Eigen::Index>(rng.below(n)));
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    for (std::size_t c = 1; c < k; ++c) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        d2[i] = std::min(d2[i], (x.row(i) - centers.row(c - 1)).squaredNorm());
        total += d2[i];
      }
      std::size_t pick = n - 1;
      double u = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        u -= d2[i];
        if (u < 0.0) {
          pick = i;
          break;
        }
      }
      centers.row(c) = x.row(pick);
    }
    std::vector<std::size_t> label(n, 0);
    double inertia = 0.0;
    for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
      bool changed = it == 0;
      inertia = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        Eigen::Index c = 0;
        inertia += (centers.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&c);
        if (label[i] != static_cast<std::size_t>(c)) changed = true;
        label[i] = static_cast<std::size_t>(c);
      }
      if (!changed) break;
      Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(k, x.cols());
      std::vector<std::size_t> count(k, 0);
      for (std::size_t i = 0; i < n; ++i) {
        sum.row(label[i]) += x.row(i);
        ++count[label[i]];
      }
      for (std::size_t c = 0; c < k; ++c) {
        if (count[c] > 0) {
          centers.row(c) = sum.row(c) / static_cast<double>(count[c]);
          continue;
        }
        // Empty cluster: move it to the point farthest from its center.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = (x.row(i) - centers.row(label[i])).squaredNorm();
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centers.row(c) = x.row(far);
      }
    }
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best = label;
    }
  }
  return best;
}

}  // namespace detail

/// Hard cluster labels from regularized spectral clustering of the linked
/// training pairs. Labels are renumbered by decreasing cluster size.
inline std::vector<std::size_t> spectral_labels(std::size_t n_nodes, std::span<const Pair> pairs, std::size_t k,
                                                Rng& rng, const SpectralConfig& cfg = {}) {
  if (n_nodes == 0 || k == 0) throw std::invalid_argument("spectral_labels: need nodes and clusters");
  k = std::min(k, n_nodes);
  const auto n = static_cast<Eigen::Index>(n_nodes);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (const Pair& e : pairs) {
    if (e.x > 0.0) {
      a(e.i, e.j) = 1.0;
      a(e.j, e.i) = 1.0;
    }
  }
  // Adding mean_degree / n to every entry keeps low-degree nodes from
  // dominating the leading eigenvectors.
  const double tau = std::max(a.sum() / static_cast<double>(n_nodes), 1e-3);
  a.array() += tau / static_cast<double>(n_nodes);
  const Eigen::VectorXd inv_sqrt = a.rowwise().sum().array().rsqrt();
  const Eigen::MatrixXd l = inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(l);
  Eigen::MatrixXd x = eig.eigenvectors().rightCols(static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = x.row(i).norm();
    if (norm > 0.0) x.row(i) /= norm;
  }
  const auto label = detail::kmeans(x, k, cfg, rng);
  std::vector<std::size_t> size(k, 0);
  for (auto c : label) ++size[c];
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t p, std::size_t q) { return size[p] > size[q]; });
  std::vector<std::size_t> rank(k);
  for (std::size_t r = 0; r < k; ++r) rank[order[r]] = r;
  std::vector<std::size_t> out(n_nodes);
  for (std::size_t i = 0; i < n_nodes; ++i) out[i] = rank[label[i]];
  return out;
}

/// Overwrites eta with smoothed one-hot rows from spectral_labels.
inline void spectral_init(SbmModel& model, std::span<const Pair> pairs, Rng& rng, const SpectralConfig& cfg = {}) {
  if (!(cfg.smoothing >= 0.0 && cfg.smoothing < 1.0)) {
    throw std::invalid_argument("spectral_init: smoothing must be in [0, 1)");
  }
  const std::size_t T = model.T();
  const auto label = spectral_labels(model.n_nodes(), pairs, T, rng, cfg);
  for (std::size_t i = 0; i < model.n_nodes(); ++i)
    for (std::size_t t = 0; t < T; ++t)
      model.eta()(i, t) = cfg.smoothing / static_cast<double>(T) + (t == label[i] ? 1.0 - cfg.smoothing : 0.0);
}

}  // namespace vimf::sbm
