#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "test_util.hpp"
#include "vimf/core/adam.hpp"
#include "vimf/core/autodiff.hpp"
#include "vimf/core/mlp.hpp"
#include "vimf/core/rng.hpp"
#include "vimf/core/special.hpp"
#include "vimf/core/variational.hpp"

using namespace vimf;

namespace {

VariationalGaussian scalar_q(double mean, double log_std, double prior = 1.0) {
  return VariationalGaussian(Tensor::scalar(mean), Tensor::scalar(log_std), prior);
}

// KL(N(mu, sigma^2) || N(0, s^2)) by quadrature of q log(q/p).
double kl_by_quadrature(double mu, double sigma, double s) {
  auto logpdf = [](double x, double m, double sd) {
    const double z = (x - m) / sd;
    return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
  };
  auto integrand = [&](double x) {
    const double lq = logpdf(x, mu, sigma);
    return std::exp(lq) * (lq - logpdf(x, 0.0, s));
  };
  return oracle::simpson(integrand, mu - 12.0 * sigma, mu + 12.0 * sigma, 20000);
}

}  // namespace

// ---- reparameterize_sample ----------------------------------------------

TEST(Reparameterize, ZeroNoiseReturnsMean) {
  Rng rng(3);
  VariationalGaussian q(rng.normal_tensor({3, 4}), rng.normal_tensor({3, 4}), 1.0);
  EXPECT_EQ(reparameterize_sample(q, Tensor({3, 4}, 0.0)), q.mean);
}

TEST(Reparameterize, UnitGaussian) {
  EXPECT_DOUBLE_EQ(reparameterize_sample(scalar_q(0.0, 0.0), Tensor::scalar(1.0))[0], 1.0);
}

TEST(Reparameterize, ShiftAndScale) {
  // 2 + 3 * (-1)
  EXPECT_NEAR(reparameterize_sample(scalar_q(2.0, std::log(3.0)), Tensor::scalar(-1.0))[0], -1.0, 1e-15);
}

TEST(Reparameterize, ShapeMismatchThrows) {
  EXPECT_THROW(reparameterize_sample(scalar_q(0.0, 0.0), Tensor({2, 1}, 0.0)), std::invalid_argument);
}

TEST(Reparameterize, SeededDrawsAreBitReproducible) {
  Rng a(42), b(42);
  VariationalGaussian q(Tensor({5, 7}, 0.3), Tensor({5, 7}, -1.0), 1.0);
  EXPECT_EQ(reparameterize_sample(q, a), reparameterize_sample(q, b));
}

TEST(Reparameterize, GradientFlowsToMeanAndLogStd) {
  VariationalGaussian q = scalar_q(0.5, std::log(2.0));
  Tape tape;
  SampledArray s = record_sample(tape, q, Tensor::scalar(1.5));
  Var loss = tape.sum(tape.square(s.sample));
  tape.backward(loss);
  const double x = 0.5 + 2.0 * 1.5;
  EXPECT_NEAR(tape.grad(s.mean)[0], 2.0 * x, 1e-12);
  EXPECT_NEAR(tape.grad(s.log_std)[0], 2.0 * x * 2.0 * 1.5, 1e-12);
}

// ---- gaussian_kl ---------------------------------------------------------

TEST(GaussianKl, IdenticalDistributionsGiveZero) {
  EXPECT_NEAR(gaussian_kl(scalar_q(0.0, std::log(1.7), 1.7)), 0.0, 1e-12);
}

TEST(GaussianKl, MatchesQuadratureOracle) {
  EXPECT_NEAR(kl_by_quadrature(1.0, 1.0, 1.0), 0.5, 1e-8);
  EXPECT_NEAR(gaussian_kl(scalar_q(1.0, 0.0, 1.0)), kl_by_quadrature(1.0, 1.0, 1.0), 1e-8);
  EXPECT_NEAR(gaussian_kl(scalar_q(0.0, std::log(2.0), 1.0)), kl_by_quadrature(0.0, 2.0, 1.0), 1e-8);
  EXPECT_NEAR(gaussian_kl(scalar_q(0.0, std::log(2.0), 1.0)), 0.806852819440055, 1e-12);
  EXPECT_NEAR(gaussian_kl(scalar_q(-0.7, -1.2, 0.4)), kl_by_quadrature(-0.7, std::exp(-1.2), 0.4), 1e-8);
}

TEST(GaussianKl, NonNegativeOnRandomInputs) {
  Rng rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    VariationalGaussian q(rng.normal_tensor({4}, 0.0, 2.0), rng.normal_tensor({4}, 0.0, 1.5),
                          std::exp(rng.normal()));
    EXPECT_GE(gaussian_kl(q), -1e-12);
  }
}

TEST(GaussianKl, RejectsNonPositivePrior) {
  EXPECT_THROW(gaussian_kl(scalar_q(0.0, 0.0, 0.0)), std::invalid_argument);
  EXPECT_THROW(gaussian_kl(scalar_q(0.0, 0.0, -1.0)), std::invalid_argument);
}

TEST(GaussianKl, TapeVersionMatchesClosedForm) {
  Rng rng(11);
  VariationalGaussian q(rng.normal_tensor({3, 2}), rng.normal_tensor({3, 2}, -1.0, 0.5), 0.8);
  Tape tape;
  Var m = tape.leaf(q.mean);
  Var ls = tape.leaf(q.log_std);
  Var kl = record_kl(tape, m, ls, q.prior_std);
  EXPECT_NEAR(tape.scalar(kl), gaussian_kl(q), 1e-12);
  tape.backward(kl);
  // d/dmu = mu / s^2; d/dls = -1 + sigma^2 / s^2
  for (std::size_t i = 0; i < q.mean.size(); ++i) {
    EXPECT_NEAR(tape.grad(m)[i], q.mean[i] / 0.64, 1e-12);
    EXPECT_NEAR(tape.grad(ls)[i], -1.0 + std::exp(2 * q.log_std[i]) / 0.64, 1e-12);
  }
}

// ---- digamma ---------------------------------------------------------------

TEST(Digamma, ReferenceValues) {
  // 30-digit references computed with mpmath.
  EXPECT_NEAR(digamma(1.0), -0.57721566490153286061, 1e-12);
  EXPECT_NEAR(digamma(0.5), -1.9635100260214234794, 1e-12);
  EXPECT_NEAR(digamma(0.001), -1000.5755719318103005, 1e-10);
  EXPECT_NEAR(digamma(2.5), 0.70315664064524318723, 1e-12);
  EXPECT_NEAR(digamma(7.3), 1.9178203356379860984, 1e-12);
  EXPECT_NEAR(digamma(100.0), 4.6001618527380874002, 1e-12);
  EXPECT_NEAR(digamma(1e6), 13.815510057964190771, 1e-12);
}

TEST(Digamma, RecurrenceOnLogGrid) {
  for (int k = 0; k <= 600; ++k) {
    const double x = std::pow(10.0, -3.0 + 6.0 * k / 600.0);
    EXPECT_NEAR(digamma(x + 1.0) - digamma(x), 1.0 / x, 1e-10) << "x=" << x;
  }
}

TEST(Digamma, DomainErrors) {
  EXPECT_THROW(digamma(0.0), std::domain_error);
  EXPECT_THROW(digamma(-2.5), std::domain_error);
  EXPECT_THROW(digamma(std::nan("")), std::domain_error);
}

TEST(Trigamma, ReferenceValues) {
  EXPECT_NEAR(trigamma(0.001), 1000001.642533195869, 1e-6);
  EXPECT_NEAR(trigamma(0.5), 4.9348022005446793094, 1e-12);
  EXPECT_NEAR(trigamma(1.0), 1.6449340668482264365, 1e-12);
  EXPECT_NEAR(trigamma(2.5), 0.49035775610023486497, 1e-12);
  EXPECT_NEAR(trigamma(7.3), 0.14679576813142709816, 1e-12);
  EXPECT_NEAR(trigamma(100.0), 0.010050166663333571395, 1e-14);
  EXPECT_NEAR(trigamma(1e6), 1.0000005000001666667e-6, 1e-18);
}

TEST(Trigamma, IsDerivativeOfDigamma) {
  for (double x : {0.05, 0.3, 1.0, 4.0, 6.5, 30.0}) {
    const double h = 1e-5 * x;
    EXPECT_NEAR(trigamma(x), (digamma(x + h) - digamma(x - h)) / (2 * h), 1e-5 * trigamma(x));
  }
}

// ---- adam ----------------------------------------------------------------

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  AdamState st;
  Tensor p = Tensor::row({1.0, -2.0, 3.0});
  const Tensor before = p;
  adam_update(st, p, Tensor({1, 3}, 0.0));
  EXPECT_EQ(p, before);
  EXPECT_EQ(st.step_count, 1u);
  for (double v : st.first_moment.data()) EXPECT_EQ(v, 0.0);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  AdamState st;
  Tensor p = Tensor::scalar(0.0);
  adam_update(st, p, Tensor::scalar(1.0));
  // m_hat = v_hat = 1 -> step = lr / (1 + eps)
  EXPECT_NEAR(p[0], -0.001 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, MomentDecayAfterZeroGradient) {
  AdamState st;
  Tensor p = Tensor::scalar(0.0);
  adam_update(st, p, Tensor::scalar(1.0));
  const double m1 = st.first_moment[0];
  const double v1 = st.second_moment[0];
  adam_update(st, p, Tensor::scalar(0.0));
  EXPECT_NEAR(st.first_moment[0], 0.9 * m1, 1e-15);
  EXPECT_NEAR(st.second_moment[0], 0.999 * v1, 1e-15);
}

TEST(Adam, ConstantGradientDecreasesMonotonically) {
  AdamState st;
  Tensor p = Tensor::scalar(0.0);
  double prev = p[0];
  for (int i = 0; i < 5; ++i) {
    adam_update(st, p, Tensor::scalar(1.0));
    EXPECT_LT(p[0], prev);
    prev = p[0];
  }
}

TEST(Adam, ShapeMismatchThrows) {
  AdamState st;
  Tensor p = Tensor::scalar(0.0);
  EXPECT_THROW(adam_update(st, p, Tensor({2}, 0.0)), std::invalid_argument);
}

// ---- mlp -------------------------------------------------------------------

TEST(Mlp, ZeroWeightsReturnBias) {
  Mlp net = Mlp::zeros({4, 1}, OutputActivation::identity);
  net.biases[0][0] = 1.25;
  EXPECT_DOUBLE_EQ(mlp_forward(net, Tensor::row({3, -1, 2, 9})), 1.25);
}

TEST(Mlp, LinearCaseIsDotProductPlusBias) {
  Mlp net = Mlp::zeros({3, 1}, OutputActivation::identity);
  net.weights[0] = Tensor({3, 1}, std::vector<double>{0.5, -2.0, 1.0});
  net.biases[0][0] = 0.25;
  EXPECT_DOUBLE_EQ(mlp_forward(net, Tensor::row({2.0, 1.0, 4.0})), 1.0 - 2.0 + 4.0 + 0.25);
}

TEST(Mlp, OneHiddenLayerHandComputed) {
  Mlp net = Mlp::zeros({2, 2, 1}, OutputActivation::identity);
  net.weights[0] = Tensor({2, 2}, std::vector<double>{0.5, -1.0, 0.25, 0.5});
  net.biases[0] = Tensor::row({0.0, 0.5});
  net.weights[1] = Tensor({2, 1}, std::vector<double>{2.0, -1.0});
  net.biases[1] = Tensor::row({0.1});
  // 2*sigmoid(1) - sigmoid(0.5) + 0.1
  EXPECT_NEAR(mlp_forward(net, Tensor::row({1.0, 2.0})), 0.9396578260581552, 1e-14);
}

TEST(Mlp, SigmoidOutput) {
  Mlp net = Mlp::zeros({1, 1}, OutputActivation::sigmoid);
  EXPECT_DOUBLE_EQ(mlp_forward(net, Tensor::row({5.0})), 0.5);
}

TEST(Mlp, WidthMismatchThrows) {
  Mlp net = Mlp::zeros({3, 1}, OutputActivation::identity);
  EXPECT_THROW(mlp_forward(net, Tensor::row({1.0, 2.0})), std::invalid_argument);
}

TEST(Mlp, TapeForwardMatchesPlainForward) {
  Rng rng(5);
  Mlp net = Mlp::zeros({4, 3, 3, 1}, OutputActivation::identity);
  for (auto& w : net.weights) w = rng.normal_tensor(w.shape());
  for (auto& b : net.biases) b = rng.normal_tensor(b.shape());
  Tensor x = rng.normal_tensor({5, 4});
  Tape tape;
  std::vector<Var> w, b;
  for (auto& t : net.weights) w.push_back(tape.constant(t));
  for (auto& t : net.biases) b.push_back(tape.constant(t));
  const Tensor& out = tape.value(record_mlp_logits(tape, w, b, tape.constant(x)));
  for (std::size_t r = 0; r < 5; ++r) {
    EXPECT_NEAR(out[r], mlp_forward(net, x.row_span(r)), 1e-13);
  }
}

// ---- backward --------------------------------------------------------------

TEST(Backward, SumGivesOnes) {
  Tape tape;
  Var x = tape.leaf(Tensor({2, 3}, 0.7));
  tape.backward(tape.sum(x));
  for (double g : tape.grad(x).data()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, BilinearGradient) {
  Rng rng(1);
  Tensor xv = rng.normal_tensor({3, 2});
  Tensor yv = rng.normal_tensor({3, 2});
  Tape tape;
  Var x = tape.leaf(xv);
  Var y = tape.leaf(yv);
  tape.backward(tape.sum(tape.mul(x, y)));
  EXPECT_EQ(tape.grad(x), yv);
  EXPECT_EQ(tape.grad(y), xv);
}

TEST(Backward, GradientOfUnusedValueIsLogicError) {
  Tape tape;
  Var x = tape.leaf(Tensor({2}, 1.0));
  Var unused = tape.leaf(Tensor({2}, 1.0));
  tape.backward(tape.sum(x));
  EXPECT_THROW(tape.grad(unused), std::logic_error);
  Tape other;
  Var foreign = other.leaf(Tensor({2}, 1.0));
  EXPECT_THROW(tape.grad(foreign), std::logic_error);
}

TEST(Backward, NonScalarLossRejected) {
  Tape tape;
  Var x = tape.leaf(Tensor({2, 2}, 1.0));
  EXPECT_THROW(tape.backward(x), std::invalid_argument);
}

TEST(Backward, MatchesFiniteDifferencesThroughEveryOp) {
  Rng rng(2024);
  Tensor a = rng.normal_tensor({4, 3});
  Tensor w = rng.normal_tensor({3, 2});
  Tensor bias = rng.normal_tensor({1, 2});
  Tensor table = rng.normal_tensor({5, 2});
  const std::vector<std::size_t> idx{4, 0, 4, 2};

  auto build = [&](Tape& t, Var& va, Var& vw, Var& vb, Var& vt) {
    va = t.leaf(a);
    vw = t.leaf(w);
    vb = t.leaf(bias);
    vt = t.leaf(table);
    Var h = t.sigmoid(t.add_row(t.matmul(va, vw), vb));
    Var g = t.gather_rows(vt, idx);
    Var c = t.concat_cols({h, g, t.mul(h, g)});
    Var e = t.exp(t.scale(c, 0.3));
    Var l = t.log(t.add_scalar(t.square(c), 1.0));
    Var ls = t.log_sigmoid(t.sub(c, e));
    return t.add(t.sum(t.mul(e, l)), t.sum(ls));
  };
  Tape tape;
  Var va, vw, vb, vt;
  tape.backward(build(tape, va, vw, vb, vt));
  auto f = [&] {
    Tape t;
    Var x1, x2, x3, x4;
    return t.scalar(build(t, x1, x2, x3, x4));
  };
  EXPECT_LT(oracle::max_fd_error(f, a, tape.grad(va), 12, rng), 1e-4);
  EXPECT_LT(oracle::max_fd_error(f, w, tape.grad(vw), 6, rng), 1e-4);
  EXPECT_LT(oracle::max_fd_error(f, bias, tape.grad(vb), 2, rng), 1e-4);
  EXPECT_LT(oracle::max_fd_error(f, table, tape.grad(vt), 10, rng), 1e-4);
}

// ---- rng -----------------------------------------------------------------

TEST(Rng, ForkedStreamsAreIndependentOfParentProgress) {
  Rng a(9);
  Rng child1 = a.fork(1);
  a.next_u64();
  Rng child2 = a.fork(1);
  EXPECT_EQ(child1.next_u64(), child2.next_u64());
  EXPECT_NE(a.fork(1).next_u64(), a.fork(2).next_u64());
}

TEST(Rng, NormalMoments) {
  Rng rng(123);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
}
