#include <gtest/gtest.h>

#include <algorithm>
#include <functional>

#include "fsgfa/ops.hpp"
#include "testutil.hpp"

using namespace fsgfa;
using testutil::randu;

namespace {

// Builds the graph twice: once with gradients for the analytic result, then
// repeatedly without for the central-difference probes.
using BuildFn = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

double grad_check(std::vector<Tensor<double>*> inputs, const BuildFn& build, Rng& rng,
                  int coords = 6) {
  std::vector<Tensor<double>> analytic;
  {
    Tape<double> t;
    std::vector<Var> vars;
    for (auto* in : inputs) vars.push_back(t.leaf(*in, true));
    Var loss = build(t, vars);
    t.backward(loss);
    for (Var v : vars) analytic.push_back(t.grad(v));
  }
  auto loss_only = [&]() {
    Tape<double> t;
    std::vector<Var> vars;
    for (auto* in : inputs) vars.push_back(t.leaf(*in, false));
    return t.val(build(t, vars))[0];
  };
  return testutil::fd_max_rel_err(inputs, analytic, loss_only, coords, rng);
}

// Distinct well-separated values so maxpool/relu stay away from ties and
// kinks under the +-h probes.
Tensor<double> spaced(std::vector<int> shape, Rng& rng) {
  Tensor<double> t(std::move(shape));
  const std::int64_t n = t.numel();
  std::vector<double> vals(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    double v = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n);
    if (std::abs(v) < 0.05) v += v >= 0 ? 0.1 : -0.1;
    vals[static_cast<std::size_t>(i)] = v;
  }
  for (std::int64_t i = n - 1; i > 0; --i)
    std::swap(vals[static_cast<std::size_t>(i)],
              vals[static_cast<std::size_t>(rng.uniform_int(0, i))]);
  t.data = vals;
  return t;
}

Var weighted_sum(Tape<double>& t, Var out, const Tensor<double>& weights) {
  return sum_all(t, mul(t, out, t.leaf(weights)));
}

}  // namespace

TEST(Autodiff, ScalarChainRule) {
  // loss = w * sum(x) for scalar w: dloss/dw = sum(x).
  Tape<double> t;
  Tensor<double> x({4}, std::vector<double>{1, 2, 3, 4});
  Var w = t.leaf(Tensor<double>({1}, 0.5), true);
  Var loss = mul(t, w, sum_all(t, t.leaf(x, true)));
  t.backward(loss);
  EXPECT_DOUBLE_EQ(t.grad(w)[0], 10.0);
}

TEST(Autodiff, NonScalarLossRejected) {
  Tape<double> t;
  Var x = t.leaf(Tensor<double>({3}, 1.0), true);
  Var y = scale(t, x, 2.0);
  EXPECT_THROW(t.backward(y), std::invalid_argument);
}

TEST(Autodiff, UnreachableParameterGetsZeroGradient) {
  Tape<double> t;
  Parameter<double> used("used", Tensor<double>({2}, 1.5));
  Parameter<double> unused("unused", Tensor<double>({3}, 2.0));
  Var u = t.param(used);
  t.param(unused);
  Var loss = sum_all(t, mul(t, u, u));
  t.backward(loss);
  t.accumulate_param_grads();
  EXPECT_DOUBLE_EQ(used.grad[0], 3.0);
  for (double g : unused.grad.data) EXPECT_DOUBLE_EQ(g, 0.0);
}

TEST(Autodiff, BranchGradientsAccumulate) {
  Rng rng(21);
  Tensor<double> y0 = randu<double>({6}, rng);
  Tensor<double> a = randu<double>({6}, rng);
  Tensor<double> b = randu<double>({6}, rng);

  Tape<double> t1;
  Var y1 = t1.leaf(y0, true);
  Var loss1 = add(t1, sum_all(t1, mul(t1, y1, t1.leaf(a))), sum_all(t1, mul(t1, y1, t1.leaf(b))));
  t1.backward(loss1);

  Tape<double> t2;
  Var y2 = t2.leaf(y0, true);
  Var loss2 = sum_all(t2, mul(t2, y2, add(t2, t2.leaf(a), t2.leaf(b))));
  t2.backward(loss2);

  EXPECT_DOUBLE_EQ(t1.val(loss1)[0], t2.val(loss2)[0]);
  for (int i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(t1.grad(y1)[i], t2.grad(y2)[i]);
}

TEST(Autodiff, FrozenParameterReceivesNoGradient) {
  Tape<double> t;
  Parameter<double> frozen("frozen", Tensor<double>({2}, 1.0), /*train=*/false);
  Var f = t.param(frozen);
  Var loss = sum_all(t, mul(t, f, f));
  t.backward(loss);
  t.accumulate_param_grads();
  for (double g : frozen.grad.data) EXPECT_DOUBLE_EQ(g, 0.0);
}

// ---------------------------------------------------------------------------
// Finite-difference soundness for every operator, 5 seeds each.
// ---------------------------------------------------------------------------

TEST(GradCheck, Conv2d) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    Tensor<double> x = randu<double>({2, 2, 5, 5}, rng);
    Tensor<double> w = randu<double>({3, 2, 3, 3}, rng);
    Tensor<double> b = randu<double>({3}, rng);
    Tensor<double> r = randu<double>({2, 3, 3, 3}, rng);
    double err = grad_check({&x, &w, &b},
                            [&](Tape<double>& t, const std::vector<Var>& v) {
                              return weighted_sum(t, conv2d(t, v[0], v[1], v[2], 2, 1), r);
                            },
                            rng);
    EXPECT_LT(err, 1e-4) << "seed " << seed;
  }
}

TEST(GradCheck, Deconv2d) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    Tensor<double> x = randu<double>({1, 2, 4, 4}, rng);
    Tensor<double> w = randu<double>({2, 3, 3, 3}, rng);
    Tensor<double> r = randu<double>({1, 3, 8, 8}, rng);
    double err = grad_check({&x, &w},
                            [&](Tape<double>& t, const std::vector<Var>& v) {
                              return weighted_sum(t, deconv2d(t, v[0], v[1], 2, 1, 1), r);
                            },
                            rng);
    EXPECT_LT(err, 1e-4) << "seed " << seed;
  }
}

TEST(GradCheck, BatchNormTrainMode) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    Tensor<double> x = randu<double>({2, 3, 4, 4}, rng);
    Tensor<double> g = randu<double>({3}, rng, 0.5, 1.5);
    Tensor<double> b = randu<double>({3}, rng);
    Tensor<double> r = randu<double>({2, 3, 4, 4}, rng);
    BnState<double> st(3);
    double err = grad_check(
        {&x, &g, &b},
        [&](Tape<double>& t, const std::vector<Var>& v) {
          return weighted_sum(
              t, batchnorm2d(t, v[0], v[1], v[2], st, BnMode::train_no_update), r);
        },
        rng);
    EXPECT_LT(err, 1e-4) << "seed " << seed;
  }
}

TEST(GradCheck, BatchNormEvalMode) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    Tensor<double> x = randu<double>({2, 3, 4, 4}, rng);
    Tensor<double> g = randu<double>({3}, rng, 0.5, 1.5);
    Tensor<double> b = randu<double>({3}, rng);
    Tensor<double> r = randu<double>({2, 3, 4, 4}, rng);
    BnState<double> st(3);
    for (int c = 0; c < 3; ++c) {
      st.running_mean[c] = rng.uniform(-0.5, 0.5);
      st.running_var[c] = rng.uniform(0.5, 1.5);
    }
    double err =
        grad_check({&x, &g, &b},
                   [&](Tape<double>& t, const std::vector<Var>& v) {
                     return weighted_sum(t, batchnorm2d(t, v[0], v[1], v[2], st, BnMode::eval), r);
                   },
                   rng);
    EXPECT_LT(err, 1e-4) << "seed " << seed;
  }
}

TEST(GradCheck, ReluTanhAwayFromKinks) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    Tensor<double> x = spaced({3, 4, 2, 2}, rng);
    Tensor<double> r = randu<double>({3, 4, 2, 2}, rng);
    double err = grad_check({&x},
                            [&](Tape<double>& t, const std::vector<Var>& v) {
                              return weighted_sum(t, relu(t, v[0]), r);
                            },
                            rng);
    EXPECT_LT(err, 1e-4) << "relu seed " << seed;
    err = grad_check({&x},
                     [&](Tape<double>& t, const std::vector<Var>& v) {
                       return weighted_sum(t, tanh_op(t, v[0]), r);
                     },
                     rng);
    EXPECT_LT(err, 1e-4) << "tanh seed " << seed;
  }
}

TEST(GradCheck, MaxPool) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    Tensor<double> x = spaced({2, 2, 6, 6}, rng);
    Tensor<double> r = randu<double>({2, 2, 3, 3}, rng);
    double err = grad_check({&x},
                            [&](Tape<double>& t, const std::vector<Var>& v) {
                              return weighted_sum(t, maxpool2d(t, v[0], 3, 2, 1), r);
                            },
                            rng);
    EXPECT_LT(err, 1e-4) << "seed " << seed;
  }
}

TEST(GradCheck, GlobalAvgPoolLinearConcatSoftmax) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    Tensor<double> x = randu<double>({2, 3, 4, 4}, rng);
    Tensor<double> r2 = randu<double>({2, 3}, rng);
    double err = grad_check({&x},
                            [&](Tape<double>& t, const std::vector<Var>& v) {
                              return weighted_sum(t, global_avg_pool(t, v[0]), r2);
                            },
                            rng);
    EXPECT_LT(err, 1e-4) << "gap seed " << seed;

    Tensor<double> xm = randu<double>({3, 4}, rng);
    Tensor<double> q = randu<double>({4, 5}, rng);
    Tensor<double> b = randu<double>({5}, rng);
    Tensor<double> rl = randu<double>({3, 5}, rng);
    err = grad_check({&xm, &q, &b},
                     [&](Tape<double>& t, const std::vector<Var>& v) {
                       return weighted_sum(t, linear(t, v[0], v[1], v[2]), rl);
                     },
                     rng);
    EXPECT_LT(err, 1e-4) << "linear seed " << seed;

    Tensor<double> a = randu<double>({2, 2, 3, 3}, rng);
    Tensor<double> c = randu<double>({2, 3, 3, 3}, rng);
    Tensor<double> rc = randu<double>({2, 5, 3, 3}, rng);
    err = grad_check({&a, &c},
                     [&](Tape<double>& t, const std::vector<Var>& v) {
                       return weighted_sum(t, concat_channels(t, v[0], v[1]), rc);
                     },
                     rng);
    EXPECT_LT(err, 1e-4) << "concat seed " << seed;

    Tensor<double> z = randu<double>({3, 6}, rng, -2, 2);
    Tensor<double> rs = randu<double>({3, 6}, rng);
    err = grad_check({&z},
                     [&](Tape<double>& t, const std::vector<Var>& v) {
                       return weighted_sum(t, softmax(t, v[0]), rs);
                     },
                     rng);
    EXPECT_LT(err, 1e-4) << "softmax seed " << seed;
  }
}

TEST(GradCheck, ComposedConvBnReluNetwork) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    Tensor<double> x = randu<double>({2, 2, 8, 8}, rng);
    Tensor<double> w1 = randu<double>({4, 2, 3, 3}, rng);
    Tensor<double> g1 = randu<double>({4}, rng, 0.5, 1.5);
    Tensor<double> b1 = randu<double>({4}, rng);
    Tensor<double> w2 = randu<double>({3, 4, 3, 3}, rng);
    Tensor<double> g2 = randu<double>({3}, rng, 0.5, 1.5);
    Tensor<double> b2 = randu<double>({3}, rng);
    Tensor<double> r = randu<double>({2, 3}, rng);
    BnState<double> s1(4), s2(3);
    double err = grad_check(
        {&x, &w1, &g1, &b1, &w2, &g2, &b2},
        [&](Tape<double>& t, const std::vector<Var>& v) {
          Var y = conv2d(t, v[0], v[1], 1, 1);
          y = relu(t, batchnorm2d(t, y, v[2], v[3], s1, BnMode::train_no_update));
          y = conv2d(t, y, v[4], 2, 1);
          y = relu(t, batchnorm2d(t, y, v[5], v[6], s2, BnMode::train_no_update));
          return weighted_sum(t, global_avg_pool(t, y), r);
        },
        rng, 4);
    EXPECT_LT(err, 1e-4) << "seed " << seed;
  }
}
