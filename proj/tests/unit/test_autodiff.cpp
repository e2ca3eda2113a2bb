#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dgrlab/ops.hpp"
#include "dgrlab/optim.hpp"
#include "dgrlab/parallel.hpp"
#include "gradcheck.hpp"

namespace {

using dgrlab::Rng;
using namespace dgrlab::ad;

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }
std::vector<double> grads(const Tensor& t) { return {t.grad().begin(), t.grad().end()}; }

TEST(Tensor, DataLengthMustMatchShape) {
  EXPECT_THROW(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);
  const auto t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.dim(1), 3u);
  EXPECT_THROW(t.dim(2), ShapeError);
  EXPECT_THROW(t.item(), ShapeError);
}

TEST(Tensor, GradientHasDataShape) {
  auto w = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
  backprop(sum(mul(w, w)));
  ASSERT_TRUE(w.has_grad());
  EXPECT_EQ(w.grad().size(), w.numel());
  w.zero_grad();
  for (double g : w.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Tensor, UndefinedHandleThrows) {
  Tensor t;
  EXPECT_FALSE(t.defined());
  EXPECT_THROW(t.shape(), std::logic_error);
}

TEST(Tensor, DetachCutsTheRecording) {
  auto w = Tensor::from({2}, {1, 2}, true);
  auto cut = w.detach();
  EXPECT_FALSE(cut.requires_grad());
  EXPECT_EQ(values(cut), values(w));
  EXPECT_THROW(backprop(sum(cut)), std::logic_error);
}

TEST(Tensor, NoGradGuardStopsRecording) {
  auto w = Tensor::from({2}, {1, 2}, true);
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_recording_enabled());
    auto s = sum(w);
    EXPECT_FALSE(s.requires_grad());
  }
  EXPECT_TRUE(grad_recording_enabled());
  EXPECT_TRUE(sum(w).requires_grad());
}

TEST(Tensor, TapeIdsAreDistinct) {
  auto a = Tensor::scalar(1.0, true);
  auto b = Tensor::scalar(2.0, true);
  EXPECT_NE(a.tape_id(), b.tape_id());
  EXPECT_NE(add(a, b).tape_id(), a.tape_id());
}

TEST(Backprop, SumOfParameterGivesOnes) {
  auto w = Tensor::from({3}, {4, -1, 7}, true);
  backprop(sum(w));
  EXPECT_EQ(grads(w), (std::vector<double>{1, 1, 1}));
}

TEST(Backprop, SumOfSquares) {
  auto w = Tensor::from({2}, {1, -2}, true);
  backprop(sum(mul(w, w)));
  EXPECT_EQ(grads(w), (std::vector<double>{2, -4}));
}

TEST(Backprop, FanOutAccumulates) {
  auto x = Tensor::from({3}, {0.5, -1.5, 2.0}, true);
  backprop(add(sum(x), sum(x)));
  EXPECT_EQ(grads(x), (std::vector<double>{2, 2, 2}));
}

TEST(Backprop, RejectsNonScalarLoss) {
  auto w = Tensor::from({2}, {1, 2}, true);
  EXPECT_THROW(backprop(mul(w, w)), ShapeError);
}

TEST(Backprop, RejectsLossWithoutParameters) {
  EXPECT_THROW(backprop(sum(Tensor::from({2}, {1, 2}))), std::logic_error);
}

TEST(Matmul, IdentityLeavesMatrix) {
  const auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  const auto m = Tensor::from({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(values(matmul(eye, m)), values(m));
}

TEST(Matmul, RowTimesColumn) { EXPECT_EQ(matmul(Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {3, 4})).item(), 11.0); }

TEST(Matmul, GradientOfSumMatchesFiniteDifferences) {
  auto a = Tensor::from({1, 2}, {1, 1}, true);
  const auto b = Tensor::from({2, 1}, {2, 5});
  backprop(sum(matmul(a, b)));
  const double h = 1e-6;
  for (std::size_t i = 0; i < 2; ++i) {
    auto up = Tensor::from({1, 2}, {1, 1});
    auto down = Tensor::from({1, 2}, {1, 1});
    up.mutable_data()[i] += h;
    down.mutable_data()[i] -= h;
    const double fd = (sum(matmul(up, b)).item() - sum(matmul(down, b)).item()) / (2 * h);
    EXPECT_NEAR(a.grad()[i], fd, 1e-8);
  }
  EXPECT_EQ(grads(a), (std::vector<double>{2, 5}));
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 5}));
    FAIL() << "expected a shape error";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4,5]"), std::string::npos) << msg;
  }
}

TEST(Relu, ClampsNegatives) {
  EXPECT_EQ(values(relu(Tensor::from({3}, {-1, 0, 2}))), (std::vector<double>{0, 0, 2}));
  const auto pos = Tensor::from({3}, {0.5, 1, 9});
  EXPECT_EQ(values(relu(pos)), values(pos));
}

TEST(Relu, GradientMasksNegatives) {
  auto x = Tensor::from({2}, {-1, 2}, true);
  backprop(sum(relu(x)));
  EXPECT_EQ(grads(x), (std::vector<double>{0, 1}));
  auto zero = Tensor::from({1}, {0.0}, true);
  backprop(sum(relu(zero)));
  EXPECT_EQ(zero.grad()[0], 0.0);
}

TEST(MeanOverAxis, AveragesAlongAxis) {
  EXPECT_EQ(values(mean_over_axis(Tensor::from({2, 2}, {1, 3, 5, 7}), 0)), (std::vector<double>{3, 5}));
  EXPECT_EQ(values(mean_over_axis(Tensor::from({2, 2}, {1, 3, 5, 7}), 1)), (std::vector<double>{2, 6}));
  const auto c = mean_over_axis(Tensor::full({3, 4, 2}, 1.5), 1);
  EXPECT_EQ(c.shape(), (Shape{3, 2}));
  for (double v : c.data()) EXPECT_EQ(v, 1.5);
}

TEST(MeanOverAxis, GradientSpreadsEvenly) {
  auto x = Tensor::from({4}, {1, 2, 3, 4}, true);
  backprop(sum(mean_over_axis(x, 0)));
  EXPECT_EQ(grads(x), (std::vector<double>{0.25, 0.25, 0.25, 0.25}));
}

TEST(MeanOverAxis, AxisOutOfRange) { EXPECT_THROW(mean_over_axis(Tensor::zeros({2, 2}), 2), ShapeError); }

TEST(SquaredL2, Examples) {
  const auto a = Tensor::from({2}, {0.3, -1});
  EXPECT_EQ(squared_l2_distance(a, a).item(), 0.0);
  EXPECT_EQ(squared_l2_distance(Tensor::from({2}, {0, 0}), Tensor::from({2}, {3, 4})).item(), 25.0);
  auto x = Tensor::from({2}, {1, 0}, true);
  backprop(squared_l2_distance(x, Tensor::from({2}, {0, 0})));
  EXPECT_EQ(grads(x), (std::vector<double>{2, 0}));
  EXPECT_THROW(squared_l2_distance(Tensor::zeros({2}), Tensor::zeros({3})), ShapeError);
}

TEST(NormalizeAdjacency, Examples) {
  EXPECT_EQ(values(normalize_adjacency(Tensor::zeros({2, 2}))), (std::vector<double>{1, 0, 0, 1}));
  const auto pair = normalize_adjacency(Tensor::from({2, 2}, {0, 1, 1, 0}));
  for (double v : pair.data()) EXPECT_NEAR(v, 0.5, 1e-15);
  EXPECT_THROW(normalize_adjacency(Tensor::zeros({2, 3})), ShapeError);
}

TEST(NormalizeAdjacency, SpectralRadiusAtMostOne) {
  Rng rng(11);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + trial % 6;
    std::vector<double> a(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j) a[i * n + j] = a[j * n + i] = i == j ? 0.0 : u(rng);
    const auto norm = normalize_adjacency(Tensor::from({n, n}, a));
    const auto m = norm.data();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(m[i * n + j], m[j * n + i], 1e-15);

    // Power iteration on M^2 bounds |lambda|max without sign oscillation.
    std::vector<double> v(n, 1.0), w(n);
    double lambda2 = 0.0;
    for (int it = 0; it < 500; ++it) {
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t i = 0; i < n; ++i) {
          w[i] = 0.0;
          for (std::size_t j = 0; j < n; ++j) w[i] += m[i * n + j] * v[j];
        }
        v.swap(w);
      }
      double norm2 = 0.0;
      for (double x : v) norm2 += x * x;
      lambda2 = std::sqrt(norm2) / std::sqrt(static_cast<double>(n));
      for (auto& x : v) x /= std::sqrt(norm2 / static_cast<double>(n));
    }
    EXPECT_LE(std::sqrt(lambda2), 1.0 + 1e-9);
  }
}

TEST(Conv2d, ImpulseKernelCopiesInput) {
  std::vector<double> k(9, 0.0);
  k[4] = 1.0;
  const auto x = Tensor::from({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const auto y = conv2d(x, Tensor::from({1, 1, 3, 3}, k), Tensor::from({1}, {0.5}));
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(y[i], x[i] + 0.5);
}

TEST(Conv2d, BoxKernelSeesZeroPadding) {
  const auto x = Tensor::full({1, 1, 3, 3}, 1.0);
  const auto y = conv2d(x, Tensor::full({1, 1, 3, 3}, 1.0), Tensor::zeros({1}));
  EXPECT_EQ(values(y), (std::vector<double>{4, 6, 4, 6, 9, 6, 4, 6, 4}));
}

TEST(Conv2d, ResultIndependentOfThreadCount) {
  Rng rng(3);
  std::normal_distribution<double> n;
  auto fill = [&](Shape s) {
    std::vector<double> v(element_count(s));
    for (auto& x : v) x = n(rng);
    return Tensor::from(s, v, true);
  };
  auto x = fill({3, 2, 7, 6}), w = fill({4, 2, 3, 3}), b = fill({4});
  auto run = [&](std::size_t threads) {
    dgrlab::set_thread_budget(threads);
    x.zero_grad();
    w.zero_grad();
    auto y = conv2d(x, w, b);
    backprop(sum(mul(y, y)));
    auto out = values(y);
    auto gx = grads(x), gw = grads(w);
    out.insert(out.end(), gx.begin(), gx.end());
    out.insert(out.end(), gw.begin(), gw.end());
    return out;
  };
  const auto single = run(1);
  const auto multi = run(3);
  dgrlab::set_thread_budget(1);
  EXPECT_EQ(single, multi);
}

TEST(AvgPool2, AveragesBlocksAndDropsOddEdge) {
  const auto y = avg_pool2(Tensor::from({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y.item(), 3.0);
  EXPECT_THROW(avg_pool2(Tensor::zeros({1, 1, 1, 4})), ShapeError);
}

TEST(Layout, ReshapeGatherConcatSlice) {
  const auto x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_THROW(reshape(x, {4}), ShapeError);
  EXPECT_EQ(values(reshape(x, {3, 2})), values(x));
  const std::vector<std::size_t> rows{1, 1, 0};
  EXPECT_EQ(values(gather_rows(x, rows)), (std::vector<double>{4, 5, 6, 4, 5, 6, 1, 2, 3}));
  const std::vector<std::size_t> bad{2};
  EXPECT_THROW(gather_rows(x, bad), ShapeError);
  EXPECT_EQ(values(concat_cols(x, Tensor::from({2, 1}, {7, 8}))), (std::vector<double>{1, 2, 3, 7, 4, 5, 6, 8}));
  EXPECT_THROW(concat_cols(x, Tensor::zeros({3, 1})), ShapeError);
  EXPECT_EQ(values(slice_cols(x, 1, 3)), (std::vector<double>{2, 3, 5, 6}));
  EXPECT_THROW(slice_cols(x, 2, 2), ShapeError);
  EXPECT_EQ(values(transpose(x)), (std::vector<double>{1, 4, 2, 5, 3, 6}));
}

TEST(Elementwise, SoftplusIsStableForLargeInputs) {
  const auto y = softplus(Tensor::from({3}, {-800, 0, 800}));
  EXPECT_NEAR(y[0], 0.0, 1e-300);
  EXPECT_NEAR(y[1], std::log(2.0), 1e-15);
  EXPECT_EQ(y[2], 800.0);
  EXPECT_THROW(add(Tensor::zeros({2}), Tensor::zeros({3})), ShapeError);
  EXPECT_THROW(add_bias(Tensor::zeros({2, 3}), Tensor::zeros({2})), ShapeError);
}

TEST(Ops, DeterministicAcrossRepeats) {
  Rng rng(5);
  std::normal_distribution<double> n;
  std::vector<double> a(12), b(12);
  for (auto& x : a) x = n(rng);
  for (auto& x : b) x = n(rng);
  auto run = [&] {
    auto x = Tensor::from({3, 4}, a, true);
    auto y = Tensor::from({4, 3}, b, true);
    auto z = softplus(matmul(x, y));
    backprop(mean(mul(z, z)));
    auto out = values(z);
    auto gx = grads(x);
    out.insert(out.end(), gx.begin(), gx.end());
    return out;
  };
  EXPECT_EQ(run(), run());
}

// Three random instances per registered case; the acceptance run uses more.
TEST(GradientCheck, EveryRegisteredCase) {
  Rng rng(1234);
  for (const auto& c : dgrlab::testing::gradient_cases()) {
    for (int i = 0; i < 3; ++i) {
      const auto instance = c.make(rng);
      const auto r = dgrlab::testing::check_gradients(instance.f, instance.inputs);
      EXPECT_LT(r.relative_error, 1e-4) << c.name << " instance " << i;
      EXPECT_GT(r.coordinates, 0u) << c.name;
    }
  }
}

TEST(GradientCheck, CatchesAWrongGradient) {
  // x * stop_gradient(x) has true derivative 2x but records only x.
  auto x = Tensor::from({3}, {0.5, -1.0, 1.5}, true);
  const dgrlab::testing::Function f = [](const std::vector<Tensor>& in) { return mul(in[0], in[0].detach()); };
  EXPECT_GT(dgrlab::testing::check_gradients(f, {x}).relative_error, 0.1);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  auto w = Tensor::from({2}, {1.0, -3.0}, true);
  Adam opt({{"w", w}}, {.learning_rate = 0.1});
  backprop(sum(mul(w, Tensor::zeros({2}))));
  opt.step();
  EXPECT_EQ(values(w), (std::vector<double>{1.0, -3.0}));
  EXPECT_EQ(opt.state().step, 1);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  auto w = Tensor::from({1}, {0.0}, true);
  Adam opt({{"w", w}}, {.learning_rate = 0.1});
  backprop(sum(w));  // g = 1
  opt.step();
  // m_hat = 1, v_hat = 1, update = lr / (1 + eps)
  EXPECT_NEAR(w[0], -0.1 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, MatchesHandWrittenRecurrence) {
  auto w = Tensor::from({1}, {1.0}, true);
  const AdamOptions o{.learning_rate = 0.05};
  Adam opt({{"w", w}}, o);
  double ref = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 30; ++t) {
    opt.zero_grad();
    backprop(sum(mul(mul(w, w), w)));  // g = 3 w^2
    opt.step();
    const double g = 3 * ref * ref;
    m = o.beta1 * m + (1 - o.beta1) * g;
    v = o.beta2 * v + (1 - o.beta2) * g * g;
    const double mh = m / (1 - std::pow(o.beta1, t)), vh = v / (1 - std::pow(o.beta2, t));
    ref -= o.learning_rate * mh / (std::sqrt(vh) + o.epsilon);
    EXPECT_NEAR(w[0], ref, 1e-14) << "step " << t;
  }
}

TEST(Adam, MinimisesSquare) {
  auto w = Tensor::from({1}, {1.0}, true);
  Adam opt({{"w", w}}, {.learning_rate = 1e-2});
  int steps = 0;
  while (std::abs(w[0]) >= 0.1 && steps < 500) {
    opt.zero_grad();
    backprop(sum(mul(w, w)));
    opt.step();
    ++steps;
  }
  EXPECT_LT(std::abs(w[0]), 0.1);
  EXPECT_LE(steps, 500);
}

TEST(Adam, MomentsMatchParameterShapes) {
  auto a = Tensor::zeros({2, 3}, true), b = Tensor::zeros({4}, true);
  Adam opt({{"a", a}, {"b", b}});
  ASSERT_EQ(opt.state().first_moment.size(), 2u);
  EXPECT_EQ(opt.state().first_moment[0].size(), 6u);
  EXPECT_EQ(opt.state().second_moment[1].size(), 4u);
  EXPECT_EQ(opt.state().step, 0);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  auto w = Tensor::from({1}, {1.0}, true);
  Adam opt({{"layer.weight", w}});
  w.mutable_grad()[0] = std::nan("");
  try {
    opt.step();
    FAIL() << "expected NonFiniteGradient";
  } catch (const NonFiniteGradient& e) {
    EXPECT_NE(std::string(e.what()).find("layer.weight"), std::string::npos);
  }
}

TEST(Adam, RejectsBadConstruction) {
  auto w = Tensor::from({1}, {1.0}, true);
  EXPECT_THROW(Adam({{"w", w}}, {.learning_rate = 0.0}), std::invalid_argument);
  EXPECT_THROW(Adam({{"c", Tensor::from({1}, {1.0})}}), std::invalid_argument);
  Adam opt({{"w", w}});
  EXPECT_THROW(opt.set_learning_rate(-1.0), std::invalid_argument);
}

}  // namespace
