// Copyright 2026 the relocl authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "relocl/checkpoint.hpp"
#include "relocl/grad_check.hpp"
#include "relocl/ops.hpp"
#include "relocl/optim.hpp"

namespace relocl {
namespace {

using T64 = Tensor<double>;

std::vector<double> triple_loop(const std::vector<double>& a, const std::vector<double>& b, int m, int k, int n) {
  std::vector<double> c(m * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      for (int p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

T64 random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = dist(rng);
  return T64::from(std::move(shape), std::move(values), true);
}

TEST(MatmulTest, IdentityZeroAndHandOracle) {
  auto eye = Tensor<float>::from({2, 2}, {1, 0, 0, 1});
  auto a = Tensor<float>::from({2, 2}, {1, 2, 3, 4});
  auto b = Tensor<float>::from({2, 2}, {5, 6, 7, 8});
  auto id = matmul(eye, a);
  EXPECT_EQ(std::vector<float>(id.data().begin(), id.data().end()), (std::vector<float>{1, 2, 3, 4}));
  auto zero = matmul(Tensor<float>::zeros({2, 2}), b);
  for (float v : zero.data()) EXPECT_EQ(v, 0.0f);
  auto expected = triple_loop({1, 2, 3, 4}, {5, 6, 7, 8}, 2, 2, 2);
  EXPECT_EQ(expected, (std::vector<double>{19, 22, 43, 50}));
  auto c = matmul(a, b);
  for (int i = 0; i < 4; ++i) EXPECT_FLOAT_EQ(c.data()[i], static_cast<float>(expected[i]));
}

TEST(MatmulTest, RandomMatchesTripleLoop) {
  std::mt19937_64 rng(3);
  auto a = random_tensor({5, 7}, rng);
  auto b = random_tensor({7, 3}, rng);
  auto expected = triple_loop({a.data().begin(), a.data().end()}, {b.data().begin(), b.data().end()}, 5, 7, 3);
  auto c = matmul(a, b);
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(c.data()[i], expected[i], 1e-12);
}

TEST(MatmulTest, ShapeMismatchThrows) {
  auto a = Tensor<float>::zeros({2, 3});
  auto b = Tensor<float>::zeros({2, 3});
  EXPECT_THROW(matmul(a, b), DimensionError);
}

TEST(MaskedSoftmaxTest, Examples) {
  Mask all{1, 1, 1};
  auto uniform = masked_softmax(Tensor<double>::from({3}, {2.5, 2.5, 2.5}), all);
  for (double v : uniform.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);

  Mask two{1, 1};
  // exp(0) = 1, exp(ln 2) = 2 -> [1/3, 2/3]
  auto p = masked_softmax(Tensor<double>::from({2}, {0.0, std::log(2.0)}), two);
  EXPECT_NEAR(p.at(0), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(p.at(1), 2.0 / 3.0, 1e-15);

  Mask first_only{1, 0};
  auto single = masked_softmax(Tensor<double>::from({2}, {5.0, -100.0}), first_only);
  EXPECT_EQ(single.at(0), 1.0);
  EXPECT_EQ(single.at(1), 0.0);
}

TEST(MaskedSoftmaxTest, AllMaskedIsDomainError) {
  Mask none{0, 0};
  EXPECT_THROW(masked_softmax(Tensor<float>::from({2}, {1, 2}), none), DomainError);
}

TEST(MaskedSoftmaxTest, SumsToOneAndMaskedExactlyZero) {
  std::mt19937_64 rng(11);
  std::bernoulli_distribution coin(0.6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 20;
    Mask mask(n);
    for (auto& m : mask) m = coin(rng);
    mask[rng() % n] = 1;
    std::normal_distribution<float> dist(0.0f, 10.0f);
    std::vector<float> x(n);
    for (auto& v : x) v = dist(rng);
    auto y = masked_softmax(Tensor<float>::from({n}, x), mask);
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask[i]) {
        EXPECT_EQ(y.at(i), 0.0f);
      }
      total += y.at(i);
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(LayerNormTest, Examples) {
  auto ones = T64::full({4}, 1.0);
  auto zeros = T64::zeros({4});
  auto constant = layer_norm(T64::full({4}, 3.0), ones, zeros, 1e-5);
  for (double v : constant.data()) EXPECT_LE(std::abs(v), std::sqrt(1e-5));

  // mean 2, population std 1
  auto pair = layer_norm(T64::from({2}, {1.0, 3.0}), T64::full({2}, 1.0), T64::zeros({2}), 1e-12);
  EXPECT_NEAR(pair.at(0), -1.0, 1e-9);
  EXPECT_NEAR(pair.at(1), 1.0, 1e-9);

  auto bias = T64::from({4}, {0.5, -1.0, 2.0, 0.0});
  auto collapsed = layer_norm(T64::from({4}, {1.0, 9.0, -3.0, 4.0}), T64::zeros({4}), bias, 1e-5);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(collapsed.at(i), bias.at(i));
}

TEST(LayerNormTest, ZeroMeanUnitVarianceProperty) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 64;
    auto x = random_tensor({3, n}, rng, 5.0);
    auto y = layer_norm(x, T64::full({n}, 1.0), T64::zeros({n}), 1e-12);
    for (std::size_t r = 0; r < 3; ++r) {
      double mu = 0, var = 0;
      for (std::size_t c = 0; c < n; ++c) mu += y.at(r, c);
      mu /= n;
      for (std::size_t c = 0; c < n; ++c) var += (y.at(r, c) - mu) * (y.at(r, c) - mu);
      var /= n;
      EXPECT_LE(std::abs(mu), 1e-6);
      EXPECT_NEAR(var, 1.0, 1e-4);
    }
  }
}

TEST(Conv1dTest, Examples) {
  auto x = Tensor<float>::from({1, 3}, {1, 2, 3});
  auto delta = conv1d(x, Tensor<float>::from({1, 1, 3}, {0, 1, 0}));
  EXPECT_EQ(std::vector<float>(delta.data().begin(), delta.data().end()), (std::vector<float>{1, 2, 3}));
  // zero pads: [0+1+2, 1+2+3, 2+3+0]
  auto box = conv1d(x, Tensor<float>::from({1, 1, 3}, {1, 1, 1}));
  EXPECT_EQ(std::vector<float>(box.data().begin(), box.data().end()), (std::vector<float>{3, 6, 5}));
  auto zero = conv1d(x, Tensor<float>::zeros({1, 1, 5}));
  for (float v : zero.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Conv1dTest, EvenWidthIsConfigError) {
  EXPECT_THROW(conv1d(Tensor<float>::zeros({1, 4}), Tensor<float>::zeros({1, 1, 2})), ConfigError);
}

TEST(BackwardTest, Square) {
  auto x = T64::from({}, {3.0}, true);
  auto loss = mul(x, x);
  loss.backward();
  EXPECT_EQ(x.grad()[0], 6.0);
}

TEST(BackwardTest, SumOfProductMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({4, 2}, rng);
  sum(matmul(a, b)).backward();
  // d/dA sum(A·B) = ones·Bᵀ: row-sums of B broadcast over rows of A.
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_NEAR(a.grad()[i * 4 + k], b.at(k, 0) + b.at(k, 1), 1e-12);
    }
  auto result = gradient_check([&] { return sum(matmul(a, b)); }, {a, b}, 1e-3);
  EXPECT_LE(result.max_rel_error, 1e-8);
}

TEST(BackwardTest, ConstantProducesNoGrads) {
  auto a = T64::from({2}, {1.0, 2.0});
  auto loss = sum(a);
  EXPECT_FALSE(loss.requires_grad());
  loss.backward();
  EXPECT_FALSE(a.has_grad());
}

TEST(BackwardTest, SecondBackwardIsUsageError) {
  auto x = T64::from({}, {2.0}, true);
  auto loss = mul(x, x);
  loss.backward();
  EXPECT_THROW(loss.backward(), UsageError);
}

TEST(BackwardTest, FanOutAccumulates) {
  auto x = T64::from({}, {2.0}, true);
  auto y = add(mul(x, x), scale(x, 3.0));  // 2x + 3
  y.backward();
  EXPECT_EQ(x.grad()[0], 7.0);
}

TEST(BackwardTest, DeterministicGrads) {
  auto run = [] {
    std::mt19937_64 rng(42);
    auto x = random_tensor({6, 8}, rng);
    auto w = random_tensor({8, 8}, rng);
    Mask mask{1, 1, 1, 1, 1, 0, 1, 1};
    auto loss = sum(masked_softmax_rows(matmul(x, w), mask));
    loss = add(loss, sum(relu(matmul(x, w))));
    loss.backward();
    return std::vector<double>(w.grad().begin(), w.grad().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(GradCheckTest, SoftmaxSumHasZeroGradient) {
  std::mt19937_64 rng(9);
  auto x = random_tensor({5}, rng);
  Mask mask(5, 1);
  auto result = gradient_check([&](const T64& p) { return sum(masked_softmax(p, mask)); }, x, 1e-3);
  for (double g : x.grad()) EXPECT_NEAR(g, 0.0, 1e-12);
  EXPECT_LE(result.max_rel_error, 1e-4);
}

TEST(GradCheckTest, HingeAtKinkIsExcluded) {
  // max(0, 0.1 + x - 0.1) at x = 0 sits exactly on the kink.
  auto x = T64::from({1}, {0.0}, true);
  auto result = gradient_check([](const T64& p) { return sum(relu(p)); }, x, 1e-3);
  EXPECT_EQ(result.excluded, 1u);
  EXPECT_EQ(result.checked, 0u);
}

// Every differentiable op at 10 random points.
TEST(GradCheckTest, EveryOpAtRandomPoints) {
  std::mt19937_64 rng(2024);
  const Mask mask{1, 1, 0, 1, 1};
  const std::vector<std::size_t> picks{0, 3, 4, 7};
  using Fn = std::function<T64(const T64&)>;
  auto w = random_tensor({5, 5}, rng);
  w.set_requires_grad(false);
  std::vector<std::pair<const char*, Fn>> cases{
      {"matmul", [&](const T64& p) { return sum(mul(matmul(p, w), matmul(p, w))); }},
      {"transpose", [&](const T64& p) { return sum(mul(transpose(p), w)); }},
      {"dot", [&](const T64& p) { return dot(reshape(p, {25}), reshape(w, {25})); }},
      {"sub_mul", [&](const T64& p) { return sum(mul(sub(p, w), p)); }},
      {"exp", [&](const T64& p) { return sum(exp(scale(p, 0.5))); }},
      {"log", [&](const T64& p) { return sum(log(add_scalar(mul(p, p), 1.0))); }},
      {"softplus", [&](const T64& p) { return sum(mul(softplus(p), p)); }},
      {"add_row_vector", [&](const T64& p) { return sum(mul(add_row_vector(w, slice_rows(reshape(p, {25}), 0, 5)), w)); }},
      {"mean_logsumexp", [&](const T64& p) { return add(mean(mul(p, p)), logsumexp(p)); }},
      {"masked_softmax_rows", [&](const T64& p) { return sum(mul(masked_softmax_rows(p, mask), w)); }},
      {"layer_norm", [&](const T64& p) {
         auto g = slice_rows(reshape(w, {25}), 0, 5);
         auto b = slice_rows(reshape(w, {25}), 5, 5);
         return sum(mul(layer_norm(p, g, b, 1e-5), w));
       }},
      {"l2_normalize_rows", [&](const T64& p) { return sum(mul(l2_normalize_rows(p, 1e-12), w)); }},
      {"conv1d", [&](const T64& p) {
         auto k = reshape(slice_rows(reshape(p, {25}), 0, 6), {2, 1, 3});
         auto x = reshape(slice_rows(reshape(w, {25}), 0, 5), {1, 5});
         auto y = conv1d(x, k);
         return sum(mul(y, y));
       }},
      {"conv1d_input", [&](const T64& p) {
         auto k = reshape(slice_rows(reshape(w, {25}), 0, 10), {2, 1, 5});
         auto y = conv1d(slice_rows(p, 0, 1), k);
         return sum(mul(y, y));
       }},
      {"slice_concat", [&](const T64& p) {
         auto c = concat_cols<double>({slice_cols(p, 3, 2), slice_cols(p, 0, 3)});
         return sum(mul(c, w));
       }},
      {"stack_gather", [&](const T64& p) {
         auto s = stack<double>({p, w});
         return sum(mul(gather(s, picks), gather(s, picks)));
       }},
      {"zero_masked_rows", [&](const T64& p) { return sum(mul(zero_masked_rows(p, mask), w)); }},
      {"masked_max", [&](const T64& p) { return masked_max(reshape(slice_rows(p, 0, 1), {5}), mask); }},
  };
  for (auto& [name, fn] : cases) {
    for (int point = 0; point < 10; ++point) {
      auto x = random_tensor({5, 5}, rng);
      auto result = gradient_check(fn, x, 1e-4);
      EXPECT_LE(result.max_rel_error, 1e-4) << name << " point " << point;
      EXPECT_GT(result.checked, 0u) << name;
    }
  }
}

TEST(DropoutTest, EvalIsIdentityTrainScales) {
  std::mt19937_64 rng(0);
  auto x = Tensor<float>::full({1000}, 1.0f);
  auto eval = dropout(x, 0.1, false, rng);
  for (float v : eval.data()) EXPECT_EQ(v, 1.0f);
  auto train = dropout(x, 0.1, true, rng);
  int zeros = 0;
  for (float v : train.data()) {
    if (v == 0.0f) {
      ++zeros;
    } else {
      EXPECT_FLOAT_EQ(v, 1.0f / 0.9f);
    }
  }
  EXPECT_GT(zeros, 50);
  EXPECT_LT(zeros, 150);
}

TEST(AdamWTest, FixedPoint) {
  std::vector<float> theta{0.0f};
  std::vector<float> grad{0.0f};
  OptimizerState state;
  state.config.lr = 1e-4;
  std::vector<ParamSlot> slots{{theta, grad, true}};
  adamw_step(slots, state);
  EXPECT_EQ(theta[0], 0.0f);
}

TEST(AdamWTest, FirstStepWithBiasCorrection) {
  // m = 0.1, v = 0.001; m_hat = 1, v_hat = 1 -> step = lr / (1 + eps)
  std::vector<float> theta{0.0f};
  std::vector<float> grad{1.0f};
  OptimizerState state;
  state.config.lr = 1e-4;
  state.config.warmup_proportion = 0.0;
  std::vector<ParamSlot> slots{{theta, grad, true}};
  adamw_step(slots, state);
  EXPECT_NEAR(theta[0], -1e-4, 1e-10);
  EXPECT_EQ(state.step, 1u);
}

TEST(AdamWTest, DecayOnlyStep) {
  std::vector<float> theta{1.0f};
  std::vector<float> grad{0.0f};
  OptimizerState state;
  state.config.lr = 1e-4;
  state.config.weight_decay = 0.01;
  std::vector<ParamSlot> slots{{theta, grad, true}};
  adamw_step(slots, state);
  EXPECT_FLOAT_EQ(theta[0], 1.0f - 1e-6f);
}

TEST(AdamWTest, ShapeMismatchThrows) {
  std::vector<float> theta{1.0f, 2.0f};
  std::vector<float> grad{0.0f};
  OptimizerState state;
  std::vector<ParamSlot> slots{{theta, grad, true}};
  EXPECT_THROW(adamw_step(slots, state), DimensionError);
}

TEST(AdamWTest, LinearWarmupThenConstant) {
  AdamWConfig cfg;
  cfg.lr = 1.0;
  cfg.warmup_proportion = 0.01;
  cfg.total_steps = 1000;  // 10 warmup steps
  EXPECT_DOUBLE_EQ(scheduled_lr(cfg, 1), 0.1);
  EXPECT_DOUBLE_EQ(scheduled_lr(cfg, 5), 0.5);
  EXPECT_DOUBLE_EQ(scheduled_lr(cfg, 10), 1.0);
  EXPECT_DOUBLE_EQ(scheduled_lr(cfg, 500), 1.0);
}

TEST(CheckpointTest, RoundTripAndTruncation) {
  Checkpoint ckpt;
  ckpt.config = {{"d", 8}};
  ckpt.records.push_back({"w", {2, 3}, {1, 2, 3, 4, 5, 6}});
  ckpt.records.push_back({"b", {3}, {0.5f, -0.5f, 0.0f}});
  auto bytes = serialize_checkpoint(ckpt);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "RLCK");
  auto parsed = parse_checkpoint(bytes);
  EXPECT_EQ(serialize_checkpoint(parsed), bytes);
  EXPECT_EQ(parsed.config["d"], 8);
  ASSERT_NE(parsed.find("w"), nullptr);
  EXPECT_EQ(parsed.find("w")->shape, (Shape{2, 3}));

  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, bytes.size() - 1}) {
    std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    EXPECT_THROW(parse_checkpoint(truncated), DataError);
  }
  auto corrupt = bytes;
  corrupt[0] = 'X';
  EXPECT_THROW(parse_checkpoint(corrupt), DataError);
}

TEST(CheckpointTest, FingerprintTracksWeights) {
  Checkpoint ckpt;
  ckpt.config = {{"d", 8}};
  ckpt.records.push_back({"w", {2}, {1, 2}});
  auto before = checkpoint_fingerprint(ckpt);
  EXPECT_EQ(before, checkpoint_fingerprint(ckpt));
  ckpt.records[0].values[1] = 3;
  EXPECT_NE(before, checkpoint_fingerprint(ckpt));
}

}  // namespace
}  // namespace relocl
