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
#include <limits>
#include <random>

#include "relocl/grad_check.hpp"
#include "relocl/objectives.hpp"
#include "test_util.hpp"

namespace relocl {
namespace {

using testing::prefix_mask;
using testing::random_matrix;
using testing::random_vector;
using testing::tiny_config;
using Vec = std::vector<double>;

Tensor<double> vec(Vec v) {
  const std::size_t n = v.size();
  return Tensor<double>::from({n}, std::move(v));
}

Tensor<double> mat(std::size_t r, std::size_t c, Vec v) { return Tensor<double>::from({r, c}, std::move(v)); }

Tensor<double> identity(std::size_t d) {
  Vec v(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;
  return mat(d, d, std::move(v));
}

ContrastiveHeads<double> identity_heads(std::size_t d) {
  ContrastiveHeads<double> heads;
  heads.video_pool.score = Tensor<double>::zeros({d});
  heads.video_map = {identity(d), Tensor<double>::zeros({d})};
  heads.query_map = {identity(d), Tensor<double>::zeros({d})};
  heads.discriminator = identity(d);
  return heads;
}

double softplus_ref(double x) { return std::log1p(std::exp(x)); }

// ---- VR ----

TEST(VrFrameScores, CosineExamples) {
  const double r = 1.0 / std::sqrt(2.0);
  auto h = mat(3, 2, {1, 0, r, r, -r, r});
  auto s = vr_frame_scores(vec({r, r}), h, prefix_mask(3, 3));
  // Oracle: dot over norms of the unit-norm inputs.
  EXPECT_NEAR(s.at(0), r * 1 + r * 0, 1e-12);
  EXPECT_NEAR(s.at(1), 1.0, 1e-12);
  EXPECT_NEAR(s.at(2), 0.0, 1e-12);
  EXPECT_NEAR(s.at(0), 0.70710678, 1e-8);
}

TEST(VrFrameScores, PaddedEntriesAreNegativeInfinity) {
  auto s = vr_frame_scores(vec({1, 0}), mat(2, 2, {1, 0, 0, 1}), prefix_mask(2, 1));
  EXPECT_TRUE(std::isinf(s.at(1)) && s.at(1) < 0);
}

TEST(VrFrameScores, ZeroQueryUsesNormFloor) {
  auto s = vr_frame_scores(vec({0, 0}), mat(1, 2, {1, 0}), prefix_mask(1, 1));
  EXPECT_TRUE(std::isfinite(s.at(0)));
  EXPECT_EQ(s.at(0), 0.0);
}

EncodedVideo<double> video_from(Tensor<double> h_v, std::optional<Tensor<double>> h_s, Mask mask) {
  EncodedVideo<double> v;
  v.hp_v = h_v;
  v.h_v = h_v;
  v.hp_s = h_s;
  v.h_s = h_s;
  v.mask = std::move(mask);
  return v;
}

TEST(VrSimilarity, StreamAverageOfMaxima) {
  // Visual stream peaks at cosine 0.8, subtitle stream at 0.4.
  const double a = 0.8, b = 0.4;
  auto h_v = mat(2, 2, {a, std::sqrt(1 - a * a), 0, 1});
  auto h_s = mat(2, 2, {0, 1, b, std::sqrt(1 - b * b)});
  ModularQuery<double> q{vec({1, 0}), vec({1, 0}), vec({1, 0}), vec({1, 0})};
  auto phi = vr_similarity(q, video_from(h_v, h_s, prefix_mask(2, 2)));
  EXPECT_NEAR(phi.item(), 0.6, 1e-12);

  ModularQuery<double> single{vec({1, 0}), std::nullopt, vec({1, 0}), std::nullopt};
  auto h = mat(2, 2, {0.9, std::sqrt(1 - 0.81), 0, 1});
  EXPECT_NEAR(vr_similarity(single, video_from(h, std::nullopt, prefix_mask(2, 2))).item(), 0.9, 1e-12);
}

TEST(VrSimilarity, SingletonMaskSelectsThatColumn) {
  ModularQuery<double> q{vec({1, 0}), std::nullopt, vec({1, 0}), std::nullopt};
  auto h = mat(3, 2, {1, 0, 0.3, 0.9, 1, 0});
  Mask mask{0, 1, 0};
  const double expected = 0.3 / std::sqrt(0.09 + 0.81);
  EXPECT_NEAR(vr_similarity(q, video_from(h, std::nullopt, mask)).item(), expected, 1e-12);
}

TEST(VrSimilarity, BoundedAndScaleInvariant) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    auto qv = random_vector<double>(5, rng);
    auto h = random_matrix<double>(6, 5, rng);
    ModularQuery<double> q{qv, std::nullopt, qv, std::nullopt};
    auto phi = vr_similarity(q, video_from(h, std::nullopt, prefix_mask(6, 6))).item();
    EXPECT_GE(phi, -1.0);
    EXPECT_LE(phi, 1.0);
    ModularQuery<double> scaled{scale(qv, 7.5), std::nullopt, qv, std::nullopt};
    Vec hv(h.data().begin(), h.data().end());
    for (std::size_t c = 0; c < 5; ++c) hv[2 * 5 + c] *= 0.01;  // rescale one column of H
    auto phi2 = vr_similarity(scaled, video_from(mat(6, 5, hv), std::nullopt, prefix_mask(6, 6))).item();
    EXPECT_NEAR(phi, phi2, 1e-12);
  }
}

TEST(VrHingeLoss, Examples) {
  auto loss = [](double pos, Vec qn, Vec vn) {
    return vr_hinge_loss(Tensor<double>::scalar(pos), vec(qn), vec(vn), 0.1).item();
  };
  EXPECT_NEAR(loss(0.9, {0.1, 0.3}, {0.3}), 0.0, 1e-12);
  // max(0, .1 + .5 - .2) + max(0, .1 + .4 - .2)
  EXPECT_NEAR(loss(0.2, {0.5, 0.4, 0.6}, {0.4}), 0.4 + 0.3, 1e-12);
  EXPECT_NEAR(loss(0.35, {0.35}, {0.3, 0.4}), 0.2, 1e-12);
}

TEST(VrHingeLoss, NonNegativeAndZeroPastMargin) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 100; ++i) {
    double pos = u(rng);
    Vec qn{u(rng), u(rng)}, vn{u(rng)};
    double l = vr_hinge_loss(Tensor<double>::scalar(pos), vec(qn), vec(vn), 0.1).item();
    EXPECT_GE(l, 0.0);
    double mq = (qn[0] + qn[1]) / 2;
    if (pos >= mq + 0.1 && pos >= vn[0] + 0.1) {
      EXPECT_EQ(l, 0.0);
    }
  }
}

// ---- ML ----

TEST(MlScores, DotProductsAveragedOverStreams) {
  std::mt19937_64 rng(3);
  auto hv = random_matrix<double>(3, 4, rng);
  auto hs = random_matrix<double>(3, 4, rng);
  auto qv = random_vector<double>(4, rng);
  auto qs = random_vector<double>(4, rng);
  ModularQuery<double> q{qv, qs, qv, qs};
  auto s = ml_scores(q, video_from(hv, hs, prefix_mask(3, 3)));
  for (std::size_t i = 0; i < 3; ++i) {
    double a = 0, b = 0;
    for (std::size_t c = 0; c < 4; ++c) {
      a += hv.at(i, c) * qv.at(c);
      b += hs.at(i, c) * qs.at(c);
    }
    EXPECT_NEAR(s.at(i), 0.5 * (a + b), 1e-12);
  }
}

TEST(MlScores, TrivialCases) {
  ModularQuery<double> zero{vec({1, 0, 0}), std::nullopt, vec({0, 0, 0}), std::nullopt};
  auto v = video_from(identity(3), std::nullopt, prefix_mask(3, 3));
  auto s = ml_scores(zero, v);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(s.at(i), 0.0);
  ModularQuery<double> e1{vec({1, 0, 0}), std::nullopt, vec({1, 0, 0}), std::nullopt};
  auto one_hot = ml_scores(e1, v);
  EXPECT_EQ(one_hot.at(0), 1.0);
  EXPECT_EQ(one_hot.at(1), 0.0);
  EXPECT_EQ(one_hot.at(2), 0.0);
}

BoundaryPredictorParams<double> kernels(Vec start, Vec end) {
  const std::size_t w = start.size();
  return {Tensor<double>::from({1, 1, w}, std::move(start)), Tensor<double>::from({1, 1, w}, std::move(end))};
}

TEST(MlDistributions, ZeroKernelsGiveUniformOverValid) {
  auto d = ml_distributions(vec({3, -1, 2, 9}), kernels(Vec(5, 0.0), Vec(5, 0.0)), Mask{1, 1, 1, 0});
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(d.start.at(i), 1.0 / 3, 1e-12);
    EXPECT_NEAR(d.end.at(i), 1.0 / 3, 1e-12);
  }
  EXPECT_EQ(d.start.at(3), 0.0);
}

TEST(MlDistributions, DeltaKernelsPassScoresThrough) {
  Vec s{0.5, 4.0, -1.0, 0.0};
  auto d = ml_distributions(vec(s), kernels({0, 0, 1, 0, 0}, {0, 0, 1, 0, 0}), prefix_mask(4, 4));
  double z = 0;
  for (double x : s) z += std::exp(x);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(d.start.at(i), std::exp(s[i]) / z, 1e-12);
    EXPECT_NEAR(d.end.at(i), std::exp(s[i]) / z, 1e-12);
  }
}

TEST(MlDistributions, RandomScoresNormalize) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 10; ++t) {
    auto s = random_vector<double>(9, rng, 3.0);
    auto k = kernels({0.3, -0.2, 1.0, 0.5, 0.1}, {-0.4, 0.2, 0.7, 0.0, 0.9});
    auto d = ml_distributions(s, k, prefix_mask(9, 6));
    double a = 0, b = 0;
    for (std::size_t i = 0; i < 9; ++i) {
      a += d.start.at(i);
      b += d.end.at(i);
    }
    EXPECT_NEAR(a, 1.0, 1e-6);
    EXPECT_NEAR(b, 1.0, 1e-6);
  }
}

TEST(MlLoss, Examples) {
  auto p = vec({0.25, 0.5, 0.25});
  EXPECT_NEAR(ml_loss(p, p, prefix_mask(3, 3), {1, 2}).item(), 0.5 * (-std::log(0.5) - std::log(0.25)), 1e-12);
  EXPECT_NEAR(ml_loss(p, p, prefix_mask(3, 3), {1, 2}).item(), 1.0397, 1e-4);
  auto u = vec({0.25, 0.25, 0.25, 0.25});
  EXPECT_NEAR(ml_loss(u, u, prefix_mask(4, 4), {0, 3}).item(), std::log(4.0), 1e-12);
  auto sure_s = vec({0, 1, 0}), sure_e = vec({0, 0, 1});
  EXPECT_EQ(ml_loss(sure_s, sure_e, prefix_mask(3, 3), {1, 2}).item(), 0.0);
}

TEST(MlLoss, GoldOnPaddingIsDataError) {
  auto p = vec({0.5, 0.5, 0.0});
  EXPECT_THROW(ml_loss(p, p, prefix_mask(3, 2), {1, 2}), DataError);
  EXPECT_THROW(ml_loss(p, p, prefix_mask(3, 2), {1, 0}), DataError);
  EXPECT_THROW(ml_loss_from_scores(p, p, prefix_mask(3, 2), {2, 2}), DataError);
}

TEST(MlLoss, FromScoresMatchesSoftmaxForm) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 10; ++t) {
    auto a = random_vector<double>(8, rng, 4.0);
    auto b = random_vector<double>(8, rng, 4.0);
    auto mask = prefix_mask(8, 6);
    MomentSpan gold{static_cast<std::size_t>(t % 3), static_cast<std::size_t>(3 + t % 3)};
    double via_probs = ml_loss(masked_softmax(a, mask), masked_softmax(b, mask), mask, gold).item();
    double via_scores = ml_loss_from_scores(a, b, mask, gold).item();
    EXPECT_NEAR(via_probs, via_scores, 1e-10);
    EXPECT_GE(via_scores, 0.0);
  }
}

// ---- VideoCL ----

TEST(NceScore, Examples) {
  const std::size_t pos[] = {0};
  const std::size_t neg[] = {1};
  EXPECT_NEAR(-nce_score(vec({0, 0}), pos, neg).item(), std::log(2.0), 1e-12);
  EXPECT_NEAR(-nce_score(vec({std::log(3.0), 0}), pos, neg).item(), -std::log(3.0 / 4.0), 1e-12);
  EXPECT_NEAR(-nce_score(vec({std::log(3.0), 0}), pos, neg).item(), 0.2877, 1e-4);
  EXPECT_NEAR(-nce_score(vec({0, -800}), pos, neg).item(), 0.0, 1e-12);
}

TEST(NceScore, LossPositiveAndDecreasingInPositiveLogit) {
  std::mt19937_64 rng(6);
  const std::size_t pos[] = {0, 3};
  const std::size_t neg[] = {1, 2};
  for (int t = 0; t < 20; ++t) {
    auto logits = random_vector<double>(4, rng, 2.0);
    double base = -nce_score(logits, pos, neg).item();
    EXPECT_GT(base, 0.0);
    Vec bumped(logits.data().begin(), logits.data().end());
    bumped[3] += 0.5;
    EXPECT_LT(-nce_score(vec(bumped), pos, neg).item(), base);
  }
}

TEST(VideoClLoss, MatchesDirectRatio) {
  std::mt19937_64 rng(7);
  const std::size_t d = 4;
  std::vector<Tensor<double>> c, q;
  for (int i = 0; i < 3; ++i) {
    c.push_back(random_vector<double>(d, rng));
    q.push_back(random_vector<double>(d, rng));
  }
  const std::size_t ids[] = {10, 11, 12};
  double pos = 0, all = 0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double dot = 0;
      for (std::size_t k = 0; k < d; ++k) dot += c[j].at(k) * q[i].at(k);
      all += std::exp(dot);
      if (i == j) pos += std::exp(dot);
    }
  EXPECT_NEAR(video_cl_loss(c, q, ids, identity_heads(d)).item(), -std::log(pos / all), 1e-12);
}

TEST(VideoClLoss, SameVideoPairsAreNotNegatives) {
  const std::size_t d = 2;
  std::vector<Tensor<double>> c{vec({1, 0}), vec({1, 0}), vec({0, 1})};
  std::vector<Tensor<double>> q{vec({1, 0}), vec({0, 1}), vec({0, 1})};
  const std::size_t ids[] = {5, 5, 6};
  // Positives: (0,0)=1, (1,1)=0, (2,2)=1. Negatives are pairs across videos:
  // (0,2)=0, (1,2)=1, (2,0)=0, (2,1)=0.
  const double e = std::exp(1.0);
  const double expected = -std::log((e + 1 + e) / (e + 1 + e + 1 + e + 1 + 1));
  EXPECT_NEAR(video_cl_loss(c, q, ids, identity_heads(d)).item(), expected, 1e-12);
}

TEST(VideoClLoss, SingletonBatchIsConfigError) {
  std::vector<Tensor<double>> c{vec({1, 0})}, q{vec({1, 0})};
  const std::size_t ids[] = {0};
  EXPECT_THROW(video_cl_loss(c, q, ids, identity_heads(2)), ConfigError);
}

// ---- FrameCL ----

TEST(JsdMutualInformation, Examples) {
  EXPECT_NEAR(-jsd_mutual_information<double>(vec({0, 0}), vec({0, 0, 0})).item(), 2 * std::log(2.0), 1e-12);
  EXPECT_NEAR(-jsd_mutual_information<double>(vec({2}), vec({-2})).item(), 2 * softplus_ref(-2), 1e-12);
  EXPECT_NEAR(-jsd_mutual_information<double>(vec({2}), vec({-2})).item(), 0.2538, 1e-4);
  EXPECT_NEAR(-jsd_mutual_information<double>(vec({900}), vec({-900})).item(), 0.0, 1e-12);
  EXPECT_NEAR(-jsd_mutual_information<double>(vec({0}), std::nullopt).item(), std::log(2.0), 1e-12);
}

TEST(JsdMutualInformation, MonotoneInEachScore) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 20; ++t) {
    auto fg = random_vector<double>(3, rng, 3.0);
    auto bg = random_vector<double>(4, rng, 3.0);
    double base = -jsd_mutual_information<double>(fg, std::optional(bg)).item();
    EXPECT_GT(base, 0.0);
    Vec f(fg.data().begin(), fg.data().end()), b(bg.data().begin(), bg.data().end());
    f[1] += 0.3;
    EXPECT_LT(-jsd_mutual_information<double>(vec(f), std::optional(bg)).item(), base);
    b[2] += 0.3;
    EXPECT_GT(-jsd_mutual_information<double>(fg, std::optional(vec(b))).item(), base);
  }
}

TEST(FrameClLoss, SplitsForegroundAndBackground) {
  std::mt19937_64 rng(9);
  const std::size_t d = 3;
  auto heads = identity_heads(d);
  heads.discriminator = random_matrix<double>(d, d, rng);
  auto q = random_vector<double>(d, rng);
  auto hp = random_matrix<double>(6, d, rng);
  auto mask = prefix_mask(6, 5);
  // Direct bilinear oracle.
  std::vector<double> score(6);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) score[i] += q.at(a) * heads.discriminator.at(a, b) * hp.at(i, b);
  double fg = 0, bg = 0;
  for (std::size_t i = 1; i <= 2; ++i) fg += -softplus_ref(-score[i]);
  for (std::size_t i : {0, 3, 4}) bg += softplus_ref(score[i]);
  const double expected = -(fg / 2 - bg / 3);
  EXPECT_NEAR(frame_cl_loss(q, hp, mask, {1, 2}, heads).item(), expected, 1e-12);
}

TEST(FrameClLoss, ZeroDiscriminatorAndFullSpan) {
  const std::size_t d = 2;
  auto heads = identity_heads(d);
  heads.discriminator = Tensor<double>::zeros({d, d});
  auto hp = mat(4, 2, {1, 2, 3, 4, 5, 6, 7, 8});
  EXPECT_NEAR(frame_cl_loss(vec({1, 1}), hp, prefix_mask(4, 4), {1, 2}, heads).item(), 2 * std::log(2.0), 1e-12);
  // Span covering every valid unit drops the background term.
  EXPECT_NEAR(frame_cl_loss(vec({1, 1}), hp, prefix_mask(4, 3), {0, 2}, heads).item(), std::log(2.0), 1e-12);
  EXPECT_THROW(frame_cl_loss(vec({1, 1}), hp, prefix_mask(4, 3), {2, 3}, heads), DataError);
}

// ---- Total ----

TEST(TotalLoss, WeightedSum) {
  const std::array<double, 4> lambda{1.0, 0.01, 0.01, 0.01};
  auto s = [](double x) { return Tensor<double>::scalar(x); };
  EXPECT_EQ(total_loss(s(0), s(0), s(0), s(0), lambda, {}).item(), 0.0);
  EXPECT_NEAR(total_loss(s(0.5), s(1), s(1), s(1), lambda, {}).item(), 0.53, 1e-12);
  ObjectiveGates vr_ml_only{true, true, false, false};
  EXPECT_EQ(total_loss(s(0.5), s(2), s(7), s(9), lambda, vr_ml_only).item(), 0.5 + 0.01 * 2);
  const std::array<double, 4> no_cl{1.0, 0.01, 0.0, 0.0};
  EXPECT_EQ(total_loss(s(0.5), s(2), s(7), s(9), no_cl, {}).item(), 0.5 + 0.01 * 2);
}

TEST(TotalLoss, NonFiniteComponentAborts) {
  const std::array<double, 4> lambda{1.0, 0.01, 0.01, 0.01};
  auto s = [](double x) { return Tensor<double>::scalar(x); };
  EXPECT_THROW(total_loss(s(std::nan("")), s(0), s(0), s(0), lambda, {}), NumericError);
  EXPECT_THROW(total_loss(s(0), s(0), s(INFINITY), s(0), lambda, {}), NumericError);
  // A disabled component is not inspected.
  EXPECT_NO_THROW(total_loss(s(0), s(0), s(INFINITY), s(0), lambda, {true, true, false, true}));
}

TEST(LossReport, JsonFieldNames) {
  nlohmann::json j = LossReport{0.1, 0.2, 0.3, 0.4, 0.5};
  EXPECT_DOUBLE_EQ(j.at("l_vr").get<double>(), 0.1);
  EXPECT_DOUBLE_EQ(j.at("l_framecl").get<double>(), 0.4);
  nlohmann::json g = ObjectiveGates{true, false, true, false};
  EXPECT_EQ(g.get<ObjectiveGates>(), (ObjectiveGates{true, false, true, false}));
}

// ---- Gradients ----

TEST(ObjectiveGradients, EachLossPassesGradientCheck) {
  std::mt19937_64 rng(10);
  const double h = 1e-4;
  auto mask = prefix_mask(7, 6);
  auto check = [&](const char* name, auto f, Tensor<double> point) {
    auto r = gradient_check(std::function<Tensor<double>(const Tensor<double>&)>(f), point, h);
    EXPECT_LE(r.max_rel_error, 1e-4) << name << " worst " << r.worst_analytic << " vs " << r.worst_numeric;
    EXPECT_GT(r.checked, 0u) << name;
  };
  auto hmat = random_matrix<double>(7, 4, rng);
  check("frame scores", [&](const Tensor<double>& q) { return sum(masked_fill(vr_frame_scores(q, hmat, mask), mask, 0.0)); },
        random_vector<double>(4, rng));
  check("ml", [&](const Tensor<double>& s) { return ml_loss_from_scores(s, scale(s, -0.7), mask, {1, 4}); },
        random_vector<double>(7, rng));
  check("ml probs", [&](const Tensor<double>& s) {
    return ml_loss(masked_softmax(s, mask), masked_softmax(neg(s), mask), mask, {2, 3});
  }, random_vector<double>(7, rng));
  const std::size_t pos[] = {0, 4}, negs[] = {1, 2, 3};
  check("nce", [&](const Tensor<double>& x) { return neg(nce_score(x, pos, negs)); }, random_vector<double>(5, rng));
  check("jsd", [&](const Tensor<double>& x) {
    const std::size_t f[] = {0, 1}, b[] = {2, 3, 4};
    return neg(jsd_mutual_information<double>(gather(x, f), std::optional(gather(x, b))));
  }, random_vector<double>(5, rng, 3.0));
  check("hinge", [&](const Tensor<double>& x) {
    const std::size_t p[] = {0}, qn[] = {1, 2}, vn[] = {3};
    return vr_hinge_loss(sum(gather(x, p)), gather(x, qn), gather(x, vn), 0.1);
  }, vec({0.1, 0.4, 0.2, 0.5}));
  auto heads = identity_heads(3);
  heads.discriminator = random_matrix<double>(3, 3, rng);
  auto hp = random_matrix<double>(7, 3, rng);
  check("frame cl", [&](const Tensor<double>& q) { return frame_cl_loss(q, hp, mask, {2, 3}, heads); },
        random_vector<double>(3, rng));
}

TEST(ObjectiveGradients, FullBatchLossPassesGradientCheck) {
  auto cfg = tiny_config();
  ReloclModel<double> model(cfg);
  std::mt19937_64 rng(11);
  auto inputs = testing::tiny_batch<double>(cfg, rng);
  std::vector<Tensor<double>> params;
  for (const auto& p : model.params.items()) params.push_back(p.tensor);
  auto r = gradient_check([&] { return batch_loss(model, inputs, ObjectiveGates{}, ForwardContext{}).total; },
                          params, 1e-4);
  EXPECT_LE(r.max_rel_error, 1e-4) << "worst " << r.worst_analytic << " vs " << r.worst_numeric << ", excluded "
                                   << r.excluded;
  EXPECT_GT(r.checked, model.params.total_elements() / 2);
}

// ---- Batch-level properties ----

TEST(BatchLoss, ComponentsMatchReportAndTotal) {
  auto cfg = tiny_config();
  ReloclModel<double> model(cfg);
  std::mt19937_64 rng(12);
  auto inputs = testing::tiny_batch<double>(cfg, rng);
  auto out = batch_loss(model, inputs, ObjectiveGates{}, ForwardContext{});
  const auto& r = out.report;
  EXPECT_NEAR(r.total, r.vr + 0.01 * (r.ml + r.video_cl + r.frame_cl), 1e-12);
  EXPECT_GE(r.vr, 0.0);
  EXPECT_GT(r.ml, 0.0);
  EXPECT_GT(r.video_cl, 0.0);
  EXPECT_GT(r.frame_cl, 0.0);
  auto vr_ml_only = batch_loss(model, inputs, ObjectiveGates{true, true, false, false}, ForwardContext{});
  EXPECT_NEAR(vr_ml_only.report.total, r.vr + 0.01 * r.ml, 1e-12);
  EXPECT_NEAR(vr_ml_only.report.video_cl, r.video_cl, 1e-12);
}

TEST(BatchLoss, PaddingDoesNotChangeAnyScalar) {
  auto cfg = tiny_config();
  ReloclModel<double> model(cfg);
  std::mt19937_64 rng(13);
  auto inputs = testing::tiny_batch<double>(cfg, rng);
  auto scrambled = inputs;
  for (std::size_t v = 0; v < inputs.video_feats.size(); ++v) {
    scrambled.video_feats[v] = testing::scramble_padding(inputs.video_feats[v], inputs.video_masks[v], rng);
    scrambled.sub_feats[v] = testing::scramble_padding(*inputs.sub_feats[v], inputs.video_masks[v], rng);
  }
  for (std::size_t i = 0; i < inputs.query_feats.size(); ++i) {
    scrambled.query_feats[i] = testing::scramble_padding(inputs.query_feats[i], inputs.query_masks[i], rng);
  }
  auto a = batch_loss(model, inputs, {}, {}).report;
  auto b = batch_loss(model, scrambled, {}, {}).report;
  EXPECT_NEAR(a.vr, b.vr, 1e-6);
  EXPECT_NEAR(a.ml, b.ml, 1e-6);
  EXPECT_NEAR(a.video_cl, b.video_cl, 1e-6);
  EXPECT_NEAR(a.frame_cl, b.frame_cl, 1e-6);
}

TEST(BatchLoss, VideoOrderDoesNotMatter) {
  auto cfg = tiny_config();
  ReloclModel<double> model(cfg);
  std::mt19937_64 rng(14);
  auto inputs = testing::tiny_batch<double>(cfg, rng);
  const std::size_t perm[] = {2, 0, 1};  // new slot of old video v
  auto permuted = inputs;
  for (std::size_t v = 0; v < 3; ++v) {
    permuted.video_feats[perm[v]] = inputs.video_feats[v];
    permuted.sub_feats[perm[v]] = inputs.sub_feats[v];
    permuted.video_masks[perm[v]] = inputs.video_masks[v];
  }
  for (auto& a : permuted.anchor_video) a = perm[a];
  for (auto& list : permuted.video_negatives)
    for (auto& v : list) v = perm[v];
  auto a = batch_loss(model, inputs, {}, {}).report;
  auto b = batch_loss(model, permuted, {}, {}).report;
  EXPECT_NEAR(a.total, b.total, 1e-12);
  EXPECT_NEAR(a.video_cl, b.video_cl, 1e-12);
}

TEST(BatchLoss, EmptyNegativeSetIsConfigError) {
  auto cfg = tiny_config();
  ReloclModel<double> model(cfg);
  std::mt19937_64 rng(15);
  auto inputs = testing::tiny_batch<double>(cfg, rng);
  inputs.video_negatives[1].clear();
  EXPECT_THROW(batch_loss(model, inputs, {}, {}), ConfigError);
}

TEST(BatchLoss, WorksWithoutSubtitles) {
  auto cfg = tiny_config(false);
  ReloclModel<double> model(cfg);
  std::mt19937_64 rng(16);
  auto inputs = testing::tiny_batch<double>(cfg, rng);
  auto out = batch_loss(model, inputs, {}, {});
  EXPECT_TRUE(std::isfinite(out.report.total));
}

}  // namespace
}  // namespace relocl
