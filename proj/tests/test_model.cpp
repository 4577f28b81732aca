// Copyright 2026 The tawt-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "tawt/model.hpp"
#include "tawt/optimizer.hpp"
#include "test_util.hpp"

using namespace tawt;
using tawt::testing::fd_model_gradient;
using tawt::testing::max_rel_error;
using tawt::testing::random_dataset;
using tawt::testing::random_model;

namespace {

SharedModel zero_model(std::size_t d, std::size_t h, std::size_t k) {
  const std::vector<HeadSpec> heads{{0, k}};
  SharedModel m = make_model(d, h, heads, 0);
  std::fill(m.rep.begin(), m.rep.end(), 0.0);
  std::fill(m.heads[0].params.begin(), m.heads[0].params.end(), 0.0);
  return m;
}

}  // namespace

TEST(Forward, IdentityNetwork) {
  SharedModel m = zero_model(3, 3, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    m.rep[i * 3 + i] = 1.0;
    m.heads[0].params[i * 3 + i] = 1.0;
  }
  const Vector x{0.2, 0.0, 1.7};
  const Vector z = forward(m, 0, x);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(z[i], x[i]);
}

TEST(Forward, ZeroParametersGiveZeroLogits) {
  const SharedModel m = zero_model(4, 5, 3);
  for (double v : forward(m, 0, Vector{1.0, -2.0, 0.3, 9.0})) EXPECT_EQ(v, 0.0);
}

TEST(Forward, OneHiddenUnitHandCase) {
  SharedModel m = zero_model(1, 1, 1);
  m.rep = {2.0, -1.0};            // W1, b1
  m.heads[0].params = {3.0, 0.0};  // W2, b2
  const Vector z = forward(m, 0, Vector{1.0});
  ASSERT_EQ(z.size(), 1u);
  EXPECT_DOUBLE_EQ(z[0], 3.0);
}

TEST(Forward, UnknownTaskAndBadInput) {
  const SharedModel m = zero_model(2, 2, 2);
  EXPECT_THROW(forward(m, 5, Vector{1.0, 2.0}), LookupError);
  EXPECT_THROW(forward(m, 0, Vector{1.0}), DimensionError);
}

TEST(TaskLoss, ZeroModelIsLogK) {
  Rng rng(1);
  const Dataset d = random_dataset(17, 4, 5, rng);
  EXPECT_NEAR(task_loss(zero_model(4, 3, 5), 0, d), std::log(5.0), 1e-10);
}

TEST(TaskLoss, SaturatedCorrectExample) {
  SharedModel m = zero_model(1, 1, 2);
  m.heads[0].params = {0.0, 0.0, 0.0, 30.0};  // logits (0, 30)
  const Dataset d(1, 2, Vector{0.5}, {1});
  const double l = task_loss(m, 0, d);
  EXPECT_LT(l, 1e-10);
  EXPECT_GE(l, 0.0);
  const GradSnapshot g = backward(m, 0, d);
  EXPECT_LT(norm2(g.rep_grad) + norm2(g.head_grad), 1e-8);
}

TEST(TaskLoss, TwoExamplesHandComputed) {
  SharedModel m = zero_model(1, 1, 2);
  // hidden = relu(x); logits = (0, 2 * hidden)
  m.rep = {1.0, 0.0};
  m.heads[0].params = {0.0, 2.0, 0.0, 0.0};
  const Dataset d(1, 2, Vector{1.0, 0.5}, {0, 1});
  // example 1: logits (0, 2), label 0 -> log(1 + e^2); example 2: logits (0, 1), label 1 -> log(1 + e^-1)
  const double expected = 0.5 * (std::log(1.0 + std::exp(2.0)) + std::log(1.0 + std::exp(-1.0)));
  EXPECT_NEAR(task_loss(m, 0, d), expected, 1e-10);
}

TEST(TaskLoss, EmptyBatchThrows) {
  const SharedModel m = zero_model(2, 2, 2);
  EXPECT_THROW(task_loss(m, 0, Dataset(2, 2)), EmptyBatchError);
  EXPECT_THROW(backward(m, 0, Dataset(2, 2)), EmptyBatchError);
  EXPECT_THROW(task_loss(m, 0, Dataset(3, 2, Vector{1, 2, 3}, {0})), DimensionError);
}

TEST(Backward, MatchesFiniteDifferencesHandCase) {
  Rng rng(21);
  const SharedModel m = random_model(3, 4, {{0, 3}}, 5);
  const Dataset batch = random_dataset(5, 3, 3, rng);
  const GradSnapshot g = backward(m, 0, batch);
  Vector analytic = g.rep_grad;
  analytic.insert(analytic.end(), g.head_grad.begin(), g.head_grad.end());
  EXPECT_LE(max_rel_error(analytic, fd_model_gradient(m, 0, batch)), 1e-5);
}

TEST(Backward, DuplicatedRowsLeaveGradientUnchanged) {
  Rng rng(2);
  const SharedModel m = random_model(3, 4, {{0, 3}}, 8);
  const Dataset batch = random_dataset(6, 3, 3, rng);
  std::vector<std::size_t> twice;
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t i = 0; i < batch.size(); ++i) twice.push_back(i);
  const GradSnapshot a = backward(m, 0, batch);
  const GradSnapshot b = backward(m, 0, batch.subset(twice));
  for (std::size_t i = 0; i < a.rep_grad.size(); ++i) EXPECT_NEAR(a.rep_grad[i], b.rep_grad[i], 1e-15);
  for (std::size_t i = 0; i < a.head_grad.size(); ++i) EXPECT_NEAR(a.head_grad[i], b.head_grad[i], 1e-15);
}

TEST(Backward, PermutationInvariance) {
  Rng rng(3);
  const SharedModel m = random_model(4, 5, {{0, 3}}, 9);
  const Dataset batch = random_dataset(12, 4, 3, rng);
  std::vector<std::size_t> perm = detail::all_rows(batch.size());
  rng.shuffle(std::span(perm));
  const Dataset shuffled = batch.subset(perm);
  EXPECT_NEAR(task_loss(m, 0, batch), task_loss(m, 0, shuffled), 1e-14);
  const GradSnapshot a = backward(m, 0, batch), b = backward(m, 0, shuffled);
  for (std::size_t i = 0; i < a.rep_grad.size(); ++i) EXPECT_NEAR(a.rep_grad[i], b.rep_grad[i], 1e-14);
}

TEST(Backward, HeadIsolation) {
  Rng rng(4);
  const SharedModel m = random_model(3, 4, {{0, 3}, {7, 2}}, 10);
  const Dataset batch = random_dataset(5, 3, 3, rng);
  const GradSnapshot g = backward(m, 0, batch);
  EXPECT_EQ(g.head_grad.size(), m.head(0).params.size());
  // Perturbing another task's head does not move this task's loss.
  SharedModel m2 = m;
  for (double& v : m2.head(7).params) v += 1.0;
  EXPECT_EQ(task_loss(m, 0, batch), task_loss(m2, 0, batch));
}

TEST(Backward, LossNonNegativeProperty) {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const SharedModel m = random_model(3, 4, {{0, 4}}, 100 + t);
    EXPECT_GE(task_loss(m, 0, random_dataset(8, 3, 4, rng)), 0.0);
  }
}

TEST(RepGradient, WholeSetWhenSubsetLarge) {
  Rng rng(6);
  const SharedModel m = random_model(3, 4, {{0, 3}}, 11);
  const Dataset d = random_dataset(20, 3, 3, rng);
  Rng r(1);
  const Vector g = rep_gradient_flat(m, 0, d, 64, r);
  EXPECT_EQ(g, backward(m, 0, d).rep_grad);
  EXPECT_EQ(kDefaultGradientSubset, 64u);
}

TEST(RepGradient, DeterministicSubset) {
  Rng rng(7);
  const SharedModel m = random_model(3, 4, {{0, 3}}, 12);
  const Dataset d = random_dataset(200, 3, 3, rng);
  Rng a(5), b(5);
  EXPECT_EQ(rep_gradient_flat(m, 0, d, 64, a), rep_gradient_flat(m, 0, d, 64, b));
  EXPECT_THROW(rep_gradient_flat(m, 0, d, 0, a), ArgumentError);
  EXPECT_THROW(rep_gradient_flat(m, 0, Dataset(3, 3), 4, a), EmptyBatchError);
}

TEST(Optimizer, SgdCases) {
  OptimizerConfig c;
  c.kind = OptimizerKind::sgd;
  c.lr = 0.0;
  Vector p{1.0, -2.0};
  OptimizerState s0(c, 2);
  apply_update(p, Vector{5.0, 5.0}, s0);
  EXPECT_EQ(p, (Vector{1.0, -2.0}));
  c.lr = 0.1;
  Vector q{1.0};
  OptimizerState s1(c, 1);
  apply_update(q, Vector{2.0}, s1);
  EXPECT_NEAR(q[0], 0.8, 1e-15);
  EXPECT_THROW(apply_update(q, Vector{1.0, 2.0}, s1), DimensionError);
}

TEST(Optimizer, AdamFirstStep) {
  OptimizerConfig c;
  c.lr = 3e-4;
  Vector p{0.5};
  OptimizerState s(c, 1);
  apply_update(p, Vector{1.0}, s);
  // m_hat = 1, v_hat = 1 -> step = lr / (1 + 1e-8)
  EXPECT_NEAR(0.5 - p[0], 3e-4, 1e-11);
  EXPECT_EQ(s.step, 1u);
  EXPECT_EQ(s.m.size(), 1u);
}

TEST(Model, InitializationContract) {
  const std::vector<HeadSpec> heads{{1, 3}, {2, 4}};
  const SharedModel m = make_model(5, 6, heads, 3);
  const double lim1 = std::sqrt(6.0 / 11.0);
  for (std::size_t i = 0; i < 30; ++i) EXPECT_LE(std::abs(m.rep[i]), lim1);
  for (std::size_t i = 30; i < 36; ++i) EXPECT_EQ(m.rep[i], 0.0);
  // Head streams are keyed by task id: dropping a head leaves the others unchanged.
  const std::vector<HeadSpec> only2{{2, 4}};
  const SharedModel m2 = make_model(5, 6, only2, 3);
  EXPECT_EQ(m2.head(2), m.head(2));
  EXPECT_EQ(m2.rep, m.rep);
  const std::vector<HeadSpec> dup{{1, 3}, {1, 3}};
  EXPECT_THROW(make_model(5, 6, dup, 3), ArgumentError);
}

TEST(Checkpoint, RoundTrip) {
  const SharedModel m = random_model(3, 4, {{1, 3}, {9, 2}}, 13);
  std::stringstream ss;
  write_checkpoint(ss, m);
  EXPECT_EQ(read_checkpoint(ss), m);
}

TEST(Checkpoint, RejectsGarbage) {
  std::stringstream bad("NOTACKPT........");
  EXPECT_THROW(read_checkpoint(bad), IoError);
  const SharedModel m = random_model(3, 4, {{1, 3}}, 13);
  std::stringstream ss;
  write_checkpoint(ss, m);
  std::string s = ss.str();
  std::stringstream trunc(s.substr(0, s.size() - 8));
  EXPECT_THROW(read_checkpoint(trunc), IoError);
}
