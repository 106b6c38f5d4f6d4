#include "krew/ctgan/tape.hpp"

#include <cmath>

#include "gtest/gtest.h"
#include "krew/ctgan/nets.hpp"
#include "support/gradcheck.hpp"

namespace krew::ad {
namespace {

using krew::testing::numeric_gradient;
using krew::testing::relative_error;

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = lo + (hi - lo) * rng.uniform();
  return m;
}

// Checks d f / d inputs against central differences.
void expect_gradients(const std::function<Var(Tape&, std::vector<Var>&)>& f, std::vector<Matrix> values) {
  Tape tape;
  std::vector<Var> vars;
  for (auto& v : values) vars.push_back(tape.variable(v));
  const auto grads = tape.gradient_values(f(tape, vars), vars);
  std::vector<Matrix*> ptrs;
  for (auto& v : values) ptrs.push_back(&v);
  const auto fd = numeric_gradient(
      [&] {
        Tape t;
        std::vector<Var> vs;
        for (auto& v : values) vs.push_back(t.constant(v));
        return f(t, vs).scalar();
      },
      ptrs);
  for (std::size_t i = 0; i < grads.size(); ++i) EXPECT_LT(relative_error(grads[i], fd[i]), 1e-6) << "input " << i;
}

TEST(TapeTest, ElementwiseOps) {
  Rng rng(1);
  const Matrix a = random_matrix(3, 4, rng), b = random_matrix(3, 4, rng, 0.5, 2.0);
  expect_gradients([](Tape&, std::vector<Var>& v) { return sum(v[0] * v[1] + v[0] / v[1] - v[1]); }, {a, b});
  expect_gradients([](Tape&, std::vector<Var>& v) { return sum(exp(v[0]) + log(v[1]) + sqrt(v[1])); }, {a, b});
  expect_gradients([](Tape&, std::vector<Var>& v) { return sum(tanh(v[0]) * scale(v[1], 3.0)); }, {a, b});
}

TEST(TapeTest, MatrixOps) {
  Rng rng(2);
  const Matrix a = random_matrix(3, 4, rng), b = random_matrix(4, 2, rng), row = random_matrix(1, 2, rng);
  expect_gradients(
      [](Tape&, std::vector<Var>& v) { return sum(square(matmul(v[0], v[1]) + v[2])); }, {a, b, row});
  expect_gradients([](Tape&, std::vector<Var>& v) { return sum(square(reshape(transpose(v[0]), 2, 6))); }, {a});
  expect_gradients(
      [](Tape&, std::vector<Var>& v) {
        Var s = slice_cols(v[0], 1, 2);
        return sum(square(concat_cols(s, v[0]))) + sum(pad_cols(s, 1, 5) * v[0].tape().constant(Matrix::Ones(3, 5)));
      },
      {a});
  expect_gradients([](Tape&, std::vector<Var>& v) { return sum(square(col_mean(v[0]))) + mean(v[0]); }, {a});
}

TEST(TapeTest, SegmentSoftmax) {
  Rng rng(3);
  const Matrix a = random_matrix(3, 5, rng);
  auto segments = std::make_shared<const Segments>(Segments{{0}, {1, 2}, {3, 4}});
  expect_gradients(
      [&](Tape& t, std::vector<Var>& v) {
        Var shifted = v[0] - t.constant(segment_max(v[0].value(), *segments));
        Var e = exp(shifted);
        Var s = e / seg_sum(e, segments);
        return sum(s * t.constant(Matrix::Constant(3, 5, 0.7)) + square(s));
      },
      {a});
}

TEST(TapeTest, SecondOrderThroughGradient) {
  Rng rng(4);
  const Matrix x = random_matrix(2, 3, rng), w = random_matrix(3, 1, rng);
  // f(w) = sum((d/dx sum(tanh(x w)))^2), needs the backward graph itself.
  expect_gradients(
      [&](Tape& t, std::vector<Var>& v) {
        Var xv = t.variable(x);
        Var y = sum(tanh(matmul(xv, v[0])));
        const Var in[] = {xv};
        Var g = t.gradients(y, in)[0];
        return sum(square(g));
      },
      {w});
}

TEST(TapeTest, GradientsOfUnrelatedInputAreZero) {
  Tape tape;
  Var a = tape.variable(Matrix::Ones(2, 2));
  Var b = tape.variable(Matrix::Ones(2, 2));
  const Var in[] = {a, b};
  const auto g = tape.gradient_values(sum(a * a), in);
  EXPECT_TRUE(g[0].isApprox(Matrix::Constant(2, 2, 2.0)));
  EXPECT_TRUE(g[1].isZero());
}

TEST(TapeTest, BroadcastMismatchThrows) {
  Tape tape;
  Var a = tape.constant(Matrix::Ones(2, 3));
  Var b = tape.constant(Matrix::Ones(3, 2));
  EXPECT_THROW(a + b, std::invalid_argument);
  EXPECT_THROW(matmul(a, a), std::invalid_argument);
}

TEST(GradientPenaltyTest, LinearCriticGivesClosedForm) {
  Tape tape;
  Matrix w(2, 1);
  w << 3, 4;
  const ctgan::Critic critic = [&](Tape& t, Var x) { return matmul(x, t.constant(w)); };
  Rng rng(7);
  const Matrix real = random_matrix(5, 2, rng), fake = random_matrix(5, 2, rng);
  const Var pen = ctgan::gradient_penalty(tape, critic, real, fake, 1, 10.0, rng);
  EXPECT_NEAR(pen.scalar(), 160.0, 1e-9);
}

TEST(GradientPenaltyTest, UnitGradientCriticGivesZero) {
  Tape tape;
  Matrix w(2, 1);
  w << 0.6, 0.8;
  const ctgan::Critic critic = [&](Tape& t, Var x) { return matmul(x, t.constant(w)); };
  Rng rng(8);
  const Matrix real = random_matrix(4, 2, rng), fake = random_matrix(4, 2, rng);
  EXPECT_NEAR(ctgan::gradient_penalty(tape, critic, real, fake, 1, 10.0, rng).scalar(), 0.0, 1e-12);
}

TEST(GradientPenaltyTest, MatchesFiniteDifferencePenalty) {
  krew::testing::SmallGan gan;
  Tape tape;
  const Matrix fake = gan.fake_rows(tape);
  tape.truncate(0);
  const auto dp = ctgan::bind_tensors(tape, gan.discriminator.parameters(), true);
  const ctgan::Critic critic = [&](Tape& t, Var x) {
    const auto p = &t == &tape ? dp : ctgan::bind_tensors(t, gan.discriminator.parameters(), false);
    return ctgan::discriminator_forward(gan.discriminator, p, x, 0.2, gan.masks_penalty);
  };
  const double tp = ctgan::gradient_penalty(tape, critic, gan.real, fake, gan.eps, gan.pac, 10.0).scalar();
  const double fd = ctgan::gradient_penalty_fd(critic, gan.real, fake, gan.eps, gan.pac, 10.0);
  EXPECT_GE(tp, 0.0);
  EXPECT_NEAR(tp, fd, 1e-6 * std::max(1.0, tp));
}

TEST(GradientPenaltyTest, DiscriminatorLossGradientsMatchFiniteDifferences) {
  krew::testing::SmallGan gan;
  ASSERT_LE(gan.parameter_count(), 2000);
  Tape tape;
  const Matrix fake = gan.fake_rows(tape);
  tape.truncate(0);
  const auto dp = ctgan::bind_tensors(tape, gan.discriminator.parameters(), true);
  const auto grads = tape.gradient_values(gan.loss_d(tape, dp, fake), dp);
  const auto fd = numeric_gradient([&] { return gan.loss_d_value(); }, gan.discriminator.parameters());
  for (std::size_t i = 0; i < grads.size(); ++i) EXPECT_LE(relative_error(grads[i], fd[i]), 1e-4) << "tensor " << i;
}

TEST(GradientPenaltyTest, GeneratorLossGradientsMatchFiniteDifferences) {
  krew::testing::SmallGan gan;
  Tape tape;
  const auto gp = ctgan::bind_tensors(tape, gan.generator.parameters(), true);
  const auto grads = tape.gradient_values(gan.loss_g(tape, gp), gp);
  const auto fd = numeric_gradient([&] { return gan.loss_g_value(); }, gan.generator.parameters());
  for (std::size_t i = 0; i < grads.size(); ++i) EXPECT_LE(relative_error(grads[i], fd[i]), 1e-4) << "tensor " << i;
}

}  // namespace
}  // namespace krew::ad
