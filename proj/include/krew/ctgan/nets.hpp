#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "krew/ctgan/tape.hpp"
#include "krew/ctgan/transform.hpp"
#include "krew/random.hpp"

namespace krew::ctgan {

using Matrix = Eigen::MatrixXd;

struct Linear {
  Matrix weight;  // in x out
  Matrix bias;    // 1 x out
};

// Uniform(-1/sqrt(in), 1/sqrt(in)) for weight and bias.
Linear make_linear(std::size_t in, std::size_t out, Rng& rng);

struct BatchNorm {
  Matrix gamma;
  Matrix beta;
  Matrix running_mean;
  Matrix running_var;
};

BatchNorm make_batch_norm(std::size_t width);

constexpr double kBatchNormMomentum = 0.1;
constexpr double kBatchNormEps = 1e-5;

// [Z, V] -> (FC -> BN -> ReLU) per hidden width -> FC -> output heads.
struct Generator {
  std::vector<Linear> hidden;
  std::vector<BatchNorm> norms;
  Linear head;

  Generator() = default;
  Generator(std::size_t input, const std::vector<int>& widths, std::size_t output, Rng& rng);

  std::size_t input_width() const;
  // Trainable tensors in a fixed order.
  std::vector<Matrix*> parameters();
  // Trainable tensors followed by batch-norm running statistics.
  std::vector<Matrix*> state();
  std::vector<const Matrix*> state() const;
};

// Packs of `pac` rows -> (FC -> LeakyReLU -> Dropout) per hidden width -> FC(1).
struct Discriminator {
  std::vector<Linear> hidden;
  Linear head;
  int pac = 10;

  Discriminator() = default;
  Discriminator(std::size_t row_width, const std::vector<int>& widths, int pac, Rng& rng);

  std::size_t row_width() const;
  std::vector<Matrix*> parameters();
  std::vector<Matrix*> state() { return parameters(); }
  std::vector<const Matrix*> state() const;
};

// Places tensors on the tape; trainable ones become variables.
std::vector<ad::Var> bind_tensors(ad::Tape& tape, std::span<Matrix* const> tensors, bool trainable);

struct GeneratorOutput {
  ad::Var logits;     // pre-activation heads
  ad::Var activated;  // tanh on alpha slots, Gumbel-softmax on groups
};

// `params` follows Generator::parameters(). In training mode batch statistics
// are used and the running statistics of `net` are updated; otherwise the
// running statistics normalize. Without a Gumbel source groups get a plain
// softmax at the given temperature.
GeneratorOutput generator_forward(ad::Tape& tape, Generator& net, std::span<const ad::Var> params,
                                  const Matrix& input, const TransformSpec& spec, double temperature,
                                  Rng* gumbel, bool training);

// Per-row dropout masks, already scaled by 1/(1-rate); one per hidden layer.
using DropoutMasks = std::vector<std::shared_ptr<const Matrix>>;
DropoutMasks draw_dropout(const Discriminator& net, std::size_t packs, double rate, Rng& rng);

// rows: batch x row_width with batch a multiple of pac. Returns packs x 1.
ad::Var discriminator_forward(const Discriminator& net, std::span<const ad::Var> params, ad::Var rows,
                              double leaky_slope, const DropoutMasks& masks);

// Mean over rows of -log softmax(logits)[target] within each row's
// conditioned group. target: batch x output_width indicator (all-zero rows
// contribute nothing).
ad::Var conditional_cross_entropy(ad::Var logits, const Matrix& target, const TransformSpec& spec);

using Critic = std::function<ad::Var(ad::Tape&, ad::Var)>;

// lambda * mean over packs of (||grad_x D(x_hat)|| - 1)^2 with
// x_hat = eps * real + (1 - eps) * fake, eps drawn once per pack (packs x 1).
// The result stays differentiable with respect to the critic's parameters.
ad::Var gradient_penalty(ad::Tape& tape, const Critic& critic, const Matrix& real, const Matrix& fake,
                         const Matrix& eps, int pac, double lambda);
ad::Var gradient_penalty(ad::Tape& tape, const Critic& critic, const Matrix& real, const Matrix& fake,
                         int pac, double lambda, Rng& rng);
// Same quantity with the input gradient taken by central differences.
double gradient_penalty_fd(const Critic& critic, const Matrix& real, const Matrix& fake,
                           const Matrix& eps, int pac, double lambda, double step = 1e-5);

class Adam {
 public:
  Adam() = default;
  Adam(double rate, double beta1, double beta2, double eps = 1e-8)
      : rate_(rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::span<Matrix* const> params, const std::vector<Matrix>& grads);
  long steps() const { return t_; }

 private:
  double rate_ = 2e-4, beta1_ = 0.5, beta2_ = 0.9, eps_ = 1e-8;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

}  // namespace krew::ctgan
