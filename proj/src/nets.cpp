#include "krew/ctgan/nets.hpp"

#include <cmath>
#include <string>

#include "krew/error.hpp"

namespace krew::ctgan {

using ad::Var;

Linear make_linear(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l;
  l.weight.resize(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out));
  l.bias.resize(1, static_cast<Eigen::Index>(out));
  for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = bound * (2.0 * rng.uniform() - 1.0);
  for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias.data()[i] = bound * (2.0 * rng.uniform() - 1.0);
  return l;
}

BatchNorm make_batch_norm(std::size_t width) {
  const auto w = static_cast<Eigen::Index>(width);
  return BatchNorm{Matrix::Ones(1, w), Matrix::Zero(1, w), Matrix::Zero(1, w), Matrix::Ones(1, w)};
}

Generator::Generator(std::size_t input, const std::vector<int>& widths, std::size_t output, Rng& rng) {
  std::size_t in = input;
  for (int w : widths) {
    if (w < 1) throw ConfigError("hidden widths must be positive");
    hidden.push_back(make_linear(in, static_cast<std::size_t>(w), rng));
    norms.push_back(make_batch_norm(static_cast<std::size_t>(w)));
    in = static_cast<std::size_t>(w);
  }
  head = make_linear(in, output, rng);
}

std::size_t Generator::input_width() const {
  return static_cast<std::size_t>(hidden.empty() ? head.weight.rows() : hidden.front().weight.rows());
}

std::vector<Matrix*> Generator::parameters() {
  std::vector<Matrix*> out;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    out.push_back(&hidden[i].weight);
    out.push_back(&hidden[i].bias);
    out.push_back(&norms[i].gamma);
    out.push_back(&norms[i].beta);
  }
  out.push_back(&head.weight);
  out.push_back(&head.bias);
  return out;
}

std::vector<Matrix*> Generator::state() {
  auto out = parameters();
  for (auto& n : norms) {
    out.push_back(&n.running_mean);
    out.push_back(&n.running_var);
  }
  return out;
}

std::vector<const Matrix*> Generator::state() const {
  auto mutable_state = const_cast<Generator*>(this)->state();
  return {mutable_state.begin(), mutable_state.end()};
}

Discriminator::Discriminator(std::size_t row_width, const std::vector<int>& widths, int pac_size, Rng& rng)
    : pac(pac_size) {
  if (pac < 1) throw ConfigError("pac must be positive");
  std::size_t in = row_width * static_cast<std::size_t>(pac);
  for (int w : widths) {
    if (w < 1) throw ConfigError("hidden widths must be positive");
    hidden.push_back(make_linear(in, static_cast<std::size_t>(w), rng));
    in = static_cast<std::size_t>(w);
  }
  head = make_linear(in, 1, rng);
}

std::size_t Discriminator::row_width() const {
  const auto in = hidden.empty() ? head.weight.rows() : hidden.front().weight.rows();
  return static_cast<std::size_t>(in) / static_cast<std::size_t>(pac);
}

std::vector<Matrix*> Discriminator::parameters() {
  std::vector<Matrix*> out;
  for (auto& l : hidden) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  out.push_back(&head.weight);
  out.push_back(&head.bias);
  return out;
}

std::vector<const Matrix*> Discriminator::state() const {
  auto mutable_state = const_cast<Discriminator*>(this)->parameters();
  return {mutable_state.begin(), mutable_state.end()};
}

std::vector<Var> bind_tensors(ad::Tape& tape, std::span<Matrix* const> tensors, bool trainable) {
  std::vector<Var> out;
  out.reserve(tensors.size());
  for (Matrix* t : tensors) out.push_back(trainable ? tape.variable(*t) : tape.constant(*t));
  return out;
}

GeneratorOutput generator_forward(ad::Tape& tape, Generator& net, std::span<const Var> params,
                                  const Matrix& input, const TransformSpec& spec, double temperature,
                                  Rng* gumbel, bool training) {
  if (static_cast<std::size_t>(input.cols()) != net.input_width())
    throw ParameterError("generator input has " + std::to_string(input.cols()) + " columns, expected " +
                         std::to_string(net.input_width()));
  if (params.size() != 4 * net.hidden.size() + 2) throw ParameterError("generator parameter count mismatch");
  const auto n = static_cast<double>(input.rows());
  Var x = tape.constant(input);
  std::size_t p = 0;
  for (std::size_t i = 0; i < net.hidden.size(); ++i) {
    Var h = matmul(x, params[p]) + params[p + 1];
    Var gamma = params[p + 2], beta = params[p + 3];
    p += 4;
    auto& bn = net.norms[i];
    Var normed;
    if (training) {
      Var mu = col_mean(h);
      Var centered = h - mu;
      Var var = col_mean(square(centered));
      normed = centered / sqrt(add_scalar(var, kBatchNormEps));
      const double unbias = n > 1.0 ? n / (n - 1.0) : 1.0;
      bn.running_mean = (1.0 - kBatchNormMomentum) * bn.running_mean + kBatchNormMomentum * mu.value();
      bn.running_var = (1.0 - kBatchNormMomentum) * bn.running_var + kBatchNormMomentum * unbias * var.value();
    } else {
      normed = (h - tape.constant(bn.running_mean)) /
               tape.constant((bn.running_var.array() + kBatchNormEps).sqrt().matrix());
    }
    x = relu(normed * gamma + beta);
  }
  Var logits = matmul(x, params[p]) + params[p + 1];
  if (!logits.value().allFinite()) throw NumericError("generator produced non-finite activations");
  if (static_cast<std::size_t>(logits.cols()) != spec.output_width())
    throw ParameterError("generator head width does not match the transform layout");

  Var z = logits;
  if (gumbel) {
    Matrix g = Matrix::Zero(logits.rows(), logits.cols());
    const auto& soft = *spec.softmax_mask();
    for (Eigen::Index r = 0; r < g.rows(); ++r)
      for (Eigen::Index c = 0; c < g.cols(); ++c)
        if (soft(0, c) != 0.0) g(r, c) = gumbel->gumbel();
    z = z + tape.constant(std::move(g));
  }
  z = scale(z, 1.0 / temperature);
  Var shifted = z - tape.constant(ad::segment_max(z.value(), *spec.segments()));
  Var e = exp(shifted);
  Var soft = e / seg_sum(e, spec.segments());
  Var activated = mask_mul(tanh(logits), spec.alpha_mask()) + mask_mul(soft, spec.softmax_mask());
  return {logits, activated};
}

DropoutMasks draw_dropout(const Discriminator& net, std::size_t packs, double rate, Rng& rng) {
  DropoutMasks out;
  if (rate <= 0.0) return out;
  const double keep = 1.0 / (1.0 - rate);
  for (const auto& l : net.hidden) {
    Matrix m(static_cast<Eigen::Index>(packs), l.weight.cols());
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform() < rate ? 0.0 : keep;
    out.push_back(std::make_shared<const Matrix>(std::move(m)));
  }
  return out;
}

Var discriminator_forward(const Discriminator& net, std::span<const Var> params, Var rows,
                          double leaky_slope, const DropoutMasks& masks) {
  if (params.size() != 2 * net.hidden.size() + 2) throw ParameterError("discriminator parameter count mismatch");
  const auto pac = static_cast<Eigen::Index>(net.pac);
  if (rows.rows() % pac != 0)
    throw ParameterError("batch of " + std::to_string(rows.rows()) + " rows is not a multiple of pac " +
                         std::to_string(pac));
  if (static_cast<std::size_t>(rows.cols()) != net.row_width())
    throw ParameterError("discriminator input has " + std::to_string(rows.cols()) + " columns, expected " +
                         std::to_string(net.row_width()));
  Var x = reshape(rows, rows.rows() / pac, rows.cols() * pac);
  std::size_t p = 0;
  for (std::size_t i = 0; i < net.hidden.size(); ++i) {
    x = leaky_relu(matmul(x, params[p]) + params[p + 1], leaky_slope);
    p += 2;
    if (i < masks.size() && masks[i]) x = mask_mul(x, masks[i]);
  }
  return matmul(x, params[p]) + params[p + 1];
}

Var conditional_cross_entropy(Var logits, const Matrix& target, const TransformSpec& spec) {
  ad::Tape& tape = logits.tape();
  Var shifted = logits - tape.constant(ad::segment_max(logits.value(), *spec.segments()));
  Var log_prob = shifted - log(seg_sum(exp(shifted), spec.segments()));
  return scale(sum(mask_mul(log_prob, target)), -1.0 / static_cast<double>(logits.rows()));
}

namespace {

void check_penalty_inputs(const Matrix& real, const Matrix& fake, const Matrix& eps, int pac) {
  if (real.rows() != fake.rows() || real.cols() != fake.cols())
    throw ParameterError("real and fake batches differ in shape");
  if (pac < 1 || real.rows() % pac != 0) throw ParameterError("batch is not a multiple of pac");
  if (eps.rows() != real.rows() / pac || eps.cols() != 1)
    throw ParameterError("one interpolation weight per pack is required");
}

Matrix interpolate(const Matrix& real, const Matrix& fake, const Matrix& eps, int pac) {
  Matrix x(real.rows(), real.cols());
  for (Eigen::Index r = 0; r < real.rows(); ++r) {
    const double e = eps(r / pac, 0);
    x.row(r) = e * real.row(r) + (1.0 - e) * fake.row(r);
  }
  return x;
}

constexpr double kNormEps = 1e-12;

}  // namespace

Var gradient_penalty(ad::Tape& tape, const Critic& critic, const Matrix& real, const Matrix& fake,
                     const Matrix& eps, int pac, double lambda) {
  check_penalty_inputs(real, fake, eps, pac);
  Var x = tape.variable(interpolate(real, fake, eps, pac));
  Var out = critic(tape, x);
  const Var inputs[] = {x};
  Var g = tape.gradients(sum(out), inputs)[0];
  const auto packs = real.rows() / pac;
  g = reshape(g, packs, real.cols() * pac);
  Var norm = sqrt(add_scalar(sum_to(square(g), packs, 1), kNormEps));
  return scale(mean(square(add_scalar(norm, -1.0))), lambda);
}

Var gradient_penalty(ad::Tape& tape, const Critic& critic, const Matrix& real, const Matrix& fake,
                     int pac, double lambda, Rng& rng) {
  Matrix eps(real.rows() / std::max(pac, 1), 1);
  for (Eigen::Index i = 0; i < eps.rows(); ++i) eps(i, 0) = rng.uniform();
  return gradient_penalty(tape, critic, real, fake, eps, pac, lambda);
}

double gradient_penalty_fd(const Critic& critic, const Matrix& real, const Matrix& fake,
                           const Matrix& eps, int pac, double lambda, double step) {
  check_penalty_inputs(real, fake, eps, pac);
  Matrix x = interpolate(real, fake, eps, pac);
  const auto total = [&](const Matrix& at) {
    ad::Tape scratch;
    return sum(critic(scratch, scratch.constant(at))).scalar();
  };
  Matrix g(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double keep = x(r, c);
      x(r, c) = keep + step;
      const double up = total(x);
      x(r, c) = keep - step;
      const double down = total(x);
      x(r, c) = keep;
      g(r, c) = (up - down) / (2.0 * step);
    }
  const auto packs = x.rows() / pac;
  double acc = 0.0;
  for (Eigen::Index k = 0; k < packs; ++k) {
    const double norm = std::sqrt(g.middleRows(k * pac, pac).squaredNorm() + kNormEps);
    acc += (norm - 1.0) * (norm - 1.0);
  }
  return lambda * acc / static_cast<double>(packs);
}

void Adam::step(std::span<Matrix* const> params, const std::vector<Matrix>& grads) {
  if (params.size() != grads.size()) throw ParameterError("parameter and gradient counts differ");
  if (m_.empty()) {
    for (Matrix* p : params) {
      m_.push_back(Matrix::Zero(p->rows(), p->cols()));
      v_.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseProduct(grads[i]);
    params[i]->array() -= rate_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

}  // namespace krew::ctgan
