#include "krew/ctgan/ctgan.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "krew/error.hpp"

namespace krew::ctgan {

using ad::Tape;
using ad::Var;

void TrainConfig::validate() const {
  if (epochs <= 0) throw ConfigError("epochs must be positive");
  if (batch_size <= 0) throw ConfigError("batch size must be positive");
  if (pac <= 0) throw ConfigError("pac must be positive");
  if (batch_size % pac != 0)
    throw ConfigError("batch size " + std::to_string(batch_size) + " is not a multiple of pac " +
                      std::to_string(pac));
  if (noise_dim <= 0) throw ConfigError("noise dimension must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(penalty_weight >= 0.0)) throw ConfigError("penalty weight must be non-negative");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (discriminator_steps < 1) throw ConfigError("discriminator steps must be positive");
  for (int w : generator_hidden)
    if (w < 1) throw ConfigError("generator widths must be positive");
  for (int w : discriminator_hidden)
    if (w < 1) throw ConfigError("discriminator widths must be positive");
}

namespace {

ConditionalVector make_condition(const TransformSpec& spec, std::size_t column, std::size_t category) {
  ConditionalVector cv;
  cv.v = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(spec.cond_width()));
  const auto& t = spec.columns()[spec.discrete_columns()[column]];
  cv.v(static_cast<Eigen::Index>(t.cond_offset + category)) = 1.0;
  cv.column = static_cast<int>(column);
  cv.category = static_cast<int>(category);
  return cv;
}

template <class Weight>
ConditionalVector draw_condition(const TransformSpec& spec, Rng& rng, Weight weight) {
  const auto& discrete = spec.discrete_columns();
  if (discrete.empty()) return {};
  const std::size_t column = rng.below(discrete.size());
  const auto& t = spec.columns()[discrete[column]];
  std::vector<double> w;
  w.reserve(t.frequencies.size());
  for (auto f : t.frequencies) w.push_back(weight(static_cast<double>(f)));
  return make_condition(spec, column, rng.weighted(w));
}

// Fills rows of `input` with [Z, V] and returns the conditions drawn.
std::vector<ConditionalVector> draw_inputs(const TransformSpec& spec, int noise_dim, Matrix& input,
                                           Rng& rng) {
  std::vector<ConditionalVector> conds;
  conds.reserve(static_cast<std::size_t>(input.rows()));
  for (Eigen::Index r = 0; r < input.rows(); ++r) {
    for (int c = 0; c < noise_dim; ++c) input(r, c) = rng.normal();
    conds.push_back(sample_condition(spec, rng));
    if (conds.back().v.size() > 0) input.row(r).tail(conds.back().v.size()) = conds.back().v;
  }
  return conds;
}

}  // namespace

ConditionalVector sample_condition(const TransformSpec& spec, Rng& rng) {
  return draw_condition(spec, rng, [](double f) { return std::log1p(f); });
}

ConditionalVector sample_condition_empirical(const TransformSpec& spec, Rng& rng) {
  return draw_condition(spec, rng, [](double f) { return f; });
}

CtganModel train(const EncodedTable& encoded, const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (encoded.rows() == 0) throw ParameterError("cannot train on an empty table");

  CtganModel model;
  model.header = encoded;
  model.header.values.resize(0, static_cast<Eigen::Index>(encoded.width()));
  model.config = config;
  model.spec = fit_transforms(encoded);
  const TransformSpec& spec = model.spec;

  const Matrix data = spec.forward(encoded.values);
  const auto categories = spec.categories_of(encoded.values);
  const std::size_t n = encoded.rows();
  // Rows holding each category of each discrete column.
  std::vector<std::vector<std::vector<std::size_t>>> rows_of(spec.discrete_columns().size());
  for (std::size_t d = 0; d < rows_of.size(); ++d)
    rows_of[d].resize(spec.columns()[spec.discrete_columns()[d]].categories());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t d = 0; d < rows_of.size(); ++d)
      rows_of[d][static_cast<std::size_t>(categories[r][d])].push_back(r);

  Rng rng(config.seed);
  const auto out_w = static_cast<Eigen::Index>(spec.output_width());
  const auto cond_w = static_cast<Eigen::Index>(spec.cond_width());
  const auto batch = static_cast<Eigen::Index>(config.batch_size);
  const std::size_t packs = static_cast<std::size_t>(config.batch_size / config.pac);
  model.generator = Generator(static_cast<std::size_t>(config.noise_dim + cond_w), config.generator_hidden,
                              spec.output_width(), rng);
  model.discriminator = Discriminator(static_cast<std::size_t>(out_w + cond_w), config.discriminator_hidden,
                                      config.pac, rng);
  Generator& G = model.generator;
  Discriminator& D = model.discriminator;
  Adam opt_g(config.learning_rate, config.beta1, config.beta2);
  Adam opt_d(config.learning_rate, config.beta1, config.beta2);

  const std::size_t steps = std::max<std::size_t>(1, n / static_cast<std::size_t>(config.batch_size));
  Matrix input(batch, config.noise_dim + cond_w);
  Tape tape;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    double sum_d = 0.0, sum_g = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
      for (int ds = 0; ds < config.discriminator_steps; ++ds) {
        const auto conds = draw_inputs(spec, config.noise_dim, input, rng);
        // Real rows are matched to a shuffled copy of the conditions.
        std::vector<std::size_t> perm(conds.size());
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm.begin(), perm.end());
        Matrix real(batch, out_w + cond_w), fake(batch, out_w + cond_w);
        for (Eigen::Index r = 0; r < batch; ++r) {
          const auto& cv = conds[perm[static_cast<std::size_t>(r)]];
          std::size_t row;
          if (cv.column < 0) {
            row = rng.below(n);
          } else {
            const auto& pool = rows_of[static_cast<std::size_t>(cv.column)][static_cast<std::size_t>(cv.category)];
            row = pool[rng.below(pool.size())];
          }
          real.row(r).head(out_w) = data.row(static_cast<Eigen::Index>(row));
          if (cond_w > 0) real.row(r).tail(cond_w) = cv.v;
        }

        tape.truncate(0);
        {
          const auto gp = bind_tensors(tape, G.parameters(), false);
          fake.leftCols(out_w) =
              generator_forward(tape, G, gp, input, spec, config.temperature, &rng, true).activated.value();
          if (cond_w > 0) fake.rightCols(cond_w) = input.rightCols(cond_w);
        }
        tape.truncate(0);

        const auto dp = bind_tensors(tape, D.parameters(), true);
        Var y_fake = discriminator_forward(D, dp, tape.constant(fake), config.leaky_slope,
                                           draw_dropout(D, packs, config.dropout, rng));
        Var y_real = discriminator_forward(D, dp, tape.constant(real), config.leaky_slope,
                                           draw_dropout(D, packs, config.dropout, rng));
        const auto masks = draw_dropout(D, packs, config.dropout, rng);
        const Critic critic = [&](Tape& t, Var x) {
          if (&t == &tape) return discriminator_forward(D, dp, x, config.leaky_slope, masks);
          const auto local = bind_tensors(t, D.parameters(), false);
          return discriminator_forward(D, local, x, config.leaky_slope, masks);
        };
        Matrix eps(static_cast<Eigen::Index>(packs), 1);
        for (Eigen::Index i = 0; i < eps.rows(); ++i) eps(i, 0) = rng.uniform();
        Var penalty = gradient_penalty(tape, critic, real, fake, eps, config.pac, config.penalty_weight);
        if (config.check_penalty) {
          const double fd = gradient_penalty_fd(critic, real, fake, eps, config.pac, config.penalty_weight);
          const double tp = penalty.scalar();
          if (std::abs(fd - tp) > 1e-4 * std::max(1.0, std::abs(tp)))
            throw NumericError("gradient penalty mismatch at epoch " + std::to_string(epoch) + ": tape " +
                               std::to_string(tp) + ", finite differences " + std::to_string(fd));
        }
        Var loss_d = mean(y_fake) - mean(y_real) + penalty;
        const double ld = loss_d.scalar();
        if (!std::isfinite(ld))
          throw NumericError("non-finite discriminator loss at epoch " + std::to_string(epoch));
        const auto grads = tape.gradient_values(loss_d, dp);
        opt_d.step(D.parameters(), grads);
        sum_d += ld;
      }

      const auto conds = draw_inputs(spec, config.noise_dim, input, rng);
      Matrix target = Matrix::Zero(batch, out_w);
      for (Eigen::Index r = 0; r < batch; ++r) {
        const auto& cv = conds[static_cast<std::size_t>(r)];
        if (cv.column < 0) continue;
        const auto& t = spec.columns()[spec.discrete_columns()[static_cast<std::size_t>(cv.column)]];
        target(r, static_cast<Eigen::Index>(t.output_offset) + cv.category) = 1.0;
      }
      tape.truncate(0);
      const auto gp = bind_tensors(tape, G.parameters(), true);
      const auto dp = bind_tensors(tape, D.parameters(), false);
      const auto out = generator_forward(tape, G, gp, input, spec, config.temperature, &rng, true);
      Var rows = cond_w > 0 ? concat_cols(out.activated, tape.constant(input.rightCols(cond_w))) : out.activated;
      Var y_fake = discriminator_forward(D, dp, rows, config.leaky_slope,
                                         draw_dropout(D, packs, config.dropout, rng));
      Var loss_g = -mean(y_fake);
      if (cond_w > 0) loss_g = loss_g + conditional_cross_entropy(out.logits, target, spec);
      const double lg = loss_g.scalar();
      if (!std::isfinite(lg)) throw NumericError("non-finite generator loss at epoch " + std::to_string(epoch));
      const auto grads = tape.gradient_values(loss_g, gp);
      opt_g.step(G.parameters(), grads);
      sum_g += lg;
      tape.truncate(0);
      if (hooks.on_step) hooks.on_step();
    }
    const auto elapsed = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start);
    if (hooks.on_epoch)
      hooks.on_epoch(EpochStats{epoch, sum_d / static_cast<double>(steps * static_cast<std::size_t>(config.discriminator_steps)),
                                sum_g / static_cast<double>(steps), elapsed.count()});
  }
  return model;
}

Eigen::MatrixXd sample_transformed(const CtganModel& model, std::size_t n, std::uint64_t seed,
                                   const ConditionalVector* fixed) {
  if (n == 0) throw ParameterError("number of rows to sample must be positive");
  const auto& spec = model.spec;
  const auto cond_w = static_cast<Eigen::Index>(spec.cond_width());
  const int noise = model.config.noise_dim;
  Generator g = model.generator;
  Rng rng(seed);
  Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(spec.output_width()));
  const auto chunk = static_cast<Eigen::Index>(std::max(1, model.config.batch_size));
  Tape tape;
  for (Eigen::Index first = 0; first < out.rows(); first += chunk) {
    const Eigen::Index rows = std::min(chunk, out.rows() - first);
    Matrix input(rows, noise + cond_w);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (int c = 0; c < noise; ++c) input(r, c) = rng.normal();
      if (cond_w == 0) continue;
      const ConditionalVector cv = fixed ? *fixed : sample_condition_empirical(spec, rng);
      input.row(r).tail(cond_w) = cv.v;
    }
    tape.truncate(0);
    const auto params = bind_tensors(tape, g.parameters(), false);
    out.middleRows(first, rows) =
        generator_forward(tape, g, params, input, spec, model.config.temperature, &rng, false).activated.value();
  }
  return out;
}

EncodedTable sample(const CtganModel& model, std::size_t n, std::uint64_t seed) {
  EncodedTable t = model.header;
  t.values = model.spec.inverse(sample_transformed(model, n, seed));
  return t;
}

EncodedTable sample_conditioned(const CtganModel& model, std::size_t n, std::size_t column,
                                std::size_t category, std::uint64_t seed) {
  const auto& spec = model.spec;
  if (column >= spec.discrete_columns().size()) throw ParameterError("no such discrete column");
  if (category >= spec.columns()[spec.discrete_columns()[column]].categories())
    throw ParameterError("no such category");
  const ConditionalVector cv = make_condition(spec, column, category);
  EncodedTable t = model.header;
  t.values = spec.inverse(sample_transformed(model, n, seed, &cv));
  return t;
}

}  // namespace krew::ctgan
