#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "krew/ctgan/nets.hpp"
#include "krew/ctgan/transform.hpp"
#include "krew/encoders.hpp"
#include "krew/random.hpp"

namespace krew::ctgan {

struct TrainConfig {
  int epochs = 350;
  int batch_size = 60;
  int pac = 10;
  int noise_dim = 128;
  std::vector<int> generator_hidden{256, 256};
  std::vector<int> discriminator_hidden{256, 256};
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double penalty_weight = 10.0;
  double temperature = 0.2;
  double dropout = 0.5;
  double leaky_slope = 0.2;
  int discriminator_steps = 1;
  // Recompute the penalty by finite differences every step and fail on
  // disagreement. Slow; for debugging the tape.
  bool check_penalty = false;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// One-hot selection of a (discrete column, category) pair. column is an index
// into TransformSpec::discrete_columns(); -1 with an empty v when the spec has
// no discrete columns.
struct ConditionalVector {
  Eigen::RowVectorXd v;
  int column = -1;
  int category = -1;
};

// Training-by-sampling: column uniform, category proportional to
// log(1 + frequency).
ConditionalVector sample_condition(const TransformSpec& spec, Rng& rng);
// Column uniform, category proportional to its frequency (used when sampling).
ConditionalVector sample_condition_empirical(const TransformSpec& spec, Rng& rng);

struct EpochStats {
  int epoch = 0;
  double loss_d = 0.0;
  double loss_g = 0.0;
  double wall_ms = 0.0;
};

struct TrainHooks {
  std::function<void(const EpochStats&)> on_epoch;
  // After every optimizer step; used for memory checkpoints.
  std::function<void()> on_step;
};

struct CtganModel {
  // Column layout of the encoded table the model was fitted to (no rows).
  EncodedTable header;
  TransformSpec spec;
  TrainConfig config;
  Generator generator;
  Discriminator discriminator;
};

CtganModel train(const EncodedTable& encoded, const TrainConfig& config, const TrainHooks& hooks = {});

// n encoded rows. Conditions follow the empirical category frequencies; group
// slots take the argmax of the Gumbel-softmax output.
EncodedTable sample(const CtganModel& model, std::size_t n, std::uint64_t seed);
// As sample, with V fixed to (discrete column, category).
EncodedTable sample_conditioned(const CtganModel& model, std::size_t n, std::size_t column,
                                std::size_t category, std::uint64_t seed);
// Raw activated generator output (n x output_width), before the inverse transform.
Eigen::MatrixXd sample_transformed(const CtganModel& model, std::size_t n, std::uint64_t seed,
                                   const ConditionalVector* fixed = nullptr);

}  // namespace krew::ctgan
