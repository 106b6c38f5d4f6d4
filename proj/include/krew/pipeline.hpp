#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "krew/cluster.hpp"
#include "krew/corpus.hpp"
#include "krew/ctgan/ctgan.hpp"
#include "krew/embed.hpp"
#include "krew/encoders.hpp"
#include "krew/schema_io.hpp"

namespace krew {

struct PipelineConfig {
  EncoderKind encoder = EncoderKind::ClusterCount;
  EmbedConfig embed;
  // Fixed cluster count; the elbow over [k_min, k_max] picks one otherwise.
  std::optional<int> k;
  int k_min = 2;
  int k_max = 10;
  KMeansOptions kmeans;
  ctgan::TrainConfig gan;
  // Master seed. Embedding, clustering and GAN seeds are derived from it.
  std::uint64_t seed = 0;

  void validate() const;
};

struct ElbowTrace {
  std::vector<int> ks;
  std::vector<double> inertia;
};

struct TrainedPipeline {
  EncoderKind encoder = EncoderKind::ClusterCount;
  Schema schema;
  Vocabulary vocabulary;
  // Cluster-count only.
  EmbeddingModel embeddings;
  ClusterMapper mapper;
  ElbowTrace elbow;
  ctgan::CtganModel model;
  PipelineConfig config;
};

struct PreparedPipeline {
  TrainedPipeline pipeline;  // model not yet trained
  EncodedTable encoded;
  ctgan::TrainConfig gan;    // with the derived seed
};

// Everything up to the GAN: vocabulary, embeddings, clusters, mapper, encoding.
PreparedPipeline prepare_pipeline(const Dataset& dataset, const PipelineConfig& config);

// Tag corpus -> word2vec -> k-means -> mapper -> encode -> CTGAN. Baseline
// encoders skip the embedding and clustering stages.
TrainedPipeline fit_pipeline(const Dataset& dataset, const PipelineConfig& config,
                             const ctgan::TrainHooks& hooks = {});

EncodedTable encode_for(const TrainedPipeline& pipeline, const Dataset& dataset);

struct Generated {
  // Clamped counts (cluster-count) or raw generator output after the inverse
  // transform, with empty-skillset rows replaced.
  EncodedTable encoded;
  Dataset dataset;
  std::size_t resampled_rows = 0;
  std::size_t fallback_rows = 0;
};

// Rows with an empty skillset are redrawn from the generator up to 20 times,
// then given the single most frequent word.
Generated generate(const TrainedPipeline& pipeline, std::size_t rows, std::uint64_t seed);

inline constexpr int kEmptyRowAttempts = 20;

}  // namespace krew
