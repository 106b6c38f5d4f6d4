#include "krew/pipeline.hpp"

#include "krew/error.hpp"

namespace krew {

namespace {

constexpr std::uint64_t kEmbedStream = 1;
constexpr std::uint64_t kClusterStream = 2;
constexpr std::uint64_t kGanStream = 3;
constexpr std::uint64_t kResampleStream = 100;

bool empty_skills(const EncodedTable& t, Eigen::Index r) {
  const auto first = static_cast<Eigen::Index>(t.first_skillset_column());
  for (Eigen::Index c = first; c < static_cast<Eigen::Index>(t.width()); ++c)
    if (t.values(r, c) >= 0.5) return false;
  return true;
}

}  // namespace

void PipelineConfig::validate() const {
  embed.validate();
  gan.validate();
  if (k && *k < 1) throw ConfigError("k must be at least 1");
  if (!k && (k_min < 1 || k_max < k_min)) throw ConfigError("invalid elbow range");
}

PreparedPipeline prepare_pipeline(const Dataset& dataset, const PipelineConfig& config) {
  config.validate();
  if (dataset.row_count() == 0) throw ParameterError("cannot train on an empty dataset");

  TrainedPipeline p;
  p.encoder = config.encoder;
  p.schema = dataset.schema();
  p.config = config;
  p.vocabulary = unique_words(dataset);
  if (p.vocabulary.empty()) throw InsufficientVocabularyError("the skillset column has no words");

  EncodedTable encoded;
  switch (config.encoder) {
    case EncoderKind::OneHot:
      encoded = encode_onehot_skillsets(dataset);
      break;
    case EncoderKind::MultiHot:
      encoded = encode_multihot(dataset, p.vocabulary);
      break;
    case EncoderKind::ClusterCount: {
      EmbedConfig ec = config.embed;
      ec.seed = mix_seed(config.seed, kEmbedStream);
      p.embeddings = train_word2vec(build_tagged_corpus(dataset), ec);
      const WordPoints points = skill_points(p.embeddings, p.vocabulary);
      const auto n_words = static_cast<int>(points.words.size());
      const std::uint64_t cseed = mix_seed(config.seed, kClusterStream);
      int k;
      if (config.k) {
        if (*config.k > n_words)
          throw InsufficientVocabularyError("k=" + std::to_string(*config.k) + " exceeds the " +
                                            std::to_string(n_words) + " unique words");
        k = *config.k;
      } else {
        const int hi = std::min(config.k_max, n_words);
        const int lo = std::min(config.k_min, hi);
        const ElbowResult e = elbow_select_k(points, lo, hi, cseed, config.kmeans);
        p.elbow = {e.ks, e.inertia};
        k = e.k;
      }
      p.mapper = build_mapper(kmeans(points, k, cseed, config.kmeans), p.vocabulary);
      encoded = encode_cluster_counts(dataset, p.mapper);
      break;
    }
  }

  ctgan::TrainConfig gc = config.gan;
  gc.seed = mix_seed(config.seed, kGanStream);
  p.config.gan.seed = gc.seed;
  return {std::move(p), std::move(encoded), gc};
}

TrainedPipeline fit_pipeline(const Dataset& dataset, const PipelineConfig& config,
                             const ctgan::TrainHooks& hooks) {
  PreparedPipeline prepared = prepare_pipeline(dataset, config);
  prepared.pipeline.model = ctgan::train(prepared.encoded, prepared.gan, hooks);
  return std::move(prepared.pipeline);
}

EncodedTable encode_for(const TrainedPipeline& pipeline, const Dataset& dataset) {
  switch (pipeline.encoder) {
    case EncoderKind::OneHot:
      return encode_onehot_skillsets(dataset);
    case EncoderKind::MultiHot:
      return encode_multihot(dataset, pipeline.vocabulary);
    case EncoderKind::ClusterCount:
      return encode_cluster_counts(dataset, pipeline.mapper);
  }
  throw KindError("unknown encoder kind");
}

Generated generate(const TrainedPipeline& pipeline, std::size_t rows, std::uint64_t seed) {
  if (rows == 0) throw ParameterError("rows must be positive");
  const bool counts = pipeline.encoder == EncoderKind::ClusterCount;
  const ClusterMapper* mapper = counts ? &pipeline.mapper : nullptr;

  Generated g;
  g.encoded = ctgan::sample(pipeline.model, rows, seed);
  if (counts) clamp_cluster_counts(g.encoded, pipeline.mapper);

  auto decoded_empty = [&](const EncodedTable& t) {
    std::vector<Eigen::Index> out;
    if (pipeline.encoder == EncoderKind::OneHot) {
      const Dataset d = decode_onehot(t);
      for (std::size_t r = 0; r < d.row_count(); ++r)
        if (d.wordset(r).empty()) out.push_back(static_cast<Eigen::Index>(r));
    } else {
      for (Eigen::Index r = 0; r < t.values.rows(); ++r)
        if (empty_skills(t, r)) out.push_back(r);
    }
    return out;
  };

  std::vector<Eigen::Index> empty = decoded_empty(g.encoded);
  std::vector<bool> touched(rows, false);
  for (int attempt = 0; attempt < kEmptyRowAttempts && !empty.empty(); ++attempt) {
    EncodedTable redraw = ctgan::sample(pipeline.model, empty.size(),
                                        mix_seed(seed, kResampleStream + static_cast<std::uint64_t>(attempt)));
    if (counts) clamp_cluster_counts(redraw, pipeline.mapper);
    for (std::size_t i = 0; i < empty.size(); ++i) {
      g.encoded.values.row(empty[i]) = redraw.values.row(static_cast<Eigen::Index>(i));
      touched[static_cast<std::size_t>(empty[i])] = true;
    }
    std::vector<Eigen::Index> still;
    for (auto r : empty)
      if (pipeline.encoder == EncoderKind::OneHot ? decode_onehot(g.encoded).wordset(static_cast<std::size_t>(r)).empty()
                                                  : empty_skills(g.encoded, r))
        still.push_back(r);
    empty = std::move(still);
  }
  for (bool t : touched) g.resampled_rows += t;

  const std::string& fallback =
      counts ? pipeline.mapper.most_frequent_word() : pipeline.vocabulary.most_frequent();
  for (auto r : empty) {
    if (counts) {
      g.encoded.values(r, static_cast<Eigen::Index>(g.encoded.first_skillset_column()) +
                              pipeline.mapper.cluster_of(fallback)) = 1.0;
    } else if (pipeline.encoder == EncoderKind::MultiHot) {
      g.encoded.values(r, static_cast<Eigen::Index>(g.encoded.first_skillset_column() +
                                                    *pipeline.vocabulary.index_of(fallback))) = 1.0;
    }
  }
  g.fallback_rows = empty.size();

  g.dataset = decode(g.encoded, mapper, seed);
  if (pipeline.encoder != EncoderKind::MultiHot && !empty.empty()) {
    // A fallback cluster may hold several words; pin the chosen one.
    std::vector<Row> out = g.dataset.rows();
    const std::size_t ws = g.dataset.schema().wordset_index();
    for (auto r : empty) out[static_cast<std::size_t>(r)][ws] = WordSet::from_tokens({fallback});
    g.dataset = Dataset(g.dataset.schema(), std::move(out));
  }
  return g;
}

}  // namespace krew
