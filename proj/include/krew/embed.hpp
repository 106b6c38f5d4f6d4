#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "krew/corpus.hpp"

namespace krew {

// Skip-gram with negative sampling, context window fixed at 1.
struct EmbedConfig {
  int dim = 32;
  int epochs = 200;
  double learning_rate = 0.025;  // decays linearly to 1e-4 of this value
  int negatives = 5;
  std::uint64_t seed = 1;

  void validate() const;
};

class EmbeddingModel {
 public:
  EmbeddingModel() = default;
  EmbeddingModel(std::vector<std::string> tokens, Eigen::MatrixXd vectors, std::uint64_t seed);

  const std::vector<std::string>& tokens() const { return tokens_; }
  const Eigen::MatrixXd& vectors() const { return vectors_; }
  std::size_t size() const { return tokens_.size(); }
  int dim() const { return static_cast<int>(vectors_.cols()); }
  std::uint64_t seed() const { return seed_; }

  bool contains(std::string_view token) const;
  // Throws LookupError for out-of-vocabulary tokens.
  Eigen::VectorXd embed(std::string_view token) const;

  // First line "<count> <dim>", then "<token> v1 ... vd" per token. Tokens may
  // contain spaces: the last d fields of a line are the numbers.
  std::string export_text() const;
  static EmbeddingModel parse_text(std::string_view text, std::uint64_t seed = 0);

  bool operator==(const EmbeddingModel& o) const {
    return tokens_ == o.tokens_ && vectors_ == o.vectors_ && seed_ == o.seed_;
  }

 private:
  std::vector<std::string> tokens_;
  Eigen::MatrixXd vectors_;
  std::uint64_t seed_ = 0;
  std::unordered_map<std::string, std::size_t> index_;
};

// epoch_losses, when given, receives the mean per-pair loss of each epoch.
EmbeddingModel train_word2vec(const TaggedCorpus& corpus, const EmbedConfig& config,
                              std::vector<double>* epoch_losses = nullptr);

Eigen::VectorXd embed_word(const EmbeddingModel& model, std::string_view word);

// Throws UndefinedError on zero vectors, ParameterError on size mismatch.
double cosine(const Eigen::VectorXd& u, const Eigen::VectorXd& v);

}  // namespace krew
