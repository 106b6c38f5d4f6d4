#include "krew/embed.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "krew/error.hpp"
#include "krew/random.hpp"

namespace krew {

void EmbedConfig::validate() const {
  if (dim < 2) throw ConfigError("embedding dimension must be >= 2");
  if (epochs < 1) throw ConfigError("embedding epochs must be >= 1");
  if (negatives < 1) throw ConfigError("negatives per positive must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("embedding learning rate must be positive");
}

EmbeddingModel::EmbeddingModel(std::vector<std::string> tokens, Eigen::MatrixXd vectors,
                               std::uint64_t seed)
    : tokens_(std::move(tokens)), vectors_(std::move(vectors)), seed_(seed) {
  if (static_cast<std::size_t>(vectors_.rows()) != tokens_.size())
    throw ConsistencyError("embedding rows do not match token count");
  if (!vectors_.allFinite()) throw NumericError("embedding contains non-finite entries");
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    if (!index_.emplace(tokens_[i], i).second)
      throw ConsistencyError("duplicate embedding token '" + tokens_[i] + "'");
}

bool EmbeddingModel::contains(std::string_view token) const {
  return index_.count(std::string(token)) != 0;
}

Eigen::VectorXd EmbeddingModel::embed(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end())
    throw LookupError("token '" + std::string(token) + "' is not in the embedding vocabulary");
  return vectors_.row(static_cast<Eigen::Index>(it->second)).transpose();
}

std::string EmbeddingModel::export_text() const {
  std::string out = std::to_string(tokens_.size()) + " " + std::to_string(vectors_.cols()) + "\n";
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out += tokens_[i];
    for (Eigen::Index c = 0; c < vectors_.cols(); ++c) {
      out += ' ';
      out += format_double(vectors_(static_cast<Eigen::Index>(i), c));
    }
    out += '\n';
  }
  return out;
}

EmbeddingModel EmbeddingModel::parse_text(std::string_view text, std::uint64_t seed) {
  std::istringstream in{std::string(text)};
  std::size_t count = 0;
  int dim = 0;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty embedding export");
  {
    std::istringstream head(line);
    if (!(head >> count >> dim) || dim < 1) throw ParseError("bad embedding header: " + line);
  }
  std::vector<std::string> tokens;
  Eigen::MatrixXd vectors(static_cast<Eigen::Index>(count), dim);
  for (std::size_t r = 0; r < count; ++r) {
    if (!std::getline(in, line)) throw ParseError("embedding export truncated");
    std::size_t end = line.size();
    for (int c = dim - 1; c >= 0; --c) {
      const auto space = line.rfind(' ', end - 1);
      if (space == std::string::npos || end == 0)
        throw ParseError("embedding line " + std::to_string(r + 2) + " has too few fields");
      const std::string field = line.substr(space + 1, end - space - 1);
      std::size_t used = 0;
      try {
        vectors(static_cast<Eigen::Index>(r), c) = std::stod(field, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != field.size() || field.empty())
        throw ParseError("embedding line " + std::to_string(r + 2) + ": bad number '" + field + "'");
      end = space;
    }
    tokens.push_back(line.substr(0, end));
  }
  return EmbeddingModel(std::move(tokens), std::move(vectors), seed);
}

namespace {

double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

}  // namespace

EmbeddingModel train_word2vec(const TaggedCorpus& corpus, const EmbedConfig& config,
                              std::vector<double>* epoch_losses) {
  config.validate();
  if (corpus.sequences.empty()) throw ParameterError("cannot train embeddings on an empty corpus");

  // Token ids in first-occurrence order.
  std::vector<std::string> tokens;
  std::unordered_map<std::string, std::size_t> ids;
  std::vector<std::vector<std::size_t>> seqs;
  std::vector<double> freq;
  for (const auto& s : corpus.sequences) {
    std::vector<std::size_t> ids_seq;
    for (const auto& t : s) {
      auto [it, inserted] = ids.try_emplace(t, tokens.size());
      if (inserted) {
        tokens.push_back(t);
        freq.push_back(0.0);
      }
      freq[it->second] += 1.0;
      ids_seq.push_back(it->second);
    }
    seqs.push_back(std::move(ids_seq));
  }
  if (tokens.size() < 2)
    throw InsufficientVocabularyError("corpus needs at least 2 distinct tokens, has " +
                                      std::to_string(tokens.size()));

  const std::size_t n = tokens.size();
  const std::size_t d = static_cast<std::size_t>(config.dim);
  Rng rng(config.seed);

  std::vector<double> input(n * d), output(n * d, 0.0);
  for (auto& x : input) x = (rng.uniform() - 0.5) / static_cast<double>(d);

  // Negative distribution: unigram^0.75 over all tokens, tags included.
  std::vector<double> cumulative(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += std::pow(freq[i], 0.75);
    cumulative[i] = acc;
  }
  const auto draw_negative = [&] {
    const double r = rng.uniform() * acc;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), r);
    return std::min(static_cast<std::size_t>(it - cumulative.begin()), n - 1);
  };

  std::size_t pairs_per_epoch = 0;
  for (const auto& s : seqs)
    if (s.size() > 1) pairs_per_epoch += 2 * (s.size() - 1);
  const double total_pairs =
      std::max(1.0, static_cast<double>(pairs_per_epoch) * config.epochs);

  std::vector<std::size_t> order(seqs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> grad_in(d);
  double processed = 0.0;
  if (epoch_losses) epoch_losses->clear();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double loss = 0.0;
    std::size_t pairs = 0;
    for (std::size_t si : order) {
      const auto& s = seqs[si];
      for (std::size_t pos = 0; pos < s.size(); ++pos) {
        for (int offset : {-1, 1}) {
          if ((offset < 0 && pos == 0) || (offset > 0 && pos + 1 >= s.size())) continue;
          const std::size_t center = s[pos];
          const std::size_t context = s[pos + offset];
          const double lr =
              config.learning_rate * std::max(1e-4, 1.0 - processed / total_pairs);
          processed += 1.0;
          double* v = &input[center * d];
          std::fill(grad_in.begin(), grad_in.end(), 0.0);
          for (int k = 0; k <= config.negatives; ++k) {
            std::size_t target;
            double label;
            if (k == 0) {
              target = context;
              label = 1.0;
            } else {
              target = draw_negative();
              if (target == context) continue;
              label = 0.0;
            }
            double* u = &output[target * d];
            double f = 0.0;
            for (std::size_t i = 0; i < d; ++i) f += v[i] * u[i];
            loss -= label > 0 ? log_sigmoid(f) : log_sigmoid(-f);
            const double sig = 1.0 / (1.0 + std::exp(-f));
            const double g = (label - sig) * lr;
            for (std::size_t i = 0; i < d; ++i) {
              grad_in[i] += g * u[i];
              u[i] += g * v[i];
            }
          }
          for (std::size_t i = 0; i < d; ++i) v[i] += grad_in[i];
          ++pairs;
        }
      }
    }
    if (epoch_losses) epoch_losses->push_back(pairs ? loss / static_cast<double>(pairs) : 0.0);
  }

  Eigen::MatrixXd vectors(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c)
      vectors(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = input[r * d + c];
  return EmbeddingModel(std::move(tokens), std::move(vectors), config.seed);
}

Eigen::VectorXd embed_word(const EmbeddingModel& model, std::string_view word) {
  return model.embed(word);
}

double cosine(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  if (u.size() != v.size()) throw ParameterError("cosine of vectors with different dimensions");
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) throw UndefinedError("cosine similarity undefined for a zero vector");
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

}  // namespace krew
