#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "krew/embed.hpp"
#include "krew/schema_io.hpp"

namespace krew {

struct FrequencyDistribution {
  std::vector<std::string> support;
  std::vector<double> probabilities;
};

// Over skillset signatures (sorted, delimiter-joined tokens).
FrequencyDistribution skillset_distribution(const Dataset& dataset);
// Over single skills, each occurrence counted once.
FrequencyDistribution skill_distribution(const Dataset& dataset);

// -sum p log2 p; zero entries contribute nothing.
double entropy_bits(std::span<const double> p);
double skillset_entropy(const Dataset& dataset);

// sum p log(p / q) in nats. q is smoothed by adding eps to every entry and
// renormalizing.
double kl_divergence(std::span<const double> p, std::span<const double> q, double eps = 1e-9);
// P from the source, Q from the synthetic data, over the union vocabulary.
double skill_kl_divergence(const Dataset& source, const Dataset& synthetic);

// Words of `a` in first-occurrence order, then words only in `b`.
std::vector<std::string> union_vocabulary(const Dataset& a, const Dataset& b);

struct AssociationMatrix {
  std::vector<std::string> words;
  Eigen::MatrixXd counts;  // symmetric, zero diagonal

  // Row-major flattening divided by the grand total (zeros if the total is 0).
  Eigen::VectorXd normalized() const;
};

AssociationMatrix association_matrix(const Dataset& dataset);
AssociationMatrix association_matrix(const Dataset& dataset, const std::vector<std::string>& words);

// Throws UndefinedError when either vector has zero variance.
double pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y);
double association_pearson(const Dataset& source, const Dataset& synthetic);

// Skillset -> vector. A zero vector means "no embedding".
using SkillsetEmbedder = std::function<Eigen::VectorXd(const WordSet&)>;

// Mean of the word vectors of the skillset's in-vocabulary tokens.
SkillsetEmbedder mean_word_embedder(EmbeddingModel model);
// "<signature>\t<v1> <v2> ..." per line, signature as WordSet::signature.
SkillsetEmbedder table_embedder(std::unordered_map<std::string, Eigen::VectorXd> table, char delimiter = ',');
SkillsetEmbedder load_skillset_embeddings(const std::filesystem::path& path, char delimiter = ',');

double best_match(std::span<const double> scores);
// Mean over synthetic skillsets of the highest cosine against any source
// skillset. Skillsets without an embedding score 0.
double skillset_matching(const Dataset& source, const Dataset& synthetic, const SkillsetEmbedder& embedder);

struct AttributeColumnReport {
  std::string name;
  bool continuous = false;
  std::vector<std::string> labels;  // categories, or bin ranges
  std::vector<double> source;
  std::vector<double> synthetic;
  double l1 = 0.0;
};

// Categorical columns: normalized category frequencies. Continuous columns:
// `bins` equal-width bins over the joint range. The WordSet column is skipped.
std::vector<AttributeColumnReport> attribute_fidelity(const Dataset& source, const Dataset& synthetic, int bins);

struct PcaFit {
  Eigen::RowVectorXd mean;
  Eigen::MatrixXd components;  // features x 3, orthonormal columns
  Eigen::VectorXd variances;   // explained variance per component

  Eigen::MatrixXd project(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& coordinates) const;
};

// Eigendecomposition of the sample covariance. Fewer than 3 features are
// padded with zero components.
PcaFit fit_pca(const Eigen::MatrixXd& x, int components = 3);

Eigen::MatrixXd multihot_matrix(const Dataset& dataset, const std::vector<std::string>& words);

struct PcaProjection {
  std::vector<std::string> words;
  PcaFit fit;
  Eigen::MatrixXd source;     // rows x 3
  Eigen::MatrixXd synthetic;  // rows x 3
};

// Fit on the source multi-hot vectors, applied to both datasets.
PcaProjection pca_project3(const Dataset& source, const Dataset& synthetic);

struct MetricRow {
  std::string metric;
  std::string pair;
  double value = 0.0;
};

std::vector<MetricRow> evaluate_all(const Dataset& source, const Dataset& synthetic,
                                    const SkillsetEmbedder& embedder, int bins = 10);

// "metric,pair,value".
void write_metric_report(std::ostream& out, const std::vector<MetricRow>& rows);
// "dataset,x,y,z".
void write_pca_csv(std::ostream& out, const PcaProjection& projection);

}  // namespace krew
