#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "krew/corpus.hpp"
#include "krew/embed.hpp"

namespace krew {

enum class Distance { Euclidean, Cosine };

struct KMeansOptions {
  int max_iterations = 300;
  // Cosine clusters unit-normalized embeddings with the Euclidean objective.
  Distance distance = Distance::Euclidean;
};

// Points to cluster: one row per word.
struct WordPoints {
  std::vector<std::string> words;
  Eigen::MatrixXd points;
};

// Embedding rows for the vocabulary words (tag tokens are not included).
WordPoints skill_points(const EmbeddingModel& model, const Vocabulary& vocabulary);

struct ClusterModel {
  std::vector<std::string> words;
  Eigen::MatrixXd centroids;     // K x d
  std::vector<int> assignment;   // per word, in 0..K-1
  double inertia = 0.0;
  std::vector<double> inertia_trace;  // after each centroid update
  int iterations = 0;

  int k() const { return static_cast<int>(centroids.rows()); }
};

// Lloyd iterations from k-means++ seeding until the assignment stops changing
// or the iteration cap is hit. Empty clusters are reseeded from the point
// farthest from its centroid.
ClusterModel kmeans(const WordPoints& data, int k, std::uint64_t seed,
                    const KMeansOptions& options = {});

// Interior K maximizing drop(K-1 -> K) - drop(K -> K+1); ties go to the
// smallest K. inertia[i] belongs to K = first_k + i.
int select_elbow(std::span<const double> inertia, int first_k);

struct ElbowResult {
  int k = 0;
  std::vector<int> ks;
  std::vector<double> inertia;
};

ElbowResult elbow_select_k(const WordPoints& data, int k_min, int k_max, std::uint64_t seed,
                           const KMeansOptions& options = {});

// Cluster id -> member words with membership probability count / cluster total.
class ClusterMapper {
 public:
  struct Cluster {
    std::vector<std::string> words;
    std::vector<std::size_t> counts;
    std::vector<double> membership;

    bool operator==(const Cluster&) const = default;
  };

  ClusterMapper() = default;
  // Clusters given as member words with counts; membership is derived.
  explicit ClusterMapper(std::vector<std::pair<std::vector<std::string>, std::vector<std::size_t>>>
                             clusters);

  const std::vector<Cluster>& clusters() const { return clusters_; }
  std::size_t size() const { return clusters_.size(); }
  const Cluster& cluster(std::size_t id) const { return clusters_.at(id); }
  // -1 when the word is not mapped.
  int cluster_of(std::string_view word) const;
  // Word with the highest count across all clusters.
  const std::string& most_frequent_word() const;

  // "<cluster>\t<word>\t<count>\t<membership, 9 decimals>" per word.
  std::string export_text() const;
  static ClusterMapper parse_text(std::string_view text);

  bool operator==(const ClusterMapper& o) const { return clusters_ == o.clusters_; }

 private:
  std::vector<Cluster> clusters_;
  std::unordered_map<std::string, int> index_;
};

ClusterMapper build_mapper(const ClusterModel& model, const Vocabulary& vocabulary);

}  // namespace krew
