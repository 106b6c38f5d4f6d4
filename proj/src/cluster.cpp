#include "krew/cluster.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <sstream>

#include "krew/error.hpp"
#include "krew/random.hpp"

namespace krew {

WordPoints skill_points(const EmbeddingModel& model, const Vocabulary& vocabulary) {
  WordPoints out;
  out.words = vocabulary.words();
  out.points.resize(static_cast<Eigen::Index>(vocabulary.size()), model.dim());
  for (std::size_t i = 0; i < vocabulary.size(); ++i)
    out.points.row(static_cast<Eigen::Index>(i)) = model.embed(vocabulary.words()[i]).transpose();
  return out;
}

namespace {

int nearest(const Eigen::MatrixXd& centroids, const Eigen::RowVectorXd& p, double* dist2) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c) - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  if (dist2) *dist2 = best_d;
  return best;
}

Eigen::MatrixXd plus_plus_seeds(const Eigen::MatrixXd& x, int k, Rng& rng) {
  const auto n = static_cast<std::size_t>(x.rows());
  Eigen::MatrixXd centroids(k, x.cols());
  std::vector<bool> chosen(n, false);
  std::size_t first = rng.below(n);
  centroids.row(0) = x.row(static_cast<Eigen::Index>(first));
  chosen[first] = true;
  std::vector<double> d2(n);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest(centroids.topRows(c), x.row(static_cast<Eigen::Index>(i)), &d2[i]);
      if (chosen[i]) d2[i] = 0.0;
      total += d2[i];
    }
    std::size_t pick;
    if (total > 0.0) {
      pick = rng.weighted(d2);
    } else {
      // Remaining points coincide with chosen centroids.
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < n; ++i)
        if (!chosen[i]) free.push_back(i);
      pick = free[rng.below(free.size())];
    }
    chosen[pick] = true;
    centroids.row(c) = x.row(static_cast<Eigen::Index>(pick));
  }
  return centroids;
}

double total_inertia(const Eigen::MatrixXd& x, const Eigen::MatrixXd& centroids,
                     const std::vector<int>& assignment) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    s += (x.row(i) - centroids.row(assignment[static_cast<std::size_t>(i)])).squaredNorm();
  return s;
}

}  // namespace

ClusterModel kmeans(const WordPoints& data, int k, std::uint64_t seed,
                    const KMeansOptions& options) {
  const auto n = static_cast<int>(data.points.rows());
  if (k < 1) throw ParameterError("K must be >= 1");
  if (k > n)
    throw ParameterError("K = " + std::to_string(k) + " exceeds the number of words (" +
                         std::to_string(n) + ")");
  if (options.max_iterations < 1) throw ParameterError("iteration cap must be >= 1");

  Eigen::MatrixXd x = data.points;
  if (options.distance == Distance::Cosine) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double nrm = x.row(i).norm();
      if (nrm > 0.0) x.row(i) /= nrm;
    }
  }

  Rng rng(seed);
  ClusterModel model;
  model.words = data.words;
  model.centroids = plus_plus_seeds(x, k, rng);
  std::vector<int> assignment(static_cast<std::size_t>(n), -1);

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    std::vector<int> next(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) next[static_cast<std::size_t>(i)] = nearest(model.centroids, x.row(i), nullptr);
    if (next == assignment) break;
    assignment = std::move(next);
    model.iterations = iter + 1;

    std::vector<int> sizes(static_cast<std::size_t>(k), 0);
    for (int a : assignment) ++sizes[static_cast<std::size_t>(a)];
    for (int c = 0; c < k; ++c) {
      if (sizes[static_cast<std::size_t>(c)] > 0) continue;
      // Move the farthest point of a multi-member cluster into the empty one.
      int far = -1;
      double far_d = -1.0;
      for (int i = 0; i < n; ++i) {
        const int a = assignment[static_cast<std::size_t>(i)];
        if (sizes[static_cast<std::size_t>(a)] < 2) continue;
        const double d = (x.row(i) - model.centroids.row(a)).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      --sizes[static_cast<std::size_t>(assignment[static_cast<std::size_t>(far)])];
      assignment[static_cast<std::size_t>(far)] = c;
      sizes[static_cast<std::size_t>(c)] = 1;
    }

    model.centroids.setZero();
    for (int i = 0; i < n; ++i) model.centroids.row(assignment[static_cast<std::size_t>(i)]) += x.row(i);
    for (int c = 0; c < k; ++c) model.centroids.row(c) /= sizes[static_cast<std::size_t>(c)];
    model.inertia_trace.push_back(total_inertia(x, model.centroids, assignment));
  }

  model.assignment = std::move(assignment);
  model.inertia = total_inertia(x, model.centroids, model.assignment);
  return model;
}

int select_elbow(std::span<const double> inertia, int first_k) {
  if (inertia.size() < 3) throw ParameterError("elbow selection needs at least 3 values of K");
  int best_k = first_k + 1;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i + 1 < inertia.size(); ++i) {
    const double score = (inertia[i - 1] - inertia[i]) - (inertia[i] - inertia[i + 1]);
    if (score > best) {
      best = score;
      best_k = first_k + static_cast<int>(i);
    }
  }
  return best_k;
}

ElbowResult elbow_select_k(const WordPoints& data, int k_min, int k_max, std::uint64_t seed,
                           const KMeansOptions& options) {
  if (k_max - k_min + 1 < 3)
    throw ParameterError("elbow K range [" + std::to_string(k_min) + ", " +
                         std::to_string(k_max) + "] must span at least 3 values");
  if (k_min < 1 || k_max > static_cast<int>(data.points.rows()))
    throw ParameterError("elbow K range must lie within [1, number of words]");
  ElbowResult result;
  for (int k = k_min; k <= k_max; ++k) {
    result.ks.push_back(k);
    result.inertia.push_back(
        kmeans(data, k, mix_seed(seed, static_cast<std::uint64_t>(k)), options).inertia);
  }
  result.k = select_elbow(result.inertia, k_min);
  return result;
}

// ---------------------------------------------------------------------------

ClusterMapper::ClusterMapper(
    std::vector<std::pair<std::vector<std::string>, std::vector<std::size_t>>> clusters) {
  for (auto& [words, counts] : clusters) {
    if (words.size() != counts.size())
      throw ConsistencyError("cluster words and counts differ in length");
    Cluster c;
    std::size_t total = 0;
    for (auto n : counts) {
      if (n == 0) throw ConsistencyError("cluster member with zero count");
      total += n;
    }
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (!index_.emplace(words[i], static_cast<int>(clusters_.size())).second)
        throw ConsistencyError("word '" + words[i] + "' appears in more than one cluster");
      c.membership.push_back(static_cast<double>(counts[i]) / static_cast<double>(total));
    }
    c.words = std::move(words);
    c.counts = std::move(counts);
    clusters_.push_back(std::move(c));
  }
}

int ClusterMapper::cluster_of(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? -1 : it->second;
}

const std::string& ClusterMapper::most_frequent_word() const {
  const std::string* best = nullptr;
  std::size_t best_count = 0;
  for (const auto& c : clusters_)
    for (std::size_t i = 0; i < c.words.size(); ++i)
      if (!best || c.counts[i] > best_count) {
        best = &c.words[i];
        best_count = c.counts[i];
      }
  if (!best) throw LookupError("empty cluster mapper");
  return *best;
}

std::string ClusterMapper::export_text() const {
  std::string out = "# cluster\tword\tcount\tmembership\n";
  char buf[32];
  for (std::size_t id = 0; id < clusters_.size(); ++id) {
    const auto& c = clusters_[id];
    for (std::size_t i = 0; i < c.words.size(); ++i) {
      if (c.words[i].find_first_of("\t\n") != std::string::npos)
        throw ParameterError("word '" + c.words[i] + "' contains a tab or newline");
      std::snprintf(buf, sizeof(buf), "%.9f", c.membership[i]);
      out += std::to_string(id) + '\t' + c.words[i] + '\t' + std::to_string(c.counts[i]) + '\t' +
             buf + '\n';
    }
  }
  return out;
}

ClusterMapper ClusterMapper::parse_text(std::string_view text) {
  std::vector<std::pair<std::vector<std::string>, std::vector<std::size_t>>> clusters;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      f.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (f.size() != 4) throw ParseError("mapper line " + std::to_string(lineno) + ": expected 4 fields");
    std::size_t id = 0, count = 0;
    try {
      id = std::stoul(f[0]);
      count = std::stoul(f[2]);
    } catch (const std::exception&) {
      throw ParseError("mapper line " + std::to_string(lineno) + ": bad number");
    }
    if (id > clusters.size()) throw ParseError("mapper cluster ids are not contiguous");
    if (id == clusters.size()) clusters.emplace_back();
    clusters[id].first.push_back(f[1]);
    clusters[id].second.push_back(count);
  }
  return ClusterMapper(std::move(clusters));
}

ClusterMapper build_mapper(const ClusterModel& model, const Vocabulary& vocabulary) {
  std::vector<std::pair<std::vector<std::string>, std::vector<std::size_t>>> clusters(
      static_cast<std::size_t>(model.k()));
  for (std::size_t i = 0; i < model.words.size(); ++i) {
    const auto& w = model.words[i];
    const auto idx = vocabulary.index_of(w);
    if (!idx) throw ConsistencyError("clustered word '" + w + "' has no vocabulary count");
    auto& c = clusters[static_cast<std::size_t>(model.assignment[i])];
    c.first.push_back(w);
    c.second.push_back(vocabulary.counts()[*idx]);
  }
  return ClusterMapper(std::move(clusters));
}

}  // namespace krew
