#include "krew/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include <Eigen/Eigenvalues>

#include "krew/error.hpp"

namespace krew {

namespace {

FrequencyDistribution normalize(std::vector<std::string> support, const std::vector<double>& counts) {
  double total = 0.0;
  for (double c : counts) total += c;
  FrequencyDistribution out;
  out.support = std::move(support);
  out.probabilities.reserve(counts.size());
  for (double c : counts) out.probabilities.push_back(total > 0.0 ? c / total : 0.0);
  return out;
}

struct Tally {
  std::vector<std::string> keys;
  std::vector<double> counts;
  std::unordered_map<std::string, std::size_t> index;

  void add(const std::string& key) {
    auto [it, inserted] = index.emplace(key, keys.size());
    if (inserted) {
      keys.push_back(key);
      counts.push_back(0.0);
    }
    counts[it->second] += 1.0;
  }
  double count(const std::string& key) const {
    auto it = index.find(key);
    return it == index.end() ? 0.0 : counts[it->second];
  }
};

Tally skill_tally(const Dataset& dataset) {
  Tally t;
  for (const auto& ws : dataset.wordsets())
    for (const auto& token : ws) t.add(token);
  return t;
}

}  // namespace

FrequencyDistribution skillset_distribution(const Dataset& dataset) {
  Tally t;
  const char delim = dataset.schema().delimiter();
  for (const auto& ws : dataset.wordsets()) t.add(ws.signature(delim));
  return normalize(std::move(t.keys), t.counts);
}

FrequencyDistribution skill_distribution(const Dataset& dataset) {
  Tally t = skill_tally(dataset);
  return normalize(std::move(t.keys), t.counts);
}

double entropy_bits(std::span<const double> p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0.0) h -= x * std::log2(x);
  return h;
}

double skillset_entropy(const Dataset& dataset) {
  if (dataset.row_count() == 0) throw ParameterError("entropy of an empty dataset");
  return entropy_bits(skillset_distribution(dataset).probabilities);
}

double kl_divergence(std::span<const double> p, std::span<const double> q, double eps) {
  if (p.size() != q.size()) throw ParameterError("distributions differ in size");
  double q_total = 0.0;
  for (double x : q) q_total += x + eps;
  if (!(q_total > 0.0)) throw ParameterError("reference distribution is empty");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    d += p[i] * std::log(p[i] / ((q[i] + eps) / q_total));
  }
  return std::max(d, 0.0);
}

std::vector<std::string> union_vocabulary(const Dataset& a, const Dataset& b) {
  Tally t;
  for (const auto* d : {&a, &b})
    for (const auto& ws : d->wordsets())
      for (const auto& token : ws) t.add(token);
  return t.keys;
}

double skill_kl_divergence(const Dataset& source, const Dataset& synthetic) {
  if (source.row_count() == 0 || synthetic.row_count() == 0)
    throw ParameterError("KL divergence needs two non-empty datasets");
  const auto words = union_vocabulary(source, synthetic);
  const Tally ps = skill_tally(source);
  const Tally qs = skill_tally(synthetic);
  std::vector<double> p, q;
  for (const auto& w : words) {
    p.push_back(ps.count(w));
    q.push_back(qs.count(w));
  }
  const auto pn = normalize(words, p).probabilities;
  const auto qn = normalize(words, q).probabilities;
  return kl_divergence(pn, qn);
}

Eigen::VectorXd AssociationMatrix::normalized() const {
  const Eigen::Index n = counts.rows();
  Eigen::VectorXd flat(n * n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) flat(i * n + j) = counts(i, j);
  const double total = flat.sum();
  if (total > 0.0) flat /= total;
  return flat;
}

AssociationMatrix association_matrix(const Dataset& dataset, const std::vector<std::string>& words) {
  std::unordered_map<std::string, Eigen::Index> index;
  for (std::size_t i = 0; i < words.size(); ++i) index.emplace(words[i], static_cast<Eigen::Index>(i));
  AssociationMatrix m;
  m.words = words;
  m.counts = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(words.size()),
                                   static_cast<Eigen::Index>(words.size()));
  std::vector<Eigen::Index> ids;
  for (const auto& ws : dataset.wordsets()) {
    ids.clear();
    for (const auto& token : ws) {
      auto it = index.find(token);
      if (it == index.end()) throw LookupError("word '" + token + "' missing from the association vocabulary");
      ids.push_back(it->second);
    }
    for (std::size_t a = 0; a < ids.size(); ++a)
      for (std::size_t b = a + 1; b < ids.size(); ++b) {
        m.counts(ids[a], ids[b]) += 1.0;
        m.counts(ids[b], ids[a]) += 1.0;
      }
  }
  return m;
}

AssociationMatrix association_matrix(const Dataset& dataset) {
  return association_matrix(dataset, union_vocabulary(dataset, Dataset(dataset.schema())));
}

double pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size()) throw ParameterError("pearson: vectors differ in length");
  if (x.size() < 2) throw UndefinedError("pearson: fewer than two observations");
  const Eigen::VectorXd xc = x.array() - x.mean();
  const Eigen::VectorXd yc = y.array() - y.mean();
  const double sx = xc.norm();
  const double sy = yc.norm();
  if (sx == 0.0 || sy == 0.0) throw UndefinedError("pearson: zero variance");
  return std::clamp(xc.dot(yc) / (sx * sy), -1.0, 1.0);
}

double association_pearson(const Dataset& source, const Dataset& synthetic) {
  const auto words = union_vocabulary(source, synthetic);
  return pearson(association_matrix(source, words).normalized(),
                 association_matrix(synthetic, words).normalized());
}

SkillsetEmbedder mean_word_embedder(EmbeddingModel model) {
  return [model = std::move(model)](const WordSet& ws) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(model.dim());
    int n = 0;
    for (const auto& token : ws) {
      if (!model.contains(token)) continue;
      sum += model.embed(token);
      ++n;
    }
    if (n > 0) sum /= n;
    return sum;
  };
}

SkillsetEmbedder table_embedder(std::unordered_map<std::string, Eigen::VectorXd> table, char delimiter) {
  return [table = std::move(table), delimiter](const WordSet& ws) {
    auto it = table.find(ws.signature(delimiter));
    if (it == table.end()) throw LookupError("no embedding for skillset '" + ws.signature(delimiter) + "'");
    return it->second;
  };
}

SkillsetEmbedder load_skillset_embeddings(const std::filesystem::path& path, char delimiter) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::unordered_map<std::string, Eigen::VectorXd> table;
  std::string line;
  std::size_t line_no = 0;
  Eigen::Index dim = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": missing tab");
    const WordSet ws = WordSet::parse(std::string_view(line).substr(0, tab), delimiter);
    std::istringstream values(line.substr(tab + 1));
    std::vector<double> v;
    double x;
    while (values >> x) v.push_back(x);
    if (!values.eof() || v.empty())
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad vector");
    if (dim < 0) dim = static_cast<Eigen::Index>(v.size());
    if (static_cast<Eigen::Index>(v.size()) != dim)
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": dimension mismatch");
    table[ws.signature(delimiter)] = Eigen::Map<Eigen::VectorXd>(v.data(), dim);
  }
  return table_embedder(std::move(table), delimiter);
}

double best_match(std::span<const double> scores) {
  if (scores.empty()) throw ParameterError("no scores");
  return *std::max_element(scores.begin(), scores.end());
}

double skillset_matching(const Dataset& source, const Dataset& synthetic, const SkillsetEmbedder& embedder) {
  if (synthetic.row_count() == 0) throw ParameterError("skillset matching: synthetic dataset is empty");
  if (source.row_count() == 0) throw ParameterError("skillset matching: source dataset is empty");
  const char delim = source.schema().delimiter();

  // Unit vectors per distinct source skillset.
  std::vector<Eigen::VectorXd> refs;
  std::unordered_map<std::string, bool> seen;
  for (const auto& ws : source.wordsets()) {
    if (!seen.emplace(ws.signature(delim), true).second) continue;
    Eigen::VectorXd v = embedder(ws);
    const double n = v.norm();
    if (n > 0.0) refs.push_back(v / n);
  }

  std::unordered_map<std::string, double> cache;
  double total = 0.0;
  for (const auto& ws : synthetic.wordsets()) {
    const std::string key = ws.signature(delim);
    auto it = cache.find(key);
    if (it == cache.end()) {
      double best = 0.0;
      Eigen::VectorXd v = embedder(ws);
      const double n = v.norm();
      if (n > 0.0 && !refs.empty()) {
        std::vector<double> scores;
        scores.reserve(refs.size());
        for (const auto& r : refs) scores.push_back(r.dot(v) / n);
        best = std::clamp(best_match(scores), 0.0, 1.0);
      }
      it = cache.emplace(key, best).first;
    }
    total += it->second;
  }
  return total / static_cast<double>(synthetic.row_count());
}

std::vector<AttributeColumnReport> attribute_fidelity(const Dataset& source, const Dataset& synthetic, int bins) {
  if (bins < 1) throw ParameterError("bins must be at least 1");
  if (!(source.schema() == synthetic.schema())) throw SchemaError("attribute fidelity: schemas differ");
  std::vector<AttributeColumnReport> out;
  const auto& columns = source.schema().columns();
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const auto& col = columns[c];
    if (col.kind == ColumnKind::WordSet) continue;
    AttributeColumnReport rep;
    rep.name = col.name;
    if (col.kind == ColumnKind::Categorical) {
      Tally s, y;
      for (std::size_t r = 0; r < source.row_count(); ++r) s.add(source.categorical(r, c));
      for (std::size_t r = 0; r < synthetic.row_count(); ++r) y.add(synthetic.categorical(r, c));
      rep.labels = s.keys;
      for (const auto& k : y.keys)
        if (!s.index.count(k)) rep.labels.push_back(k);
      std::vector<double> sc, yc;
      for (const auto& k : rep.labels) {
        sc.push_back(s.count(k));
        yc.push_back(y.count(k));
      }
      rep.source = normalize(rep.labels, sc).probabilities;
      rep.synthetic = normalize(rep.labels, yc).probabilities;
    } else {
      rep.continuous = true;
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (const auto* d : {&source, &synthetic})
        for (std::size_t r = 0; r < d->row_count(); ++r) {
          lo = std::min(lo, d->continuous(r, c));
          hi = std::max(hi, d->continuous(r, c));
        }
      if (!(lo <= hi)) lo = hi = 0.0;
      const double width = (hi - lo) / bins;
      auto histogram = [&](const Dataset& d) {
        std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
        for (std::size_t r = 0; r < d.row_count(); ++r) {
          int b = width > 0.0 ? static_cast<int>((d.continuous(r, c) - lo) / width) : 0;
          h[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))] += 1.0;
        }
        return h;
      };
      for (int b = 0; b < bins; ++b)
        rep.labels.push_back("[" + format_double(lo + b * width) + "," + format_double(lo + (b + 1) * width) +
                             (b + 1 == bins ? "]" : ")"));
      rep.source = normalize(rep.labels, histogram(source)).probabilities;
      rep.synthetic = normalize(rep.labels, histogram(synthetic)).probabilities;
    }
    for (std::size_t i = 0; i < rep.source.size(); ++i) rep.l1 += std::abs(rep.source[i] - rep.synthetic[i]);
    out.push_back(std::move(rep));
  }
  return out;
}

Eigen::MatrixXd PcaFit::project(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean.size()) throw ParameterError("PCA: feature count mismatch");
  return (x.rowwise() - mean) * components;
}

Eigen::MatrixXd PcaFit::reconstruct(const Eigen::MatrixXd& coordinates) const {
  return (coordinates * components.transpose()).rowwise() + mean;
}

PcaFit fit_pca(const Eigen::MatrixXd& x, int components) {
  if (components < 1) throw ParameterError("PCA needs at least one component");
  if (x.rows() == 0) throw ParameterError("PCA of an empty matrix");
  const Eigen::Index d = x.cols();
  PcaFit fit;
  fit.mean = x.colwise().mean();
  fit.components = Eigen::MatrixXd::Zero(d, components);
  fit.variances = Eigen::VectorXd::Zero(components);
  if (d == 0) return fit;
  const Eigen::MatrixXd centered = x.rowwise() - fit.mean;
  const double denom = x.rows() > 1 ? static_cast<double>(x.rows() - 1) : 1.0;
  const Eigen::MatrixXd cov = centered.transpose() * centered / denom;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericError("PCA eigendecomposition failed");
  const Eigen::Index take = std::min<Eigen::Index>(components, d);
  for (Eigen::Index k = 0; k < take; ++k) {
    // Eigenvalues come in ascending order.
    Eigen::VectorXd v = solver.eigenvectors().col(d - 1 - k);
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    fit.components.col(k) = v;
    fit.variances(k) = std::max(0.0, solver.eigenvalues()(d - 1 - k));
  }
  return fit;
}

Eigen::MatrixXd multihot_matrix(const Dataset& dataset, const std::vector<std::string>& words) {
  std::unordered_map<std::string, Eigen::Index> index;
  for (std::size_t i = 0; i < words.size(); ++i) index.emplace(words[i], static_cast<Eigen::Index>(i));
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dataset.row_count()),
                                            static_cast<Eigen::Index>(words.size()));
  for (std::size_t r = 0; r < dataset.row_count(); ++r)
    for (const auto& token : dataset.wordset(r)) {
      auto it = index.find(token);
      if (it != index.end()) m(static_cast<Eigen::Index>(r), it->second) = 1.0;
    }
  return m;
}

PcaProjection pca_project3(const Dataset& source, const Dataset& synthetic) {
  PcaProjection out;
  out.words = union_vocabulary(source, synthetic);
  out.fit = fit_pca(multihot_matrix(source, out.words), 3);
  out.source = out.fit.project(multihot_matrix(source, out.words));
  out.synthetic = out.fit.project(multihot_matrix(synthetic, out.words));
  return out;
}

std::vector<MetricRow> evaluate_all(const Dataset& source, const Dataset& synthetic,
                                    const SkillsetEmbedder& embedder, int bins) {
  std::vector<MetricRow> rows;
  rows.push_back({"entropy_bits", "source", skillset_entropy(source)});
  rows.push_back({"entropy_bits", "synthetic", skillset_entropy(synthetic)});
  rows.push_back({"skill_kl_nats", "source|synthetic", skill_kl_divergence(source, synthetic)});
  try {
    rows.push_back({"association_pearson", "source|synthetic", association_pearson(source, synthetic)});
  } catch (const UndefinedError&) {
    rows.push_back({"association_pearson", "source|synthetic", std::nan("")});
  }
  if (embedder) rows.push_back({"skillset_matching", "source|synthetic", skillset_matching(source, synthetic, embedder)});
  for (const auto& col : attribute_fidelity(source, synthetic, bins))
    rows.push_back({"attribute_l1:" + col.name, "source|synthetic", col.l1});
  return rows;
}

void write_metric_report(std::ostream& out, const std::vector<MetricRow>& rows) {
  write_csv_record(out, {"metric", "pair", "value"});
  for (const auto& r : rows) write_csv_record(out, {r.metric, r.pair, format_double(r.value)});
}

void write_pca_csv(std::ostream& out, const PcaProjection& projection) {
  write_csv_record(out, {"dataset", "x", "y", "z"});
  auto emit = [&](const char* tag, const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      write_csv_record(out, {tag, format_double(m(r, 0)), format_double(m(r, 1)), format_double(m(r, 2))});
  };
  emit("source", projection.source);
  emit("synthetic", projection.synthetic);
}

}  // namespace krew
