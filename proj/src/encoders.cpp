#include "krew/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <unordered_map>

#include "krew/error.hpp"
#include "krew/util.hpp"

namespace krew {

std::string_view to_string(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::OneHot:
      return "one-hot";
    case EncoderKind::MultiHot:
      return "multi-hot";
    case EncoderKind::ClusterCount:
      return "cluster-count";
  }
  return "?";
}

EncoderKind parse_encoder_kind(std::string_view text) {
  if (text == "one-hot" || text == "onehot") return EncoderKind::OneHot;
  if (text == "multi-hot" || text == "multihot") return EncoderKind::MultiHot;
  if (text == "cluster-count" || text == "cluster") return EncoderKind::ClusterCount;
  throw ParameterError("unknown encoder kind '" + std::string(text) + "'");
}

std::size_t EncodedTable::first_skillset_column() const {
  for (std::size_t c = 0; c < columns.size(); ++c)
    if (columns[c].origin == ColumnOrigin::SkillsetDerived) return c;
  return columns.size();
}

std::size_t EncodedTable::skillset_width() const { return width() - first_skillset_column(); }

namespace {

// Passthrough columns and their values; skillset columns are appended by the
// specific encoders.
EncodedTable passthrough(const Dataset& dataset, EncoderKind kind) {
  const auto& schema = dataset.schema();
  EncodedTable t;
  t.kind = kind;
  t.source_schema = schema;
  std::vector<std::unordered_map<std::string, std::size_t>> lookup;
  for (std::size_t c = 0; c < schema.size(); ++c) {
    const auto& col = schema.columns()[c];
    if (col.kind == ColumnKind::WordSet) continue;
    EncodedColumn ec;
    ec.name = col.name;
    ec.origin = ColumnOrigin::Passthrough;
    ec.continuous = col.kind == ColumnKind::Continuous;
    ec.source_column = c;
    std::unordered_map<std::string, std::size_t> index;
    if (!ec.continuous)
      for (std::size_t r = 0; r < dataset.row_count(); ++r) {
        const auto& v = dataset.categorical(r, c);
        if (index.emplace(v, ec.categories.size()).second) ec.categories.push_back(v);
      }
    lookup.push_back(std::move(index));
    t.columns.push_back(std::move(ec));
  }
  t.values.setZero(static_cast<Eigen::Index>(dataset.row_count()),
                   static_cast<Eigen::Index>(t.columns.size()));
  for (std::size_t r = 0; r < dataset.row_count(); ++r)
    for (std::size_t k = 0; k < t.columns.size(); ++k) {
      const auto& ec = t.columns[k];
      t.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) =
          ec.continuous ? dataset.continuous(r, ec.source_column)
                        : static_cast<double>(lookup[k].at(dataset.categorical(r, ec.source_column)));
    }
  return t;
}

void append_columns(EncodedTable& t, std::vector<EncodedColumn> extra) {
  const auto old = static_cast<Eigen::Index>(t.columns.size());
  for (auto& c : extra) t.columns.push_back(std::move(c));
  Eigen::MatrixXd grown = Eigen::MatrixXd::Zero(t.values.rows(), static_cast<Eigen::Index>(t.columns.size()));
  grown.leftCols(old) = t.values;
  t.values = std::move(grown);
}

Dataset decode_with(const EncodedTable& encoded, const std::vector<WordSet>& skillsets) {
  const auto& schema = encoded.source_schema;
  std::vector<Row> rows;
  rows.reserve(encoded.rows());
  for (std::size_t r = 0; r < encoded.rows(); ++r) {
    Row row(schema.size());
    row[schema.wordset_index()] = skillsets[r];
    for (std::size_t k = 0; k < encoded.columns.size(); ++k) {
      const auto& ec = encoded.columns[k];
      if (ec.origin != ColumnOrigin::Passthrough) continue;
      const double v = encoded.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
      if (ec.continuous) {
        row[ec.source_column] = v;
      } else {
        if (ec.categories.empty()) throw ConsistencyError("categorical column '" + ec.name + "' has no categories");
        const auto idx = std::clamp<long>(std::lround(v), 0, static_cast<long>(ec.categories.size()) - 1);
        row[ec.source_column] = ec.categories[static_cast<std::size_t>(idx)];
      }
    }
    rows.push_back(std::move(row));
  }
  return Dataset(schema, std::move(rows));
}

void require_kind(const EncodedTable& t, EncoderKind kind) {
  if (t.kind != kind)
    throw KindError("expected a " + std::string(to_string(kind)) + " table, got " +
                    std::string(to_string(t.kind)));
}

}  // namespace

EncodedTable encode_onehot_skillsets(const Dataset& dataset) {
  EncodedTable t = passthrough(dataset, EncoderKind::OneHot);
  const char delim = dataset.schema().delimiter();
  std::unordered_map<std::string, std::size_t> index;
  std::vector<EncodedColumn> cols;
  std::vector<std::size_t> row_col(dataset.row_count());
  for (std::size_t r = 0; r < dataset.row_count(); ++r) {
    const auto& ws = dataset.wordset(r);
    auto [it, inserted] = index.emplace(ws.signature(delim), cols.size());
    if (inserted) {
      EncodedColumn ec;
      ec.name = "skillset_" + std::to_string(cols.size());
      ec.origin = ColumnOrigin::SkillsetDerived;
      ec.categories = {"0", "1"};
      ec.skillset = ws;
      cols.push_back(std::move(ec));
    }
    row_col[r] = it->second;
  }
  const auto first = static_cast<Eigen::Index>(t.columns.size());
  append_columns(t, std::move(cols));
  for (std::size_t r = 0; r < row_col.size(); ++r)
    t.values(static_cast<Eigen::Index>(r), first + static_cast<Eigen::Index>(row_col[r])) = 1.0;
  return t;
}

EncodedTable encode_multihot(const Dataset& dataset, const Vocabulary& vocabulary) {
  EncodedTable t = passthrough(dataset, EncoderKind::MultiHot);
  std::vector<EncodedColumn> cols;
  for (const auto& w : vocabulary.words()) {
    EncodedColumn ec;
    ec.name = "skill_" + w;
    ec.origin = ColumnOrigin::SkillsetDerived;
    ec.categories = {"0", "1"};
    ec.skillset = WordSet::from_tokens({w});
    cols.push_back(std::move(ec));
  }
  const auto first = static_cast<Eigen::Index>(t.columns.size());
  append_columns(t, std::move(cols));
  for (std::size_t r = 0; r < dataset.row_count(); ++r)
    for (const auto& w : dataset.wordset(r)) {
      const auto idx = vocabulary.index_of(w);
      if (!idx) throw CoverageError("skill '" + w + "' is not in the vocabulary");
      t.values(static_cast<Eigen::Index>(r), first + static_cast<Eigen::Index>(*idx)) = 1.0;
    }
  return t;
}

EncodedTable encode_cluster_counts(const Dataset& dataset, const ClusterMapper& mapper) {
  EncodedTable t = passthrough(dataset, EncoderKind::ClusterCount);
  std::vector<EncodedColumn> cols;
  for (std::size_t id = 0; id < mapper.size(); ++id) {
    EncodedColumn ec;
    ec.name = "cluster_" + std::to_string(id);
    ec.origin = ColumnOrigin::SkillsetDerived;
    ec.cluster = static_cast<int>(id);
    cols.push_back(std::move(ec));
  }
  const auto first = static_cast<Eigen::Index>(t.columns.size());
  append_columns(t, std::move(cols));
  for (std::size_t r = 0; r < dataset.row_count(); ++r)
    for (const auto& w : dataset.wordset(r)) {
      const int id = mapper.cluster_of(w);
      if (id < 0) throw CoverageError("skill '" + w + "' is not assigned to any cluster");
      t.values(static_cast<Eigen::Index>(r), first + id) += 1.0;
    }
  t.mapper_hash = sha256_hex(mapper.export_text());
  return t;
}

std::vector<std::string> select_skills(std::size_t count, const std::vector<std::string>& words,
                                       const std::vector<double>& membership, Rng& rng) {
  if (words.size() != membership.size()) throw ConsistencyError("membership size mismatch");
  count = std::min(count, words.size());
  std::vector<double> weights = membership;
  std::vector<std::string> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t i = rng.weighted(weights);
    out.push_back(words[i]);
    weights[i] = 0.0;
    double rest = 0.0;
    for (double w : weights) rest += w;
    // Remaining words with zero membership fall back to uniform.
    if (rest <= 0.0 && k + 1 < count)
      for (std::size_t j = 0; j < weights.size(); ++j)
        if (std::find(out.begin(), out.end(), words[j]) == out.end()) weights[j] = 1.0;
  }
  return out;
}

Dataset decode_cluster_counts(const EncodedTable& encoded, const ClusterMapper& mapper,
                              std::uint64_t seed) {
  require_kind(encoded, EncoderKind::ClusterCount);
  const auto first = encoded.first_skillset_column();
  if (encoded.width() - first != mapper.size())
    throw ConsistencyError("cluster-count columns do not match the mapper");
  std::vector<WordSet> skillsets;
  skillsets.reserve(encoded.rows());
  for (std::size_t r = 0; r < encoded.rows(); ++r) {
    Rng rng(mix_seed(seed, r));
    std::vector<std::string> words;
    for (std::size_t id = 0; id < mapper.size(); ++id) {
      const double v =
          encoded.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(first + id));
      if (!(v >= 0.0)) throw DomainError("negative cluster count in row " + std::to_string(r));
      const double rounded = std::round(v);
      if (std::abs(v - rounded) > 1e-9)
        throw DomainError("non-integer cluster count in row " + std::to_string(r));
      const auto count = static_cast<std::size_t>(rounded);
      if (count == 0) continue;
      const auto& cl = mapper.cluster(id);
      // Counts above the cluster size take the whole cluster.
      for (auto& w : select_skills(count, cl.words, cl.membership, rng)) words.push_back(std::move(w));
    }
    skillsets.push_back(WordSet::from_tokens(words));
  }
  return decode_with(encoded, skillsets);
}

Dataset decode_onehot(const EncodedTable& encoded) {
  require_kind(encoded, EncoderKind::OneHot);
  const auto first = encoded.first_skillset_column();
  std::vector<WordSet> skillsets;
  for (std::size_t r = 0; r < encoded.rows(); ++r) {
    std::size_t best = encoded.width();
    double best_v = 0.0;
    for (std::size_t c = first; c < encoded.width(); ++c) {
      const double v = encoded.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      if (v > best_v) {
        best_v = v;
        best = c;
      }
    }
    skillsets.push_back(best < encoded.width() ? encoded.columns[best].skillset : WordSet{});
  }
  return decode_with(encoded, skillsets);
}

Dataset decode_multihot(const EncodedTable& encoded) {
  require_kind(encoded, EncoderKind::MultiHot);
  const auto first = encoded.first_skillset_column();
  std::vector<WordSet> skillsets;
  for (std::size_t r = 0; r < encoded.rows(); ++r) {
    std::vector<std::string> words;
    for (std::size_t c = first; c < encoded.width(); ++c)
      if (encoded.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) >= 0.5)
        words.push_back(encoded.columns[c].skillset.tokens().front());
    skillsets.push_back(WordSet::from_tokens(words));
  }
  return decode_with(encoded, skillsets);
}

Dataset decode(const EncodedTable& encoded, const ClusterMapper* mapper, std::uint64_t seed) {
  switch (encoded.kind) {
    case EncoderKind::OneHot:
      return decode_onehot(encoded);
    case EncoderKind::MultiHot:
      return decode_multihot(encoded);
    case EncoderKind::ClusterCount:
      if (!mapper) throw ParameterError("cluster-count decoding needs a mapper");
      return decode_cluster_counts(encoded, *mapper, seed);
  }
  throw KindError("unknown encoder kind");
}

void clamp_cluster_counts(EncodedTable& encoded, const ClusterMapper& mapper) {
  require_kind(encoded, EncoderKind::ClusterCount);
  const auto first = encoded.first_skillset_column();
  for (std::size_t id = 0; id < mapper.size(); ++id) {
    const double cap = static_cast<double>(mapper.cluster(id).words.size());
    auto col = encoded.values.col(static_cast<Eigen::Index>(first + id));
    for (Eigen::Index r = 0; r < col.size(); ++r) col(r) = std::clamp(std::round(col(r)), 0.0, cap);
  }
}

void write_encoded_csv(std::ostream& out, const EncodedTable& table) {
  out << "# encoder=" << to_string(table.kind)
      << " mapper=" << (table.mapper_hash.empty() ? "none" : table.mapper_hash) << '\n';
  std::vector<std::string> fields;
  for (const auto& c : table.columns) fields.push_back(c.name);
  write_csv_record(out, fields);
  for (Eigen::Index r = 0; r < table.values.rows(); ++r) {
    fields.clear();
    for (Eigen::Index c = 0; c < table.values.cols(); ++c)
      fields.push_back(format_double(table.values(r, c)));
    write_csv_record(out, fields);
  }
}

}  // namespace krew
