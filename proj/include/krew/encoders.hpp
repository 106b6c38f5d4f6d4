#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "krew/cluster.hpp"
#include "krew/corpus.hpp"
#include "krew/random.hpp"
#include "krew/schema_io.hpp"

namespace krew {

enum class EncoderKind { OneHot, MultiHot, ClusterCount };

std::string_view to_string(EncoderKind kind);
EncoderKind parse_encoder_kind(std::string_view text);

enum class ColumnOrigin { Passthrough, SkillsetDerived };

struct EncodedColumn {
  std::string name;
  ColumnOrigin origin = ColumnOrigin::Passthrough;
  bool continuous = false;
  // Passthrough categorical: cell value is the index into this list.
  std::vector<std::string> categories;
  // Passthrough: index of the source column in the schema.
  std::size_t source_column = 0;
  // One-hot: the skillset this column stands for. Multi-hot: {word}.
  WordSet skillset;
  // Cluster-count: cluster id.
  int cluster = -1;

  bool operator==(const EncodedColumn&) const = default;
};

// Numeric table fed to the generator: passthrough columns (schema order, the
// WordSet column skipped) followed by the skillset-derived columns.
struct EncodedTable {
  EncoderKind kind = EncoderKind::ClusterCount;
  Schema source_schema;
  std::vector<EncodedColumn> columns;
  Eigen::MatrixXd values;  // rows x width
  std::string mapper_hash;  // cluster-count only

  std::size_t width() const { return columns.size(); }
  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t skillset_width() const;
  std::size_t first_skillset_column() const;

  bool operator==(const EncodedTable& o) const {
    return kind == o.kind && source_schema == o.source_schema && columns == o.columns &&
           values == o.values && mapper_hash == o.mapper_hash;
  }
};

EncodedTable encode_onehot_skillsets(const Dataset& dataset);
EncodedTable encode_multihot(const Dataset& dataset, const Vocabulary& vocabulary);
EncodedTable encode_cluster_counts(const Dataset& dataset, const ClusterMapper& mapper);

// Draws `count` distinct words, sequentially, each proportional to the
// membership of the words not yet drawn.
std::vector<std::string> select_skills(std::size_t count, const std::vector<std::string>& words,
                                       const std::vector<double>& membership, Rng& rng);

// Counts are rounded and clamped to [0, cluster size] by the caller; negative
// or fractional counts raise DomainError. Row r draws from the substream
// mix_seed(seed, r).
Dataset decode_cluster_counts(const EncodedTable& encoded, const ClusterMapper& mapper,
                              std::uint64_t seed);
Dataset decode_onehot(const EncodedTable& encoded);
Dataset decode_multihot(const EncodedTable& encoded);
Dataset decode(const EncodedTable& encoded, const ClusterMapper* mapper, std::uint64_t seed);

// Rounds every cluster-count cell to the nearest integer within [0, |cluster|].
void clamp_cluster_counts(EncodedTable& encoded, const ClusterMapper& mapper);

// "# encoder=<kind> mapper=<hash|none>", header, then numeric rows.
void write_encoded_csv(std::ostream& out, const EncodedTable& table);

}  // namespace krew
