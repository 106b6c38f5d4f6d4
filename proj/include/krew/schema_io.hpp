#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace krew {

enum class ColumnKind { Continuous, Categorical, WordSet };

std::string_view to_string(ColumnKind kind);
ColumnKind parse_column_kind(std::string_view text);

struct Column {
  std::string name;
  ColumnKind kind;

  bool operator==(const Column&) const = default;
};

// Ordered column declarations plus the token delimiter used inside WordSet
// cells. v1 requires exactly one WordSet column.
class Schema {
 public:
  Schema() = default;
  explicit Schema(std::vector<Column> columns, char delimiter = ',');

  const std::vector<Column>& columns() const { return columns_; }
  std::size_t size() const { return columns_.size(); }
  char delimiter() const { return delimiter_; }

  std::optional<std::size_t> index_of(std::string_view name) const;
  std::size_t wordset_index() const { return wordset_index_; }
  const std::string& wordset_name() const { return columns_[wordset_index_].name; }
  // p: number of non-WordSet columns.
  std::size_t passthrough_count() const { return columns_.size() - 1; }

  // Sidecar manifest: "delimiter: ," and "column: <name> = <kind>" lines,
  // '#' comments.
  static Schema parse_manifest(std::string_view text);
  static Schema load_manifest(const std::filesystem::path& path);
  std::string to_manifest() const;

  bool operator==(const Schema&) const = default;

 private:
  std::vector<Column> columns_;
  char delimiter_ = ',';
  std::size_t wordset_index_ = 0;
};

// Set of unique, trimmed tokens. Iteration follows first-occurrence order of
// the source cell; equality ignores order.
class WordSet {
 public:
  WordSet() = default;
  // Trims each token, drops empties and duplicates.
  static WordSet from_tokens(const std::vector<std::string>& tokens);
  static WordSet parse(std::string_view cell, char delimiter);

  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }
  bool empty() const { return tokens_.empty(); }
  bool contains(std::string_view token) const;
  auto begin() const { return tokens_.begin(); }
  auto end() const { return tokens_.end(); }

  // Order-insensitive identity: sorted tokens joined by the delimiter.
  std::string signature(char delimiter = ',') const;
  std::string join(char delimiter) const;

  bool operator==(const WordSet& other) const;

 private:
  std::vector<std::string> tokens_;
};

using Cell = std::variant<double, std::string, WordSet>;
using Row = std::vector<Cell>;

class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(Schema schema, std::vector<Row> rows = {});

  const Schema& schema() const { return schema_; }
  const std::vector<Row>& rows() const { return rows_; }
  std::size_t row_count() const { return rows_.size(); }

  const WordSet& wordset(std::size_t row) const;
  double continuous(std::size_t row, std::size_t column) const;
  const std::string& categorical(std::size_t row, std::size_t column) const;

  // All WordSet cells, in row order.
  std::vector<WordSet> wordsets() const;

  bool operator==(const Dataset&) const = default;

 private:
  Schema schema_;
  std::vector<Row> rows_;
};

std::string_view trim(std::string_view s);
// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

// RFC-4180 records. Quoted fields may contain delimiters, quotes ("") and
// newlines.
std::vector<std::vector<std::string>> read_csv_records(std::istream& in);
std::string csv_field(std::string_view value);
void write_csv_record(std::ostream& out, const std::vector<std::string>& fields);

Dataset read_csv(std::istream& in, const Schema& schema);
void write_csv(std::ostream& out, const Dataset& dataset);
Dataset load_csv(const std::filesystem::path& path, const Schema& schema);
void save_csv(const Dataset& dataset, const std::filesystem::path& path);

}  // namespace krew
