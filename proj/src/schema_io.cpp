#include "krew/schema_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "krew/error.hpp"

namespace krew {

std::string_view to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::Continuous:
      return "continuous";
    case ColumnKind::Categorical:
      return "categorical";
    case ColumnKind::WordSet:
      return "wordset";
  }
  return "?";
}

ColumnKind parse_column_kind(std::string_view text) {
  std::string lower(trim(text));
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "continuous") return ColumnKind::Continuous;
  if (lower == "categorical") return ColumnKind::Categorical;
  if (lower == "wordset") return ColumnKind::WordSet;
  throw SchemaError("unknown column kind '" + std::string(text) + "'");
}

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) throw Error("cannot format number");
  return std::string(buf, end);
}

// ---------------------------------------------------------------------------
// Schema

Schema::Schema(std::vector<Column> columns, char delimiter)
    : columns_(std::move(columns)), delimiter_(delimiter) {
  if (columns_.empty()) throw SchemaError("schema needs at least one column");
  if (delimiter_ == '"' || delimiter_ == '\n' || delimiter_ == '\r')
    throw SchemaError("invalid wordset delimiter");
  std::unordered_set<std::string> seen;
  std::size_t wordsets = 0;
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    const auto& c = columns_[i];
    if (c.name.empty()) throw SchemaError("empty column name");
    if (!seen.insert(c.name).second) throw SchemaError("duplicate column '" + c.name + "'");
    if (c.kind == ColumnKind::WordSet) {
      ++wordsets;
      wordset_index_ = i;
    }
  }
  if (wordsets != 1)
    throw SchemaError("schema must declare exactly one wordset column, found " +
                      std::to_string(wordsets));
}

std::optional<std::size_t> Schema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i)
    if (columns_[i].name == name) return i;
  return std::nullopt;
}

Schema Schema::parse_manifest(std::string_view text) {
  std::vector<Column> columns;
  char delimiter = ',';
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto colon = body.find(':');
    if (colon == std::string_view::npos)
      throw SchemaError("manifest line " + std::to_string(lineno) + ": expected 'key: value'");
    const auto key = trim(body.substr(0, colon));
    auto value = trim(body.substr(colon + 1));
    if (key == "delimiter") {
      if (value.size() == 3 && (value.front() == '"' || value.front() == '\'') &&
          value.back() == value.front())
        value = value.substr(1, 1);
      if (value.size() != 1)
        throw SchemaError("manifest line " + std::to_string(lineno) +
                          ": delimiter must be a single character");
      delimiter = value.front();
    } else if (key == "column") {
      const auto eq = value.rfind('=');
      if (eq == std::string_view::npos)
        throw SchemaError("manifest line " + std::to_string(lineno) + ": expected 'name = kind'");
      columns.push_back({std::string(trim(value.substr(0, eq))),
                         parse_column_kind(value.substr(eq + 1))});
    } else {
      throw SchemaError("manifest line " + std::to_string(lineno) + ": unknown key '" +
                        std::string(key) + "'");
    }
  }
  return Schema(std::move(columns), delimiter);
}

Schema Schema::load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open schema manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str());
}

std::string Schema::to_manifest() const {
  std::string out = "delimiter: ";
  out += (delimiter_ == ' ' || delimiter_ == '#') ? std::string{'"', delimiter_, '"'}
                                                  : std::string{delimiter_};
  out += '\n';
  for (const auto& c : columns_) {
    out += "column: " + c.name + " = " + std::string(to_string(c.kind)) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// WordSet

WordSet WordSet::from_tokens(const std::vector<std::string>& tokens) {
  WordSet ws;
  for (const auto& raw : tokens) {
    const auto t = trim(raw);
    if (t.empty() || ws.contains(t)) continue;
    ws.tokens_.emplace_back(t);
  }
  return ws;
}

WordSet WordSet::parse(std::string_view cell, char delimiter) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (start <= cell.size()) {
    const auto pos = cell.find(delimiter, start);
    const auto stop = pos == std::string_view::npos ? cell.size() : pos;
    parts.emplace_back(cell.substr(start, stop - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return from_tokens(parts);
}

bool WordSet::contains(std::string_view token) const {
  return std::find(tokens_.begin(), tokens_.end(), token) != tokens_.end();
}

std::string WordSet::signature(char delimiter) const {
  auto sorted = tokens_;
  std::sort(sorted.begin(), sorted.end());
  std::string out;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i) out += delimiter;
    out += sorted[i];
  }
  return out;
}

std::string WordSet::join(char delimiter) const {
  std::string out;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (i) out += delimiter;
    out += tokens_[i];
  }
  return out;
}

bool WordSet::operator==(const WordSet& other) const {
  if (tokens_.size() != other.tokens_.size()) return false;
  return std::all_of(tokens_.begin(), tokens_.end(),
                     [&](const std::string& t) { return other.contains(t); });
}

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(Schema schema, std::vector<Row> rows)
    : schema_(std::move(schema)), rows_(std::move(rows)) {
  const auto& cols = schema_.columns();
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    const auto& row = rows_[r];
    if (row.size() != cols.size())
      throw SchemaError("row " + std::to_string(r) + " has " + std::to_string(row.size()) +
                        " cells, schema has " + std::to_string(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto& cell = row[c];
      switch (cols[c].kind) {
        case ColumnKind::Continuous:
          if (!std::holds_alternative<double>(cell) || !std::isfinite(std::get<double>(cell)))
            throw SchemaError("row " + std::to_string(r) + ", column '" + cols[c].name +
                              "': expected a finite number");
          break;
        case ColumnKind::Categorical:
          if (!std::holds_alternative<std::string>(cell))
            throw SchemaError("row " + std::to_string(r) + ", column '" + cols[c].name +
                              "': expected a category token");
          break;
        case ColumnKind::WordSet:
          if (!std::holds_alternative<WordSet>(cell))
            throw SchemaError("row " + std::to_string(r) + ", column '" + cols[c].name +
                              "': expected a word set");
          for (const auto& t : std::get<WordSet>(cell))
            if (t.find(schema_.delimiter()) != std::string::npos)
              throw SchemaError("token '" + t + "' contains the wordset delimiter");
          break;
      }
    }
  }
}

const WordSet& Dataset::wordset(std::size_t row) const {
  return std::get<WordSet>(rows_.at(row)[schema_.wordset_index()]);
}

double Dataset::continuous(std::size_t row, std::size_t column) const {
  return std::get<double>(rows_.at(row).at(column));
}

const std::string& Dataset::categorical(std::size_t row, std::size_t column) const {
  return std::get<std::string>(rows_.at(row).at(column));
}

std::vector<WordSet> Dataset::wordsets() const {
  std::vector<WordSet> out;
  out.reserve(rows_.size());
  for (std::size_t r = 0; r < rows_.size(); ++r) out.push_back(wordset(r));
  return out;
}

// ---------------------------------------------------------------------------
// CSV

std::vector<std::vector<std::string>> read_csv_records(std::istream& in) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  char c;
  const auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    // A bare empty line is not a record.
    if (!(record.size() == 1 && record[0].empty() && !field_started)) records.push_back(record);
    record.clear();
    field_started = false;
  };
  while (in.get(c)) {
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r':
        if (in.peek() == '\n') in.get(c);
        end_record();
        break;
      case '\n':
        end_record();
        break;
      default:
        field += c;
        field_started = true;
    }
  }
  if (in_quotes) throw ParseError("unterminated quoted CSV field");
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

std::string csv_field(std::string_view value) {
  const bool needs_quotes = value.find_first_of(",\"\r\n") != std::string_view::npos ||
                            (!value.empty() && (value.front() == ' ' || value.back() == ' '));
  if (!needs_quotes) return std::string(value);
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void write_csv_record(std::ostream& out, const std::vector<std::string>& fields) {
  // A lone empty field would read back as a blank line.
  if (fields.size() == 1 && fields[0].empty()) {
    out << "\"\"\n";
    return;
  }
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << csv_field(fields[i]);
  }
  out << '\n';
}

Dataset read_csv(std::istream& in, const Schema& schema) {
  auto records = read_csv_records(in);
  if (records.empty()) throw SchemaError("CSV has no header row");
  const auto& header = records.front();
  std::vector<std::size_t> source_index(schema.size());
  for (std::size_t c = 0; c < schema.size(); ++c) {
    const auto& name = schema.columns()[c].name;
    auto it = std::find_if(header.begin(), header.end(),
                           [&](const std::string& h) { return trim(h) == name; });
    if (it == header.end()) throw SchemaError("CSV is missing column '" + name + "'");
    source_index[c] = static_cast<std::size_t>(it - header.begin());
  }
  std::vector<Row> rows;
  rows.reserve(records.size() - 1);
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    const std::size_t data_row = r - 1;
    Row row;
    row.reserve(schema.size());
    for (std::size_t c = 0; c < schema.size(); ++c) {
      const auto& col = schema.columns()[c];
      const std::string_view raw =
          source_index[c] < rec.size() ? std::string_view(rec[source_index[c]]) : std::string_view{};
      switch (col.kind) {
        case ColumnKind::Continuous: {
          const auto text = trim(raw);
          double v = 0.0;
          auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
          if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size() ||
              !std::isfinite(v))
            throw ParseError("row " + std::to_string(data_row) + ", column '" + col.name +
                             "': not a finite number: '" + std::string(raw) + "'");
          row.emplace_back(v);
          break;
        }
        case ColumnKind::Categorical:
          row.emplace_back(std::string(trim(raw)));
          break;
        case ColumnKind::WordSet:
          row.emplace_back(WordSet::parse(raw, schema.delimiter()));
          break;
      }
    }
    rows.push_back(std::move(row));
  }
  return Dataset(schema, std::move(rows));
}

void write_csv(std::ostream& out, const Dataset& dataset) {
  const auto& schema = dataset.schema();
  std::vector<std::string> fields;
  for (const auto& c : schema.columns()) fields.push_back(c.name);
  write_csv_record(out, fields);
  for (const auto& row : dataset.rows()) {
    fields.clear();
    for (std::size_t c = 0; c < row.size(); ++c) {
      const auto& cell = row[c];
      if (const auto* d = std::get_if<double>(&cell))
        fields.push_back(format_double(*d));
      else if (const auto* s = std::get_if<std::string>(&cell))
        fields.push_back(*s);
      else
        fields.push_back(std::get<WordSet>(cell).join(schema.delimiter()));
    }
    write_csv_record(out, fields);
  }
}

Dataset load_csv(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_csv(in, schema);
}

void save_csv(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_csv(out, dataset);
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace krew
