#include "krew/corpus.hpp"

#include <numeric>

#include "krew/error.hpp"

namespace krew {

Vocabulary::Vocabulary(std::vector<std::string> words, std::vector<std::size_t> counts) {
  if (words.size() != counts.size())
    throw ConsistencyError("vocabulary words and counts differ in length");
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (counts[i] == 0) throw ConsistencyError("vocabulary count for '" + words[i] + "' is zero");
    if (contains(words[i])) throw ConsistencyError("duplicate vocabulary word '" + words[i] + "'");
    add(words[i], counts[i]);
  }
}

void Vocabulary::add(const std::string& word, std::size_t count) {
  auto [it, inserted] = index_.try_emplace(word, words_.size());
  if (inserted) {
    words_.push_back(word);
    counts_.push_back(count);
  } else {
    counts_[it->second] += count;
  }
}

std::optional<std::size_t> Vocabulary::index_of(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Vocabulary::count(std::string_view word) const {
  const auto i = index_of(word);
  if (!i) throw LookupError("word '" + std::string(word) + "' is not in the vocabulary");
  return counts_[*i];
}

std::size_t Vocabulary::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0});
}

const std::string& Vocabulary::most_frequent() const {
  if (words_.empty()) throw LookupError("empty vocabulary");
  std::size_t best = 0;
  for (std::size_t i = 1; i < counts_.size(); ++i)
    if (counts_[i] > counts_[best]) best = i;
  return words_[best];
}

namespace {

std::size_t require_wordset(const Dataset& dataset, std::string_view column) {
  const auto idx = dataset.schema().index_of(column);
  if (!idx) throw SchemaError("no column named '" + std::string(column) + "'");
  if (dataset.schema().columns()[*idx].kind != ColumnKind::WordSet)
    throw KindError("column '" + std::string(column) + "' is not a wordset column");
  return *idx;
}

}  // namespace

Vocabulary unique_words(const Dataset& dataset, std::string_view column) {
  const auto idx = require_wordset(dataset, column);
  Vocabulary vocab;
  for (const auto& row : dataset.rows())
    for (const auto& w : std::get<WordSet>(row[idx])) vocab.add(w);
  return vocab;
}

Vocabulary unique_words(const Dataset& dataset) {
  return unique_words(dataset, dataset.schema().wordset_name());
}

std::string tag_token(std::size_t record) { return "tag" + std::to_string(record); }

std::string TaggedCorpus::dump() const {
  std::string out;
  for (const auto& seq : sequences) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (i) out += ' ';
      out += seq[i];
    }
    out += '\n';
  }
  return out;
}

TaggedCorpus build_tagged_corpus(const Dataset& dataset, std::string_view column) {
  const auto idx = require_wordset(dataset, column);
  const auto vocab = unique_words(dataset, column);
  TaggedCorpus corpus;
  corpus.sequences.reserve(dataset.row_count());
  for (std::size_t j = 0; j < dataset.row_count(); ++j) {
    const auto tag = tag_token(j);
    if (vocab.contains(tag))
      throw ConsistencyError("skill '" + tag + "' collides with a corpus tag token");
    const auto& skills = std::get<WordSet>(dataset.rows()[j][idx]);
    std::vector<std::string> seq;
    seq.reserve(2 * skills.size() + 1);
    seq.push_back(tag);
    for (const auto& w : skills) {
      seq.push_back(w);
      seq.push_back(tag);
    }
    if (skills.empty()) corpus.degenerate_records.push_back(j);
    corpus.sequences.push_back(std::move(seq));
  }
  return corpus;
}

TaggedCorpus build_tagged_corpus(const Dataset& dataset) {
  return build_tagged_corpus(dataset, dataset.schema().wordset_name());
}

}  // namespace krew
