#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "krew/schema_io.hpp"

namespace krew {

// Unique words of a WordSet column, in first-occurrence order, with their
// total occurrence count across records.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> words, std::vector<std::size_t> counts);

  void add(const std::string& word, std::size_t count = 1);

  const std::vector<std::string>& words() const { return words_; }
  const std::vector<std::size_t>& counts() const { return counts_; }
  std::size_t size() const { return words_.size(); }
  bool empty() const { return words_.empty(); }

  std::optional<std::size_t> index_of(std::string_view word) const;
  bool contains(std::string_view word) const { return index_of(word).has_value(); }
  // Throws LookupError for unknown words.
  std::size_t count(std::string_view word) const;
  std::size_t total() const;
  // Ties resolved toward the earliest word.
  const std::string& most_frequent() const;

  bool operator==(const Vocabulary& o) const { return words_ == o.words_ && counts_ == o.counts_; }

 private:
  std::vector<std::string> words_;
  std::vector<std::size_t> counts_;
  std::unordered_map<std::string, std::size_t> index_;
};

Vocabulary unique_words(const Dataset& dataset, std::string_view column);
Vocabulary unique_words(const Dataset& dataset);

std::string tag_token(std::size_t record);

// One sequence per record: tag_j, w1, tag_j, w2, ..., tag_j.
struct TaggedCorpus {
  std::vector<std::vector<std::string>> sequences;
  // Records whose skillset was empty (their sequence is just the tag).
  std::vector<std::size_t> degenerate_records;

  // One sequence per line, tokens separated by single spaces.
  std::string dump() const;
};

TaggedCorpus build_tagged_corpus(const Dataset& dataset, std::string_view column);
TaggedCorpus build_tagged_corpus(const Dataset& dataset);

}  // namespace krew
