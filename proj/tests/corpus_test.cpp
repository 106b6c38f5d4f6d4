#include "krew/corpus.hpp"

#include "gtest/gtest.h"
#include "krew/error.hpp"

namespace krew {
namespace {

Dataset fixture() {
  const std::string dir = KREW_TEST_DATA_DIR;
  return load_csv(dir + "/table2.csv", Schema::load_manifest(dir + "/table2.schema"));
}

TEST(VocabularyTest, FixtureCounts) {
  const auto v = unique_words(fixture(), "skills");
  EXPECT_EQ(v.size(), 9u);
  EXPECT_EQ(v.count("HTML"), 4u);
  EXPECT_EQ(v.count("JavaScript"), 4u);
  EXPECT_EQ(v.count("Java"), 3u);
  EXPECT_EQ(v.count("C"), 1u);
  EXPECT_EQ(v.total(), 18u);
  EXPECT_EQ(v.most_frequent(), "HTML");
  EXPECT_THROW(v.count("Scala"), LookupError);
}

TEST(VocabularyTest, EmptyDataset) {
  const Dataset d(Schema({{"skills", ColumnKind::WordSet}}));
  EXPECT_TRUE(unique_words(d).empty());
}

TEST(VocabularyTest, NonWordSetColumnIsKindError) {
  const auto schema = Schema::parse_manifest("column: skills = wordset\ncolumn: city = categorical\n");
  const Dataset d(schema, {{WordSet::parse("A", ','), std::string("x")}});
  EXPECT_THROW(unique_words(d, "city"), KindError);
}

TEST(CorpusTest, TableThreeSequences) {
  const auto c = build_tagged_corpus(fixture(), "skills");
  ASSERT_EQ(c.sequences.size(), 7u);
  const std::vector<std::string> e1{"tag0", "C", "tag0", "C++", "tag0", "Java", "tag0"};
  const std::vector<std::string> e6{"tag5", "Python", "tag5", "R", "tag5"};
  EXPECT_EQ(c.sequences[0], e1);
  EXPECT_EQ(c.sequences[5], e6);
  EXPECT_TRUE(c.degenerate_records.empty());
}

TEST(CorpusTest, InterleavingInvariants) {
  const auto d = fixture();
  const auto c = build_tagged_corpus(d);
  for (std::size_t j = 0; j < c.sequences.size(); ++j) {
    const auto& seq = c.sequences[j];
    ASSERT_EQ(seq.size(), 2 * d.wordset(j).size() + 1);
    std::vector<std::string> words;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (i % 2 == 0) {
        EXPECT_EQ(seq[i], tag_token(j));
      } else {
        words.push_back(seq[i]);
      }
    }
    EXPECT_EQ(WordSet::from_tokens(words), d.wordset(j));
    for (std::size_t k = 0; k < c.sequences.size(); ++k)
      if (k != j)
        for (const auto& t : c.sequences[k]) EXPECT_NE(t, tag_token(j));
  }
}

TEST(CorpusTest, EmptySkillsetIsDegenerate) {
  const Dataset d(Schema({{"skills", ColumnKind::WordSet}}), {{WordSet::parse("A", ',')}, {WordSet{}}});
  const auto c = build_tagged_corpus(d);
  EXPECT_EQ(c.sequences[1], std::vector<std::string>{"tag1"});
  EXPECT_EQ(c.degenerate_records, std::vector<std::size_t>{1});
  EXPECT_EQ(c.dump(), "tag0 A tag0\ntag1\n");
}

}  // namespace
}  // namespace krew
