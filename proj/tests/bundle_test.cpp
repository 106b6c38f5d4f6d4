#include "krew/bundle.hpp"

#include <sstream>

#include <json.hpp>

#include "gtest/gtest.h"
#include "krew/error.hpp"
#include "krew/util.hpp"

namespace krew {
namespace {

namespace fs = std::filesystem;

Dataset tasks() {
  const std::string dir = KREW_TEST_DATA_DIR;
  return load_csv(dir + "/tasks.csv", Schema::load_manifest(dir + "/tasks.schema"));
}

PipelineConfig quick(EncoderKind kind) {
  PipelineConfig c;
  c.encoder = kind;
  c.k = 4;
  c.embed.epochs = 50;
  c.gan.epochs = 3;
  c.gan.batch_size = 20;
  c.gan.noise_dim = 16;
  c.gan.generator_hidden = {32, 32};
  c.gan.discriminator_hidden = {32, 32};
  c.seed = 21;
  return c;
}

std::string csv_of(const Dataset& d) {
  std::ostringstream out;
  write_csv(out, d);
  return out.str();
}

class BundleTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("krew_bundle_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  static const ModelBundle& trained() {
    static const ModelBundle b{kBundleFormatVersion, "task", fit_pipeline(tasks(), quick(EncoderKind::ClusterCount))};
    return b;
  }

  fs::path dir_;
};

TEST_F(BundleTest, RoundTripIsExact) {
  save_bundle(trained(), dir_);
  const ModelBundle loaded = load_bundle(dir_);
  const auto& a = trained().pipeline;
  const auto& b = loaded.pipeline;
  EXPECT_EQ(loaded.label, "task");
  EXPECT_EQ(b.encoder, a.encoder);
  EXPECT_EQ(b.schema, a.schema);
  EXPECT_EQ(b.vocabulary, a.vocabulary);
  EXPECT_EQ(b.embeddings, a.embeddings);
  EXPECT_EQ(b.mapper, a.mapper);
  EXPECT_EQ(b.model.header, a.model.header);
  EXPECT_EQ(b.model.spec, a.model.spec);
  EXPECT_EQ(b.model.config, a.model.config);
  const auto ga = a.model.generator.state();
  const auto gb = b.model.generator.state();
  ASSERT_EQ(ga.size(), gb.size());
  for (std::size_t i = 0; i < ga.size(); ++i) EXPECT_EQ(*ga[i], *gb[i]);
  const auto da = a.model.discriminator.state();
  const auto db = b.model.discriminator.state();
  ASSERT_EQ(da.size(), db.size());
  for (std::size_t i = 0; i < da.size(); ++i) EXPECT_EQ(*da[i], *db[i]);
  EXPECT_EQ(csv_of(generate(b, 300, 17).dataset), csv_of(generate(a, 300, 17).dataset));

  // Saving the reloaded bundle reproduces every file byte for byte.
  const fs::path again = dir_ / "again";
  save_bundle(loaded, again);
  for (const auto& entry : fs::directory_iterator(dir_)) {
    if (!entry.is_regular_file()) continue;
    EXPECT_EQ(read_file(again / entry.path().filename()), read_file(entry.path())) << entry.path().filename();
  }
}

TEST_F(BundleTest, BaselineRoundTrip) {
  const ModelBundle b{kBundleFormatVersion, "worker", fit_pipeline(tasks(), quick(EncoderKind::OneHot))};
  save_bundle(b, dir_);
  EXPECT_FALSE(fs::exists(dir_ / "mapper.tsv"));
  const auto loaded = load_bundle(dir_);
  EXPECT_EQ(csv_of(generate(loaded.pipeline, 100, 2).dataset), csv_of(generate(b.pipeline, 100, 2).dataset));
}

TEST_F(BundleTest, FutureVersionIsIncompatible) {
  save_bundle(trained(), dir_);
  auto manifest = nlohmann::json::parse(read_file(dir_ / "manifest.json"));
  manifest["version"] = kBundleFormatVersion + 1;
  write_file(dir_ / "manifest.json", manifest.dump());
  EXPECT_THROW(load_bundle(dir_), IncompatibleError);
}

TEST_F(BundleTest, MissingMapperNamesTheMember) {
  save_bundle(trained(), dir_);
  fs::remove(dir_ / "mapper.tsv");
  try {
    load_bundle(dir_);
    FAIL() << "expected CorruptionError";
  } catch (const CorruptionError& e) {
    EXPECT_NE(std::string(e.what()).find("mapper.tsv"), std::string::npos) << e.what();
  }
}

TEST_F(BundleTest, TamperedWeightsFailChecksum) {
  save_bundle(trained(), dir_);
  std::string w = read_file(dir_ / "generator.f64");
  w[3] ^= 0x40;
  write_file(dir_ / "generator.f64", w);
  try {
    load_bundle(dir_);
    FAIL() << "expected CorruptionError";
  } catch (const CorruptionError& e) {
    EXPECT_NE(std::string(e.what()).find("generator.f64"), std::string::npos) << e.what();
  }
}

TEST_F(BundleTest, MissingDirectory) {
  EXPECT_THROW(load_bundle(dir_ / "nothing"), CorruptionError);
}

TEST(ConfigJsonTest, RoundTrip) {
  PipelineConfig c = quick(EncoderKind::MultiHot);
  c.k.reset();
  c.gan.learning_rate = 0.1 + 0.2;
  c.kmeans.distance = Distance::Cosine;
  const PipelineConfig back = config_from_json(config_to_json(c));
  EXPECT_EQ(back.encoder, c.encoder);
  EXPECT_FALSE(back.k.has_value());
  EXPECT_EQ(back.gan, c.gan);
  EXPECT_EQ(back.kmeans.distance, Distance::Cosine);
  EXPECT_EQ(back.embed.epochs, 50);
  EXPECT_THROW(config_from_json("{"), ParseError);
}

}  // namespace
}  // namespace krew
