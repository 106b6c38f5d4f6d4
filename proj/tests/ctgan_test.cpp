#include "krew/ctgan/ctgan.hpp"

#include <cmath>
#include <set>

#include "gtest/gtest.h"
#include "krew/cluster.hpp"
#include "krew/encoders.hpp"
#include "krew/error.hpp"
#include "krew/schema_io.hpp"
#include "support/gradcheck.hpp"

namespace krew::ctgan {
namespace {

EncodedTable table_with(std::vector<EncodedColumn> cols, Eigen::MatrixXd values) {
  EncodedTable t;
  t.kind = EncoderKind::ClusterCount;
  t.source_schema = Schema({{"skills", ColumnKind::WordSet}, {"price", ColumnKind::Continuous}});
  t.columns = std::move(cols);
  t.values = std::move(values);
  return t;
}

EncodedColumn continuous_column(std::string name) {
  EncodedColumn c;
  c.name = std::move(name);
  c.continuous = true;
  c.source_column = 1;
  return c;
}

EncodedColumn count_column(int id) {
  EncodedColumn c;
  c.name = "cluster_" + std::to_string(id);
  c.origin = ColumnOrigin::SkillsetDerived;
  c.cluster = id;
  return c;
}

ClusterMapper example_mapper() {
  return ClusterMapper({{{"Python", "R"}, {1, 1}},
                        {{"HTML", "JavaScript"}, {4, 4}},
                        {{"C++", "C", "Java"}, {1, 1, 3}},
                        {{"PHP", "Node.js"}, {2, 1}}});
}

Dataset fixture() {
  const std::string dir = KREW_TEST_DATA_DIR;
  return load_csv(dir + "/table2.csv", Schema::load_manifest(dir + "/table2.schema"));
}

TEST(TransformTest, ConstantColumnHasOneModeAndZeroAlpha) {
  Eigen::MatrixXd v = Eigen::MatrixXd::Constant(6, 1, 42.0);
  const auto spec = fit_transforms(table_with({continuous_column("price")}, v));
  ASSERT_EQ(spec.columns().size(), 1u);
  EXPECT_EQ(spec.columns()[0].modes(), 1u);
  const auto t = spec.forward(v);
  for (Eigen::Index r = 0; r < t.rows(); ++r) EXPECT_EQ(t(r, 0), 0.0);
  EXPECT_EQ(spec.inverse(t), v);
}

TEST(TransformTest, CountColumnEnumeratesObservedValues) {
  Eigen::MatrixXd v(7, 1);
  v << 0, 1, 2, 3, 2, 0, 1;
  const auto spec = fit_transforms(table_with({count_column(0)}, v));
  EXPECT_EQ(spec.columns()[0].categories(), 4u);
  EXPECT_EQ(spec.cond_width(), 4u);
  EXPECT_EQ(spec.inverse(spec.forward(v)), v);
}

TEST(TransformTest, InverseOfForwardRestoresEveryCell) {
  Rng rng(3);
  Eigen::MatrixXd v(300, 2);
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const int mode = static_cast<int>(rng.below(3));
    v(r, 0) = mode * 500.0 + 20.0 * rng.normal() + (r == 7 ? 5000.0 : 0.0);
    v(r, 1) = static_cast<double>(rng.below(4));
  }
  const auto spec = fit_transforms(table_with({continuous_column("price"), count_column(0)}, v));
  EXPECT_GE(spec.columns()[0].modes(), 2u);
  EXPECT_LE(spec.columns()[0].modes(), 10u);
  const auto t = spec.forward(v);
  EXPECT_LE(t.col(0).cwiseAbs().maxCoeff(), 0.99 + 1e-12);
  const auto back = spec.inverse(t);
  EXPECT_LE((back - v).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(TransformTest, JsonRoundTrip) {
  Rng rng(4);
  Eigen::MatrixXd v(50, 2);
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    v(r, 0) = 100.0 * rng.normal();
    v(r, 1) = static_cast<double>(rng.below(3));
  }
  const auto spec = fit_transforms(table_with({continuous_column("price"), count_column(0)}, v));
  const auto back = TransformSpec::from_json(spec.to_json());
  EXPECT_EQ(back, spec);
  EXPECT_EQ(back.forward(v), spec.forward(v));
}

TEST(ConditionTest, SingleCategoryAlwaysChosen) {
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(5, 1);
  const auto spec = fit_transforms(table_with({count_column(0)}, v));
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const auto cv = sample_condition(spec, rng);
    EXPECT_EQ(cv.category, 0);
    EXPECT_EQ(cv.v.sum(), 1.0);
  }
}

TEST(ConditionTest, LogFrequencyWeights) {
  // Frequencies 1 and 3: weights log 2 and log 4, so category 1 is drawn
  // twice as often.
  Eigen::MatrixXd v(4, 1);
  v << 0, 1, 1, 1;
  const auto spec = fit_transforms(table_with({count_column(0)}, v));
  Rng rng(2);
  int ones = 0;
  const int draws = 30000;
  for (int i = 0; i < draws; ++i) ones += sample_condition(spec, rng).category;
  EXPECT_NEAR(static_cast<double>(ones) / draws, 2.0 / 3.0, 0.01);
}

TEST(ConditionTest, ExactlyOneHot) {
  Eigen::MatrixXd v(6, 2);
  v << 0, 1, 1, 0, 2, 1, 0, 0, 1, 1, 2, 0;
  const auto spec = fit_transforms(table_with({count_column(0), count_column(1)}, v));
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const auto cv = sample_condition(spec, rng);
    ASSERT_EQ(cv.v.size(), 5);
    ASSERT_EQ((cv.v.array() == 1.0).count(), 1);
    ASSERT_EQ(cv.v.sum(), 1.0);
  }
}

TEST(ConditionTest, NoDiscreteColumnsGivesEmptyVector) {
  Eigen::MatrixXd v(5, 1);
  v << 1, 2, 3, 4, 5;
  const auto spec = fit_transforms(table_with({continuous_column("price")}, v));
  Rng rng(1);
  const auto cv = sample_condition(spec, rng);
  EXPECT_EQ(cv.v.size(), 0);
  EXPECT_EQ(cv.column, -1);
}

TEST(GeneratorTest, OutputShapeAndGroupNormalization) {
  krew::testing::SmallGan gan;
  ad::Tape tape;
  Rng gumbel(11);
  const auto params = bind_tensors(tape, gan.generator.parameters(), false);
  const auto out = generator_forward(tape, gan.generator, params, gan.input, gan.spec, 0.2, &gumbel, true);
  const auto& act = out.activated.value();
  EXPECT_EQ(static_cast<std::size_t>(act.cols()), gan.spec.output_width());
  for (const auto& group : *gan.spec.segments()) {
    for (Eigen::Index r = 0; r < act.rows(); ++r) {
      if ((*gan.spec.alpha_mask())(0, group.front()) == 1.0) {
        EXPECT_GT(act(r, group.front()), -1.0);
        EXPECT_LT(act(r, group.front()), 1.0);
        continue;
      }
      double s = 0.0;
      for (int c : group) {
        EXPECT_GE(act(r, c), 0.0);
        s += act(r, c);
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(GeneratorTest, LowTemperatureApproachesOneHot) {
  // Head-only generator: logits equal the bias, gap 5 between slot 0 and the rest.
  Eigen::MatrixXd v(3, 1);
  v << 0, 1, 2;
  const auto spec = fit_transforms(table_with({count_column(0)}, v));
  Rng rng(1);
  Generator g(2, {}, spec.output_width(), rng);
  g.head.weight.setZero();
  g.head.bias << 5.0, 0.0, 0.0;
  ad::Tape tape;
  const auto params = bind_tensors(tape, g.parameters(), false);
  const Eigen::MatrixXd input = Eigen::MatrixXd::Zero(4, 2);
  const auto plain = generator_forward(tape, g, params, input, spec, 0.01, nullptr, false).activated.value();
  for (Eigen::Index r = 0; r < plain.rows(); ++r) EXPECT_GT(plain(r, 0), 0.99);

  Rng gumbel(5), oracle(5);
  const auto noisy = generator_forward(tape, g, params, input, spec, 0.01, &gumbel, false).activated.value();
  for (Eigen::Index r = 0; r < noisy.rows(); ++r) {
    Eigen::RowVector3d z;
    for (int c = 0; c < 3; ++c) z(c) = (g.head.bias(0, c) + oracle.gumbel()) / 0.01;
    const Eigen::RowVector3d e = (z.array() - z.maxCoeff()).exp();
    const Eigen::RowVector3d expected = e / e.sum();
    EXPECT_LE((noisy.row(r) - expected).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_GT(noisy.row(r).maxCoeff(), 0.99);
  }
}

TEST(TrainTest, ConfigValidation) {
  TrainConfig c;
  c.batch_size = 33;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(TrainConfig{}.validate());
}

TEST(TrainTest, TwentyRowBatchFormsTwoPacks) {
  krew::testing::SmallGan gan;
  Rng rng(1);
  Discriminator d(gan.spec.output_width() + gan.spec.cond_width(), {4}, 10, rng);
  ad::Tape tape;
  const auto params = bind_tensors(tape, d.parameters(), false);
  const Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(20, static_cast<Eigen::Index>(d.row_width()));
  EXPECT_EQ(discriminator_forward(d, params, tape.constant(rows), 0.2, {}).rows(), 2);
}

EncodedTable upsampled_fixture_encoding(std::size_t rows) {
  const auto base = encode_cluster_counts(fixture(), example_mapper());
  EncodedTable t = base;
  t.values.resize(static_cast<Eigen::Index>(rows), base.values.cols());
  for (std::size_t r = 0; r < rows; ++r) t.values.row(static_cast<Eigen::Index>(r)) = base.values.row(static_cast<Eigen::Index>(r % base.rows()));
  return t;
}

TrainConfig small_config(int epochs, std::uint64_t seed) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 20;
  c.noise_dim = 16;
  c.generator_hidden = {32, 32};
  c.discriminator_hidden = {32, 32};
  c.seed = seed;
  return c;
}

TEST(TrainTest, SmokeRunGivesFiniteLossesAndValidSamples) {
  const auto encoded = upsampled_fixture_encoding(200);
  std::vector<EpochStats> log;
  int steps = 0;
  TrainHooks hooks{[&](const EpochStats& s) { log.push_back(s); }, [&] { ++steps; }};
  const auto model = train(encoded, small_config(10, 3), hooks);
  ASSERT_EQ(log.size(), 10u);
  for (const auto& s : log) {
    EXPECT_TRUE(std::isfinite(s.loss_d));
    EXPECT_TRUE(std::isfinite(s.loss_g));
    EXPECT_GE(s.wall_ms, 0.0);
  }
  EXPECT_EQ(steps, 100);
  const auto sampled = sample(model, 1000, 9);
  ASSERT_EQ(sampled.rows(), 1000u);
  ASSERT_EQ(sampled.width(), encoded.width());
  for (std::size_t c = 0; c < encoded.width(); ++c) {
    std::set<double> seen(encoded.values.col(static_cast<Eigen::Index>(c)).begin(),
                          encoded.values.col(static_cast<Eigen::Index>(c)).end());
    for (Eigen::Index r = 0; r < sampled.values.rows(); ++r)
      ASSERT_TRUE(seen.count(sampled.values(r, static_cast<Eigen::Index>(c)))) << "column " << c;
  }
  const auto decoded = decode_cluster_counts(sampled, example_mapper(), 4);
  EXPECT_EQ(decoded.row_count(), 1000u);
}

TEST(TrainTest, DeterministicPerSeed) {
  const auto encoded = upsampled_fixture_encoding(60);
  const auto a = train(encoded, small_config(3, 8));
  const auto b = train(encoded, small_config(3, 8));
  EXPECT_EQ(sample(a, 200, 1).values, sample(b, 200, 1).values);
  EXPECT_EQ(sample_transformed(a, 50, 2), sample_transformed(b, 50, 2));
  EXPECT_THROW(sample(a, 0, 1), ParameterError);
}

TEST(TrainTest, PenaltyCrossCheckAgreesDuringTraining) {
  auto config = small_config(1, 4);
  config.generator_hidden = {8};
  config.discriminator_hidden = {8};
  config.check_penalty = true;
  EXPECT_NO_THROW(train(upsampled_fixture_encoding(20), config));
}

TEST(TrainTest, ConditioningSteersTheConditionedSlot) {
  const auto encoded = upsampled_fixture_encoding(200);
  TrainConfig config;
  config.epochs = 300;
  config.seed = 5;
  const auto model = train(encoded, config);
  // Column 0 is Cul1 ({Python, R}); category 1 is the count 2.
  const auto& col = model.spec.columns()[model.spec.discrete_columns()[0]];
  ASSERT_EQ(col.values.size(), 2u);
  const auto s = sample_conditioned(model, 500, 0, 1, 3);
  const auto hits = (s.values.col(0).array() == col.values[1]).count();
  EXPECT_GE(static_cast<double>(hits) / 500.0, 0.7);
}

}  // namespace
}  // namespace krew::ctgan
