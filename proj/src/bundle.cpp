#include "krew/bundle.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include <json.hpp>

#include "krew/error.hpp"
#include "krew/util.hpp"

namespace krew {

using nlohmann::json;

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kSchema = "schema.txt";
constexpr const char* kHeader = "header.json";
constexpr const char* kVocabulary = "vocabulary.tsv";
constexpr const char* kEmbeddings = "embeddings.txt";
constexpr const char* kMapper = "mapper.tsv";
constexpr const char* kTransforms = "transforms.json";
constexpr const char* kGenerator = "generator.f64";
constexpr const char* kDiscriminator = "discriminator.f64";

static_assert(std::endian::native == std::endian::little, "weight files are written in native order");

json header_json(const EncodedTable& t) {
  json cols = json::array();
  for (const auto& c : t.columns) {
    cols.push_back({{"name", c.name},
                    {"origin", c.origin == ColumnOrigin::Passthrough ? "passthrough" : "skillset"},
                    {"continuous", c.continuous},
                    {"categories", c.categories},
                    {"source_column", c.source_column},
                    {"skillset", c.skillset.tokens()},
                    {"cluster", c.cluster}});
  }
  return {{"kind", std::string(to_string(t.kind))}, {"mapper_hash", t.mapper_hash}, {"columns", cols}};
}

EncodedTable header_from_json(const json& j, const Schema& schema) {
  EncodedTable t;
  t.kind = parse_encoder_kind(j.at("kind").get<std::string>());
  t.mapper_hash = j.at("mapper_hash").get<std::string>();
  t.source_schema = schema;
  for (const auto& c : j.at("columns")) {
    EncodedColumn col;
    col.name = c.at("name").get<std::string>();
    col.origin = c.at("origin").get<std::string>() == "passthrough" ? ColumnOrigin::Passthrough
                                                                     : ColumnOrigin::SkillsetDerived;
    col.continuous = c.at("continuous").get<bool>();
    col.categories = c.at("categories").get<std::vector<std::string>>();
    col.source_column = c.at("source_column").get<std::size_t>();
    col.skillset = WordSet::from_tokens(c.at("skillset").get<std::vector<std::string>>());
    col.cluster = c.at("cluster").get<int>();
    t.columns.push_back(std::move(col));
  }
  t.values.resize(0, static_cast<Eigen::Index>(t.columns.size()));
  return t;
}

std::string vocabulary_text(const Vocabulary& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += v.words()[i] + "\t" + std::to_string(v.counts()[i]) + "\n";
  return out;
}

Vocabulary parse_vocabulary(const std::string& text) {
  std::vector<std::string> words;
  std::vector<std::size_t> counts;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw ParseError("vocabulary line without a count");
    words.push_back(line.substr(0, tab));
    counts.push_back(std::stoull(line.substr(tab + 1)));
  }
  return Vocabulary(std::move(words), std::move(counts));
}

template <class Tensors>
std::string pack(const Tensors& tensors) {
  std::string out;
  for (const auto* m : tensors) {
    // Row-major so the file reads naturally as in x out.
    for (Eigen::Index r = 0; r < m->rows(); ++r)
      for (Eigen::Index c = 0; c < m->cols(); ++c) {
        const double x = (*m)(r, c);
        char b[sizeof(double)];
        std::memcpy(b, &x, sizeof b);
        out.append(b, sizeof b);
      }
  }
  return out;
}

void unpack(const std::string& bytes, const std::vector<ctgan::Matrix*>& tensors, const char* member) {
  std::size_t expected = 0;
  for (const auto* m : tensors) expected += static_cast<std::size_t>(m->size()) * sizeof(double);
  if (bytes.size() != expected)
    throw CorruptionError(std::string(member) + ": expected " + std::to_string(expected) + " bytes, found " +
                          std::to_string(bytes.size()));
  std::size_t off = 0;
  for (auto* m : tensors)
    for (Eigen::Index r = 0; r < m->rows(); ++r)
      for (Eigen::Index c = 0; c < m->cols(); ++c) {
        double x;
        std::memcpy(&x, bytes.data() + off, sizeof x);
        off += sizeof x;
        if (!std::isfinite(x)) throw CorruptionError(std::string(member) + ": non-finite weight");
        (*m)(r, c) = x;
      }
}

json gan_json(const ctgan::TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"pac", c.pac},
          {"noise_dim", c.noise_dim},
          {"generator_hidden", c.generator_hidden},
          {"discriminator_hidden", c.discriminator_hidden},
          {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"penalty_weight", c.penalty_weight},
          {"temperature", c.temperature},
          {"dropout", c.dropout},
          {"leaky_slope", c.leaky_slope},
          {"discriminator_steps", c.discriminator_steps},
          {"check_penalty", c.check_penalty},
          {"seed", c.seed}};
}

ctgan::TrainConfig gan_from_json(const json& j) {
  ctgan::TrainConfig c;
  c.epochs = j.at("epochs");
  c.batch_size = j.at("batch_size");
  c.pac = j.at("pac");
  c.noise_dim = j.at("noise_dim");
  c.generator_hidden = j.at("generator_hidden").get<std::vector<int>>();
  c.discriminator_hidden = j.at("discriminator_hidden").get<std::vector<int>>();
  c.learning_rate = j.at("learning_rate");
  c.beta1 = j.at("beta1");
  c.beta2 = j.at("beta2");
  c.penalty_weight = j.at("penalty_weight");
  c.temperature = j.at("temperature");
  c.dropout = j.at("dropout");
  c.leaky_slope = j.at("leaky_slope");
  c.discriminator_steps = j.at("discriminator_steps");
  c.check_penalty = j.at("check_penalty");
  c.seed = j.at("seed");
  return c;
}

std::string read_member(const std::filesystem::path& dir, const std::string& name) {
  try {
    return read_file(dir / name);
  } catch (const IoError&) {
    throw CorruptionError("bundle member " + name + " is missing");
  }
}

}  // namespace

std::string config_to_json(const PipelineConfig& c) {
  json j = {{"encoder", std::string(to_string(c.encoder))},
            {"embed",
             {{"dim", c.embed.dim},
              {"epochs", c.embed.epochs},
              {"learning_rate", c.embed.learning_rate},
              {"negatives", c.embed.negatives},
              {"seed", c.embed.seed}}},
            {"k", c.k ? json(*c.k) : json(nullptr)},
            {"k_min", c.k_min},
            {"k_max", c.k_max},
            {"kmeans",
             {{"max_iterations", c.kmeans.max_iterations},
              {"distance", c.kmeans.distance == Distance::Cosine ? "cosine" : "euclidean"}}},
            {"gan", gan_json(c.gan)},
            {"seed", c.seed}};
  return j.dump(2);
}

PipelineConfig config_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    PipelineConfig c;
    c.encoder = parse_encoder_kind(j.at("encoder").get<std::string>());
    const auto& e = j.at("embed");
    c.embed.dim = e.at("dim");
    c.embed.epochs = e.at("epochs");
    c.embed.learning_rate = e.at("learning_rate");
    c.embed.negatives = e.at("negatives");
    c.embed.seed = e.at("seed");
    if (!j.at("k").is_null()) c.k = j.at("k").get<int>();
    c.k_min = j.at("k_min");
    c.k_max = j.at("k_max");
    c.kmeans.max_iterations = j.at("kmeans").at("max_iterations");
    c.kmeans.distance = j.at("kmeans").at("distance") == "cosine" ? Distance::Cosine : Distance::Euclidean;
    c.gan = gan_from_json(j.at("gan"));
    c.seed = j.at("seed");
    return c;
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir) {
  const TrainedPipeline& p = bundle.pipeline;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  std::vector<std::pair<std::string, std::string>> members;
  members.emplace_back(kSchema, p.schema.to_manifest());
  members.emplace_back(kHeader, header_json(p.model.header).dump(2));
  members.emplace_back(kVocabulary, vocabulary_text(p.vocabulary));
  if (p.encoder == EncoderKind::ClusterCount) {
    members.emplace_back(kEmbeddings, p.embeddings.export_text());
    members.emplace_back(kMapper, p.mapper.export_text());
  }
  members.emplace_back(kTransforms, p.model.spec.to_json());
  members.emplace_back(kGenerator, pack(p.model.generator.state()));
  members.emplace_back(kDiscriminator, pack(p.model.discriminator.state()));

  json files = json::object();
  for (const auto& [name, bytes] : members) {
    write_file(dir / name, bytes);
    files[name] = sha256_hex(bytes);
  }
  json manifest = {{"format", "krew-bundle"},
                   {"version", bundle.version},
                   {"label", bundle.label},
                   {"encoder", std::string(to_string(p.encoder))},
                   {"seed", p.config.seed},
                   {"embedding_seed", p.embeddings.seed()},
                   {"config", json::parse(config_to_json(p.config))},
                   {"training", gan_json(p.model.config)},
                   {"elbow", {{"ks", p.elbow.ks}, {"inertia", p.elbow.inertia}}},
                   {"files", files}};
  write_file(dir / kManifest, manifest.dump(2) + "\n");
}

ModelBundle load_bundle(const std::filesystem::path& dir) {
  const std::string manifest_text = read_member(dir, kManifest);
  json manifest;
  try {
    manifest = json::parse(manifest_text);
  } catch (const json::exception& e) {
    throw CorruptionError(std::string(kManifest) + ": " + e.what());
  }

  ModelBundle b;
  try {
    if (manifest.at("format") != "krew-bundle") throw CorruptionError(std::string(kManifest) + ": not a bundle");
    b.version = manifest.at("version").get<int>();
  } catch (const json::exception& e) {
    throw CorruptionError(std::string(kManifest) + ": " + e.what());
  }
  if (b.version != kBundleFormatVersion)
    throw IncompatibleError("bundle format version " + std::to_string(b.version) + " is not supported (expected " +
                            std::to_string(kBundleFormatVersion) + ")");

  const json files = manifest.value("files", json::object());
  auto member = [&](const char* name) {
    if (!files.contains(name)) throw CorruptionError(std::string("bundle member ") + name + " is not listed");
    std::string bytes = read_member(dir, name);
    if (sha256_hex(bytes) != files.at(name).get<std::string>())
      throw CorruptionError(std::string("bundle member ") + name + " fails its checksum");
    return bytes;
  };
  auto parsed = [&](const char* name, auto&& fn) {
    std::string bytes = member(name);
    try {
      return fn(bytes);
    } catch (const CorruptionError&) {
      throw;
    } catch (const std::exception& e) {
      throw CorruptionError(std::string("bundle member ") + name + ": " + e.what());
    }
  };

  TrainedPipeline& p = b.pipeline;
  try {
    b.label = manifest.at("label").get<std::string>();
    p.encoder = parse_encoder_kind(manifest.at("encoder").get<std::string>());
    p.config = config_from_json(manifest.at("config").dump());
    p.model.config = gan_from_json(manifest.at("training"));
    p.elbow.ks = manifest.at("elbow").at("ks").get<std::vector<int>>();
    p.elbow.inertia = manifest.at("elbow").at("inertia").get<std::vector<double>>();
  } catch (const CorruptionError&) {
    throw;
  } catch (const std::exception& e) {
    throw CorruptionError(std::string(kManifest) + ": " + e.what());
  }

  p.schema = parsed(kSchema, [](const std::string& s) { return Schema::parse_manifest(s); });
  p.model.header = parsed(kHeader, [&](const std::string& s) { return header_from_json(json::parse(s), p.schema); });
  p.vocabulary = parsed(kVocabulary, [](const std::string& s) { return parse_vocabulary(s); });
  if (p.encoder == EncoderKind::ClusterCount) {
    const auto seed = manifest.value("embedding_seed", std::uint64_t{0});
    p.embeddings = parsed(kEmbeddings, [&](const std::string& s) { return EmbeddingModel::parse_text(s, seed); });
    p.mapper = parsed(kMapper, [](const std::string& s) { return ClusterMapper::parse_text(s); });
    if (p.mapper.size() != p.model.header.skillset_width())
      throw CorruptionError(std::string("bundle member ") + kMapper + " does not match the encoded header");
  }
  p.model.spec = parsed(kTransforms, [](const std::string& s) { return ctgan::TransformSpec::from_json(s); });
  if (p.model.spec.encoded_width() != p.model.header.width())
    throw CorruptionError(std::string("bundle member ") + kTransforms + " does not match the encoded header");

  const auto& gc = p.model.config;
  const std::size_t cond = p.model.spec.cond_width();
  Rng dummy(0);
  p.model.generator = ctgan::Generator(static_cast<std::size_t>(gc.noise_dim) + cond, gc.generator_hidden,
                                       p.model.spec.output_width(), dummy);
  p.model.discriminator =
      ctgan::Discriminator(p.model.spec.output_width() + cond, gc.discriminator_hidden, gc.pac, dummy);
  unpack(member(kGenerator), p.model.generator.state(), kGenerator);
  unpack(member(kDiscriminator), p.model.discriminator.state(), kDiscriminator);
  return b;
}

}  // namespace krew
