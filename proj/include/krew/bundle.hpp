#pragma once

#include <filesystem>
#include <string>

#include "krew/pipeline.hpp"

namespace krew {

inline constexpr int kBundleFormatVersion = 1;

struct ModelBundle {
  int version = kBundleFormatVersion;
  // Dataset kind the bundle generates, e.g. "task" or "worker".
  std::string label;
  TrainedPipeline pipeline;
};

// Directory with manifest.json (version, label, config, seed, per-file
// sha256) next to the schema, vocabulary, embeddings, mapper, transforms, the
// encoded header and raw little-endian float64 weight arrays.
void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir);
// IncompatibleError on an unknown version; CorruptionError naming the member
// when a file is missing, fails its checksum or does not parse.
ModelBundle load_bundle(const std::filesystem::path& dir);

std::string config_to_json(const PipelineConfig& config);
PipelineConfig config_from_json(const std::string& text);

}  // namespace krew
