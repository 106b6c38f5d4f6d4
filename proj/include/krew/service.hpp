#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "krew/pipeline.hpp"

namespace httplib {
class Server;
}

namespace krew {

inline constexpr std::size_t kDefaultRowCap = 100000;

// dataset id -> kind ("task", "worker") -> trained pipeline. Immutable once
// serving starts.
class BundleRegistry {
 public:
  void add(const std::string& dataset, const std::string& kind, std::shared_ptr<const TrainedPipeline> pipeline);
  // Loads a bundle directory; its label is the kind.
  void add_bundle(const std::string& dataset, const std::filesystem::path& dir);
  // <root>/<dataset>/<any>/manifest.json, or <root>/<dataset>/manifest.json.
  void scan(const std::filesystem::path& root);

  const TrainedPipeline* find(const std::string& dataset, const std::string& kind) const;
  bool has_dataset(const std::string& dataset) const { return entries_.count(dataset) > 0; }
  // Sorted by id; kinds sorted, plus "both" when task and worker exist.
  std::vector<std::pair<std::string, std::vector<std::string>>> datasets() const;
  bool empty() const { return entries_.empty(); }

 private:
  std::map<std::string, std::map<std::string, std::shared_ptr<const TrainedPipeline>>> entries_;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t row_cap = kDefaultRowCap;
};

// KREW_BIND="host:port", "host" or ":port" overrides the defaults.
ServiceConfig service_config_from_env(ServiceConfig base = {});

struct HttpReply {
  int status = 200;
  std::string content_type = "text/plain";
  std::string body;
  std::string filename;  // Content-Disposition attachment when non-empty
};

// Request handlers without the transport, for direct testing.
HttpReply handle_health();
HttpReply handle_datasets(const BundleRegistry& registry, std::size_t row_cap);
// Body: {"dataset": id, "kind": "task"|"worker"|"both", "rows": n, "seed"?: s}.
HttpReply handle_generate(const BundleRegistry& registry, std::string_view body, std::size_t row_cap);

// Stored (uncompressed) zip archive.
std::string make_zip(const std::vector<std::pair<std::string, std::string>>& files);

class GenerationService {
 public:
  GenerationService(std::shared_ptr<const BundleRegistry> registry, ServiceConfig config);
  ~GenerationService();

  // Blocks until stop().
  bool listen();
  // Binds an ephemeral port on config.host; returns it, or -1.
  int bind_any_port();
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  std::shared_ptr<const BundleRegistry> registry_;
  ServiceConfig config_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace krew
