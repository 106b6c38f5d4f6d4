#include "krew/service.hpp"

#include <cstdlib>
#include <random>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "krew/bundle.hpp"
#include "krew/error.hpp"
#include "krew/util.hpp"

namespace krew {

using nlohmann::json;

void BundleRegistry::add(const std::string& dataset, const std::string& kind,
                         std::shared_ptr<const TrainedPipeline> pipeline) {
  if (dataset.empty() || kind.empty()) throw ParameterError("dataset and kind must be named");
  if (kind == "both") throw ParameterError("\"both\" is not a bundle kind");
  entries_[dataset][kind] = std::move(pipeline);
}

void BundleRegistry::add_bundle(const std::string& dataset, const std::filesystem::path& dir) {
  ModelBundle b = load_bundle(dir);
  const std::string kind = b.label.empty() ? "task" : b.label;
  add(dataset, kind, std::make_shared<const TrainedPipeline>(std::move(b.pipeline)));
}

void BundleRegistry::scan(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw IoError(root.string() + " is not a directory");
  std::vector<fs::path> datasets;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) datasets.push_back(e.path());
  std::sort(datasets.begin(), datasets.end());
  for (const auto& d : datasets) {
    const std::string id = d.filename().string();
    if (fs::exists(d / "manifest.json")) {
      add_bundle(id, d);
      continue;
    }
    std::vector<fs::path> bundles;
    for (const auto& e : fs::directory_iterator(d))
      if (e.is_directory() && fs::exists(e.path() / "manifest.json")) bundles.push_back(e.path());
    std::sort(bundles.begin(), bundles.end());
    for (const auto& b : bundles) add_bundle(id, b);
  }
}

const TrainedPipeline* BundleRegistry::find(const std::string& dataset, const std::string& kind) const {
  auto d = entries_.find(dataset);
  if (d == entries_.end()) return nullptr;
  auto k = d->second.find(kind);
  return k == d->second.end() ? nullptr : k->second.get();
}

std::vector<std::pair<std::string, std::vector<std::string>>> BundleRegistry::datasets() const {
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  for (const auto& [id, kinds] : entries_) {
    std::vector<std::string> names;
    for (const auto& [k, p] : kinds) names.push_back(k);
    if (kinds.count("task") && kinds.count("worker")) names.push_back("both");
    out.emplace_back(id, std::move(names));
  }
  return out;
}

ServiceConfig service_config_from_env(ServiceConfig base) {
  const char* bind = std::getenv("KREW_BIND");
  if (!bind || !*bind) return base;
  const std::string s(bind);
  const auto colon = s.rfind(':');
  if (colon == std::string::npos) {
    base.host = s;
    return base;
  }
  if (colon > 0) base.host = s.substr(0, colon);
  try {
    const int port = std::stoi(s.substr(colon + 1));
    if (port < 0 || port > 65535) throw std::out_of_range("port");
    base.port = port;
  } catch (const std::exception&) {
    throw ConfigError("KREW_BIND: bad port in '" + s + "'");
  }
  return base;
}

namespace {

HttpReply error_reply(int status, const std::string& message) {
  return {status, "application/json", json{{"error", message}}.dump(), ""};
}

std::string render(const TrainedPipeline& p, std::size_t rows, std::uint64_t seed) {
  std::ostringstream out;
  write_csv(out, generate(p, rows, seed).dataset);
  return out.str();
}

void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace

std::string make_zip(const std::vector<std::pair<std::string, std::string>>& files) {
  constexpr std::uint16_t kDate = (0 << 9) | (1 << 5) | 1;  // 1980-01-01
  std::string out, central;
  for (const auto& [name, data] : files) {
    if (data.size() > 0xffffffffu || out.size() > 0xffffffffu) throw ParameterError("zip member too large");
    const auto offset = static_cast<std::uint32_t>(out.size());
    const std::uint32_t crc = crc32(data);
    const auto size = static_cast<std::uint32_t>(data.size());
    put_u32(out, 0x04034b50);
    put_u16(out, 20);
    put_u16(out, 0);
    put_u16(out, 0);  // stored
    put_u16(out, 0);
    put_u16(out, kDate);
    put_u32(out, crc);
    put_u32(out, size);
    put_u32(out, size);
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    put_u16(out, 0);
    out += name;
    out += data;

    put_u32(central, 0x02014b50);
    put_u16(central, 20);
    put_u16(central, 20);
    put_u16(central, 0);
    put_u16(central, 0);
    put_u16(central, 0);
    put_u16(central, kDate);
    put_u32(central, crc);
    put_u32(central, size);
    put_u32(central, size);
    put_u16(central, static_cast<std::uint16_t>(name.size()));
    put_u16(central, 0);
    put_u16(central, 0);
    put_u16(central, 0);
    put_u16(central, 0);
    put_u32(central, 0);
    put_u32(central, offset);
    central += name;
  }
  const auto cd_offset = static_cast<std::uint32_t>(out.size());
  out += central;
  put_u32(out, 0x06054b50);
  put_u16(out, 0);
  put_u16(out, 0);
  put_u16(out, static_cast<std::uint16_t>(files.size()));
  put_u16(out, static_cast<std::uint16_t>(files.size()));
  put_u32(out, static_cast<std::uint32_t>(central.size()));
  put_u32(out, cd_offset);
  put_u16(out, 0);
  return out;
}

HttpReply handle_health() { return {200, "text/plain", "ok", ""}; }

HttpReply handle_datasets(const BundleRegistry& registry, std::size_t row_cap) {
  json list = json::array();
  for (const auto& [id, kinds] : registry.datasets())
    list.push_back({{"id", id}, {"kinds", kinds}, {"row_cap", row_cap}});
  return {200, "application/json", list.dump(), ""};
}

HttpReply handle_generate(const BundleRegistry& registry, std::string_view body, std::size_t row_cap) {
  json req;
  try {
    req = json::parse(body);
  } catch (const json::exception&) {
    return error_reply(400, "request body is not valid JSON");
  }
  if (!req.is_object()) return error_reply(400, "request body must be a JSON object");
  if (!req.contains("dataset") || !req["dataset"].is_string()) return error_reply(400, "missing \"dataset\"");
  const std::string dataset = req["dataset"];
  const std::string kind = req.value("kind", std::string("task"));
  if (kind != "task" && kind != "worker" && kind != "both")
    return error_reply(400, "kind must be task, worker or both");
  if (!req.contains("rows") || !req["rows"].is_number_integer()) return error_reply(400, "\"rows\" must be an integer");
  const auto rows = req["rows"].get<std::int64_t>();
  if (rows <= 0) return error_reply(400, "rows must be positive");
  if (static_cast<std::uint64_t>(rows) > row_cap)
    return error_reply(400, "rows exceeds the cap of " + std::to_string(row_cap));
  std::uint64_t seed;
  if (req.contains("seed")) {
    if (!req["seed"].is_number_unsigned() && !req["seed"].is_number_integer())
      return error_reply(400, "\"seed\" must be an integer");
    seed = req["seed"].get<std::uint64_t>();
  } else {
    std::random_device rd;
    seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  }

  if (!registry.has_dataset(dataset)) return error_reply(404, "unknown dataset '" + dataset + "'");
  const std::string n = std::to_string(rows);
  try {
    if (kind == "both") {
      const auto* task = registry.find(dataset, "task");
      const auto* worker = registry.find(dataset, "worker");
      if (!task || !worker) return error_reply(404, "dataset '" + dataset + "' does not have both task and worker models");
      const std::string zip = make_zip({{dataset + "_task_" + n + ".csv", render(*task, rows, seed)},
                                        {dataset + "_worker_" + n + ".csv", render(*worker, rows, mix_seed(seed, 1))}});
      return {200, "application/zip", zip, dataset + "_both_" + n + ".zip"};
    }
    const auto* p = registry.find(dataset, kind);
    if (!p) return error_reply(404, "dataset '" + dataset + "' has no " + kind + " model");
    return {200, "text/csv", render(*p, static_cast<std::size_t>(rows), seed), dataset + "_" + kind + "_" + n + ".csv"};
  } catch (const std::exception& e) {
    return error_reply(500, std::string("generation failed: ") + e.what());
  }
}

GenerationService::GenerationService(std::shared_ptr<const BundleRegistry> registry, ServiceConfig config)
    : registry_(std::move(registry)), config_(std::move(config)), server_(std::make_unique<httplib::Server>()) {
  auto send = [](httplib::Response& res, const HttpReply& r) {
    res.status = r.status;
    if (!r.filename.empty())
      res.set_header("Content-Disposition", "attachment; filename=\"" + r.filename + "\"");
    res.set_content(r.body, r.content_type);
  };
  server_->set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server_->Get("/api/health", [send](const httplib::Request&, httplib::Response& res) { send(res, handle_health()); });
  server_->Get("/api/datasets", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, handle_datasets(*registry_, config_.row_cap));
  });
  server_->Post("/api/generate", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, handle_generate(*registry_, req.body, config_.row_cap));
  });
  server_->Options("/api/generate", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  server_->set_exception_handler([send](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
    send(res, error_reply(500, "internal error"));
  });
}

GenerationService::~GenerationService() { stop(); }

bool GenerationService::listen() { return server_->listen(config_.host, config_.port); }

int GenerationService::bind_any_port() { return server_->bind_to_any_port(config_.host); }

bool GenerationService::listen_after_bind() { return server_->listen_after_bind(); }

void GenerationService::stop() {
  if (server_) server_->stop();
}

void GenerationService::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace krew
