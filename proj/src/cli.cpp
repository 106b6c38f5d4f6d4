#include "krew/cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "krew/bench.hpp"
#include "krew/bundle.hpp"
#include "krew/error.hpp"
#include "krew/metrics.hpp"
#include "krew/service.hpp"

namespace krew {

namespace {

const CLI::Validator kPositive(
    [](std::string& text) -> std::string {
      try {
        std::size_t used = 0;
        const long long v = std::stoll(text, &used);
        if (used == text.size() && v > 0) return {};
      } catch (const std::exception&) {
      }
      return "must be a positive integer, got '" + text + "'";
    },
    "POSITIVE");

struct GanFlags {
  int epochs = 350;
  int batch = 60;
  int pac = 10;
  int noise = 128;
  int hidden = 256;

  void add(CLI::App* cmd) {
    cmd->add_option("--epochs", epochs, "GAN training epochs")->check(kPositive)->capture_default_str();
    cmd->add_option("--batch", batch, "Batch size (multiple of --pac)")->check(kPositive)->capture_default_str();
    cmd->add_option("--pac", pac, "Discriminator pack size")->check(kPositive)->capture_default_str();
    cmd->add_option("--noise", noise, "Noise dimension")->check(kPositive)->capture_default_str();
    cmd->add_option("--hidden", hidden, "Hidden width of both networks")->check(kPositive)->capture_default_str();
  }
  void apply(ctgan::TrainConfig& c) const {
    c.epochs = epochs;
    c.batch_size = batch;
    c.pac = pac;
    c.noise_dim = noise;
    c.generator_hidden = {hidden, hidden};
    c.discriminator_hidden = {hidden, hidden};
  }
};

struct ClusterFlags {
  int k = 0;
  int k_min = 2;
  int k_max = 10;
  int embed_epochs = 200;
  int dim = 32;
  std::string distance = "euclidean";

  void add(CLI::App* cmd) {
    cmd->add_option("--k", k, "Number of skill clusters (elbow when omitted)")->check(kPositive);
    cmd->add_option("--k-min", k_min, "Elbow search lower bound")->check(kPositive)->capture_default_str();
    cmd->add_option("--k-max", k_max, "Elbow search upper bound")->check(kPositive)->capture_default_str();
    cmd->add_option("--embed-epochs", embed_epochs, "word2vec epochs")->check(kPositive)->capture_default_str();
    cmd->add_option("--dim", dim, "Embedding dimension")->check(kPositive)->capture_default_str();
    cmd->add_option("--distance", distance, "k-means distance")
        ->check(CLI::IsMember({"euclidean", "cosine"}))
        ->capture_default_str();
  }
  void apply(PipelineConfig& c) const {
    if (k > 0) c.k = k;
    c.k_min = k_min;
    c.k_max = k_max;
    c.embed.epochs = embed_epochs;
    c.embed.dim = dim;
    c.kmeans.distance = distance == "cosine" ? Distance::Cosine : Distance::Euclidean;
  }
};

std::vector<EncoderKind> parse_encoders(const std::string& list) {
  std::vector<EncoderKind> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_encoder_kind(std::string(trim(item))));
  if (out.empty()) throw ParameterError("no encoders given");
  return out;
}

// "-" is standard output.
void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f << text;
  if (!f) throw IoError("failed writing " + path);
}

Schema schema_for(const std::string& data, const std::string& schema) {
  if (!schema.empty()) return Schema::load_manifest(schema);
  std::filesystem::path p(data);
  p.replace_extension(".schema");
  return Schema::load_manifest(p);
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Synthetic skillset table generator", "krew"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Fit embeddings, clusters and the GAN; write a bundle");
  std::string data, schema_path, bundle_out, label = "task", encoder = "cluster-count";
  std::uint64_t seed = 0;
  bool verbose = false;
  GanFlags gan;
  ClusterFlags clusters;
  train->add_option("--data", data, "Source CSV")->required()->check(CLI::ExistingFile);
  train->add_option("--schema", schema_path, "Schema manifest (default: <data>.schema)");
  train->add_option("--out", bundle_out, "Bundle directory")->required();
  train->add_option("--label", label, "Dataset kind stored in the bundle")->capture_default_str();
  train->add_option("--encoder", encoder, "Skillset encoder")
      ->check(CLI::IsMember({"one-hot", "multi-hot", "cluster-count"}))
      ->capture_default_str();
  train->add_option("--seed", seed, "Master seed")->capture_default_str();
  train->add_flag("-v,--verbose", verbose, "Print per-epoch losses");
  gan.add(train);
  clusters.add(train);

  // generate
  auto* gen = app.add_subcommand("generate", "Sample a synthetic table from a bundle");
  std::string bundle_dir, gen_out = "-";
  long long rows = 0;
  std::uint64_t gen_seed = 0;
  gen->add_option("--bundle", bundle_dir, "Bundle directory")->required();
  gen->add_option("--rows", rows, "Rows to generate")->required()->check(kPositive);
  gen->add_option("--seed", gen_seed, "Sampling seed")->capture_default_str();
  gen->add_option("--out", gen_out, "Output CSV ('-' for stdout)")->capture_default_str();

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Metric report for a source and a synthetic table");
  std::string source, synthetic, eval_schema, report_out = "-", pca_out, eval_bundle, embeddings_file;
  int bins = 10;
  eval->add_option("--source", source, "Source CSV")->required()->check(CLI::ExistingFile);
  eval->add_option("--synthetic", synthetic, "Synthetic CSV")->required()->check(CLI::ExistingFile);
  eval->add_option("--schema", eval_schema, "Schema manifest (default: <source>.schema)");
  eval->add_option("--out", report_out, "Report CSV ('-' for stdout)")->capture_default_str();
  eval->add_option("--pca", pca_out, "Also write PCA coordinates to this CSV");
  eval->add_option("--bins", bins, "Histogram bins for continuous columns")->check(kPositive)->capture_default_str();
  auto* eb = eval->add_option("--bundle", eval_bundle, "Use this bundle's word vectors for skillset matching");
  eval->add_option("--skillset-embeddings", embeddings_file, "External skillset vectors (signature<TAB>values)")
      ->excludes(eb)
      ->check(CLI::ExistingFile);

  // bench
  auto* bench = app.add_subcommand("bench", "Time and memory of the three encoders");
  std::string bench_data, bench_schema, bench_out = "-", encoders = "one-hot,multi-hot,cluster-count";
  std::uint64_t bench_seed = 0;
  GanFlags bench_gan;
  ClusterFlags bench_clusters;
  bench->add_option("--data", bench_data, "Source CSV")->required()->check(CLI::ExistingFile);
  bench->add_option("--schema", bench_schema, "Schema manifest (default: <data>.schema)");
  bench->add_option("--out", bench_out, "Report CSV ('-' for stdout)")->capture_default_str();
  bench->add_option("--encoders", encoders, "Comma-separated variants")->capture_default_str();
  bench->add_option("--seed", bench_seed, "Seed")->capture_default_str();
  bench_gan.add(bench);
  bench_clusters.add(bench);

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP generation service");
  std::string bundles_root;
  std::vector<std::string> bundle_specs;
  std::string host;
  int port = -1;
  std::size_t row_cap = kDefaultRowCap;
  serve->add_option("--bundles", bundles_root, "Directory of <dataset>/<bundle> directories");
  serve->add_option("--bundle", bundle_specs, "dataset=DIR; repeatable");
  serve->add_option("--host", host, "Bind host (overrides KREW_BIND)");
  serve->add_option("--port", port, "Bind port (overrides KREW_BIND)")->check(CLI::Range(0, 65535));
  serve->add_option("--row-cap", row_cap, "Largest rows value accepted")->check(kPositive)->capture_default_str();

  std::vector<std::string> argv_store;
  argv_store.push_back("krew");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const CLI::App* sub = nullptr;
    for (auto* s : app.get_subcommands()) sub = s;
    err << (sub ? sub->help() : app.help());
    return 2;
  }

  try {
    if (*train) {
      const Schema schema = schema_for(data, schema_path);
      const Dataset dataset = load_csv(data, schema);
      PipelineConfig pc;
      pc.encoder = parse_encoder_kind(encoder);
      pc.seed = seed;
      gan.apply(pc.gan);
      clusters.apply(pc);
      ctgan::TrainHooks hooks;
      if (verbose)
        hooks.on_epoch = [&](const ctgan::EpochStats& s) {
          err << "epoch " << s.epoch + 1 << " loss_d " << s.loss_d << " loss_g " << s.loss_g << " " << s.wall_ms
              << " ms\n";
        };
      ModelBundle b{kBundleFormatVersion, label, fit_pipeline(dataset, pc, hooks)};
      save_bundle(b, bundle_out);
      err << "wrote " << bundle_out << " (" << to_string(pc.encoder) << ", width " << b.pipeline.model.header.width();
      if (pc.encoder == EncoderKind::ClusterCount) err << ", K=" << b.pipeline.mapper.size();
      err << ")\n";
    } else if (*gen) {
      const ModelBundle b = load_bundle(bundle_dir);
      const Generated g = generate(b.pipeline, static_cast<std::size_t>(rows), gen_seed);
      std::ostringstream csv;
      write_csv(csv, g.dataset);
      emit(gen_out, csv.str(), out);
    } else if (*eval) {
      const Schema schema = schema_for(source, eval_schema);
      const Dataset src = load_csv(source, schema);
      const Dataset syn = load_csv(synthetic, schema);
      SkillsetEmbedder embedder;
      if (!embeddings_file.empty()) {
        embedder = load_skillset_embeddings(embeddings_file, schema.delimiter());
      } else if (!eval_bundle.empty()) {
        const ModelBundle b = load_bundle(eval_bundle);
        if (b.pipeline.embeddings.size() == 0) throw ParameterError("bundle has no word vectors");
        embedder = mean_word_embedder(b.pipeline.embeddings);
      } else {
        embedder = mean_word_embedder(train_word2vec(build_tagged_corpus(src), EmbedConfig{}));
      }
      std::ostringstream report;
      write_metric_report(report, evaluate_all(src, syn, embedder, bins));
      emit(report_out, report.str(), out);
      if (!pca_out.empty()) {
        std::ostringstream pca;
        write_pca_csv(pca, pca_project3(src, syn));
        emit(pca_out, pca.str(), out);
      }
    } else if (*bench) {
      const Schema schema = schema_for(bench_data, bench_schema);
      const Dataset dataset = load_csv(bench_data, schema);
      BenchOptions options;
      options.epochs = bench_gan.epochs;
      options.encoders = parse_encoders(encoders);
      bench_gan.apply(options.pipeline.gan);
      bench_clusters.apply(options.pipeline);
      const BenchReport report = run_encoder_benchmark(dataset, options, bench_seed);
      std::ostringstream csv;
      write_bench_csv(csv, report);
      emit(bench_out, csv.str(), out);
      bool failed = false;
      for (const auto& v : report.variants) {
        if (!v.failure.empty()) {
          err << to_string(v.encoder) << ": failed: " << v.failure << "\n";
          failed = true;
          continue;
        }
        err << to_string(v.encoder) << ": width " << v.width << ", median epoch " << v.median_epoch_ms()
            << " ms, peak " << (v.memory_available ? std::to_string(v.peak_bytes) + " bytes" : "unavailable") << "\n";
      }
      if (failed) return 1;
    } else if (*serve) {
      auto registry = std::make_shared<BundleRegistry>();
      if (!bundles_root.empty()) registry->scan(bundles_root);
      for (const auto& spec : bundle_specs) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0) {
          err << "error: --bundle expects dataset=DIR, got '" << spec << "'\n";
          return 2;
        }
        registry->add_bundle(spec.substr(0, eq), spec.substr(eq + 1));
      }
      if (registry->empty()) {
        err << "error: no bundles registered (use --bundles or --bundle)\n";
        return 2;
      }
      ServiceConfig config = service_config_from_env();
      if (!host.empty()) config.host = host;
      if (port >= 0) config.port = port;
      config.row_cap = row_cap;
      GenerationService service(registry, config);
      err << "listening on " << config.host << ":" << config.port << "\n";
      if (!service.listen()) throw IoError("cannot listen on " + config.host + ":" + std::to_string(config.port));
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace krew
