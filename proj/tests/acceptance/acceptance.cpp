// Acceptance suite: one PASS/FAIL line per criterion. Arguments select a
// subset by number; the exit status is non-zero if any selected check fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "krew/bench.hpp"
#include "krew/bundle.hpp"
#include "krew/cli.hpp"
#include "krew/cluster.hpp"
#include "krew/corpus.hpp"
#include "krew/ctgan/nets.hpp"
#include "krew/encoders.hpp"
#include "krew/metrics.hpp"
#include "krew/pipeline.hpp"
#include "krew/service.hpp"
#include "krew/util.hpp"
#include "support/gradcheck.hpp"

// After Eigen: resolv.h defines _res.
#include <httplib.h>

namespace {

using namespace krew;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

const std::string kDataDir = KREW_TEST_DATA_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Dataset fixture() { return load_csv(kDataDir + "/table2.csv", Schema::load_manifest(kDataDir + "/table2.schema")); }

Dataset upsample(const Dataset& d, std::size_t rows) {
  std::vector<Row> out;
  for (std::size_t r = 0; r < rows; ++r) out.push_back(d.rows()[r % d.row_count()]);
  return Dataset(d.schema(), std::move(out));
}

ClusterMapper example_mapper() {
  return ClusterMapper({{{"Python", "R"}, {1, 1}},
                        {{"HTML", "JavaScript"}, {4, 4}},
                        {{"C++", "C", "Java"}, {1, 1, 3}},
                        {{"PHP", "Node.js"}, {2, 1}}});
}

std::string csv_of(const Dataset& d) {
  std::ostringstream out;
  write_csv(out, d);
  return out.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("krew_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// 1 ------------------------------------------------------------------------
Outcome table4() {
  const auto t0 = Clock::now();
  const EncodedTable t = encode_cluster_counts(fixture(), example_mapper());
  const double expected[7][4] = {{0, 0, 3, 0}, {0, 2, 0, 0}, {0, 2, 1, 0}, {0, 2, 0, 1},
                                 {0, 0, 1, 2}, {2, 0, 0, 0}, {0, 2, 0, 0}};
  bool ok = t.values.rows() == 7 && t.values.cols() == 4;
  for (int r = 0; ok && r < 7; ++r)
    for (int c = 0; c < 4; ++c) ok = ok && t.values(r, c) == expected[r][c];
  const double s = seconds_since(t0);
  return {ok && s < 1.0, std::string(ok ? "7x4 counts match" : "count matrix differs") + ", " + fmt(s, 2) + " s"};
}

// 2 ------------------------------------------------------------------------
Outcome table3() {
  const auto t0 = Clock::now();
  const std::vector<std::string> expected{
      "tag0, C, tag0, C++, tag0, Java, tag0",
      "tag1, HTML, tag1, JavaScript, tag1",
      "tag2, Java, tag2, JavaScript, tag2, HTML, tag2",
      "tag3, PHP, tag3, JavaScript, tag3, HTML, tag3",
      "tag4, Java, tag4, PHP, tag4, Node.js, tag4",
      "tag5, Python, tag5, R, tag5",
      "tag6, HTML, tag6, JavaScript, tag6",
  };
  const TaggedCorpus c = build_tagged_corpus(fixture());
  bool ok = c.sequences.size() == expected.size();
  std::string first_bad;
  for (std::size_t i = 0; ok && i < expected.size(); ++i) {
    std::string line;
    for (const auto& t : c.sequences[i]) line += (line.empty() ? "" : ", ") + t;
    if (line != expected[i]) {
      ok = false;
      first_bad = line;
    }
  }
  const double s = seconds_since(t0);
  return {ok && s < 1.0, ok ? "7 sequences verbatim, " + fmt(s, 2) + " s" : "mismatch: " + first_bad};
}

// 3 ------------------------------------------------------------------------
Outcome widths() {
  const Dataset d = fixture();
  const std::size_t p = d.schema().passthrough_count();
  const std::size_t oh = encode_onehot_skillsets(d).width();
  const std::size_t mh = encode_multihot(d, unique_words(d)).width();
  const std::size_t cc = encode_cluster_counts(d, example_mapper()).width();
  const bool ok = oh == p + 6 && mh == p + 9 && cc == p + 4;
  return {ok, "p=" + std::to_string(p) + ": one-hot " + std::to_string(oh) + ", multi-hot " + std::to_string(mh) +
                  ", cluster-count " + std::to_string(cc)};
}

// 4 ------------------------------------------------------------------------
Outcome metric_identities() {
  std::vector<std::string> failures;
  auto require = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };

  const Schema skills({{"skills", ColumnKind::WordSet}});
  for (int k = 0; k <= 6; ++k) {
    std::vector<Row> rows;
    for (int i = 0; i < (1 << k); ++i) rows.push_back({WordSet::from_tokens({"s" + std::to_string(i)})});
    require(std::abs(skillset_entropy(Dataset(skills, rows)) - k) < 1e-12, "H(uniform 2^" + std::to_string(k) + ")");
  }

  const std::vector<double> t5{0.0625, 0.125, 0.1875, 0.25, 0.25, 0.125};
  double h_oracle = 0.0;
  for (double x : t5) h_oracle -= x * std::log(x) / std::log(2.0);
  const double h = entropy_bits(t5);
  require(std::abs(h - h_oracle) < 1e-12 && std::abs(h - 2.4528) <= 1e-3, "H(Table 5) = " + fmt(h, 10));

  const Dataset d = fixture();
  const double kl_self = skill_kl_divergence(d, d);
  require(std::abs(kl_self) <= 1e-9, "KL(P||P) = " + fmt(kl_self));

  const std::vector<double> src{1, 1, 3, 4, 4, 2, 1, 1, 1};
  const std::vector<double> syn{2, 1, 2, 4, 2, 1, 1, 2, 1};
  std::vector<double> p, q;
  double kl_oracle = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    p.push_back(src[i] / 18.0);
    q.push_back(syn[i] / 16.0);
    kl_oracle += p[i] * std::log(p[i] / q[i]);
  }
  const double kl = kl_divergence(p, q);
  require(std::abs(kl - kl_oracle) < 1e-6 && std::abs(kl - 0.1038) <= 1e-3, "KL(Table 6) = " + fmt(kl, 10));

  const Eigen::VectorXd x = association_matrix(d).normalized();
  const double rho = pearson(x, x);
  require(std::abs(rho - 1.0) <= 1e-9, "rho(X,X) = " + fmt(rho, 12));

  const AssociationMatrix m = association_matrix(d);
  bool exact = true;
  for (std::size_t i = 0; i < m.words.size(); ++i)
    for (std::size_t j = 0; j < m.words.size(); ++j) {
      int brute = 0;
      if (i != j)
        for (const auto& ws : d.wordsets()) brute += ws.contains(m.words[i]) && ws.contains(m.words[j]);
      exact = exact && m.counts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) == brute;
    }
  const auto at = [&](const std::string& w) {
    return static_cast<Eigen::Index>(std::find(m.words.begin(), m.words.end(), w) - m.words.begin());
  };
  const double html_js = m.counts(at("HTML"), at("JavaScript"));
  require(exact && html_js == 4.0, "association matrix vs enumeration (HTML-JavaScript = " + fmt(html_js) + ")");

  if (!failures.empty()) {
    std::string s;
    for (const auto& f : failures) s += (s.empty() ? "" : "; ") + f;
    return {false, s};
  }
  return {true, "H(Table 5) = " + fmt(h, 6) + " bits, KL(Table 6) = " + fmt(kl, 6) +
                    " nats, HTML-JavaScript = 4, all identities hold"};
}

// 5 ------------------------------------------------------------------------
Outcome gradients() {
  using krew::testing::numeric_gradient;
  using krew::testing::relative_error;
  using krew::testing::SmallGan;
  using namespace krew::ad;

  SmallGan gan;
  const int params = gan.parameter_count();
  double worst_d = 0.0, worst_g = 0.0;
  {
    Tape tape;
    const Eigen::MatrixXd fake = gan.fake_rows(tape);
    tape.truncate(0);
    const auto dp = ctgan::bind_tensors(tape, gan.discriminator.parameters(), true);
    const auto grads = tape.gradient_values(gan.loss_d(tape, dp, fake), dp);
    const auto fd = numeric_gradient([&] { return gan.loss_d_value(); }, gan.discriminator.parameters());
    for (std::size_t i = 0; i < grads.size(); ++i) worst_d = std::max(worst_d, relative_error(grads[i], fd[i]));
  }
  {
    Tape tape;
    const auto gp = ctgan::bind_tensors(tape, gan.generator.parameters(), true);
    const auto grads = tape.gradient_values(gan.loss_g(tape, gp), gp);
    const auto fd = numeric_gradient([&] { return gan.loss_g_value(); }, gan.generator.parameters());
    for (std::size_t i = 0; i < grads.size(); ++i) worst_g = std::max(worst_g, relative_error(grads[i], fd[i]));
  }

  Tape tape;
  Eigen::MatrixXd w(2, 1);
  w << 3, 4;
  const ctgan::Critic critic = [&](Tape& t, Var x) { return matmul(x, t.constant(w)); };
  Rng rng(7);
  Eigen::MatrixXd real(5, 2), fake(5, 2);
  for (Eigen::Index i = 0; i < real.size(); ++i) {
    real.data()[i] = rng.normal();
    fake.data()[i] = rng.normal();
  }
  const double pen = ctgan::gradient_penalty(tape, critic, real, fake, 1, 10.0, rng).scalar();

  const bool ok = params <= 2000 && worst_d <= 1e-4 && worst_g <= 1e-4 && std::abs(pen - 160.0) <= 1e-9;
  return {ok, std::to_string(params) + " parameters, rel. error L_D " + fmt(worst_d, 3) + ", L_G " + fmt(worst_g, 3) +
                  ", penalty(w=[3,4]) = " + fmt(pen, 15)};
}

// 6 ------------------------------------------------------------------------
Outcome diversity() {
  const auto t0 = Clock::now();
  const Dataset data = upsample(fixture(), 200);
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<double> h_cc, h_oh;
  std::vector<std::size_t> n_cc, n_oh;
  for (EncoderKind kind : {EncoderKind::ClusterCount, EncoderKind::OneHot}) {
    for (std::uint64_t seed : seeds) {
      PipelineConfig pc;
      pc.encoder = kind;
      pc.k = 4;
      pc.gan.epochs = 300;
      pc.seed = seed;
      const TrainedPipeline p = fit_pipeline(data, pc);
      const Dataset g = generate(p, 1000, 1000 + seed).dataset;
      std::set<std::string> distinct;
      for (const auto& ws : g.wordsets()) distinct.insert(ws.signature());
      const double h = skillset_entropy(g);
      (kind == EncoderKind::ClusterCount ? h_cc : h_oh).push_back(h);
      (kind == EncoderKind::ClusterCount ? n_cc : n_oh).push_back(distinct.size());
    }
  }
  const auto above6 = std::count_if(n_cc.begin(), n_cc.end(), [](std::size_t n) { return n > 6; });
  const bool oh_capped = std::all_of(n_oh.begin(), n_oh.end(), [](std::size_t n) { return n <= 6; });
  const double mcc = median(h_cc), moh = median(h_oh);
  const double s = seconds_since(t0);
  auto list = [](const std::vector<std::size_t>& v) {
    std::string out;
    for (auto n : v) out += (out.empty() ? "" : "/") + std::to_string(n);
    return out;
  };
  const bool ok = above6 >= 4 && oh_capped && mcc > moh && s <= 600.0;
  return {ok, "distinct cluster-count " + list(n_cc) + ", one-hot " + list(n_oh) + "; median entropy " + fmt(mcc) +
                  " vs " + fmt(moh) + " bits, " + fmt(s, 3) + " s"};
}

// 7 ------------------------------------------------------------------------
Dataset wide_vocabulary(std::size_t rows, std::uint64_t seed) {
  // 200 skills in 20 themes of 10; each record draws 2-5 skills from a theme
  // and occasionally one from another.
  Rng rng(seed);
  const Schema schema({{"skills", ColumnKind::WordSet}, {"budget", ColumnKind::Continuous}});
  std::vector<Row> out;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t theme = r < 200 ? r % 20 : rng.below(20);
    std::vector<std::string> tokens;
    // The first 200 rows cover every skill at least once.
    if (r < 200) tokens.push_back("skill" + std::to_string(theme * 10 + (r / 20) % 10));
    const std::size_t n = 2 + rng.below(4);
    while (tokens.size() < n) tokens.push_back("skill" + std::to_string(theme * 10 + rng.below(10)));
    if (rng.uniform() < 0.2) tokens.push_back("skill" + std::to_string(rng.below(200)));
    out.push_back({WordSet::from_tokens(tokens), 100.0 + 50.0 * static_cast<double>(theme) + 10.0 * rng.normal()});
  }
  return Dataset(schema, std::move(out));
}

Outcome efficiency() {
  const auto t0 = Clock::now();
  const Dataset data = wide_vocabulary(400, 17);
  const std::size_t words = unique_words(data).size();
  std::vector<double> t_mh, t_cc, m_mh, m_cc;
  std::size_t w_mh = 0, w_cc = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    BenchOptions o;
    o.epochs = 3;
    o.encoders = {EncoderKind::MultiHot, EncoderKind::ClusterCount};
    o.pipeline.k = 20;
    const BenchReport r = run_encoder_benchmark(data, o, seed);
    for (const auto& v : r.variants) {
      if (!v.failure.empty()) return {false, std::string(to_string(v.encoder)) + " failed: " + v.failure};
      if (!v.memory_available) return {false, "peak memory unavailable on this platform"};
    }
    const BenchVariant* mh = r.find(EncoderKind::MultiHot);
    const BenchVariant* cc = r.find(EncoderKind::ClusterCount);
    t_mh.push_back(mh->median_epoch_ms());
    t_cc.push_back(cc->median_epoch_ms());
    m_mh.push_back(static_cast<double>(mh->peak_bytes));
    m_cc.push_back(static_cast<double>(cc->peak_bytes));
    w_mh = mh->width;
    w_cc = cc->width;
  }
  const double tm = median(t_mh), tc = median(t_cc), mm = median(m_mh), mc = median(m_cc);
  const bool ok = words == 200 && tc < tm && mc < mm;
  return {ok, std::to_string(words) + " skills, widths " + std::to_string(w_mh) + " vs " + std::to_string(w_cc) +
                  "; median epoch " + fmt(tm) + " ms (multi-hot) vs " + fmt(tc) + " ms (cluster-count); peak " +
                  fmt(mm / 1048576.0) + " MiB vs " + fmt(mc / 1048576.0) + " MiB; " + fmt(seconds_since(t0), 3) +
                  " s"};
}

// 8 ------------------------------------------------------------------------
Outcome fixpoint() {
  PipelineConfig pc;
  pc.k = 4;
  pc.gan.epochs = 30;
  pc.seed = 8;
  const TrainedPipeline p = fit_pipeline(upsample(fixture(), 200), pc);
  EncodedTable encoded = ctgan::sample(p.model, 1000, 5);
  clamp_cluster_counts(encoded, p.mapper);
  const Dataset decoded = decode_cluster_counts(encoded, p.mapper, 6);
  const EncodedTable again = encode_cluster_counts(decoded, p.mapper);
  const bool same = again.values == encoded.values;

  bool no_dupes = true;
  for (std::size_t r = 0; r < decoded.row_count(); ++r) {
    const auto& tokens = decoded.wordset(r).tokens();
    std::set<std::string> unique(tokens.begin(), tokens.end());
    no_dupes = no_dupes && unique.size() == tokens.size() &&
               static_cast<double>(tokens.size()) == encoded.values.row(static_cast<Eigen::Index>(r)).sum();
  }

  double worst = 0.0;
  Rng rng(123);
  const ClusterMapper m = example_mapper();
  for (std::size_t c = 0; c < m.size(); ++c) {
    const auto& cl = m.cluster(c);
    std::vector<double> hits(cl.words.size(), 0.0);
    constexpr int kDraws = 100000;
    for (int i = 0; i < kDraws; ++i) {
      const auto pick = select_skills(1, cl.words, cl.membership, rng);
      hits[static_cast<std::size_t>(std::find(cl.words.begin(), cl.words.end(), pick[0]) - cl.words.begin())] += 1.0;
    }
    for (std::size_t w = 0; w < hits.size(); ++w) worst = std::max(worst, std::abs(hits[w] / kDraws - cl.membership[w]));
  }
  const bool ok = same && no_dupes && worst <= 0.01;
  return {ok, std::string(same ? "re-encoding reproduces 1000x" + std::to_string(encoded.width()) + " counts"
                               : "re-encoding differs") +
                  (no_dupes ? ", no duplicate skills" : ", duplicate or missing skills") +
                  ", max selection-frequency error " + fmt(worst, 3)};
}

// 9 ------------------------------------------------------------------------
Outcome bundle_stability() {
  const auto t0 = Clock::now();
  const fs::path dir = scratch("bundle");
  PipelineConfig pc;
  pc.k = 4;
  pc.gan.epochs = 50;
  pc.seed = 9;
  const ModelBundle b{kBundleFormatVersion, "task", fit_pipeline(upsample(fixture(), 200), pc)};
  const std::string before = csv_of(generate(b.pipeline, 1000, 77).dataset);
  save_bundle(b, dir / "B");
  const std::string after = csv_of(generate(load_bundle(dir / "B").pipeline, 1000, 77).dataset);
  const bool stable = before == after;

  std::ostringstream out, err;
  const std::string data = kDataDir + "/table2.csv", schema = kDataDir + "/table2.schema";
  const std::string cli_bundle = (dir / "cli").string(), synth = (dir / "s.csv").string(),
                    report = (dir / "r.csv").string();
  int rc = cli_main({"train", "--data", data, "--schema", schema, "--k", "4", "--out", cli_bundle}, out, err);
  if (rc == 0)
    rc = cli_main({"generate", "--bundle", cli_bundle, "--rows", "1000", "--seed", "7", "--out", synth}, out, err);
  if (rc == 0)
    rc = cli_main({"evaluate", "--source", data, "--schema", schema, "--synthetic", synth, "--bundle", cli_bundle,
                   "--out", report},
                  out, err);
  const double s = seconds_since(t0);
  bool report_ok = false;
  if (rc == 0) report_ok = read_file(report).find("skillset_matching") != std::string::npos;
  fs::remove_all(dir);
  const bool ok = stable && rc == 0 && report_ok && s < 600.0;
  return {ok, std::string(stable ? "sample(seed) identical after save/load" : "samples differ after save/load") +
                  "; CLI train->generate->evaluate " + (rc == 0 ? "ok" : "exit " + std::to_string(rc) + ": " + err.str()) +
                  ", " + fmt(s, 3) + " s"};
}

// 10 -----------------------------------------------------------------------
Outcome service_contract() {
  PipelineConfig pc;
  pc.k = 4;
  pc.gan.epochs = 50;
  pc.seed = 10;
  auto registry = std::make_shared<BundleRegistry>();
  const Dataset data = upsample(fixture(), 200);
  registry->add("upwork", "task", std::make_shared<const TrainedPipeline>(fit_pipeline(data, pc)));

  GenerationService service(registry, ServiceConfig{});
  const int port = service.bind_any_port();
  if (port <= 0) return {false, "cannot bind a local port"};
  std::thread th([&] { service.listen_after_bind(); });
  service.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  auto ok_res = client.Post("/api/generate", R"({"dataset":"upwork","kind":"task","rows":100})", "application/json");
  auto missing = client.Post("/api/generate", R"({"dataset":"nope","kind":"task","rows":100})", "application/json");
  auto zero = client.Post("/api/generate", R"({"dataset":"upwork","kind":"task","rows":0})", "application/json");
  service.stop();
  th.join();

  if (!ok_res || !missing || !zero) return {false, "request failed at the transport level"};
  std::size_t rows = 0;
  bool valid = false;
  if (ok_res->status == 200) {
    try {
      std::istringstream in(ok_res->body);
      rows = read_csv(in, data.schema()).row_count();
      valid = true;
    } catch (const std::exception&) {
    }
  }
  const bool ok = ok_res->status == 200 && valid && rows == 100 && missing->status == 404 && zero->status == 400;
  return {ok, "generate -> " + std::to_string(ok_res->status) + " with " + std::to_string(rows) +
                  (valid ? " schema-valid rows" : " rows (invalid CSV)") + ", unknown dataset -> " +
                  std::to_string(missing->status) + ", rows=0 -> " + std::to_string(zero->status)};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "Table 4 cluster-count matrix", table4},
      {2, "Table 3 tagged corpus", table3},
      {3, "encoded widths", widths},
      {4, "metric identities", metric_identities},
      {5, "gradient correctness", gradients},
      {6, "skillset diversity", diversity},
      {7, "encoder efficiency", efficiency},
      {8, "decode/encode fixpoint", fixpoint},
      {9, "bundle stability and CLI path", bundle_stability},
      {10, "service contract", service_contract},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << c.id << ". " << c.name << ": " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
