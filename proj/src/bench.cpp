#include "krew/bench.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>

#include <malloc.h>
#include <unistd.h>

#include "krew/error.hpp"

namespace krew {

namespace {

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

std::vector<PeakMemoryTracker*>& registry() {
  static std::vector<PeakMemoryTracker*> r;
  return r;
}

}  // namespace

std::optional<MemorySample> read_memory() {
  MemorySample s;
  bool any = false;
#if defined(__GLIBC__)
  const struct mallinfo2 mi = mallinfo2();
  s.heap_bytes = mi.uordblks + mi.hblkhd;
  any = true;
#endif
  std::ifstream statm("/proc/self/statm");
  std::size_t size = 0, resident = 0;
  if (statm >> size >> resident) {
    s.rss_bytes = resident * static_cast<std::size_t>(sysconf(_SC_PAGESIZE));
    if (!any) s.heap_bytes = s.rss_bytes;
    any = true;
  }
  if (!any) return std::nullopt;
  return s;
}

PeakMemoryTracker::PeakMemoryTracker(std::chrono::milliseconds period) {
  const auto first = read_memory();
  available_ = first.has_value();
  if (!available_) return;
  baseline_ = *first;
  peak_ = *first;
  {
    std::lock_guard lock(registry_mutex());
    registry().push_back(this);
  }
  sampler_ = std::thread([this, period] {
    while (!stop_.load()) {
      std::this_thread::sleep_for(period);
      if (auto s = read_memory()) record(*s);
    }
  });
}

PeakMemoryTracker::~PeakMemoryTracker() {
  if (!available_) return;
  if (auto s = read_memory()) record(*s);
  stop_.store(true);
  sampler_.join();
  std::lock_guard lock(registry_mutex());
  auto& r = registry();
  r.erase(std::remove(r.begin(), r.end(), this), r.end());
}

void PeakMemoryTracker::record(const MemorySample& s) {
  std::lock_guard lock(mutex_);
  peak_.heap_bytes = std::max(peak_.heap_bytes, s.heap_bytes);
  peak_.rss_bytes = std::max(peak_.rss_bytes, s.rss_bytes);
}

MemorySample PeakMemoryTracker::peak() const {
  std::lock_guard lock(mutex_);
  return peak_;
}

std::size_t PeakMemoryTracker::peak_above_baseline() const {
  const auto p = peak();
  return p.heap_bytes > baseline_.heap_bytes ? p.heap_bytes - baseline_.heap_bytes : 0;
}

void memory_checkpoint() {
  const auto s = read_memory();
  if (!s) return;
  std::lock_guard lock(registry_mutex());
  for (auto* t : registry()) t->record(*s);
}

SectionMemory peak_memory_tracker(const std::function<void()>& section) {
  SectionMemory out;
  PeakMemoryTracker tracker;
  section();
  memory_checkpoint();
  out.available = tracker.available();
  out.baseline_heap = tracker.baseline().heap_bytes;
  out.peak_heap = tracker.peak().heap_bytes;
  out.peak_rss = tracker.peak().rss_bytes;
  return out;
}

double BenchVariant::median_epoch_ms() const {
  if (epoch_ms.empty()) return 0.0;
  std::vector<double> v = epoch_ms;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

const BenchVariant* BenchReport::find(EncoderKind kind) const {
  for (const auto& v : variants)
    if (v.encoder == kind) return &v;
  return nullptr;
}

BenchReport run_encoder_benchmark(const Dataset& dataset, const BenchOptions& options, std::uint64_t seed) {
  if (options.epochs < 1) throw ParameterError("epochs must be at least 1");
  if (dataset.row_count() == 0) throw ParameterError("cannot benchmark an empty dataset");
  BenchReport report;
  for (EncoderKind kind : options.encoders) {
    BenchVariant v;
    v.encoder = kind;
    v.rows = dataset.row_count();
    try {
      PipelineConfig pc = options.pipeline;
      pc.encoder = kind;
      pc.seed = seed;
      pc.gan.epochs = options.epochs;
      PreparedPipeline prepared = prepare_pipeline(dataset, pc);
      v.width = prepared.encoded.width();

      ctgan::TrainHooks hooks;
      hooks.on_step = [] { memory_checkpoint(); };
      hooks.on_epoch = [&](const ctgan::EpochStats& s) {
        v.epoch_ms.push_back(s.wall_ms);
        v.epochs_completed = s.epoch + 1;
      };
      PeakMemoryTracker tracker;
      ctgan::train(prepared.encoded, prepared.gan, hooks);
      for (double ms : v.epoch_ms) v.total_ms += ms;
      memory_checkpoint();
      v.memory_available = tracker.available();
      v.peak_bytes = tracker.peak_above_baseline();
    } catch (const std::exception& e) {
      v.failure = e.what();
    }
    report.variants.push_back(std::move(v));
  }
  return report;
}

void write_bench_csv(std::ostream& out, const BenchReport& report) {
  write_csv_record(out, {"variant", "width", "epoch", "epoch_ms", "peak_bytes"});
  for (const auto& v : report.variants) {
    const std::string name(to_string(v.encoder));
    if (!v.failure.empty()) {
      write_csv_record(out, {name, std::to_string(v.width), "failed", v.failure, ""});
      continue;
    }
    for (std::size_t e = 0; e < v.epoch_ms.size(); ++e)
      write_csv_record(out, {name, std::to_string(v.width), std::to_string(e + 1), format_double(v.epoch_ms[e]),
                             v.memory_available ? std::to_string(v.peak_bytes) : "unavailable"});
  }
}

}  // namespace krew
