#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "krew/encoders.hpp"
#include "krew/pipeline.hpp"

namespace krew {

struct MemorySample {
  std::size_t heap_bytes = 0;  // allocator bytes in use
  std::size_t rss_bytes = 0;   // resident set
};

// nullopt when the platform offers neither source.
std::optional<MemorySample> read_memory();

// High-water mark of memory in use while the tracker is alive. A background
// thread samples every `period`; memory_checkpoint() samples immediately into
// every live tracker, so an outer tracker always sees what an inner one sees.
class PeakMemoryTracker {
 public:
  explicit PeakMemoryTracker(std::chrono::milliseconds period = std::chrono::milliseconds(50));
  ~PeakMemoryTracker();
  PeakMemoryTracker(const PeakMemoryTracker&) = delete;
  PeakMemoryTracker& operator=(const PeakMemoryTracker&) = delete;

  bool available() const { return available_; }
  MemorySample baseline() const { return baseline_; }
  MemorySample peak() const;
  // Peak heap in use above the baseline.
  std::size_t peak_above_baseline() const;

  void record(const MemorySample& s);

 private:
  bool available_ = false;
  MemorySample baseline_;
  mutable std::mutex mutex_;
  MemorySample peak_;
  std::atomic<bool> stop_{false};
  std::thread sampler_;
};

void memory_checkpoint();

struct SectionMemory {
  bool available = false;
  std::size_t baseline_heap = 0;
  std::size_t peak_heap = 0;
  std::size_t peak_rss = 0;
  std::size_t peak_bytes() const { return peak_heap > baseline_heap ? peak_heap - baseline_heap : 0; }
};

SectionMemory peak_memory_tracker(const std::function<void()>& section);

struct BenchVariant {
  EncoderKind encoder = EncoderKind::ClusterCount;
  std::size_t width = 0;
  std::size_t rows = 0;
  int epochs_completed = 0;
  double total_ms = 0.0;
  std::vector<double> epoch_ms;
  bool memory_available = false;
  std::size_t peak_bytes = 0;
  std::string failure;  // empty on success

  double median_epoch_ms() const;
};

struct BenchReport {
  std::vector<BenchVariant> variants;
  const BenchVariant* find(EncoderKind kind) const;
};

struct BenchOptions {
  int epochs = 350;
  std::vector<EncoderKind> encoders{EncoderKind::OneHot, EncoderKind::MultiHot, EncoderKind::ClusterCount};
  // GAN and clustering settings shared by every variant; gan.epochs is
  // replaced by `epochs`.
  PipelineConfig pipeline;
};

// Trains each variant end to end, sequentially. Only the GAN training is timed
// and tracked; a failing variant keeps its note and the rest still run.
BenchReport run_encoder_benchmark(const Dataset& dataset, const BenchOptions& options, std::uint64_t seed);

// "variant,width,epoch,epoch_ms,peak_bytes", one row per epoch.
void write_bench_csv(std::ostream& out, const BenchReport& report);

}  // namespace krew
