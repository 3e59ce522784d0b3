#include "caa/memory.hpp"

#include <atomic>

namespace caa::memory {

namespace {
std::atomic<std::int64_t> g_live{0};
std::atomic<std::int64_t> g_peak{0};
}  // namespace

std::int64_t live_elements() { return g_live.load(); }
std::int64_t peak_elements() { return g_peak.load(); }

PeakProbe::PeakProbe() : baseline_(g_live.load()) { g_peak.store(baseline_); }

std::int64_t PeakProbe::peak_delta() const { return g_peak.load() - baseline_; }

namespace detail {

void on_allocate(std::int64_t elements) {
  const std::int64_t now = g_live.fetch_add(elements) + elements;
  std::int64_t prev = g_peak.load();
  while (now > prev && !g_peak.compare_exchange_weak(prev, now)) {
  }
}

void on_release(std::int64_t elements) { g_live.fetch_sub(elements); }

}  // namespace detail

}  // namespace caa::memory
