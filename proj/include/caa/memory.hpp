#pragma once

#include <cstdint>

namespace caa::memory {

// Process-wide count of live tensor elements. Every Buffer registers on
// construction and deregisters on destruction; buffers shared by several
// tensors count once.
std::int64_t live_elements();
std::int64_t peak_elements();

/// Scoped peak measurement: reports the largest number of elements
/// allocated on top of what was live when the probe was created.
class PeakProbe {
 public:
  PeakProbe();
  PeakProbe(const PeakProbe&) = delete;
  PeakProbe& operator=(const PeakProbe&) = delete;

  std::int64_t peak_delta() const;
  std::int64_t baseline() const { return baseline_; }

 private:
  std::int64_t baseline_;
};

namespace detail {
void on_allocate(std::int64_t elements);
void on_release(std::int64_t elements);
}  // namespace detail

}  // namespace caa::memory
