#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>

namespace aal {

/// Timestamps are nanoseconds since an arbitrary per-clock origin.
using Nanos = std::chrono::nanoseconds;

inline constexpr Nanos ms(std::int64_t v) { return std::chrono::milliseconds(v); }
inline constexpr Nanos seconds(std::int64_t v) { return std::chrono::seconds(v); }

inline double to_ms(Nanos d) { return static_cast<double>(d.count()) / 1e6; }
inline std::int64_t to_whole_ms(Nanos d) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(d).count();
}

class Clock {
 public:
  virtual ~Clock() = default;
  virtual Nanos now() const = 0;
};

/// Monotonic wall clock.
class SteadyClock final : public Clock {
 public:
  Nanos now() const override {
    return std::chrono::duration_cast<Nanos>(std::chrono::steady_clock::now().time_since_epoch());
  }
};

/// Virtual clock advanced explicitly; used for deterministic runs.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(Nanos start = Nanos{0}) : now_(start.count()) {}

  Nanos now() const override { return Nanos{now_.load()}; }
  void set(Nanos t) { now_.store(t.count()); }
  void advance(Nanos d) { now_.fetch_add(d.count()); }

 private:
  std::atomic<std::int64_t> now_;
};

}  // namespace aal
