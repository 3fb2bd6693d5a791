#pragma once

#include <chrono>
#include <cstdint>

namespace dcmon {

/// Milliseconds since the Unix epoch. The single time unit used on the wire,
/// in buffers and in storage.
using Timestamp = std::int64_t;

using Duration = std::chrono::milliseconds;

inline Timestamp wall_clock_now() {
  return std::chrono::duration_cast<Duration>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace dcmon
