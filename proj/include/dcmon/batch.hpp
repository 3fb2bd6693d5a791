#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dcmon/collector.hpp"
#include "dcmon/openmetrics.hpp"

namespace dcmon {

/// Metrics piggybacked on one pong.
struct MetricsBatch {
  std::string node_id;
  std::string dc_id;
  std::uint64_t batch_seq = 0;
  std::vector<std::pair<Level, om::Exposition>> expositions;
  /// Buffer segments carried by this batch.
  std::vector<std::uint64_t> segment_seqs;

  std::size_t sample_count() const noexcept;
  friend bool operator==(const MetricsBatch&, const MetricsBatch&) = default;
};

/// JSON object whose exposition bodies are OpenMetrics text.
std::string encode_batch(const MetricsBatch& batch);
/// Throws std::invalid_argument or om::OpenMetricsError.
MetricsBatch decode_batch(std::string_view bytes);

}  // namespace dcmon
