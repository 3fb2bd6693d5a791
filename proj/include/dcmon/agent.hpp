#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcmon/batch.hpp"
#include "dcmon/collector.hpp"
#include "dcmon/reduction.hpp"
#include "dcmon/transport.hpp"

namespace dcmon {

enum class DeliveryMode { lossy, acknowledged };

std::string_view to_string(DeliveryMode mode) noexcept;
std::optional<DeliveryMode> parse_delivery_mode(std::string_view text) noexcept;

struct AgentConfig {
  std::string node_id;
  std::string dc_id;
  Duration poll_period{10'000};
  DeliveryMode delivery_mode = DeliveryMode::lossy;
  Duration ack_timeout{5'000};
  std::filesystem::path buffer_dir;
  std::uint64_t buffer_cap_bytes = 64ull << 20;
  ReductionConfig reduction;
  Duration scrape_timeout{2'000};
  /// fsync buffer files before the rename that publishes them.
  bool buffer_fsync = true;

  /// Throws std::invalid_argument.
  void validate() const;
};

/// Reads the flat `key=value` agent configuration format. Blank lines and
/// lines starting with `#` are ignored. Durations accept `ms`, `s`, `m`, `h`
/// suffixes; a bare integer is milliseconds.
AgentConfig parse_agent_config(std::string_view text);
std::string format_agent_config(const AgentConfig& config);

/// Parses `250ms`, `10s`, `2m`, `1h` or a bare millisecond count.
Duration parse_duration(std::string_view text);
std::string format_duration(Duration d);

struct TargetEntry {
  std::string target_id;
  Level level = Level::machine;
  std::string address;
  std::optional<std::string> app_id;

  friend bool operator==(const TargetEntry&, const TargetEntry&) = default;
};

enum class SegmentState { pending, in_flight };

struct BufferSegment {
  std::uint64_t seq = 0;
  Timestamp created_at = 0;
  Level level = Level::machine;
  std::string payload;
  SegmentState state = SegmentState::pending;
  std::optional<Timestamp> last_sent;
};

class AgentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class DuplicateTarget : public AgentError {
 public:
  explicit DuplicateTarget(const std::string& address)
      : AgentError("target already registered: " + address) {}
};
class UnknownTarget : public AgentError {
 public:
  explicit UnknownTarget(const std::string& id) : AgentError("unknown target: " + id) {}
};
class NotRemovable : public AgentError {
 public:
  explicit NotRemovable(const std::string& id)
      : AgentError("machine and container targets cannot be removed: " + id) {}
};

/// Hooks for accounting in simulations and tests.
class AgentObserver {
 public:
  virtual ~AgentObserver() = default;
  virtual void on_reduction_drop(const om::MetricFamily& /*family*/, const om::Sample& /*sample*/) {}
  virtual void on_segment_evicted(const BufferSegment& /*segment*/) {}
};

/// Node-side metrics agent: scrapes targets, buffers one file per segment and
/// hands the buffer to the control plane inside health-check replies.
///
/// Buffer layout: `<buffer_dir>/<seq>.om` holds one serialized exposition;
/// `<buffer_dir>/hwm` holds the persisted segment and batch sequence
/// high-water marks. Both are replaced by atomic rename.
class NodeAgent {
 public:
  static constexpr std::string_view kScrapeFailures = "agent_scrape_failures_total";
  static constexpr std::string_view kDroppedSegments = "agent_dropped_segments_total";

  /// Reloads any segments left in `buffer_dir` as pending.
  NodeAgent(AgentConfig config, Scraper& scraper, std::string machine_address,
            std::optional<TargetEntry> container = std::nullopt);

  const AgentConfig& config() const noexcept { return config_; }

  std::vector<BufferSegment> poll_cycle(Timestamp now);

  /// Returns the new target id; scraping starts with the next poll cycle.
  std::string register_app_target(const std::string& app_id, const std::string& address);
  void deregister_app_target(const std::string& target_id);

  /// Everything pending, plus unacknowledged segments whose ack_timeout has
  /// expired. Lossy mode deletes what it returns.
  MetricsBatch drain_for_pong(Timestamp now);

  /// Deletes the in-flight segments carried by `batch_seq`. Stale or unknown
  /// sequence numbers, and any ack in lossy mode, are ignored.
  void handle_ack(std::uint64_t batch_seq);

  /// Protocol entry point: ping, ack, app_target_add, app_target_remove.
  std::optional<Envelope> handle_envelope(const Envelope& e, Timestamp now);

  std::vector<TargetEntry> targets() const;
  std::vector<BufferSegment> buffered() const;
  std::uint64_t buffered_bytes() const;
  std::uint64_t scrape_failures() const;
  std::uint64_t dropped_segments() const;
  std::uint64_t reduction_dropped() const;
  std::uint64_t last_batch_seq() const;

  void set_observer(AgentObserver* observer) { observer_ = observer; }

 private:
  void load_buffer();
  void persist_hwm();
  void store_segment(BufferSegment segment, std::vector<BufferSegment>& created);
  void erase_segment(std::map<std::uint64_t, BufferSegment>::iterator it);
  std::filesystem::path segment_path(std::uint64_t seq) const;
  void inject_labels(om::Exposition& e, const TargetEntry& target) const;
  om::Exposition self_metrics(Timestamp now) const;

  AgentConfig config_;
  Scraper& scraper_;
  AgentObserver* observer_ = nullptr;

  mutable std::mutex targets_mu_;
  std::vector<TargetEntry> targets_;
  std::uint64_t next_app_ = 1;

  mutable std::mutex poll_mu_;
  ReductionPipeline reduction_;

  mutable std::mutex buffer_mu_;
  std::map<std::uint64_t, BufferSegment> segments_;
  std::map<std::uint64_t, std::vector<std::uint64_t>> batches_;
  std::uint64_t segment_hwm_ = 0;
  std::uint64_t batch_hwm_ = 0;
  std::uint64_t bytes_ = 0;
  std::uint64_t scrape_failures_ = 0;
  std::uint64_t dropped_segments_ = 0;
};

}  // namespace dcmon
