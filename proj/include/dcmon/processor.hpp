#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcmon/batch.hpp"
#include "dcmon/store.hpp"
#include "dcmon/transport.hpp"

namespace dcmon {

enum class AggFunction { sum, avg };

std::string_view to_string(AggFunction f) noexcept;
std::optional<AggFunction> parse_agg_function(std::string_view text) noexcept;

struct AggregationSpec {
  std::string family;
  AggFunction function = AggFunction::sum;
  Duration staleness_window{60'000};

  friend bool operator==(const AggregationSpec&, const AggregationSpec&) = default;
};

std::vector<AggregationSpec> default_aggregations();

struct ProcessorConfig {
  /// Peer name of the control plane on the transport.
  std::string id = "processor";
  Duration health_period{10'000};
  Duration ping_deadline{3'000};
  Duration aggregation_period{30'000};
  /// Dead nodes are pinged on every n-th round only.
  unsigned dead_ping_every = 5;
  bool send_acks = true;
  std::vector<AggregationSpec> aggregations = default_aggregations();

  /// Throws std::invalid_argument.
  void validate() const;
};

/// `key=value` lines: id, health_period, ping_deadline, aggregation_period,
/// dead_ping_every, send_acks, and repeatable `aggregation=<family>:<sum|avg>[:<window>]`.
/// The first `aggregation` line replaces the default list.
ProcessorConfig parse_processor_config(std::string_view text);

enum class NodeState { alive, dead };
std::string_view to_string(NodeState s) noexcept;

struct NodeRecord {
  std::string node_id;
  std::string dc_id;
  NodeState state = NodeState::alive;
  Timestamp last_seen = 0;
  std::uint64_t last_pong_seq = 0;

  friend bool operator==(const NodeRecord&, const NodeRecord&) = default;
};

struct RoundReport {
  std::uint64_t round = 0;
  Timestamp started_at = 0;
  std::size_t pinged = 0;
  std::size_t replied = 0;
  std::vector<std::string> newly_dead;
};

class ProcessorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class DcMismatch : public ProcessorError {
 public:
  DcMismatch(const std::string& node, const std::string& registered, const std::string& requested)
      : ProcessorError("node " + node + " belongs to dc " + registered + ", not " + requested) {}
};
class MalformedBatch : public ProcessorError {
 public:
  using ProcessorError::ProcessorError;
};
class PersistFailure : public StoreError {
 public:
  PersistFailure() : StoreError("injected persist failure") {}
};

class ProcessorObserver {
 public:
  virtual ~ProcessorObserver() = default;
  virtual void on_batch_stored(const MetricsBatch& /*batch*/, std::size_t /*appended*/) {}
  virtual void on_batch_failed(const MetricsBatch& /*batch*/, const std::exception& /*error*/) {}
  virtual void on_node_dead(const std::string& /*node*/, Timestamp /*at*/) {}
  virtual void on_node_revived(const std::string& /*node*/, Timestamp /*at*/) {}
  virtual void on_aggregate(const std::string& /*dc*/, const om::Exposition& /*result*/) {}
  virtual void on_round_complete(const RoundReport& /*report*/) {}
};

/// Control-plane processor: node registry, ping/pong health checks carrying
/// metrics batches, ingestion into the store and DC-level aggregation.
class ControlProcessor {
 public:
  static constexpr std::string_view kIngestFailures = "processor_ingest_failures_total";

  ControlProcessor(ProcessorConfig config, MetricsStore& store, Transport& transport);
  ~ControlProcessor();
  ControlProcessor(const ControlProcessor&) = delete;
  ControlProcessor& operator=(const ControlProcessor&) = delete;

  const ProcessorConfig& config() const noexcept { return config_; }

  /// Re-registering a dead node revives it. Throws DcMismatch.
  void register_node(const std::string& node_id, const std::string& dc_id);

  /// Pings alive nodes (and dead ones on every dead_ping_every-th round).
  /// Pongs are ingested as they arrive; `done` fires once every ping has
  /// been answered or timed out.
  void health_check_round(std::function<void(const RoundReport&)> done = {});

  /// Appends every sample of the batch. Throws MalformedBatch, PersistFailure
  /// or StorageFull; nothing is appended in that case.
  std::size_t ingest_batch(const MetricsBatch& batch);

  /// Computes, stores and publishes the aggregates of one DC.
  om::Exposition aggregate_dc(const std::string& dc_id, const std::vector<AggregationSpec>& specs,
                              Timestamp now);
  /// aggregate_dc for every DC with the configured specs.
  void aggregation_round();

  /// Inbound register_node requests (payload: dc id).
  std::optional<Envelope> handle_envelope(const Envelope& e);

  /// The next `count` ingests fail before touching the store.
  void inject_persist_failures(std::uint64_t count);

  std::vector<NodeRecord> nodes() const;
  std::optional<NodeRecord> node(const std::string& node_id) const;
  std::vector<std::string> dcs() const;
  std::uint64_t ingest_failures() const noexcept { return ingest_failures_.load(); }
  std::uint64_t rounds() const;
  /// processor_ingest_failures_total plus node-state gauges.
  om::Exposition self_metrics(Timestamp now) const;

  void set_observer(ProcessorObserver* observer) { observer_ = observer; }

 private:
  struct Round;

  void on_reply(const std::shared_ptr<Round>& round, const std::string& node_id,
                const RequestResult& result);
  void handle_pong(const std::string& node_id, const Envelope& pong);
  void finish(const std::shared_ptr<Round>& round);

  ProcessorConfig config_;
  MetricsStore& store_;
  Transport& transport_;
  ProcessorObserver* observer_ = nullptr;

  mutable std::mutex mu_;
  std::map<std::string, NodeRecord> nodes_;
  std::uint64_t round_ = 0;
  std::uint64_t ping_seq_ = 0;
  std::uint64_t pending_failures_ = 0;

  std::mutex ingest_mu_;
  std::atomic<std::uint64_t> ingest_failures_{0};
};

}  // namespace dcmon
