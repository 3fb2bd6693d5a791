#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "dcmon/agent.hpp"
#include "dcmon/collector.hpp"
#include "dcmon/processor.hpp"
#include "dcmon/sim_network.hpp"

namespace dcmon {

struct AppSpec {
  std::string app_id;
  std::vector<GeneratorSpec> generators;
};

struct NodeSpec {
  std::string node_id;
  std::vector<GeneratorSpec> machine;
  std::vector<GeneratorSpec> container;
  std::vector<AppSpec> apps;
  /// Applied on top of the scenario-wide agent defaults.
  AgentConfig agent;
};

struct DcSpec {
  std::string dc_id;
  std::vector<NodeSpec> nodes;
};

namespace fault {
struct NodeCrash {
  std::string node_id;
  Timestamp at = 0;
};
struct NodeRestart {
  std::string node_id;
  Timestamp at = 0;
};
struct PersistFailure {
  Timestamp at = 0;
  std::uint64_t count = 1;
};
struct NetPartition {
  std::vector<std::string> a;
  std::vector<std::string> b;
  Timestamp from = 0;
  Timestamp to = 0;
};
}  // namespace fault

using FaultSpec = std::variant<fault::NodeCrash, fault::NodeRestart, fault::PersistFailure, fault::NetPartition>;

struct TimingSpec {
  Duration health_period{10'000};
  Duration ping_deadline{3'000};
  Duration poll_period{10'000};
  /// Collector tick period; defaults to poll_period.
  std::optional<Duration> collector_period;
  Duration aggregation_period{30'000};
  /// Extra health rounds after generation stops so buffers can drain.
  unsigned flush_rounds = 3;
};

/// Assertions checked after the run; absent fields are not checked. Sample
/// conservation (no unattributed loss) is always checked.
struct Expectations {
  std::optional<std::uint64_t> lost;
  std::optional<std::uint64_t> max_lost;
  std::optional<bool> stored_equals_generated;
  std::optional<std::uint64_t> node_scope_machine_samples;
  std::optional<bool> lost_equals_failed_batch_samples;
  std::optional<bool> no_duplicates;
  std::optional<Duration> dead_detection_within;
  std::optional<bool> no_false_dead;
  std::optional<std::uint64_t> min_aggregates;
  std::optional<std::uint64_t> ingest_failures;
  std::optional<std::uint64_t> min_reduction_dropped;
};

struct ScenarioSpec {
  std::string name;
  std::uint64_t seed = 1;
  Duration duration{0};
  TimingSpec timing;
  SimNetConfig net;
  std::vector<DcSpec> dcs;
  std::vector<FaultSpec> faults;
  ProcessorConfig processor;
  Expectations expect;
  /// Fsync agent buffers and the store log; off by default to keep runs fast.
  bool fsync = false;
};

class InvalidScenario : public std::runtime_error {
 public:
  explicit InvalidScenario(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// Machine generators used when a node lists none: memory total/available,
/// cpu cores/utilization and a received-bytes counter.
std::vector<GeneratorSpec> default_machine_generators(std::uint64_t seed);

/// Parses the YAML scenario format (see scenarios/). Throws InvalidScenario.
ScenarioSpec parse_scenario(std::string_view yaml_text);
ScenarioSpec load_scenario(const std::filesystem::path& path);
/// All problems at once; empty when valid.
std::vector<std::string> validate_scenario(const ScenarioSpec& s);

struct NodeCounts {
  std::uint64_t generated = 0;
  std::uint64_t reduction_dropped = 0;
  std::uint64_t stored = 0;
  std::uint64_t lost = 0;
  std::map<std::string, std::uint64_t> lost_by_cause;

  friend bool operator==(const NodeCounts&, const NodeCounts&) = default;
};

struct AssertionResult {
  std::string name;
  bool passed = false;
  std::string detail;

  friend bool operator==(const AssertionResult&, const AssertionResult&) = default;
};

struct RunReport {
  std::string scenario;
  std::uint64_t seed = 0;
  Timestamp end_time = 0;
  std::map<std::string, NodeCounts> nodes;
  std::map<std::string, std::uint64_t> stored_by_scope;
  std::map<std::string, std::uint64_t> lost_by_cause;
  std::uint64_t failed_batches = 0;
  std::uint64_t failed_batch_samples = 0;
  std::uint64_t duplicates = 0;
  std::vector<std::pair<std::string, Timestamp>> dead_transitions;
  std::vector<std::pair<std::string, Timestamp>> revivals;
  std::uint64_t aggregates_emitted = 0;
  std::uint64_t health_rounds = 0;
  std::uint64_t ingest_failures = 0;
  std::uint64_t event_count = 0;
  std::uint64_t event_log_digest = 0;
  std::vector<AssertionResult> assertions;

  std::uint64_t generated() const;
  std::uint64_t stored() const;
  std::uint64_t lost() const;
  std::uint64_t reduction_dropped() const;
  bool all_passed() const;

  friend bool operator==(const RunReport&, const RunReport&) = default;
};

/// Loss causes used in lost_by_cause.
namespace cause {
inline constexpr std::string_view drop = "drop";
inline constexpr std::string_view persist_failure = "in_flight_at_persist_failure";
inline constexpr std::string_view buffer_eviction = "buffer_eviction";
inline constexpr std::string_view node_crash = "node_crash";
inline constexpr std::string_view stranded = "stranded_at_end";
inline constexpr std::string_view unattributed = "unattributed";
}  // namespace cause

struct RunOptions {
  /// Scratch space for agent buffers and the store log; a fresh temporary
  /// directory (removed afterwards) when empty.
  std::optional<std::filesystem::path> work_dir;
  /// Keep every event log line in the report's companion vector.
  bool keep_event_log = false;
  std::vector<std::string>* event_log = nullptr;
  /// Called with the control-plane store once the run has finished.
  std::function<void(const MetricsStore&)> inspect_store;
};

/// Deterministic for a given spec. Throws InvalidScenario.
RunReport run_scenario(const ScenarioSpec& spec, const RunOptions& options = {});

std::string render_report_text(const RunReport& r);
/// Header `kind,id,metric,value`; one row per recorded figure.
std::string render_report_csv(const RunReport& r);
/// Inverse of render_report_csv. Throws std::invalid_argument.
RunReport parse_report_csv(std::string_view csv);

}  // namespace dcmon
