#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcmon/openmetrics.hpp"
#include "dcmon/time.hpp"

namespace dcmon {

struct SamplingConfig {
  /// Absolute value threshold.
  double delta = 0.0;
  Duration heartbeat_max{60'000};
};

struct ReductionConfig {
  bool dedup_enabled = false;
  std::optional<SamplingConfig> sampling;

  bool enabled() const noexcept { return dedup_enabled || sampling.has_value(); }
  /// Throws std::invalid_argument.
  void validate() const;
};

enum class Verdict { keep, drop };

/// Last kept point of one series.
class SeriesState {
 public:
  bool empty() const noexcept { return !last_value_.has_value(); }
  double last_value() const { return *last_value_; }
  Timestamp last_timestamp() const { return last_timestamp_; }
  void record(const om::Sample& s);

 private:
  std::optional<double> last_value_;
  Timestamp last_timestamp_ = 0;
};

/// Drop iff the value is bit-for-bit equal to the last kept value.
Verdict dedup_verdict(const SeriesState& state, const om::Sample& s) noexcept;

/// Keep iff the value moved by more than delta, the heartbeat expired, or the
/// series has no kept point yet.
Verdict sampling_verdict(const SeriesState& state, const om::Sample& s,
                         const SamplingConfig& config) noexcept;

/// Verdict plus state update on keep.
Verdict dedup_filter(SeriesState& state, const om::Sample& s);
Verdict dynamic_sample(SeriesState& state, const om::Sample& s, const SamplingConfig& config);

class BeforeFirstSample : public std::out_of_range {
 public:
  explicit BeforeFirstSample(Timestamp t)
      : std::out_of_range("query at " + std::to_string(t) + " precedes the series"), at_(t) {}
  Timestamp at() const noexcept { return at_; }

 private:
  Timestamp at_;
};

/// Last-observation-carried-forward. `kept` must be sorted by timestamp.
std::vector<om::Sample> reconstruct_series(std::span<const om::Sample> kept,
                                           std::span<const Timestamp> at);

/// Agent-side reduction over whole expositions with per-series state. Counters
/// only go through dedup.
class ReductionPipeline {
 public:
  using DropObserver = std::function<void(const om::MetricFamily&, const om::Sample&)>;

  explicit ReductionPipeline(ReductionConfig config);

  const ReductionConfig& config() const noexcept { return config_; }

  /// Returns the kept samples; families left empty are removed.
  om::Exposition apply(const om::Exposition& input, const DropObserver& on_drop = {});

  std::uint64_t dropped() const noexcept { return dropped_; }

 private:
  ReductionConfig config_;
  std::map<std::string, SeriesState> states_;
  std::uint64_t dropped_ = 0;
};

}  // namespace dcmon
