#include "dcmon/reduction.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>

namespace dcmon {

void ReductionConfig::validate() const {
  if (sampling) {
    if (!(sampling->delta >= 0)) throw std::invalid_argument("sampling delta must be >= 0");
    if (sampling->heartbeat_max.count() <= 0) {
      throw std::invalid_argument("sampling heartbeat_max must be > 0");
    }
  }
}

void SeriesState::record(const om::Sample& s) {
  last_value_ = s.value;
  last_timestamp_ = s.timestamp.value_or(0);
}

Verdict dedup_verdict(const SeriesState& state, const om::Sample& s) noexcept {
  if (state.empty()) return Verdict::keep;
  return std::bit_cast<std::uint64_t>(state.last_value()) == std::bit_cast<std::uint64_t>(s.value)
             ? Verdict::drop
             : Verdict::keep;
}

Verdict sampling_verdict(const SeriesState& state, const om::Sample& s,
                         const SamplingConfig& config) noexcept {
  if (state.empty()) return Verdict::keep;
  if (std::abs(s.value - state.last_value()) > config.delta) return Verdict::keep;
  const Timestamp elapsed = s.timestamp.value_or(0) - state.last_timestamp();
  if (elapsed >= config.heartbeat_max.count()) return Verdict::keep;
  return Verdict::drop;
}

Verdict dedup_filter(SeriesState& state, const om::Sample& s) {
  const Verdict v = dedup_verdict(state, s);
  if (v == Verdict::keep) state.record(s);
  return v;
}

Verdict dynamic_sample(SeriesState& state, const om::Sample& s, const SamplingConfig& config) {
  const Verdict v = sampling_verdict(state, s, config);
  if (v == Verdict::keep) state.record(s);
  return v;
}

std::vector<om::Sample> reconstruct_series(std::span<const om::Sample> kept,
                                           std::span<const Timestamp> at) {
  std::vector<om::Sample> out;
  out.reserve(at.size());
  for (Timestamp t : at) {
    auto it = std::upper_bound(kept.begin(), kept.end(), t, [](Timestamp q, const om::Sample& s) {
      return q < s.timestamp.value_or(0);
    });
    if (it == kept.begin()) throw BeforeFirstSample(t);
    om::Sample s = *std::prev(it);
    s.timestamp = t;
    out.push_back(std::move(s));
  }
  return out;
}

ReductionPipeline::ReductionPipeline(ReductionConfig config) : config_(std::move(config)) {
  config_.validate();
}

om::Exposition ReductionPipeline::apply(const om::Exposition& input, const DropObserver& on_drop) {
  if (!config_.enabled()) return input;
  om::Exposition out;
  for (const om::MetricFamily& f : input.families) {
    om::MetricFamily kept = f;
    kept.samples.clear();
    const bool sample_stage = config_.sampling && f.type != om::MetricType::counter;
    for (const om::Sample& s : f.samples) {
      SeriesState& state = states_[f.name + s.suffix + s.labels.to_string()];
      bool keep = true;
      if (config_.dedup_enabled && dedup_verdict(state, s) == Verdict::drop) keep = false;
      if (keep && sample_stage && sampling_verdict(state, s, *config_.sampling) == Verdict::drop) {
        keep = false;
      }
      if (keep) {
        state.record(s);
        kept.samples.push_back(s);
      } else {
        ++dropped_;
        if (on_drop) on_drop(f, s);
      }
    }
    if (!kept.samples.empty()) out.families.push_back(std::move(kept));
  }
  return out;
}

}  // namespace dcmon
