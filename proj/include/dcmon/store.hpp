#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcmon/openmetrics.hpp"
#include "dcmon/time.hpp"

namespace dcmon {

enum class Scope { node, dc, container, app };

std::string_view to_string(Scope scope) noexcept;
std::optional<Scope> parse_scope(std::string_view text) noexcept;

struct SeriesKey {
  Scope scope = Scope::node;
  std::string scope_id;
  std::string family;
  om::LabelSet labels;

  friend auto operator<=>(const SeriesKey&, const SeriesKey&) = default;
  friend bool operator==(const SeriesKey&, const SeriesKey&) = default;
};

struct StoredPoint {
  SeriesKey key;
  Timestamp timestamp = 0;
  double value = 0.0;
  om::MetricType type = om::MetricType::gauge;

  friend bool operator==(const StoredPoint&, const StoredPoint&) = default;
};

struct RetentionConfig {
  Duration max_age{7 * 24 * 3'600'000LL};
  std::size_t max_points_per_series = 100'000;
};

/// Crucial families served by the `latest` endpoints and the streaming API.
std::vector<std::string> default_crucial_families();

struct StoreConfig {
  /// Directory holding `store.wal`; in-memory only when empty.
  std::optional<std::filesystem::path> data_dir;
  /// fsync the log before append() returns.
  bool fsync = true;
  std::optional<std::uint64_t> byte_cap;
  std::vector<std::string> crucial_families = default_crucial_families();
  RetentionConfig retention;
};

class StoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class StorageFull : public StoreError {
 public:
  StorageFull() : StoreError("storage byte cap exceeded") {}
};

class InvalidRange : public std::invalid_argument {
 public:
  InvalidRange(Timestamp start, Timestamp end)
      : std::invalid_argument("invalid range [" + std::to_string(start) + ", " +
                              std::to_string(end) + ")") {}
};

/// Time-series store for the node, dc, container and app scopes. One ordered
/// map per series in memory plus an append-only log replayed at startup.
///
/// Log format: a sequence of records, each a 4-byte big-endian length
/// followed by a JSON array of points `[scope, id, family, type, labels, ts, value]`.
/// A torn trailing record is discarded on replay.
///
/// Many concurrent readers, one writer at a time; every read sees whole
/// append batches.
class MetricsStore {
 public:
  explicit MetricsStore(StoreConfig config = {});
  ~MetricsStore();
  MetricsStore(const MetricsStore&) = delete;
  MetricsStore& operator=(const MetricsStore&) = delete;

  const StoreConfig& config() const noexcept { return config_; }

  /// Inserts points whose (key, timestamp) is new; returns how many. The log
  /// is flushed before returning. All-or-nothing: throws StorageFull without
  /// inserting anything when the byte cap would be exceeded.
  std::size_t append(std::span<const StoredPoint> points);

  /// Half-open [start, end). Families sorted by name; samples by (labels, timestamp).
  om::Exposition query_range(Scope scope, std::string_view scope_id, Timestamp start,
                             Timestamp end) const;
  /// [since, now + 1); empty when since lies past now.
  om::Exposition query_from(Scope scope, std::string_view scope_id, Timestamp since,
                            Timestamp now) const;
  om::Exposition query_all(Timestamp start, Timestamp end) const;
  /// Latest point per series, crucial families only. Node and dc scopes.
  om::Exposition latest_crucial(Scope scope, std::string_view scope_id) const;

  /// For every series of `family` under (scope, scope_id), the latest point
  /// with not_before <= timestamp <= not_after, if any.
  std::vector<StoredPoint> latest_points(Scope scope, std::string_view scope_id,
                                         std::string_view family, Timestamp not_before,
                                         Timestamp not_after) const;

  /// Drops points older than now - max_age, then trims each series to
  /// max_points_per_series (oldest first). Returns how many were removed.
  std::size_t apply_retention(Timestamp now);

  std::vector<StoredPoint> snapshot() const;
  std::size_t point_count() const;
  std::uint64_t bytes_used() const;
  std::uint64_t rejected_appends() const;

 private:
  struct Series {
    om::MetricType type = om::MetricType::gauge;
    std::map<Timestamp, double> points;
  };
  using SeriesMap = std::map<SeriesKey, Series>;

  void open_log();
  void replay_log();
  void write_record(std::span<const StoredPoint> points);
  void rewrite_log();
  SeriesMap::const_iterator scope_begin(Scope scope, std::string_view scope_id) const;
  static std::uint64_t point_bytes(const SeriesKey& key);

  StoreConfig config_;
  mutable std::shared_mutex mu_;
  SeriesMap series_;
  std::size_t points_ = 0;
  std::uint64_t bytes_ = 0;
  std::uint64_t rejected_ = 0;
  int log_fd_ = -1;
};

}  // namespace dcmon
