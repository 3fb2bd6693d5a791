#include "dcmon/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <mutex>
#include <set>

#include <json.hpp>

#include "fs_util.hpp"

namespace dcmon {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kLogName = "store.wal";

struct Row {
  const om::LabelSet* labels;
  Timestamp ts;
  double value;
};

struct FamilyRows {
  om::MetricType type = om::MetricType::gauge;
  bool mixed = false;
  std::vector<Row> rows;
};

om::Exposition to_exposition(std::map<std::string, FamilyRows>& families) {
  om::Exposition e;
  for (auto& [name, fr] : families) {
    std::stable_sort(fr.rows.begin(), fr.rows.end(), [](const Row& a, const Row& b) {
      if (*a.labels != *b.labels) return *a.labels < *b.labels;
      return a.ts < b.ts;
    });
    om::MetricFamily f{.name = name, .type = fr.mixed ? om::MetricType::unknown : fr.type};
    for (std::size_t i = 0; i < fr.rows.size(); ++i) {
      const Row& r = fr.rows[i];
      if (i > 0 && *fr.rows[i - 1].labels == *r.labels && fr.rows[i - 1].ts == r.ts) continue;
      f.samples.push_back(om::Sample{*r.labels, r.value, r.ts, {}});
    }
    e.families.push_back(std::move(f));
  }
  return e;
}

void add_row(std::map<std::string, FamilyRows>& families, const SeriesKey& key, om::MetricType type,
             Timestamp ts, double value) {
  auto [it, inserted] = families.try_emplace(key.family);
  if (inserted) {
    it->second.type = type;
  } else if (it->second.type != type) {
    it->second.mixed = true;
  }
  it->second.rows.push_back(Row{&key.labels, ts, value});
}

nlohmann::json point_to_json(const StoredPoint& p) {
  nlohmann::json labels = nlohmann::json::array();
  for (const auto& l : p.key.labels) labels.push_back({l.name, l.value});
  return nlohmann::json::array({to_string(p.key.scope), p.key.scope_id, p.key.family,
                                om::to_string(p.type), std::move(labels), p.timestamp, p.value});
}

StoredPoint point_from_json(const nlohmann::json& j) {
  StoredPoint p;
  auto scope = parse_scope(j.at(0).get<std::string>());
  auto type = om::parse_metric_type(j.at(3).get<std::string>());
  if (!scope || !type) throw StoreError("corrupt log record");
  p.key.scope = *scope;
  p.key.scope_id = j.at(1).get<std::string>();
  p.key.family = j.at(2).get<std::string>();
  p.type = *type;
  std::vector<om::Label> labels;
  for (const auto& l : j.at(4)) labels.push_back({l.at(0).get<std::string>(), l.at(1).get<std::string>()});
  p.key.labels = om::LabelSet(std::move(labels));
  p.timestamp = j.at(5).get<Timestamp>();
  p.value = j.at(6).get<double>();
  return p;
}

void write_all(int fd, std::string_view bytes) {
  std::size_t written = 0;
  while (written < bytes.size()) {
    const ssize_t n = ::write(fd, bytes.data() + written, bytes.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw StoreError(std::string("log write failed: ") + std::strerror(errno));
    }
    written += static_cast<std::size_t>(n);
  }
}

std::string frame(const std::string& body) {
  const auto n = static_cast<std::uint32_t>(body.size());
  std::string out;
  out.reserve(body.size() + 4);
  out += static_cast<char>((n >> 24) & 0xFF);
  out += static_cast<char>((n >> 16) & 0xFF);
  out += static_cast<char>((n >> 8) & 0xFF);
  out += static_cast<char>(n & 0xFF);
  out += body;
  return out;
}

}  // namespace

std::string_view to_string(Scope scope) noexcept {
  switch (scope) {
    case Scope::node: return "node";
    case Scope::dc: return "dc";
    case Scope::container: return "container";
    case Scope::app: return "app";
  }
  return "node";
}

std::optional<Scope> parse_scope(std::string_view text) noexcept {
  if (text == "node") return Scope::node;
  if (text == "dc") return Scope::dc;
  if (text == "container") return Scope::container;
  if (text == "app") return Scope::app;
  return std::nullopt;
}

std::vector<std::string> default_crucial_families() {
  return {"machine_memory_total_bytes", "machine_memory_available_bytes", "machine_cpu_cores",
          "machine_cpu_utilization_ratio", "machine_disk_available_bytes",
          "machine_network_rx_bytes_total"};
}

MetricsStore::MetricsStore(StoreConfig config) : config_(std::move(config)) {
  if (config_.data_dir) {
    fs::create_directories(*config_.data_dir);
    replay_log();
    open_log();
  }
}

MetricsStore::~MetricsStore() {
  if (log_fd_ >= 0) ::close(log_fd_);
}

std::uint64_t MetricsStore::point_bytes(const SeriesKey& key) {
  std::uint64_t n = 24 + key.scope_id.size() + key.family.size();
  for (const auto& l : key.labels) n += l.name.size() + l.value.size() + 2;
  return n;
}

void MetricsStore::open_log() {
  const fs::path path = *config_.data_dir / kLogName;
  log_fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (log_fd_ < 0) throw StoreError("cannot open " + path.string() + ": " + std::strerror(errno));
}

void MetricsStore::replay_log() {
  const fs::path path = *config_.data_dir / kLogName;
  if (!fs::exists(path)) return;
  const std::string bytes = detail::read_file(path);
  std::size_t pos = 0;
  while (pos + 4 <= bytes.size()) {
    std::uint32_t n = 0;
    for (int i = 0; i < 4; ++i) n = (n << 8) | static_cast<unsigned char>(bytes[pos + i]);
    if (pos + 4 + n > bytes.size()) break;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(std::string_view(bytes).substr(pos + 4, n));
    } catch (const nlohmann::json::exception&) {
      break;
    }
    for (const auto& j : record) {
      StoredPoint p = point_from_json(j);
      Series& s = series_[p.key];
      s.type = p.type;
      if (s.points.emplace(p.timestamp, p.value).second) {
        ++points_;
        bytes_ += point_bytes(p.key);
      }
    }
    pos += 4 + n;
  }
  if (pos != bytes.size()) fs::resize_file(path, pos);
}

void MetricsStore::write_record(std::span<const StoredPoint> points) {
  if (log_fd_ < 0) return;
  nlohmann::json record = nlohmann::json::array();
  for (const StoredPoint& p : points) record.push_back(point_to_json(p));
  write_all(log_fd_, frame(record.dump()));
  if (config_.fsync && ::fsync(log_fd_) != 0) {
    throw StoreError(std::string("log fsync failed: ") + std::strerror(errno));
  }
}

std::size_t MetricsStore::append(std::span<const StoredPoint> points) {
  std::unique_lock lock(mu_);
  std::vector<StoredPoint> fresh;
  std::set<std::pair<const SeriesKey*, Timestamp>> batch_keys;
  std::uint64_t added_bytes = 0;
  for (const StoredPoint& p : points) {
    auto it = series_.find(p.key);
    if (it != series_.end() && it->second.points.contains(p.timestamp)) continue;
    if (std::any_of(fresh.begin(), fresh.end(), [&](const StoredPoint& q) {
          return q.timestamp == p.timestamp && q.key == p.key;
        })) {
      continue;
    }
    fresh.push_back(p);
    added_bytes += point_bytes(p.key);
  }
  if (fresh.empty()) return 0;
  if (config_.byte_cap && bytes_ + added_bytes > *config_.byte_cap) {
    ++rejected_;
    throw StorageFull();
  }
  write_record(fresh);
  for (const StoredPoint& p : fresh) {
    Series& s = series_[p.key];
    s.type = p.type;
    s.points.emplace(p.timestamp, p.value);
  }
  points_ += fresh.size();
  bytes_ += added_bytes;
  return fresh.size();
}

MetricsStore::SeriesMap::const_iterator MetricsStore::scope_begin(Scope scope,
                                                                  std::string_view scope_id) const {
  SeriesKey probe{scope, std::string(scope_id), {}, {}};
  return series_.lower_bound(probe);
}

om::Exposition MetricsStore::query_range(Scope scope, std::string_view scope_id, Timestamp start,
                                         Timestamp end) const {
  if (start > end) throw InvalidRange(start, end);
  std::shared_lock lock(mu_);
  std::map<std::string, FamilyRows> families;
  for (auto it = scope_begin(scope, scope_id);
       it != series_.end() && it->first.scope == scope && it->first.scope_id == scope_id; ++it) {
    const Series& s = it->second;
    for (auto p = s.points.lower_bound(start); p != s.points.end() && p->first < end; ++p) {
      add_row(families, it->first, s.type, p->first, p->second);
    }
  }
  return to_exposition(families);
}

om::Exposition MetricsStore::query_from(Scope scope, std::string_view scope_id, Timestamp since,
                                        Timestamp now) const {
  if (since > now + 1) return {};
  return query_range(scope, scope_id, since, now + 1);
}

om::Exposition MetricsStore::query_all(Timestamp start, Timestamp end) const {
  if (start > end) throw InvalidRange(start, end);
  std::shared_lock lock(mu_);
  std::map<std::string, FamilyRows> families;
  for (const auto& [key, s] : series_) {
    for (auto p = s.points.lower_bound(start); p != s.points.end() && p->first < end; ++p) {
      add_row(families, key, s.type, p->first, p->second);
    }
  }
  return to_exposition(families);
}

om::Exposition MetricsStore::latest_crucial(Scope scope, std::string_view scope_id) const {
  std::shared_lock lock(mu_);
  std::map<std::string, FamilyRows> families;
  for (auto it = scope_begin(scope, scope_id);
       it != series_.end() && it->first.scope == scope && it->first.scope_id == scope_id; ++it) {
    const auto& crucial = config_.crucial_families;
    if (std::find(crucial.begin(), crucial.end(), it->first.family) == crucial.end()) continue;
    if (it->second.points.empty()) continue;
    const auto& last = *it->second.points.rbegin();
    add_row(families, it->first, it->second.type, last.first, last.second);
  }
  return to_exposition(families);
}

std::vector<StoredPoint> MetricsStore::latest_points(Scope scope, std::string_view scope_id,
                                                     std::string_view family,
                                                     Timestamp not_before,
                                                     Timestamp not_after) const {
  std::shared_lock lock(mu_);
  std::vector<StoredPoint> out;
  SeriesKey probe{scope, std::string(scope_id), std::string(family), {}};
  for (auto it = series_.lower_bound(probe); it != series_.end() && it->first.scope == scope &&
                                             it->first.scope_id == scope_id &&
                                             it->first.family == family;
       ++it) {
    const auto& pts = it->second.points;
    auto after = pts.upper_bound(not_after);
    if (after == pts.begin()) continue;
    const auto& last = *std::prev(after);
    if (last.first < not_before) continue;
    out.push_back(StoredPoint{it->first, last.first, last.second, it->second.type});
  }
  return out;
}

std::size_t MetricsStore::apply_retention(Timestamp now) {
  std::unique_lock lock(mu_);
  const Timestamp cutoff = now - config_.retention.max_age.count();
  std::size_t removed = 0;
  for (auto it = series_.begin(); it != series_.end();) {
    auto& pts = it->second.points;
    const std::size_t before = pts.size();
    pts.erase(pts.begin(), pts.lower_bound(cutoff));
    while (pts.size() > config_.retention.max_points_per_series) pts.erase(pts.begin());
    const std::size_t gone = before - pts.size();
    removed += gone;
    bytes_ -= gone * point_bytes(it->first);
    if (pts.empty()) {
      it = series_.erase(it);
    } else {
      ++it;
    }
  }
  points_ -= removed;
  if (removed > 0 && log_fd_ >= 0) rewrite_log();
  return removed;
}

void MetricsStore::rewrite_log() {
  const fs::path path = *config_.data_dir / kLogName;
  std::string bytes;
  for (const auto& [key, s] : series_) {
    std::vector<StoredPoint> points;
    for (const auto& [ts, v] : s.points) points.push_back(StoredPoint{key, ts, v, s.type});
    nlohmann::json record = nlohmann::json::array();
    for (const auto& p : points) record.push_back(point_to_json(p));
    bytes += frame(record.dump());
  }
  ::close(log_fd_);
  log_fd_ = -1;
  detail::write_file_atomic(path, bytes, config_.fsync);
  open_log();
}

std::vector<StoredPoint> MetricsStore::snapshot() const {
  std::shared_lock lock(mu_);
  std::vector<StoredPoint> out;
  out.reserve(points_);
  for (const auto& [key, s] : series_) {
    for (const auto& [ts, v] : s.points) out.push_back(StoredPoint{key, ts, v, s.type});
  }
  return out;
}

std::size_t MetricsStore::point_count() const {
  std::shared_lock lock(mu_);
  return points_;
}

std::uint64_t MetricsStore::bytes_used() const {
  std::shared_lock lock(mu_);
  return bytes_;
}

std::uint64_t MetricsStore::rejected_appends() const {
  std::shared_lock lock(mu_);
  return rejected_;
}

}  // namespace dcmon
