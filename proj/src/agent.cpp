#include "dcmon/agent.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

#include "fs_util.hpp"
#include "text_util.hpp"

namespace dcmon {

namespace fs = std::filesystem;
using detail::parse_bool;
using detail::parse_double;
using detail::parse_u64;
using detail::trim;

namespace {

// Segment files carry only exposition bytes, so after a restart the level is
// recovered from the labels the agent injected.
Level infer_level(const om::Exposition& e) {
  bool container = false;
  for (const auto& f : e.families) {
    for (const auto& s : f.samples) {
      if (s.labels.contains("app")) return Level::application;
      if (s.labels.contains("container")) container = true;
    }
  }
  return container ? Level::container : Level::machine;
}

}  // namespace

std::string_view to_string(DeliveryMode mode) noexcept {
  return mode == DeliveryMode::lossy ? "lossy" : "acknowledged";
}

std::optional<DeliveryMode> parse_delivery_mode(std::string_view text) noexcept {
  if (text == "lossy") return DeliveryMode::lossy;
  if (text == "acknowledged") return DeliveryMode::acknowledged;
  return std::nullopt;
}

Duration parse_duration(std::string_view text) {
  text = trim(text);
  std::size_t digits = 0;
  while (digits < text.size() && text[digits] >= '0' && text[digits] <= '9') ++digits;
  if (digits == 0) throw std::invalid_argument("bad duration '" + std::string(text) + "'");
  const auto value = static_cast<std::int64_t>(parse_u64("duration", text.substr(0, digits)));
  const std::string_view unit = text.substr(digits);
  if (unit.empty() || unit == "ms") return Duration(value);
  if (unit == "s") return Duration(value * 1000);
  if (unit == "m") return Duration(value * 60'000);
  if (unit == "h") return Duration(value * 3'600'000);
  throw std::invalid_argument("bad duration unit '" + std::string(text) + "'");
}

std::string format_duration(Duration d) {
  const auto ms = d.count();
  if (ms != 0 && ms % 1000 == 0) return std::to_string(ms / 1000) + "s";
  return std::to_string(ms) + "ms";
}

void AgentConfig::validate() const {
  if (node_id.empty()) throw std::invalid_argument("node_id is required");
  if (dc_id.empty()) throw std::invalid_argument("dc_id is required");
  if (poll_period.count() <= 0) throw std::invalid_argument("poll_period must be > 0");
  if (ack_timeout.count() <= 0) throw std::invalid_argument("ack_timeout must be > 0");
  if (buffer_cap_bytes == 0) throw std::invalid_argument("buffer_cap_bytes must be > 0");
  if (buffer_dir.empty()) throw std::invalid_argument("buffer_dir is required");
  reduction.validate();
}

AgentConfig parse_agent_config(std::string_view text) {
  AgentConfig c;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key == "node_id") {
      c.node_id = value;
    } else if (key == "dc_id") {
      c.dc_id = value;
    } else if (key == "poll_period") {
      c.poll_period = parse_duration(value);
    } else if (key == "delivery_mode") {
      auto mode = parse_delivery_mode(value);
      if (!mode) throw std::invalid_argument("bad delivery_mode: " + std::string(value));
      c.delivery_mode = *mode;
    } else if (key == "ack_timeout") {
      c.ack_timeout = parse_duration(value);
    } else if (key == "buffer_dir") {
      c.buffer_dir = std::string(value);
    } else if (key == "buffer_cap_bytes") {
      c.buffer_cap_bytes = parse_u64(key, value);
    } else if (key == "buffer_fsync") {
      c.buffer_fsync = parse_bool(key, value);
    } else if (key == "scrape_timeout") {
      c.scrape_timeout = parse_duration(value);
    } else if (key == "reduction.dedup") {
      c.reduction.dedup_enabled = parse_bool(key, value);
    } else if (key == "reduction.sampling.delta") {
      if (!c.reduction.sampling) c.reduction.sampling.emplace();
      c.reduction.sampling->delta = parse_double(key, value);
    } else if (key == "reduction.sampling.heartbeat_max") {
      if (!c.reduction.sampling) c.reduction.sampling.emplace();
      c.reduction.sampling->heartbeat_max = parse_duration(value);
    } else {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": unknown key " + std::string(key));
    }
  }
  c.validate();
  return c;
}

std::string format_agent_config(const AgentConfig& c) {
  std::ostringstream out;
  out << "node_id=" << c.node_id << '\n'
      << "dc_id=" << c.dc_id << '\n'
      << "poll_period=" << format_duration(c.poll_period) << '\n'
      << "delivery_mode=" << to_string(c.delivery_mode) << '\n'
      << "ack_timeout=" << format_duration(c.ack_timeout) << '\n'
      << "buffer_dir=" << c.buffer_dir.string() << '\n'
      << "buffer_cap_bytes=" << c.buffer_cap_bytes << '\n'
      << "buffer_fsync=" << (c.buffer_fsync ? "true" : "false") << '\n'
      << "scrape_timeout=" << format_duration(c.scrape_timeout) << '\n'
      << "reduction.dedup=" << (c.reduction.dedup_enabled ? "true" : "false") << '\n';
  if (c.reduction.sampling) {
    out << "reduction.sampling.delta=" << om::format_value(c.reduction.sampling->delta) << '\n'
        << "reduction.sampling.heartbeat_max=" << format_duration(c.reduction.sampling->heartbeat_max)
        << '\n';
  }
  return out.str();
}

NodeAgent::NodeAgent(AgentConfig config, Scraper& scraper, std::string machine_address,
                     std::optional<TargetEntry> container)
    : config_(std::move(config)), scraper_(scraper), reduction_(config_.reduction) {
  config_.validate();
  targets_.push_back(TargetEntry{"machine", Level::machine, std::move(machine_address), std::nullopt});
  if (container) {
    container->level = Level::container;
    container->app_id.reset();
    if (container->target_id.empty()) container->target_id = "container";
    targets_.push_back(std::move(*container));
  }
  fs::create_directories(config_.buffer_dir);
  load_buffer();
}

fs::path NodeAgent::segment_path(std::uint64_t seq) const {
  return config_.buffer_dir / (std::to_string(seq) + ".om");
}

void NodeAgent::load_buffer() {
  const fs::path hwm = config_.buffer_dir / "hwm";
  if (fs::exists(hwm)) {
    std::istringstream in(detail::read_file(hwm));
    std::string key;
    std::uint64_t value = 0;
    while (in >> key >> value) {
      if (key == "segment") segment_hwm_ = value;
      if (key == "batch") batch_hwm_ = value;
    }
  }
  for (const auto& entry : fs::directory_iterator(config_.buffer_dir)) {
    const fs::path& p = entry.path();
    if (p.extension() == ".tmp") {
      fs::remove(p);
      continue;
    }
    if (p.extension() != ".om") continue;
    std::uint64_t seq = 0;
    const std::string stem = p.stem().string();
    auto [ptr, ec] = std::from_chars(stem.data(), stem.data() + stem.size(), seq);
    if (ec != std::errc{} || ptr != stem.data() + stem.size()) continue;
    BufferSegment seg;
    seg.seq = seq;
    seg.payload = detail::read_file(p);
    om::Exposition e;
    try {
      e = om::parse_exposition(seg.payload);
    } catch (const om::OpenMetricsError&) {
      // A torn or foreign file; it can never be delivered.
      fs::remove(p);
      continue;
    }
    seg.level = infer_level(e);
    for (const auto& f : e.families) {
      for (const auto& s : f.samples) seg.created_at = std::max(seg.created_at, s.timestamp.value_or(0));
    }
    segment_hwm_ = std::max(segment_hwm_, seq);
    bytes_ += seg.payload.size();
    segments_.emplace(seq, std::move(seg));
  }
}

void NodeAgent::persist_hwm() {
  const std::string body =
      "segment " + std::to_string(segment_hwm_) + "\nbatch " + std::to_string(batch_hwm_) + "\n";
  detail::write_file_atomic(config_.buffer_dir / "hwm", body, config_.buffer_fsync);
}

void NodeAgent::inject_labels(om::Exposition& e, const TargetEntry& target) const {
  for (auto& f : e.families) {
    for (auto& s : f.samples) {
      s.labels.set("node", config_.node_id);
      switch (target.level) {
        case Level::machine: break;
        case Level::container:
          // Container collectors usually name the container themselves.
          if (!s.labels.contains("container")) s.labels.set("container", target.target_id);
          break;
        case Level::application: s.labels.set("app", target.app_id.value_or(target.target_id)); break;
      }
    }
  }
}

std::vector<BufferSegment> NodeAgent::poll_cycle(Timestamp now) {
  std::lock_guard poll_lock(poll_mu_);
  const std::vector<TargetEntry> targets = this->targets();

  std::map<Level, std::vector<om::Exposition>> per_level;
  std::uint64_t failures = 0;
  for (const TargetEntry& t : targets) {
    try {
      om::Exposition e = scraper_.scrape(t.address, config_.scrape_timeout, now);
      inject_labels(e, t);
      per_level[t.level].push_back(std::move(e));
    } catch (const ScrapeError&) {
      ++failures;
    } catch (const om::OpenMetricsError&) {
      ++failures;
    }
  }

  std::vector<std::pair<Level, om::Exposition>> reduced;
  for (auto& [level, parts] : per_level) {
    om::Exposition merged;
    for (auto& part : parts) {
      try {
        std::array<om::Exposition, 2> pair{merged, part};
        merged = om::merge_expositions(pair);
      } catch (const om::OpenMetricsError&) {
        ++failures;
      }
    }
    om::Exposition kept = reduction_.apply(merged, [this](const om::MetricFamily& f, const om::Sample& s) {
      if (observer_) observer_->on_reduction_drop(f, s);
    });
    if (!kept.empty()) reduced.emplace_back(level, std::move(kept));
  }

  std::vector<BufferSegment> created;
  std::lock_guard lock(buffer_mu_);
  scrape_failures_ += failures;
  for (auto& [level, e] : reduced) {
    BufferSegment seg;
    seg.seq = ++segment_hwm_;
    seg.created_at = now;
    seg.level = level;
    seg.payload = om::serialize_exposition(e);
    store_segment(std::move(seg), created);
  }
  return created;
}

void NodeAgent::store_segment(BufferSegment seg, std::vector<BufferSegment>& created) {
  persist_hwm();
  const std::uint64_t size = seg.payload.size();
  if (size > config_.buffer_cap_bytes) {
    ++dropped_segments_;
    if (observer_) observer_->on_segment_evicted(seg);
    return;
  }
  while (bytes_ + size > config_.buffer_cap_bytes) {
    auto victim = std::find_if(segments_.begin(), segments_.end(),
                               [](const auto& kv) { return kv.second.state == SegmentState::pending; });
    if (victim == segments_.end()) victim = segments_.begin();
    ++dropped_segments_;
    if (observer_) observer_->on_segment_evicted(victim->second);
    erase_segment(victim);
  }
  detail::write_file_atomic(segment_path(seg.seq), seg.payload, config_.buffer_fsync);
  bytes_ += size;
  created.push_back(seg);
  segments_.emplace(seg.seq, std::move(seg));
}

void NodeAgent::erase_segment(std::map<std::uint64_t, BufferSegment>::iterator it) {
  std::error_code ec;
  fs::remove(segment_path(it->first), ec);
  bytes_ -= it->second.payload.size();
  segments_.erase(it);
}

std::string NodeAgent::register_app_target(const std::string& app_id, const std::string& address) {
  std::lock_guard lock(targets_mu_);
  for (const TargetEntry& t : targets_) {
    if (t.address == address) throw DuplicateTarget(address);
  }
  std::string id = "app-" + std::to_string(next_app_++);
  targets_.push_back(TargetEntry{id, Level::application, address, app_id});
  return id;
}

void NodeAgent::deregister_app_target(const std::string& target_id) {
  std::lock_guard lock(targets_mu_);
  auto it = std::find_if(targets_.begin(), targets_.end(),
                         [&](const TargetEntry& t) { return t.target_id == target_id; });
  if (it == targets_.end()) throw UnknownTarget(target_id);
  if (it->level != Level::application) throw NotRemovable(target_id);
  targets_.erase(it);
}

om::Exposition NodeAgent::self_metrics(Timestamp now) const {
  om::Exposition e;
  om::LabelSet labels{{"node", config_.node_id}};
  e.families.push_back(om::MetricFamily{
      .name = std::string(kScrapeFailures),
      .type = om::MetricType::counter,
      .samples = {om::Sample{labels, static_cast<double>(scrape_failures_), now, {}}}});
  e.families.push_back(om::MetricFamily{
      .name = std::string(kDroppedSegments),
      .type = om::MetricType::counter,
      .samples = {om::Sample{labels, static_cast<double>(dropped_segments_), now, {}}}});
  return e;
}

MetricsBatch NodeAgent::drain_for_pong(Timestamp now) {
  std::lock_guard lock(buffer_mu_);
  MetricsBatch batch;
  batch.node_id = config_.node_id;
  batch.dc_id = config_.dc_id;
  batch.batch_seq = ++batch_hwm_;
  persist_hwm();

  const bool acknowledged = config_.delivery_mode == DeliveryMode::acknowledged;
  std::vector<std::uint64_t> included;
  std::map<Level, std::vector<om::Exposition>> per_level;
  for (auto& [seq, seg] : segments_) {
    const bool due = seg.state == SegmentState::pending ||
                     (seg.last_sent && now - *seg.last_sent >= config_.ack_timeout.count());
    if (!due) continue;
    included.push_back(seq);
    per_level[seg.level].push_back(om::parse_exposition(seg.payload));
  }

  if (!included.empty()) {
    per_level[Level::machine].push_back(self_metrics(now));
  }
  for (auto& [level, parts] : per_level) {
    try {
      batch.expositions.emplace_back(level, om::merge_expositions(parts));
    } catch (const om::OpenMetricsError&) {
      for (auto& part : parts) batch.expositions.emplace_back(level, std::move(part));
    }
  }
  batch.segment_seqs = included;

  if (acknowledged) {
    for (std::uint64_t seq : included) {
      BufferSegment& seg = segments_.at(seq);
      seg.state = SegmentState::in_flight;
      seg.last_sent = now;
    }
    if (!included.empty()) batches_[batch.batch_seq] = std::move(included);
  } else {
    for (std::uint64_t seq : included) erase_segment(segments_.find(seq));
  }
  return batch;
}

void NodeAgent::handle_ack(std::uint64_t batch_seq) {
  std::lock_guard lock(buffer_mu_);
  if (config_.delivery_mode == DeliveryMode::lossy) return;
  auto it = batches_.find(batch_seq);
  if (it == batches_.end()) return;
  for (std::uint64_t seq : it->second) {
    auto seg = segments_.find(seq);
    if (seg != segments_.end() && seg->second.state == SegmentState::in_flight) erase_segment(seg);
  }
  batches_.erase(it);
  // Forget batches whose segments are all gone.
  std::erase_if(batches_, [this](const auto& kv) {
    return std::none_of(kv.second.begin(), kv.second.end(),
                        [this](std::uint64_t s) { return segments_.contains(s); });
  });
}

std::optional<Envelope> NodeAgent::handle_envelope(const Envelope& e, Timestamp now) {
  switch (e.kind) {
    case MessageKind::ping: {
      MetricsBatch batch = drain_for_pong(now);
      return Envelope{Envelope::kVersion, MessageKind::pong, config_.node_id, batch.batch_seq,
                      encode_batch(batch)};
    }
    case MessageKind::ack: {
      std::uint64_t seq = 0;
      auto [p, ec] = std::from_chars(e.payload.data(), e.payload.data() + e.payload.size(), seq);
      if (ec == std::errc{} && p == e.payload.data() + e.payload.size()) handle_ack(seq);
      return std::nullopt;
    }
    case MessageKind::app_target_add: {
      const auto nl = e.payload.find('\n');
      Envelope reply{Envelope::kVersion, MessageKind::app_target_add, config_.node_id, e.seq, {}};
      if (nl == std::string::npos) {
        reply.payload = "error: expected <app_id>\\n<address>";
        return reply;
      }
      try {
        reply.payload = register_app_target(e.payload.substr(0, nl), e.payload.substr(nl + 1));
      } catch (const AgentError& err) {
        reply.payload = std::string("error: ") + err.what();
      }
      return reply;
    }
    case MessageKind::app_target_remove: {
      Envelope reply{Envelope::kVersion, MessageKind::app_target_remove, config_.node_id, e.seq, "ok"};
      try {
        deregister_app_target(e.payload);
      } catch (const AgentError& err) {
        reply.payload = std::string("error: ") + err.what();
      }
      return reply;
    }
    default: return std::nullopt;
  }
}

std::vector<TargetEntry> NodeAgent::targets() const {
  std::lock_guard lock(targets_mu_);
  return targets_;
}

std::vector<BufferSegment> NodeAgent::buffered() const {
  std::lock_guard lock(buffer_mu_);
  std::vector<BufferSegment> out;
  for (const auto& [seq, seg] : segments_) out.push_back(seg);
  return out;
}

std::uint64_t NodeAgent::buffered_bytes() const {
  std::lock_guard lock(buffer_mu_);
  return bytes_;
}

std::uint64_t NodeAgent::scrape_failures() const {
  std::lock_guard lock(buffer_mu_);
  return scrape_failures_;
}

std::uint64_t NodeAgent::dropped_segments() const {
  std::lock_guard lock(buffer_mu_);
  return dropped_segments_;
}

std::uint64_t NodeAgent::reduction_dropped() const {
  std::lock_guard lock(poll_mu_);
  return reduction_.dropped();
}

std::uint64_t NodeAgent::last_batch_seq() const {
  std::lock_guard lock(buffer_mu_);
  return batch_hwm_;
}

}  // namespace dcmon
