#include "dcmon/processor.hpp"

#include <algorithm>
#include <set>

#include "dcmon/agent.hpp"
#include "dcmon/reader.hpp"
#include "text_util.hpp"

namespace dcmon {

std::string_view to_string(AggFunction f) noexcept { return f == AggFunction::sum ? "sum" : "avg"; }

std::optional<AggFunction> parse_agg_function(std::string_view text) noexcept {
  if (text == "sum") return AggFunction::sum;
  if (text == "avg") return AggFunction::avg;
  return std::nullopt;
}

std::string_view to_string(NodeState s) noexcept { return s == NodeState::alive ? "alive" : "dead"; }

std::vector<AggregationSpec> default_aggregations() {
  return {
      {"machine_memory_total_bytes", AggFunction::sum, Duration{60'000}},
      {"machine_memory_available_bytes", AggFunction::sum, Duration{60'000}},
      {"machine_cpu_cores", AggFunction::sum, Duration{60'000}},
      {"machine_cpu_utilization_ratio", AggFunction::avg, Duration{60'000}},
  };
}

void ProcessorConfig::validate() const {
  if (id.empty()) throw std::invalid_argument("processor id is empty");
  if (health_period.count() <= 0) throw std::invalid_argument("health_period must be positive");
  if (ping_deadline.count() <= 0) throw std::invalid_argument("ping_deadline must be positive");
  if (aggregation_period.count() <= 0) {
    throw std::invalid_argument("aggregation_period must be positive");
  }
  if (dead_ping_every == 0) throw std::invalid_argument("dead_ping_every must be positive");
  for (const auto& a : aggregations) {
    if (!om::is_metric_name(a.family)) throw std::invalid_argument("bad aggregation family " + a.family);
    if (a.staleness_window.count() <= 0) {
      throw std::invalid_argument("staleness window of " + a.family + " must be positive");
    }
  }
}

ProcessorConfig parse_processor_config(std::string_view text) {
  ProcessorConfig c;
  bool custom_aggregations = false;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view raw = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    const std::string_view line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string_view key = detail::trim(line.substr(0, eq));
    const std::string_view value = detail::trim(line.substr(eq + 1));
    if (key == "id") {
      c.id = value;
    } else if (key == "health_period") {
      c.health_period = parse_duration(value);
    } else if (key == "ping_deadline") {
      c.ping_deadline = parse_duration(value);
    } else if (key == "aggregation_period") {
      c.aggregation_period = parse_duration(value);
    } else if (key == "dead_ping_every") {
      c.dead_ping_every = static_cast<unsigned>(detail::parse_u64(key, value));
    } else if (key == "send_acks") {
      c.send_acks = detail::parse_bool(key, value);
    } else if (key == "aggregation") {
      if (!custom_aggregations) c.aggregations.clear();
      custom_aggregations = true;
      const auto c1 = value.find(':');
      if (c1 == std::string_view::npos) {
        throw std::invalid_argument("aggregation expects <family>:<sum|avg>[:<window>]");
      }
      const auto c2 = value.find(':', c1 + 1);
      AggregationSpec spec;
      spec.family = value.substr(0, c1);
      const auto fn = parse_agg_function(value.substr(c1 + 1, c2 == std::string_view::npos
                                                                  ? std::string_view::npos
                                                                  : c2 - c1 - 1));
      if (!fn) throw std::invalid_argument("bad aggregation function in " + std::string(value));
      spec.function = *fn;
      if (c2 != std::string_view::npos) spec.staleness_window = parse_duration(value.substr(c2 + 1));
      c.aggregations.push_back(std::move(spec));
    } else {
      throw std::invalid_argument("unknown processor config key: " + std::string(key));
    }
  }
  c.validate();
  return c;
}

struct ControlProcessor::Round {
  std::mutex mu;
  RoundReport report;
  std::size_t outstanding = 0;
  std::function<void(const RoundReport&)> done;
};

ControlProcessor::ControlProcessor(ProcessorConfig config, MetricsStore& store, Transport& transport)
    : config_(std::move(config)), store_(store), transport_(transport) {
  config_.validate();
  transport_.attach(config_.id, [this](const Envelope& e) { return handle_envelope(e); });
}

ControlProcessor::~ControlProcessor() { transport_.detach(config_.id); }

void ControlProcessor::register_node(const std::string& node_id, const std::string& dc_id) {
  if (node_id.empty() || dc_id.empty()) throw ProcessorError("node and dc ids must be non-empty");
  bool revived = false;
  {
    std::lock_guard lock(mu_);
    auto [it, inserted] = nodes_.try_emplace(node_id);
    NodeRecord& r = it->second;
    if (inserted) {
      r.node_id = node_id;
      r.dc_id = dc_id;
      r.last_seen = transport_.now();
    } else if (r.dc_id != dc_id) {
      throw DcMismatch(node_id, r.dc_id, dc_id);
    } else if (r.state == NodeState::dead) {
      r.state = NodeState::alive;
      revived = true;
    }
  }
  if (revived && observer_) observer_->on_node_revived(node_id, transport_.now());
}

void ControlProcessor::health_check_round(std::function<void(const RoundReport&)> done) {
  auto round = std::make_shared<Round>();
  round->done = std::move(done);
  std::vector<std::pair<std::string, std::uint64_t>> targets;
  {
    std::lock_guard lock(mu_);
    ++round_;
    round->report.round = round_;
    round->report.started_at = transport_.now();
    for (const auto& [id, r] : nodes_) {
      if (r.state == NodeState::alive || round_ % config_.dead_ping_every == 0) {
        targets.emplace_back(id, ++ping_seq_);
      }
    }
  }
  round->report.pinged = targets.size();
  round->outstanding = targets.size();
  if (targets.empty()) {
    finish(round);
    return;
  }
  for (const auto& [id, seq] : targets) {
    transport_.request(id, Envelope{Envelope::kVersion, MessageKind::ping, config_.id, seq, {}},
                       config_.ping_deadline,
                       [this, round, id = id](RequestResult r) { on_reply(round, id, r); });
  }
}

void ControlProcessor::on_reply(const std::shared_ptr<Round>& round, const std::string& node_id,
                                const RequestResult& result) {
  const auto* pong = std::get_if<Envelope>(&result);
  if (pong && pong->kind == MessageKind::pong) {
    handle_pong(node_id, *pong);
    std::lock_guard lock(round->mu);
    ++round->report.replied;
  } else {
    bool died = false;
    {
      std::lock_guard lock(mu_);
      auto it = nodes_.find(node_id);
      if (it != nodes_.end() && it->second.state == NodeState::alive) {
        it->second.state = NodeState::dead;
        died = true;
      }
    }
    if (died) {
      {
        std::lock_guard lock(round->mu);
        round->report.newly_dead.push_back(node_id);
      }
      if (observer_) observer_->on_node_dead(node_id, transport_.now());
    }
  }
  bool last = false;
  {
    std::lock_guard lock(round->mu);
    last = --round->outstanding == 0;
  }
  if (last) finish(round);
}

void ControlProcessor::finish(const std::shared_ptr<Round>& round) {
  std::sort(round->report.newly_dead.begin(), round->report.newly_dead.end());
  if (observer_) observer_->on_round_complete(round->report);
  if (round->done) round->done(round->report);
}

void ControlProcessor::handle_pong(const std::string& node_id, const Envelope& pong) {
  const Timestamp now = transport_.now();
  bool revived = false;
  {
    std::lock_guard lock(mu_);
    auto it = nodes_.find(node_id);
    if (it == nodes_.end()) return;
    NodeRecord& r = it->second;
    r.last_seen = std::max(r.last_seen, now);
    r.last_pong_seq = std::max(r.last_pong_seq, pong.seq);
    if (r.state == NodeState::dead) {
      r.state = NodeState::alive;
      revived = true;
    }
  }
  if (revived && observer_) observer_->on_node_revived(node_id, now);

  MetricsBatch batch;
  try {
    batch = decode_batch(pong.payload);
    if (batch.node_id != node_id) throw MalformedBatch("pong from " + node_id + " carries batch of " + batch.node_id);
  } catch (const std::exception& e) {
    ingest_failures_.fetch_add(1);
    if (observer_) observer_->on_batch_failed(batch, e);
    return;
  }
  try {
    const std::size_t appended = ingest_batch(batch);
    if (observer_) observer_->on_batch_stored(batch, appended);
  } catch (const std::exception& e) {
    if (observer_) observer_->on_batch_failed(batch, e);
    return;
  }
  // Acks go out only once the batch is durably stored.
  if (config_.send_acks && !batch.segment_seqs.empty()) {
    transport_.send(node_id, Envelope{Envelope::kVersion, MessageKind::ack, config_.id,
                                      batch.batch_seq, std::to_string(batch.batch_seq)});
  }
}

std::size_t ControlProcessor::ingest_batch(const MetricsBatch& batch) {
  std::vector<StoredPoint> points;
  try {
    for (const auto& [level, e] : batch.expositions) {
      for (const om::MetricFamily& f : e.families) {
        for (const om::Sample& s : f.samples) {
          const auto node = s.labels.find("node");
          if (!node || *node != batch.node_id) {
            throw MalformedBatch("sample of " + f.name + " lacks node=\"" + batch.node_id + "\"");
          }
          if (!s.timestamp) throw MalformedBatch("sample of " + f.name + " has no timestamp");
          StoredPoint p;
          switch (level) {
            case Level::machine:
              p.key.scope = Scope::node;
              p.key.scope_id = batch.node_id;
              break;
            case Level::container: {
              const auto c = s.labels.find("container");
              if (!c) throw MalformedBatch("container sample of " + f.name + " lacks container label");
              p.key.scope = Scope::container;
              p.key.scope_id = *c;
              break;
            }
            case Level::application: {
              const auto a = s.labels.find("app");
              if (!a) throw MalformedBatch("application sample of " + f.name + " lacks app label");
              p.key.scope = Scope::app;
              p.key.scope_id = *a;
              break;
            }
          }
          // Pass-through families are stored under their raw sample names.
          p.key.family = f.name + s.suffix;
          p.type = s.suffix.empty() ? f.type : om::MetricType::unknown;
          p.key.labels = s.labels;
          p.timestamp = *s.timestamp;
          p.value = s.value;
          points.push_back(std::move(p));
        }
      }
    }
  } catch (const MalformedBatch&) {
    ingest_failures_.fetch_add(1);
    throw;
  }

  std::size_t appended = 0;
  {
    std::lock_guard lock(ingest_mu_);
    bool inject = false;
    {
      std::lock_guard reg(mu_);
      if (pending_failures_ > 0) {
        --pending_failures_;
        inject = true;
      }
    }
    if (inject) {
      ingest_failures_.fetch_add(1);
      throw PersistFailure();
    }
    try {
      appended = store_.append(points);
    } catch (const StoreError&) {
      ingest_failures_.fetch_add(1);
      throw;
    }
  }
  publish_latest(transport_, Scope::node, batch.node_id,
                 store_.latest_crucial(Scope::node, batch.node_id));
  return appended;
}

om::Exposition ControlProcessor::aggregate_dc(const std::string& dc_id,
                                              const std::vector<AggregationSpec>& specs,
                                              Timestamp now) {
  std::vector<std::string> members;
  {
    std::lock_guard lock(mu_);
    for (const auto& [id, r] : nodes_) {
      if (r.dc_id == dc_id && r.state == NodeState::alive) members.push_back(id);
    }
  }
  om::Exposition result;
  for (const AggregationSpec& spec : specs) {
    double total = 0.0;
    std::size_t n = 0;
    om::MetricType type = om::MetricType::gauge;
    for (const std::string& node : members) {
      for (const StoredPoint& p : store_.latest_points(Scope::node, node, spec.family,
                                                        now - spec.staleness_window.count(), now)) {
        if (n == 0) type = p.type;
        total += p.value;
        ++n;
      }
    }
    if (n == 0) continue;
    const double value = spec.function == AggFunction::sum ? total : total / static_cast<double>(n);
    om::MetricFamily f{.name = spec.family,
                       .type = spec.function == AggFunction::avg ? om::MetricType::gauge : type};
    f.samples.push_back(om::Sample{om::LabelSet({{"dc", dc_id}}), value, now, {}});
    result.families.push_back(std::move(f));
  }
  std::sort(result.families.begin(), result.families.end(),
            [](const auto& a, const auto& b) { return a.name < b.name; });
  if (result.families.empty()) return result;

  std::vector<StoredPoint> points;
  for (const auto& f : result.families) {
    for (const auto& s : f.samples) {
      points.push_back(StoredPoint{SeriesKey{Scope::dc, dc_id, f.name, s.labels}, *s.timestamp,
                                   s.value, f.type});
    }
  }
  {
    std::lock_guard lock(ingest_mu_);
    store_.append(points);
  }
  publish_latest(transport_, Scope::dc, dc_id, store_.latest_crucial(Scope::dc, dc_id));
  if (observer_) observer_->on_aggregate(dc_id, result);
  return result;
}

void ControlProcessor::aggregation_round() {
  const Timestamp now = transport_.now();
  for (const std::string& dc : dcs()) {
    try {
      aggregate_dc(dc, config_.aggregations, now);
    } catch (const StoreError&) {
      // A full store loses this round's aggregates; the next round recomputes them.
    }
  }
}

std::optional<Envelope> ControlProcessor::handle_envelope(const Envelope& e) {
  if (e.kind != MessageKind::register_node) return std::nullopt;
  Envelope reply{Envelope::kVersion, MessageKind::register_node, config_.id, e.seq, "ok"};
  try {
    register_node(e.sender, e.payload);
  } catch (const ProcessorError& err) {
    reply.payload = std::string("error: ") + err.what();
  }
  return reply;
}

void ControlProcessor::inject_persist_failures(std::uint64_t count) {
  std::lock_guard lock(mu_);
  pending_failures_ += count;
}

std::vector<NodeRecord> ControlProcessor::nodes() const {
  std::lock_guard lock(mu_);
  std::vector<NodeRecord> out;
  for (const auto& [id, r] : nodes_) out.push_back(r);
  return out;
}

std::optional<NodeRecord> ControlProcessor::node(const std::string& node_id) const {
  std::lock_guard lock(mu_);
  auto it = nodes_.find(node_id);
  if (it == nodes_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> ControlProcessor::dcs() const {
  std::lock_guard lock(mu_);
  std::set<std::string> ids;
  for (const auto& [id, r] : nodes_) ids.insert(r.dc_id);
  return {ids.begin(), ids.end()};
}

std::uint64_t ControlProcessor::rounds() const {
  std::lock_guard lock(mu_);
  return round_;
}

om::Exposition ControlProcessor::self_metrics(Timestamp now) const {
  std::size_t alive = 0;
  std::size_t dead = 0;
  {
    std::lock_guard lock(mu_);
    for (const auto& [id, r] : nodes_) (r.state == NodeState::alive ? alive : dead)++;
  }
  om::Exposition e;
  om::MetricFamily nodes{.name = "processor_nodes", .type = om::MetricType::gauge};
  nodes.samples.push_back(
      om::Sample{om::LabelSet({{"state", "alive"}}), static_cast<double>(alive), now, {}});
  nodes.samples.push_back(
      om::Sample{om::LabelSet({{"state", "dead"}}), static_cast<double>(dead), now, {}});
  om::MetricFamily failures{.name = std::string(kIngestFailures), .type = om::MetricType::counter};
  failures.samples.push_back(
      om::Sample{{}, static_cast<double>(ingest_failures_.load()), now, {}});
  e.families.push_back(std::move(failures));
  e.families.push_back(std::move(nodes));
  return e;
}

}  // namespace dcmon
