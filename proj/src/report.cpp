#include <charconv>
#include <cstdio>
#include <sstream>

#include "dcmon/scenario.hpp"

namespace dcmon {

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

// Splits one CSV record starting at `pos`; advances `pos` past its line break.
std::vector<std::string> csv_record(std::string_view text, std::size_t& pos) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  while (pos < text.size()) {
    const char c = text[pos++];
    if (quoted) {
      if (c == '"') {
        if (pos < text.size() && text[pos] == '"') {
          fields.back() += '"';
          ++pos;
        } else {
          quoted = false;
        }
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c == '\n') {
      return fields;
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  if (quoted) throw std::invalid_argument("unterminated quoted CSV field");
  return fields;
}

std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw std::invalid_argument("bad count '" + s + "'");
  return v;
}

std::int64_t to_i64(const std::string& s) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw std::invalid_argument("bad integer '" + s + "'");
  return v;
}

}  // namespace

std::string render_report_text(const RunReport& r) {
  std::ostringstream out;
  out << "scenario " << (r.scenario.empty() ? "(unnamed)" : r.scenario) << "  seed " << r.seed
      << "  end " << r.end_time << " ms\n";
  out << "samples: generated " << r.generated() << "  stored " << r.stored() << "  lost " << r.lost()
      << "  reduction_dropped " << r.reduction_dropped() << "\n";
  if (!r.lost_by_cause.empty()) {
    out << "lost by cause:";
    for (const auto& [c, n] : r.lost_by_cause) out << "  " << c << "=" << n;
    out << "\n";
  }
  out << "failed batches " << r.failed_batches << " (" << r.failed_batch_samples << " samples)"
      << "  ingest failures " << r.ingest_failures << "  duplicates " << r.duplicates << "\n";
  out << "store:";
  for (const auto& [scope, n] : r.stored_by_scope) out << "  " << scope << "=" << n;
  out << "\n";
  out << "health rounds " << r.health_rounds << "  aggregates " << r.aggregates_emitted << "\n";
  for (const auto& [node, at] : r.dead_transitions) out << "dead " << node << " at " << at << "\n";
  for (const auto& [node, at] : r.revivals) out << "revived " << node << " at " << at << "\n";
  out << "nodes:\n";
  for (const auto& [id, c] : r.nodes) {
    out << "  " << id << ": generated " << c.generated << " stored " << c.stored << " lost " << c.lost
        << " reduced " << c.reduction_dropped;
    for (const auto& [why, n] : c.lost_by_cause) out << " " << why << "=" << n;
    out << "\n";
  }
  out << "events " << r.event_count << "  digest " << hex64(r.event_log_digest) << "\n";
  for (const auto& a : r.assertions) {
    out << (a.passed ? "PASS " : "FAIL ") << a.name << ": " << a.detail << "\n";
  }
  return out.str();
}

std::string render_report_csv(const RunReport& r) {
  std::ostringstream out;
  out << "kind,id,metric,value\n";
  auto row = [&](std::string_view kind, std::string_view id, std::string_view metric, const std::string& value) {
    out << csv_field(kind) << ',' << csv_field(id) << ',' << csv_field(metric) << ',' << csv_field(value) << '\n';
  };
  auto scalar = [&](std::string_view metric, std::uint64_t v) {
    if (v != 0) row("run", "", metric, std::to_string(v));
  };
  if (!r.scenario.empty()) row("run", "", "scenario", r.scenario);
  scalar("seed", r.seed);
  if (r.end_time != 0) row("run", "", "end_time", std::to_string(r.end_time));
  scalar("failed_batches", r.failed_batches);
  scalar("failed_batch_samples", r.failed_batch_samples);
  scalar("duplicates", r.duplicates);
  scalar("aggregates_emitted", r.aggregates_emitted);
  scalar("health_rounds", r.health_rounds);
  scalar("ingest_failures", r.ingest_failures);
  scalar("event_count", r.event_count);
  if (r.event_log_digest != 0) row("run", "", "event_log_digest", hex64(r.event_log_digest));
  for (const auto& [id, c] : r.nodes) {
    row("node", id, "generated", std::to_string(c.generated));
    row("node", id, "stored", std::to_string(c.stored));
    row("node", id, "lost", std::to_string(c.lost));
    row("node", id, "reduction_dropped", std::to_string(c.reduction_dropped));
    for (const auto& [why, n] : c.lost_by_cause) row("node", id, "lost." + why, std::to_string(n));
  }
  for (const auto& [scope, n] : r.stored_by_scope) row("scope", scope, "stored", std::to_string(n));
  for (const auto& [why, n] : r.lost_by_cause) row("cause", why, "lost", std::to_string(n));
  for (const auto& [node, at] : r.dead_transitions) row("dead", node, "detected_at", std::to_string(at));
  for (const auto& [node, at] : r.revivals) row("revived", node, "at", std::to_string(at));
  for (const auto& a : r.assertions) {
    row("assert", a.name, "passed", a.passed ? "1" : "0");
    row("assert", a.name, "detail", a.detail);
  }
  return out.str();
}

RunReport parse_report_csv(std::string_view csv) {
  std::size_t pos = 0;
  const auto header = csv_record(csv, pos);
  if (header != std::vector<std::string>{"kind", "id", "metric", "value"}) {
    throw std::invalid_argument("missing kind,id,metric,value header");
  }
  RunReport r;
  while (pos < csv.size()) {
    const auto f = csv_record(csv, pos);
    if (f.size() == 1 && f[0].empty()) continue;
    if (f.size() != 4) throw std::invalid_argument("expected 4 fields per row");
    const std::string& kind = f[0];
    const std::string& id = f[1];
    const std::string& metric = f[2];
    const std::string& value = f[3];
    if (kind == "run") {
      if (metric == "scenario") r.scenario = value;
      else if (metric == "seed") r.seed = to_u64(value);
      else if (metric == "end_time") r.end_time = to_i64(value);
      else if (metric == "failed_batches") r.failed_batches = to_u64(value);
      else if (metric == "failed_batch_samples") r.failed_batch_samples = to_u64(value);
      else if (metric == "duplicates") r.duplicates = to_u64(value);
      else if (metric == "aggregates_emitted") r.aggregates_emitted = to_u64(value);
      else if (metric == "health_rounds") r.health_rounds = to_u64(value);
      else if (metric == "ingest_failures") r.ingest_failures = to_u64(value);
      else if (metric == "event_count") r.event_count = to_u64(value);
      else if (metric == "event_log_digest") r.event_log_digest = std::stoull(value, nullptr, 16);
      else throw std::invalid_argument("unknown run metric " + metric);
    } else if (kind == "node") {
      NodeCounts& c = r.nodes[id];
      if (metric == "generated") c.generated = to_u64(value);
      else if (metric == "stored") c.stored = to_u64(value);
      else if (metric == "lost") c.lost = to_u64(value);
      else if (metric == "reduction_dropped") c.reduction_dropped = to_u64(value);
      else if (metric.rfind("lost.", 0) == 0) c.lost_by_cause[metric.substr(5)] = to_u64(value);
      else throw std::invalid_argument("unknown node metric " + metric);
    } else if (kind == "scope") {
      r.stored_by_scope[id] = to_u64(value);
    } else if (kind == "cause") {
      r.lost_by_cause[id] = to_u64(value);
    } else if (kind == "dead") {
      r.dead_transitions.emplace_back(id, to_i64(value));
    } else if (kind == "revived") {
      r.revivals.emplace_back(id, to_i64(value));
    } else if (kind == "assert") {
      if (r.assertions.empty() || r.assertions.back().name != id) r.assertions.push_back({id, false, {}});
      if (metric == "passed") r.assertions.back().passed = value == "1";
      else if (metric == "detail") r.assertions.back().detail = value;
      else throw std::invalid_argument("unknown assert metric " + metric);
    } else {
      throw std::invalid_argument("unknown row kind " + kind);
    }
  }
  return r;
}

}  // namespace dcmon
