#include "dcmon/scenario.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

#include <yaml-cpp/yaml.h>

#include "dcmon/store.hpp"
#include "fs_util.hpp"

namespace dcmon {

namespace fs = std::filesystem;

namespace {

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += "; ";
    out += p;
  }
  return out;
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 14695981039346656037ull) {
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

InvalidScenario::InvalidScenario(std::vector<std::string> problems)
    : std::runtime_error("invalid scenario: " + join(problems)), problems_(std::move(problems)) {}

std::vector<GeneratorSpec> default_machine_generators(std::uint64_t seed) {
  using namespace pattern;
  std::vector<GeneratorSpec> g;
  g.push_back({"machine_memory_total_bytes", om::MetricType::gauge, {}, Constant{16e9}, seed});
  g.push_back({"machine_memory_available_bytes", om::MetricType::gauge, {},
               RandomWalk{8e9, 2e8, 0.0, 16e9}, seed + 1});
  g.push_back({"machine_cpu_cores", om::MetricType::gauge, {}, Constant{8}, seed + 2});
  g.push_back({"machine_cpu_utilization_ratio", om::MetricType::gauge, {},
               RandomWalk{0.3, 0.05, 0.0, 1.0}, seed + 3});
  g.push_back({"machine_network_rx_bytes_total", om::MetricType::counter, {},
               CounterRate{125'000.0}, seed + 4});
  return g;
}

// --- YAML ---------------------------------------------------------------------

namespace {

class YamlReader {
 public:
  std::vector<std::string> problems;

  void keys(const YAML::Node& n, const std::string& where, std::initializer_list<std::string_view> allowed) {
    if (!n) return;
    if (!n.IsMap()) {
      problems.push_back(where + ": expected a mapping");
      return;
    }
    for (const auto& kv : n) {
      const auto k = kv.first.as<std::string>();
      if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
        problems.push_back(where + ": unknown key '" + k + "'");
      }
    }
  }

  template <class T>
  void read(const YAML::Node& n, const char* key, const std::string& where, T& out) {
    if (!n || !n[key]) return;
    try {
      out = n[key].as<T>();
    } catch (const YAML::Exception&) {
      problems.push_back(where + "." + key + ": bad value");
    }
  }

  template <class T>
  void read_opt(const YAML::Node& n, const char* key, const std::string& where, std::optional<T>& out) {
    if (!n || !n[key]) return;
    T v{};
    read(n, key, where, v);
    out = v;
  }

  void duration(const YAML::Node& n, const char* key, const std::string& where, Duration& out) {
    if (!n || !n[key]) return;
    try {
      out = parse_duration(n[key].as<std::string>());
    } catch (const std::exception&) {
      problems.push_back(where + "." + key + ": bad duration");
    }
  }

  void timestamp(const YAML::Node& n, const char* key, const std::string& where, Timestamp& out) {
    Duration d{out};
    duration(n, key, where, d);
    out = d.count();
  }

  std::vector<std::string> strings(const YAML::Node& n, const std::string& where) {
    std::vector<std::string> out;
    if (!n) return out;
    if (!n.IsSequence()) {
      problems.push_back(where + ": expected a list");
      return out;
    }
    for (const auto& item : n) {
      try {
        out.push_back(item.as<std::string>());
      } catch (const YAML::Exception&) {
        problems.push_back(where + ": bad list item");
      }
    }
    return out;
  }

  GeneratorSpec generator(const YAML::Node& n, const std::string& where) {
    keys(n, where, {"family", "type", "labels", "pattern", "value", "start", "step_stddev", "min",
                    "max", "mean", "amplitude", "period_s", "rate_per_s", "seed"});
    GeneratorSpec g;
    read(n, "family", where, g.family);
    std::string type = "gauge";
    read(n, "type", where, type);
    if (auto t = om::parse_metric_type(type)) {
      g.type = *t;
    } else {
      problems.push_back(where + ".type: unknown metric type '" + type + "'");
    }
    if (n["labels"]) {
      if (!n["labels"].IsMap()) {
        problems.push_back(where + ".labels: expected a mapping");
      } else {
        for (const auto& kv : n["labels"]) g.labels.set(kv.first.as<std::string>(), kv.second.as<std::string>());
      }
    }
    std::string pat = g.type == om::MetricType::counter ? "counter_rate" : "constant";
    read(n, "pattern", where, pat);
    if (pat == "constant") {
      pattern::Constant c;
      read(n, "value", where, c.value);
      g.pattern = c;
    } else if (pat == "random_walk") {
      pattern::RandomWalk w;
      read(n, "start", where, w.start);
      read(n, "step_stddev", where, w.step_stddev);
      read(n, "min", where, w.min);
      read(n, "max", where, w.max);
      g.pattern = w;
    } else if (pat == "sine") {
      pattern::Sine s;
      read(n, "mean", where, s.mean);
      read(n, "amplitude", where, s.amplitude);
      read(n, "period_s", where, s.period_s);
      g.pattern = s;
    } else if (pat == "counter_rate") {
      pattern::CounterRate r;
      read(n, "rate_per_s", where, r.rate_per_s);
      g.pattern = r;
    } else {
      problems.push_back(where + ".pattern: unknown pattern '" + pat + "'");
    }
    read(n, "seed", where, g.seed);
    return g;
  }

  std::optional<std::vector<GeneratorSpec>> generators(const YAML::Node& n, const std::string& where) {
    if (!n) return std::nullopt;
    std::vector<GeneratorSpec> out;
    if (!n.IsSequence()) {
      problems.push_back(where + ": expected a list");
      return out;
    }
    for (std::size_t i = 0; i < n.size(); ++i) {
      out.push_back(generator(n[i], where + "[" + std::to_string(i) + "]"));
    }
    return out;
  }

  std::optional<std::vector<AppSpec>> apps(const YAML::Node& n, const std::string& where) {
    if (!n) return std::nullopt;
    std::vector<AppSpec> out;
    if (!n.IsSequence()) {
      problems.push_back(where + ": expected a list");
      return out;
    }
    for (std::size_t i = 0; i < n.size(); ++i) {
      const std::string w = where + "[" + std::to_string(i) + "]";
      keys(n[i], w, {"id", "generators"});
      AppSpec a;
      read(n[i], "id", w, a.app_id);
      a.generators = generators(n[i]["generators"], w + ".generators").value_or(std::vector<GeneratorSpec>{});
      out.push_back(std::move(a));
    }
    return out;
  }

  void agent(const YAML::Node& n, const std::string& where, AgentConfig& c) {
    if (!n) return;
    keys(n, where, {"delivery_mode", "ack_timeout", "buffer_cap_bytes", "scrape_timeout", "reduction"});
    if (n["delivery_mode"]) {
      const auto m = parse_delivery_mode(n["delivery_mode"].as<std::string>());
      if (m) {
        c.delivery_mode = *m;
      } else {
        problems.push_back(where + ".delivery_mode: expected lossy or acknowledged");
      }
    }
    duration(n, "ack_timeout", where, c.ack_timeout);
    read(n, "buffer_cap_bytes", where, c.buffer_cap_bytes);
    duration(n, "scrape_timeout", where, c.scrape_timeout);
    if (const auto r = n["reduction"]) {
      const std::string w = where + ".reduction";
      keys(r, w, {"dedup", "sampling"});
      read(r, "dedup", w, c.reduction.dedup_enabled);
      if (const auto s = r["sampling"]) {
        if (s.IsScalar() && !s.as<bool>(true)) {
          c.reduction.sampling.reset();
        } else {
          keys(s, w + ".sampling", {"delta", "heartbeat_max"});
          SamplingConfig sc = c.reduction.sampling.value_or(SamplingConfig{});
          read(s, "delta", w + ".sampling", sc.delta);
          duration(s, "heartbeat_max", w + ".sampling", sc.heartbeat_max);
          c.reduction.sampling = sc;
        }
      }
    }
  }
};

// Generators without an explicit seed get one derived from the scenario seed,
// so every node produces different but reproducible series.
std::vector<GeneratorSpec> seeded(std::vector<GeneratorSpec> gens, std::uint64_t seed,
                                  const std::string& node, std::string_view level) {
  for (std::size_t i = 0; i < gens.size(); ++i) {
    if (gens[i].seed != 0) continue;
    std::uint64_t h = fnv1a(std::to_string(seed));
    h = fnv1a(node, h ^ 0x2f);
    h = fnv1a(level, h ^ 0x2f);
    h = fnv1a(gens[i].family + "#" + std::to_string(i), h ^ 0x2f);
    gens[i].seed = h;
  }
  return gens;
}

}  // namespace

ScenarioSpec parse_scenario(std::string_view yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml_text));
  } catch (const YAML::Exception& e) {
    throw InvalidScenario({std::string("YAML: ") + e.what()});
  }
  if (!root.IsMap()) throw InvalidScenario({"top level must be a mapping"});

  YamlReader y;
  ScenarioSpec s;
  try {
    y.keys(root, "scenario",
           {"name", "seed", "duration", "fsync", "timing", "agent", "net", "processor", "dcs", "faults",
            "expect"});
    y.read(root, "name", "scenario", s.name);
    y.read(root, "seed", "scenario", s.seed);
    y.duration(root, "duration", "scenario", s.duration);
    y.read(root, "fsync", "scenario", s.fsync);

    if (const auto t = root["timing"]) {
      y.keys(t, "timing",
             {"health_period", "ping_deadline", "poll_period", "collector_period", "aggregation_period",
              "flush_rounds"});
      y.duration(t, "health_period", "timing", s.timing.health_period);
      y.duration(t, "ping_deadline", "timing", s.timing.ping_deadline);
      y.duration(t, "poll_period", "timing", s.timing.poll_period);
      if (t["collector_period"]) {
        Duration d{0};
        y.duration(t, "collector_period", "timing", d);
        s.timing.collector_period = d;
      }
      y.duration(t, "aggregation_period", "timing", s.timing.aggregation_period);
      y.read(t, "flush_rounds", "timing", s.timing.flush_rounds);
    }

    AgentConfig agent_defaults;
    y.agent(root["agent"], "agent", agent_defaults);

    s.net.seed = s.seed;
    if (const auto n = root["net"]) {
      y.keys(n, "net", {"seed", "latency_min", "latency_max", "drop_prob"});
      y.read(n, "seed", "net", s.net.seed);
      y.duration(n, "latency_min", "net", s.net.latency_min);
      y.duration(n, "latency_max", "net", s.net.latency_max);
      y.read(n, "drop_prob", "net", s.net.drop_prob);
    }

    if (const auto p = root["processor"]) {
      y.keys(p, "processor", {"id", "dead_ping_every", "send_acks", "aggregations"});
      y.read(p, "id", "processor", s.processor.id);
      y.read(p, "dead_ping_every", "processor", s.processor.dead_ping_every);
      y.read(p, "send_acks", "processor", s.processor.send_acks);
      if (const auto aggs = p["aggregations"]) {
        s.processor.aggregations.clear();
        for (std::size_t i = 0; i < aggs.size(); ++i) {
          const std::string w = "processor.aggregations[" + std::to_string(i) + "]";
          y.keys(aggs[i], w, {"family", "function", "staleness_window"});
          AggregationSpec a;
          y.read(aggs[i], "family", w, a.family);
          std::string fn = "sum";
          y.read(aggs[i], "function", w, fn);
          if (auto f = parse_agg_function(fn)) {
            a.function = *f;
          } else {
            y.problems.push_back(w + ".function: expected sum or avg");
          }
          y.duration(aggs[i], "staleness_window", w, a.staleness_window);
          s.processor.aggregations.push_back(std::move(a));
        }
      }
    }
    s.processor.health_period = s.timing.health_period;
    s.processor.ping_deadline = s.timing.ping_deadline;
    s.processor.aggregation_period = s.timing.aggregation_period;

    const auto dcs = root["dcs"];
    if (!dcs || !dcs.IsSequence()) {
      y.problems.push_back("dcs: expected a list");
    } else {
      for (std::size_t i = 0; i < dcs.size(); ++i) {
        const auto d = dcs[i];
        const std::string w = "dcs[" + std::to_string(i) + "]";
        y.keys(d, w, {"id", "nodes", "node_count", "node_prefix", "machine", "container", "apps", "agent"});
        DcSpec dc;
        y.read(d, "id", w, dc.dc_id);
        AgentConfig dc_agent = agent_defaults;
        y.agent(d["agent"], w + ".agent", dc_agent);
        const auto machine = y.generators(d["machine"], w + ".machine");
        const auto container = y.generators(d["container"], w + ".container");
        const auto apps = y.apps(d["apps"], w + ".apps");

        auto make_node = [&](const std::string& id, const YAML::Node& n, const std::string& nw) {
          NodeSpec node;
          node.node_id = id;
          node.agent = dc_agent;
          y.agent(n["agent"], nw + ".agent", node.agent);
          auto m = y.generators(n["machine"], nw + ".machine");
          auto c = y.generators(n["container"], nw + ".container");
          auto a = y.apps(n["apps"], nw + ".apps");
          node.machine = seeded(m ? *m : machine ? *machine : default_machine_generators(0), s.seed, id,
                                "machine");
          node.container = seeded(c ? *c : container.value_or(std::vector<GeneratorSpec>{}), s.seed,
                                  id, "container");
          node.apps = a ? *a : apps.value_or(std::vector<AppSpec>{});
          for (auto& app : node.apps) app.generators = seeded(app.generators, s.seed, id, "app/" + app.app_id);
          dc.nodes.push_back(std::move(node));
        };

        if (d["nodes"]) {
          if (d["node_count"]) y.problems.push_back(w + ": give either nodes or node_count");
          const auto nodes = d["nodes"];
          for (std::size_t j = 0; j < nodes.size(); ++j) {
            const std::string nw = w + ".nodes[" + std::to_string(j) + "]";
            y.keys(nodes[j], nw, {"id", "machine", "container", "apps", "agent"});
            std::string id;
            y.read(nodes[j], "id", nw, id);
            make_node(id, nodes[j], nw);
          }
        } else {
          std::size_t count = 0;
          y.read(d, "node_count", w, count);
          std::string prefix = dc.dc_id + "-n";
          y.read(d, "node_prefix", w, prefix);
          for (std::size_t j = 0; j < count; ++j) make_node(prefix + std::to_string(j + 1), YAML::Node(), w);
        }
        s.dcs.push_back(std::move(dc));
      }
    }

    if (const auto faults = root["faults"]) {
      for (std::size_t i = 0; i < faults.size(); ++i) {
        const auto f = faults[i];
        const std::string w = "faults[" + std::to_string(i) + "]";
        std::string kind;
        y.read(f, "kind", w, kind);
        if (kind == "node_crash" || kind == "node_restart") {
          y.keys(f, w, {"kind", "node", "at"});
          std::string node;
          Timestamp at = 0;
          y.read(f, "node", w, node);
          y.timestamp(f, "at", w, at);
          if (kind == "node_crash") {
            s.faults.emplace_back(fault::NodeCrash{node, at});
          } else {
            s.faults.emplace_back(fault::NodeRestart{node, at});
          }
        } else if (kind == "processor_persist_failure") {
          y.keys(f, w, {"kind", "at", "count"});
          fault::PersistFailure pf;
          y.timestamp(f, "at", w, pf.at);
          y.read(f, "count", w, pf.count);
          s.faults.emplace_back(pf);
        } else if (kind == "partition") {
          y.keys(f, w, {"kind", "a", "b", "from", "to"});
          fault::NetPartition p;
          p.a = y.strings(f["a"], w + ".a");
          p.b = y.strings(f["b"], w + ".b");
          y.timestamp(f, "from", w, p.from);
          y.timestamp(f, "to", w, p.to);
          s.faults.emplace_back(std::move(p));
        } else {
          y.problems.push_back(w + ".kind: unknown fault '" + kind + "'");
        }
      }
    }

    if (const auto e = root["expect"]) {
      y.keys(e, "expect",
             {"lost", "max_lost", "stored_equals_generated", "node_scope_machine_samples",
              "lost_equals_failed_batch_samples", "no_duplicates", "dead_detection_within",
              "no_false_dead", "min_aggregates", "ingest_failures", "min_reduction_dropped"});
      y.read_opt(e, "lost", "expect", s.expect.lost);
      y.read_opt(e, "max_lost", "expect", s.expect.max_lost);
      y.read_opt(e, "stored_equals_generated", "expect", s.expect.stored_equals_generated);
      y.read_opt(e, "node_scope_machine_samples", "expect", s.expect.node_scope_machine_samples);
      y.read_opt(e, "lost_equals_failed_batch_samples", "expect", s.expect.lost_equals_failed_batch_samples);
      y.read_opt(e, "no_duplicates", "expect", s.expect.no_duplicates);
      if (e["dead_detection_within"]) {
        Duration d{0};
        y.duration(e, "dead_detection_within", "expect", d);
        s.expect.dead_detection_within = d;
      }
      y.read_opt(e, "no_false_dead", "expect", s.expect.no_false_dead);
      y.read_opt(e, "min_aggregates", "expect", s.expect.min_aggregates);
      y.read_opt(e, "ingest_failures", "expect", s.expect.ingest_failures);
      y.read_opt(e, "min_reduction_dropped", "expect", s.expect.min_reduction_dropped);
    }
  } catch (const YAML::Exception& e) {
    y.problems.push_back(std::string("YAML: ") + e.what());
  }

  if (!y.problems.empty()) throw InvalidScenario(std::move(y.problems));
  if (auto problems = validate_scenario(s); !problems.empty()) throw InvalidScenario(std::move(problems));
  return s;
}

ScenarioSpec load_scenario(const fs::path& path) {
  std::string text;
  try {
    text = detail::read_file(path);
  } catch (const std::exception& e) {
    throw InvalidScenario({e.what()});
  }
  ScenarioSpec s = parse_scenario(text);
  if (s.name.empty()) s.name = path.stem().string();
  return s;
}

namespace {

bool is_plain_id(const std::string& id) {
  return !id.empty() && id.find_first_of(".*/ \t\n") == std::string::npos;
}

}  // namespace

std::vector<std::string> validate_scenario(const ScenarioSpec& s) {
  std::vector<std::string> p;
  auto check = [&](auto&& fn, const std::string& where) {
    try {
      fn();
    } catch (const std::exception& e) {
      p.push_back(where + ": " + e.what());
    }
  };
  if (s.duration.count() <= 0) p.push_back("duration must be positive");
  const TimingSpec& t = s.timing;
  if (t.health_period.count() <= 0) p.push_back("timing.health_period must be positive");
  if (t.ping_deadline.count() <= 0) p.push_back("timing.ping_deadline must be positive");
  if (t.ping_deadline >= t.health_period) p.push_back("timing.ping_deadline must be below health_period");
  if (t.poll_period.count() <= 0) p.push_back("timing.poll_period must be positive");
  if (t.collector_period && t.collector_period->count() <= 0) {
    p.push_back("timing.collector_period must be positive");
  }
  if (t.aggregation_period.count() <= 0) p.push_back("timing.aggregation_period must be positive");
  check([&] { s.net.validate(); }, "net");
  check([&] { s.processor.validate(); }, "processor");
  if (!is_plain_id(s.processor.id)) p.push_back("processor.id must be a plain identifier");

  std::set<std::string> nodes;
  std::set<std::string> dcs;
  if (s.dcs.empty()) p.push_back("at least one dc is required");
  for (const DcSpec& dc : s.dcs) {
    if (!is_plain_id(dc.dc_id)) p.push_back("dc id '" + dc.dc_id + "' must be a plain identifier");
    if (!dcs.insert(dc.dc_id).second) p.push_back("duplicate dc id " + dc.dc_id);
    for (const NodeSpec& n : dc.nodes) {
      const std::string w = "node " + n.node_id;
      if (!is_plain_id(n.node_id)) p.push_back("node id '" + n.node_id + "' must be a plain identifier");
      if (n.node_id == s.processor.id) p.push_back(w + ": clashes with the processor id");
      if (!nodes.insert(n.node_id).second) p.push_back("duplicate node id " + n.node_id);
      if (n.machine.empty()) p.push_back(w + ": no machine generators");
      auto check_gens = [&](const std::vector<GeneratorSpec>& gens, const std::string& where) {
        std::set<std::pair<std::string, std::string>> seen;
        for (const GeneratorSpec& g : gens) {
          check([&] { g.validate(); }, where);
          if (g.family.rfind("agent_", 0) == 0 || g.family.rfind("processor_", 0) == 0) {
            p.push_back(where + ": family " + g.family + " uses a reserved prefix");
          }
          if (g.labels.contains("node") || g.labels.contains("app") || g.labels.contains("dc")) {
            p.push_back(where + ": generator labels may not set node, app or dc");
          }
          if (!seen.emplace(g.family, g.labels.to_string()).second) {
            p.push_back(where + ": duplicate generator " + g.family + g.labels.to_string());
          }
        }
      };
      check_gens(n.machine, w + " machine");
      check_gens(n.container, w + " container");
      std::set<std::string> app_ids;
      for (const AppSpec& a : n.apps) {
        if (!is_plain_id(a.app_id)) p.push_back(w + ": app id '" + a.app_id + "' must be a plain identifier");
        if (!app_ids.insert(a.app_id).second) p.push_back(w + ": duplicate app " + a.app_id);
        if (a.generators.empty()) p.push_back(w + ": app " + a.app_id + " has no generators");
        check_gens(a.generators, w + " app " + a.app_id);
      }
      AgentConfig c = n.agent;
      c.node_id = n.node_id;
      c.dc_id = dc.dc_id;
      c.poll_period = t.poll_period;
      c.buffer_dir = "unused";
      check([&] { c.validate(); }, w + " agent");
    }
  }

  auto in_range = [&](Timestamp at) { return at >= 0 && at <= s.duration.count(); };
  for (const FaultSpec& f : s.faults) {
    std::visit(
        [&](const auto& x) {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, fault::NodeCrash> || std::is_same_v<T, fault::NodeRestart>) {
            if (!nodes.contains(x.node_id)) p.push_back("fault on unknown node '" + x.node_id + "'");
            if (!in_range(x.at)) p.push_back("fault time outside [0, duration]");
          } else if constexpr (std::is_same_v<T, fault::PersistFailure>) {
            if (!in_range(x.at)) p.push_back("fault time outside [0, duration]");
            if (x.count == 0) p.push_back("processor_persist_failure count must be positive");
          } else {
            if (x.a.empty() || x.b.empty()) p.push_back("partition groups must be non-empty");
            for (const auto* group : {&x.a, &x.b}) {
              for (const auto& m : *group) {
                if (!nodes.contains(m) && m != s.processor.id) p.push_back("partition member '" + m + "' unknown");
              }
            }
            if (x.from > x.to || !in_range(x.from) || !in_range(x.to)) {
              p.push_back("partition window must satisfy 0 <= from <= to <= duration");
            }
          }
        },
        f);
  }
  return p;
}

// --- simulation ---------------------------------------------------------------

namespace {

std::string identity(std::string_view name, const om::LabelSet& labels, Timestamp ts) {
  std::string key(name);
  key += '\x1f';
  key += labels.to_string();
  key += '\x1f';
  key += std::to_string(ts);
  return key;
}

constexpr Timestamp kForever = std::numeric_limits<Timestamp>::max();

class Simulation final : public ProcessorObserver {
 public:
  Simulation(const ScenarioSpec& spec, fs::path work)
      : spec_(spec), work_(std::move(work)), net_(make_net_config(spec)),
        store_(StoreConfig{.data_dir = work_ / "store", .fsync = spec.fsync}),
        processor_(make_processor_config(spec), store_, net_) {
    processor_.set_observer(this);
    net_.set_drop_observer([this](const std::string&, const std::string&, const Envelope& e,
                                  std::string_view) {
      if (e.kind != MessageKind::pong) return;
      try {
        tag_batch(decode_batch(e.payload), cause::drop);
      } catch (const std::exception&) {
      }
    });
    const Duration tick = spec.timing.collector_period.value_or(spec.timing.poll_period);
    tick_period_ = tick.count();
    horizon_ = spec.duration.count() + static_cast<Timestamp>(spec.timing.flush_rounds) *
                                           spec.timing.health_period.count();
    for (const DcSpec& dc : spec.dcs) {
      for (const NodeSpec& n : dc.nodes) {
        auto node = std::make_unique<Node>();
        node->spec = &n;
        node->dc_id = dc.dc_id;
        node->sim = this;
        setup_node(*node);
        nodes_.push_back(std::move(node));
      }
    }
  }

  void set_keep_log(bool keep) { net_.set_keep_log(keep); }
  const std::vector<std::string>& event_log() const { return net_.event_log(); }
  const MetricsStore& store() const { return store_; }

  RunReport run() {
    for (auto& n : nodes_) register_node(*n);
    for (const FaultSpec& f : spec_.faults) schedule_fault(f);
    schedule_tick(0);
    schedule_poll(0);
    schedule_health(1);
    schedule_aggregation(1);
    const Timestamp end = horizon_ + spec_.timing.ping_deadline.count() +
                          2 * spec_.net.latency_max.count() + 1;
    net_.run_until(end);
    return finish();
  }

 private:
  struct Node;

  class NodeObserver final : public AgentObserver {
   public:
    explicit NodeObserver(Node& n) : node_(n) {}
    void on_reduction_drop(const om::MetricFamily& f, const om::Sample& s) override {
      if (!s.timestamp) return;
      auto it = node_.sim->tracked_.find(identity(f.name + s.suffix, s.labels, *s.timestamp));
      if (it == node_.sim->tracked_.end() || it->second.fate != Fate::pending) return;
      it->second.fate = Fate::reduced;
    }
    void on_segment_evicted(const BufferSegment& seg) override {
      node_.sim->tag_payload(seg.payload, cause::buffer_eviction);
    }

   private:
    Node& node_;
  };

  struct Endpoint {
    std::unique_ptr<CollectorEndpoint> collector;
    std::string target_id;
    std::optional<std::string> app_id;
  };

  struct Node {
    Simulation* sim = nullptr;
    const NodeSpec* spec = nullptr;
    std::string dc_id;
    std::vector<Endpoint> endpoints;
    InProcessScraper scraper;
    AgentConfig agent_config;
    std::unique_ptr<NodeAgent> agent;
    std::unique_ptr<NodeObserver> observer;
    bool up = true;
    std::vector<std::pair<Timestamp, Timestamp>> down;
    std::uint64_t register_seq = 0;
  };

  enum class Fate : std::uint8_t { pending, stored, reduced };
  struct Tracked {
    Node* node;
    Fate fate = Fate::pending;
    std::string_view cause;
  };

  static SimNetConfig make_net_config(const ScenarioSpec& s) {
    SimNetConfig c = s.net;
    for (const FaultSpec& f : s.faults) {
      if (const auto* p = std::get_if<fault::NetPartition>(&f)) {
        c.partitions.push_back(Partition{{p->a.begin(), p->a.end()}, {p->b.begin(), p->b.end()}, p->from, p->to});
      }
    }
    return c;
  }

  static ProcessorConfig make_processor_config(const ScenarioSpec& s) {
    ProcessorConfig c = s.processor;
    c.health_period = s.timing.health_period;
    c.ping_deadline = s.timing.ping_deadline;
    c.aggregation_period = s.timing.aggregation_period;
    return c;
  }

  void setup_node(Node& n) {
    const std::string& id = n.spec->node_id;
    auto add = [&](Level level, std::string address, const std::vector<GeneratorSpec>& gens,
                   std::string target_id, std::optional<std::string> app) {
      Endpoint ep{std::make_unique<CollectorEndpoint>(level, address, gens), std::move(target_id), std::move(app)};
      n.scraper.attach(address, ep.collector.get());
      n.endpoints.push_back(std::move(ep));
    };
    add(Level::machine, id + "/machine", n.spec->machine, "machine", std::nullopt);
    if (!n.spec->container.empty()) add(Level::container, id + "/container", n.spec->container, id + "-c0", std::nullopt);
    for (const AppSpec& a : n.spec->apps) add(Level::application, id + "/app/" + a.app_id, a.generators, {}, a.app_id);

    n.agent_config = n.spec->agent;
    n.agent_config.node_id = id;
    n.agent_config.dc_id = n.dc_id;
    n.agent_config.poll_period = spec_.timing.poll_period;
    n.agent_config.buffer_dir = work_ / "agents" / id;
    n.agent_config.buffer_fsync = spec_.fsync;
    n.observer = std::make_unique<NodeObserver>(n);
    start_agent(n);
    net_.attach(id, [this, &n](const Envelope& e) -> std::optional<Envelope> {
      if (!n.agent) return std::nullopt;
      return n.agent->handle_envelope(e, net_.now());
    });
  }

  void start_agent(Node& n) {
    std::optional<TargetEntry> container;
    for (const Endpoint& ep : n.endpoints) {
      if (ep.collector->level() == Level::container) {
        container = TargetEntry{ep.target_id, Level::container, ep.collector->address(), std::nullopt};
      }
    }
    n.agent = std::make_unique<NodeAgent>(n.agent_config, n.scraper, n.endpoints.front().collector->address(),
                                          container);
    n.agent->set_observer(n.observer.get());
    for (Endpoint& ep : n.endpoints) {
      if (ep.app_id) ep.target_id = n.agent->register_app_target(*ep.app_id, ep.collector->address());
    }
  }

  // Nodes announce themselves and retry until the processor answers.
  void register_node(Node& n) {
    if (!n.up) return;
    Envelope e{Envelope::kVersion, MessageKind::register_node, n.spec->node_id, ++n.register_seq, n.dc_id};
    net_.request(spec_.processor.id, std::move(e), spec_.timing.ping_deadline, [this, &n](RequestResult r) {
      const auto* reply = std::get_if<Envelope>(&r);
      if (reply && reply->payload == "ok") return;
      net_.schedule_after(spec_.timing.health_period, "register retry " + n.spec->node_id,
                          [this, &n] { register_node(n); });
    });
  }

  // The identity a collector sample has once the agent has labelled it.
  std::string generated_identity(const Node& n, const Endpoint& ep, const om::MetricFamily& f,
                                 const om::Sample& s) const {
    om::LabelSet labels = s.labels;
    labels.set("node", n.spec->node_id);
    if (ep.collector->level() == Level::container && !labels.contains("container")) {
      labels.set("container", ep.target_id);
    }
    if (ep.app_id) labels.set("app", *ep.app_id);
    return identity(f.name + s.suffix, labels, s.timestamp.value_or(0));
  }

  void tag_exposition(const om::Exposition& e, std::string_view why) {
    for (const auto& f : e.families) {
      for (const auto& s : f.samples) {
        if (!s.timestamp) continue;
        auto it = tracked_.find(identity(f.name + s.suffix, s.labels, *s.timestamp));
        if (it != tracked_.end() && it->second.fate == Fate::pending) it->second.cause = why;
      }
    }
  }

  void tag_batch(const MetricsBatch& b, std::string_view why) {
    for (const auto& [level, e] : b.expositions) tag_exposition(e, why);
  }

  void tag_payload(const std::string& payload, std::string_view why) {
    try {
      tag_exposition(om::parse_exposition(payload), why);
    } catch (const om::OpenMetricsError&) {
    }
  }

  std::size_t tracked_samples(const MetricsBatch& b) const {
    std::size_t n = 0;
    for (const auto& [level, e] : b.expositions) {
      for (const auto& f : e.families) {
        for (const auto& s : f.samples) {
          if (s.timestamp && tracked_.contains(identity(f.name + s.suffix, s.labels, *s.timestamp))) ++n;
        }
      }
    }
    return n;
  }

  void schedule_tick(std::int64_t k) {
    const Timestamp t = k * tick_period_;
    if (t >= spec_.duration.count()) return;
    net_.schedule(t, "tick", [this, k] {
      const Timestamp now = net_.now();
      for (auto& n : nodes_) {
        if (!n->up) continue;
        for (const Endpoint& ep : n->endpoints) {
          const om::Exposition e = ep.collector->generate_tick(now);
          for (const auto& f : e.families) {
            for (const auto& s : f.samples) {
              tracked_.try_emplace(generated_identity(*n, ep, f, s), Tracked{n.get()});
            }
          }
        }
      }
      schedule_tick(k + 1);
    });
  }

  void schedule_poll(std::int64_t k) {
    const Timestamp period = spec_.timing.poll_period.count();
    const Timestamp t = k * period + period / 2;
    if (t > horizon_) return;
    net_.schedule(t, "poll", [this, k] {
      for (auto& n : nodes_) {
        if (n->up && n->agent) n->agent->poll_cycle(net_.now());
      }
      schedule_poll(k + 1);
    });
  }

  void schedule_health(std::int64_t k) {
    const Timestamp t = k * spec_.timing.health_period.count();
    if (t > horizon_) return;
    net_.schedule(t, "health round", [this, k] {
      processor_.health_check_round();
      schedule_health(k + 1);
    });
  }

  void schedule_aggregation(std::int64_t k) {
    const Timestamp t = k * spec_.timing.aggregation_period.count();
    if (t > horizon_) return;
    net_.schedule(t, "aggregation round", [this, k] {
      processor_.aggregation_round();
      schedule_aggregation(k + 1);
    });
  }

  Node* find_node(const std::string& id) {
    for (auto& n : nodes_) {
      if (n->spec->node_id == id) return n.get();
    }
    return nullptr;
  }

  void schedule_fault(const FaultSpec& f) {
    if (const auto* c = std::get_if<fault::NodeCrash>(&f)) {
      net_.schedule(c->at, "fault crash " + c->node_id, [this, id = c->node_id] { crash(*find_node(id)); });
    } else if (const auto* r = std::get_if<fault::NodeRestart>(&f)) {
      net_.schedule(r->at, "fault restart " + r->node_id, [this, id = r->node_id] { restart(*find_node(id)); });
    } else if (const auto* p = std::get_if<fault::PersistFailure>(&f)) {
      net_.schedule(p->at, "fault persist_failure x" + std::to_string(p->count),
                    [this, count = p->count] { processor_.inject_persist_failures(count); });
    }
  }

  void crash(Node& n) {
    if (!n.up) return;
    n.up = false;
    n.down.emplace_back(net_.now(), kForever);
    net_.set_down(n.spec->node_id, true);
    for (Endpoint& ep : n.endpoints) {
      const om::Exposition lost = ep.collector->discard_pending();
      for (const auto& f : lost.families) {
        for (const auto& s : f.samples) {
          auto it = tracked_.find(generated_identity(n, ep, f, s));
          if (it != tracked_.end() && it->second.fate == Fate::pending) it->second.cause = cause::node_crash;
        }
      }
    }
    n.agent.reset();
  }

  void restart(Node& n) {
    if (n.up) return;
    n.up = true;
    n.down.back().second = net_.now();
    start_agent(n);
    net_.set_down(n.spec->node_id, false);
    register_node(n);
  }

  // ProcessorObserver
  void on_batch_stored(const MetricsBatch& b, std::size_t) override {
    for (const auto& [level, e] : b.expositions) {
      for (const auto& f : e.families) {
        for (const auto& s : f.samples) {
          if (!s.timestamp) continue;
          auto it = tracked_.find(identity(f.name + s.suffix, s.labels, *s.timestamp));
          if (it != tracked_.end()) it->second.fate = Fate::stored;
        }
      }
    }
  }

  void on_batch_failed(const MetricsBatch& b, const std::exception&) override {
    ++failed_batches_;
    failed_batch_samples_ += tracked_samples(b);
    tag_batch(b, cause::persist_failure);
  }

  void on_node_dead(const std::string& node, Timestamp at) override { dead_.emplace_back(node, at); }
  void on_node_revived(const std::string& node, Timestamp at) override { revived_.emplace_back(node, at); }
  void on_aggregate(const std::string&, const om::Exposition& e) override {
    aggregates_ += e.sample_count();
  }

  RunReport finish() {
    // Whatever is still buffered somewhere never reached the store.
    for (auto& n : nodes_) {
      for (Endpoint& ep : n->endpoints) {
        const om::Exposition left = ep.collector->discard_pending();
        for (const auto& f : left.families) {
          for (const auto& s : f.samples) {
            auto it = tracked_.find(generated_identity(*n, ep, f, s));
            if (it != tracked_.end() && it->second.fate == Fate::pending) it->second.cause = cause::stranded;
          }
        }
      }
      if (fs::exists(n->agent_config.buffer_dir)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(n->agent_config.buffer_dir)) {
          if (entry.path().extension() == ".om") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& p : files) tag_payload(detail::read_file(p), cause::stranded);
      }
    }

    RunReport r;
    r.scenario = spec_.name;
    r.seed = spec_.seed;
    r.end_time = net_.now();
    for (auto& n : nodes_) r.nodes[n->spec->node_id];
    std::uint64_t stored_total = 0;
    for (const auto& [key, t] : tracked_) {
      NodeCounts& c = r.nodes[t.node->spec->node_id];
      ++c.generated;
      switch (t.fate) {
        case Fate::stored:
          ++c.stored;
          ++stored_total;
          break;
        case Fate::reduced: ++c.reduction_dropped; break;
        case Fate::pending: {
          const std::string why(t.cause.empty() ? cause::unattributed : t.cause);
          ++c.lost;
          ++c.lost_by_cause[why];
          ++r.lost_by_cause[why];
          break;
        }
      }
    }

    std::uint64_t store_matches = 0;
    std::uint64_t machine_points = 0;
    for (const StoredPoint& p : store_.snapshot()) {
      ++r.stored_by_scope[std::string(to_string(p.key.scope))];
      if (tracked_.contains(identity(p.key.family, p.key.labels, p.timestamp))) ++store_matches;
      if (p.key.scope == Scope::node && p.key.family.rfind("agent_", 0) != 0) ++machine_points;
    }
    r.duplicates = store_matches > stored_total ? store_matches - stored_total : 0;
    r.failed_batches = failed_batches_;
    r.failed_batch_samples = failed_batch_samples_;
    r.dead_transitions = dead_;
    r.revivals = revived_;
    r.aggregates_emitted = aggregates_;
    r.health_rounds = processor_.rounds();
    r.ingest_failures = processor_.ingest_failures();
    r.event_count = net_.event_count();
    r.event_log_digest = net_.event_log_digest();

    evaluate(r, stored_total, store_matches, machine_points);
    return r;
  }

  bool was_disconnected(const Node& n, Timestamp from, Timestamp to) const {
    for (const auto& [a, b] : n.down) {
      if (a <= to && b >= from) return true;
    }
    for (const Partition& p : net_config_partitions()) {
      const bool involved = (p.a.contains(n.spec->node_id) && p.b.contains(spec_.processor.id)) ||
                            (p.b.contains(n.spec->node_id) && p.a.contains(spec_.processor.id));
      if (involved && p.from <= to && p.to >= from) return true;
    }
    return false;
  }

  std::vector<Partition> net_config_partitions() const { return make_net_config(spec_).partitions; }

  void evaluate(RunReport& r, std::uint64_t stored_total, std::uint64_t store_matches,
                std::uint64_t machine_points) {
    auto add = [&](std::string name, bool ok, std::string detail) {
      r.assertions.push_back(AssertionResult{std::move(name), ok, std::move(detail)});
    };
    const std::uint64_t unattributed =
        r.lost_by_cause.contains(std::string(cause::unattributed)) ? r.lost_by_cause.at(std::string(cause::unattributed)) : 0;
    {
      bool ok = unattributed == 0 && store_matches == stored_total;
      for (const auto& [id, c] : r.nodes) ok = ok && c.generated == c.stored + c.lost + c.reduction_dropped;
      add("conservation", ok,
          "generated=" + std::to_string(r.generated()) + " stored=" + std::to_string(r.stored()) +
              " lost=" + std::to_string(r.lost()) + " reduced=" + std::to_string(r.reduction_dropped()) +
              " unattributed=" + std::to_string(unattributed) + " in_store=" + std::to_string(store_matches));
    }
    const Expectations& e = spec_.expect;
    if (e.lost) add("lost", r.lost() == *e.lost, "lost=" + std::to_string(r.lost()) + " expected " + std::to_string(*e.lost));
    if (e.max_lost) {
      add("max_lost", r.lost() <= *e.max_lost,
          "lost=" + std::to_string(r.lost()) + " max " + std::to_string(*e.max_lost));
    }
    if (e.stored_equals_generated) {
      const bool eq = r.stored() == r.generated();
      add("stored_equals_generated", eq == *e.stored_equals_generated,
          "stored=" + std::to_string(r.stored()) + " generated=" + std::to_string(r.generated()));
    }
    if (e.node_scope_machine_samples) {
      add("node_scope_machine_samples", machine_points == *e.node_scope_machine_samples,
          "node-scope samples=" + std::to_string(machine_points) + " expected " +
              std::to_string(*e.node_scope_machine_samples));
    }
    if (e.lost_equals_failed_batch_samples) {
      const bool eq = r.lost() == r.failed_batch_samples &&
                      r.lost() == (r.lost_by_cause.contains(std::string(cause::persist_failure))
                                       ? r.lost_by_cause.at(std::string(cause::persist_failure))
                                       : 0);
      add("lost_equals_failed_batch_samples", eq == *e.lost_equals_failed_batch_samples,
          "lost=" + std::to_string(r.lost()) + " failed_batch_samples=" + std::to_string(r.failed_batch_samples));
    }
    if (e.no_duplicates) {
      add("no_duplicates", (r.duplicates == 0) == *e.no_duplicates, "duplicates=" + std::to_string(r.duplicates));
    }
    if (e.dead_detection_within) {
      bool ok = true;
      std::string detail;
      for (const FaultSpec& f : spec_.faults) {
        const auto* c = std::get_if<fault::NodeCrash>(&f);
        if (!c) continue;
        const Node& n = *find_node_const(c->node_id);
        // Only crashes that outlast the bound must be detected.
        Timestamp back = kForever;
        for (const auto& [a, b] : n.down) {
          if (a == c->at) back = b;
        }
        const Timestamp bound = c->at + e.dead_detection_within->count();
        std::optional<Timestamp> detected;
        for (const auto& [id, at] : r.dead_transitions) {
          if (id == c->node_id && at >= c->at) {
            detected = at;
            break;
          }
        }
        if (back <= bound && !detected) continue;
        const bool in_time = detected && *detected <= bound;
        ok = ok && in_time;
        detail += c->node_id + "@" + std::to_string(c->at) + "->" +
                  (detected ? std::to_string(*detected) : std::string("never")) + " ";
      }
      add("dead_detection_within", ok, detail.empty() ? "no crashes" : detail);
    }
    if (e.no_false_dead) {
      std::size_t false_dead = 0;
      const Timestamp window = spec_.timing.health_period.count() + spec_.timing.ping_deadline.count();
      for (const auto& [id, at] : r.dead_transitions) {
        if (!was_disconnected(*find_node_const(id), at - window, at)) ++false_dead;
      }
      add("no_false_dead", (false_dead == 0) == *e.no_false_dead,
          "false dead transitions=" + std::to_string(false_dead));
    }
    if (e.min_aggregates) {
      add("min_aggregates", r.aggregates_emitted >= *e.min_aggregates,
          "aggregates=" + std::to_string(r.aggregates_emitted));
    }
    if (e.ingest_failures) {
      add("ingest_failures", r.ingest_failures == *e.ingest_failures,
          "ingest_failures=" + std::to_string(r.ingest_failures));
    }
    if (e.min_reduction_dropped) {
      add("min_reduction_dropped", r.reduction_dropped() >= *e.min_reduction_dropped,
          "reduction_dropped=" + std::to_string(r.reduction_dropped()));
    }
  }

  const Node* find_node_const(const std::string& id) const {
    for (const auto& n : nodes_) {
      if (n->spec->node_id == id) return n.get();
    }
    return nullptr;
  }

  const ScenarioSpec& spec_;
  fs::path work_;
  SimNetwork net_;
  MetricsStore store_;
  ControlProcessor processor_;
  std::vector<std::unique_ptr<Node>> nodes_;
  std::unordered_map<std::string, Tracked> tracked_;
  Timestamp tick_period_ = 0;
  Timestamp horizon_ = 0;
  std::uint64_t failed_batches_ = 0;
  std::uint64_t failed_batch_samples_ = 0;
  std::uint64_t aggregates_ = 0;
  std::vector<std::pair<std::string, Timestamp>> dead_;
  std::vector<std::pair<std::string, Timestamp>> revived_;
};

class ScratchDir {
 public:
  ScratchDir() {
    static std::atomic<std::uint64_t> counter{0};
    path_ = fs::temp_directory_path() /
            ("dcmon-sim-" + std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1)));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

}  // namespace

RunReport run_scenario(const ScenarioSpec& spec, const RunOptions& options) {
  if (auto problems = validate_scenario(spec); !problems.empty()) throw InvalidScenario(std::move(problems));
  std::optional<ScratchDir> scratch;
  fs::path work;
  if (options.work_dir) {
    work = *options.work_dir;
    fs::create_directories(work);
  } else {
    scratch.emplace();
    work = scratch->path();
  }
  RunReport report;
  {
    Simulation sim(spec, work);
    sim.set_keep_log(options.keep_event_log || options.event_log != nullptr);
    report = sim.run();
    if (options.event_log) *options.event_log = sim.event_log();
    if (options.inspect_store) options.inspect_store(sim.store());
  }
  return report;
}

std::uint64_t RunReport::generated() const {
  std::uint64_t n = 0;
  for (const auto& [id, c] : nodes) n += c.generated;
  return n;
}

std::uint64_t RunReport::stored() const {
  std::uint64_t n = 0;
  for (const auto& [id, c] : nodes) n += c.stored;
  return n;
}

std::uint64_t RunReport::lost() const {
  std::uint64_t n = 0;
  for (const auto& [id, c] : nodes) n += c.lost;
  return n;
}

std::uint64_t RunReport::reduction_dropped() const {
  std::uint64_t n = 0;
  for (const auto& [id, c] : nodes) n += c.reduction_dropped;
  return n;
}

bool RunReport::all_passed() const {
  return std::all_of(assertions.begin(), assertions.end(), [](const auto& a) { return a.passed; });
}

}  // namespace dcmon
