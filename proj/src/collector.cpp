#include "dcmon/collector.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

namespace dcmon {

std::string_view to_string(Level level) noexcept {
  switch (level) {
    case Level::machine: return "machine";
    case Level::container: return "container";
    case Level::application: return "application";
  }
  return "machine";
}

std::optional<Level> parse_level(std::string_view text) noexcept {
  if (text == "machine") return Level::machine;
  if (text == "container") return Level::container;
  if (text == "application") return Level::application;
  return std::nullopt;
}

void GeneratorSpec::validate() const {
  if (!om::is_metric_name(family)) throw std::invalid_argument("bad generator family '" + family + "'");
  if (const auto* walk = std::get_if<pattern::RandomWalk>(&pattern)) {
    if (!(walk->min <= walk->start && walk->start <= walk->max)) {
      throw std::invalid_argument(family + ": random_walk requires min <= start <= max");
    }
    if (walk->step_stddev < 0) throw std::invalid_argument(family + ": negative step_stddev");
  }
  if (const auto* rate = std::get_if<pattern::CounterRate>(&pattern)) {
    if (type != om::MetricType::counter) {
      throw std::invalid_argument(family + ": counter_rate requires type counter");
    }
    if (!(rate->rate_per_s >= 0)) throw std::invalid_argument(family + ": negative counter rate");
  } else if (type == om::MetricType::counter) {
    // Constant counters are fine as long as they are non-negative.
    const auto* c = std::get_if<pattern::Constant>(&pattern);
    if (c == nullptr || c->value < 0) {
      throw std::invalid_argument(family + ": counters must use counter_rate or a non-negative constant");
    }
  }
  if (const auto* sine = std::get_if<pattern::Sine>(&pattern)) {
    if (!(sine->period_s > 0)) throw std::invalid_argument(family + ": sine period must be > 0");
  }
}

CollectorEndpoint::CollectorEndpoint(Level level, std::string address,
                                     std::vector<GeneratorSpec> generators,
                                     std::optional<std::size_t> max_pending)
    : level_(level), address_(std::move(address)), specs_(std::move(generators)),
      max_pending_(max_pending) {
  if (specs_.empty()) throw std::invalid_argument("collector " + address_ + " has no generators");
  std::set<std::pair<std::string, std::string>> identities;
  std::map<std::string, om::MetricType> types;
  for (const GeneratorSpec& g : specs_) {
    g.validate();
    if (!identities.emplace(g.family, g.labels.to_string()).second) {
      throw std::invalid_argument("duplicate generator series " + g.family + g.labels.to_string());
    }
    auto [it, inserted] = types.emplace(g.family, g.type);
    if (!inserted && it->second != g.type) {
      throw std::invalid_argument("generators disagree on the type of " + g.family);
    }
    states_.push_back(GeneratorState{std::mt19937_64(g.seed)});
  }
}

double CollectorEndpoint::advance(std::size_t index, Timestamp now) {
  GeneratorState& st = states_[index];
  const GeneratorSpec& spec = specs_[index];
  const bool first = !st.started;
  st.started = true;
  const auto previous = st.last;
  st.last = now;
  return std::visit(
      [&](const auto& p) -> double {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, pattern::Constant>) {
          st.value = p.value;
        } else if constexpr (std::is_same_v<P, pattern::RandomWalk>) {
          if (first) {
            st.value = p.start;
          } else {
            std::normal_distribution<double> step(0.0, p.step_stddev);
            st.value = std::clamp(st.value + step(st.rng), p.min, p.max);
          }
        } else if constexpr (std::is_same_v<P, pattern::Sine>) {
          const double t = static_cast<double>(now) / 1000.0;
          st.value = p.mean + p.amplitude * std::sin(2.0 * std::numbers::pi * t / p.period_s);
        } else {
          if (first) {
            st.value = 0.0;
          } else {
            st.value += p.rate_per_s * static_cast<double>(now - *previous) / 1000.0;
          }
        }
        (void)spec;
        return st.value;
      },
      spec.pattern);
}

om::Exposition CollectorEndpoint::generate_tick(Timestamp now) {
  if (last_tick_ && now < *last_tick_) {
    throw std::invalid_argument("collector " + address_ + ": tick time went backwards");
  }
  std::deque<Pending> produced;
  if (last_tick_ && now == *last_tick_) return build(produced);
  last_tick_ = now;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    om::Sample s;
    s.labels = specs_[i].labels;
    s.value = advance(i, now);
    s.timestamp = now;
    produced.push_back({i, s});
    pending_.push_back({i, std::move(s)});
  }
  if (max_pending_) {
    while (pending_.size() > *max_pending_) {
      pending_.pop_front();
      ++dropped_;
    }
  }
  return build(produced);
}

om::Exposition CollectorEndpoint::build(const std::deque<Pending>& pending) const {
  om::Exposition e;
  for (const Pending& p : pending) {
    const GeneratorSpec& spec = specs_[p.generator];
    om::MetricFamily* f = e.find(spec.family);
    if (f == nullptr) {
      e.families.push_back(om::MetricFamily{.name = spec.family, .type = spec.type});
      f = &e.families.back();
    }
    f->samples.push_back(p.sample);
  }
  return e;
}

om::Exposition CollectorEndpoint::take_pending() {
  om::Exposition e = build(pending_);
  pending_.clear();
  return e;
}

std::string CollectorEndpoint::serve_metrics() { return om::serialize_exposition(take_pending()); }

om::Exposition CollectorEndpoint::discard_pending() { return take_pending(); }

om::Exposition parse_scrape_body(const std::string& target, std::string_view body,
                                 Timestamp default_timestamp) {
  try {
    return om::parse_exposition(body, default_timestamp);
  } catch (const om::OpenMetricsError& e) {
    throw BadPayload(target, std::current_exception(), e.what());
  }
}

void InProcessScraper::attach(const std::string& address, CollectorEndpoint* endpoint) {
  endpoints_[address] = Entry{endpoint, true};
}

void InProcessScraper::detach(const std::string& address) {
  auto it = endpoints_.find(address);
  if (it != endpoints_.end()) endpoints_.erase(it);
}

void InProcessScraper::set_reachable(const std::string& address, bool reachable) {
  auto it = endpoints_.find(address);
  if (it != endpoints_.end()) it->second.reachable = reachable;
}

om::Exposition InProcessScraper::scrape(const std::string& address, Duration /*timeout*/,
                                        Timestamp default_timestamp) {
  auto it = endpoints_.find(address);
  if (it == endpoints_.end() || !it->second.reachable) throw Unreachable(address);
  // Round-trip through the wire format, exactly as an HTTP scrape would.
  const std::string body = it->second.endpoint->serve_metrics();
  return parse_scrape_body(address, body, default_timestamp);
}

}  // namespace dcmon
