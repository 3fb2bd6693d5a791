#include "dcmon/sim_network.hpp"

#include <stdexcept>

namespace dcmon {

bool Partition::separates(const std::string& x, const std::string& y, Timestamp at) const {
  if (at < from || at >= to) return false;
  return (a.contains(x) && b.contains(y)) || (a.contains(y) && b.contains(x));
}

void SimNetConfig::validate() const {
  if (!(drop_prob >= 0.0 && drop_prob <= 1.0)) throw std::invalid_argument("drop_prob must be in [0,1]");
  if (latency_min.count() < 0 || latency_min > latency_max) {
    throw std::invalid_argument("latency range must satisfy 0 <= min <= max");
  }
  for (const Partition& p : partitions) {
    if (p.from > p.to) throw std::invalid_argument("partition window ends before it starts");
  }
}

SimNetwork::SimNetwork(SimNetConfig config, Timestamp start)
    : config_(std::move(config)), now_(start), rng_(config_.seed) {
  config_.validate();
}

void SimNetwork::log(std::string_view line) {
  std::string entry = std::to_string(now_);
  entry += ' ';
  entry += line;
  // FNV-1a over every line, newline-terminated.
  for (char c : entry) {
    digest_ ^= static_cast<unsigned char>(c);
    digest_ *= 1099511628211ull;
  }
  digest_ ^= static_cast<unsigned char>('\n');
  digest_ *= 1099511628211ull;
  ++events_logged_;
  if (keep_log_) log_.push_back(std::move(entry));
}

void SimNetwork::attach(const std::string& peer, MessageHandler handler) {
  peers_[peer] = std::move(handler);
  down_.erase(peer);
}

void SimNetwork::detach(const std::string& peer) { peers_.erase(peer); }

void SimNetwork::set_down(const std::string& peer, bool down) {
  if (down) {
    down_.insert(peer);
  } else {
    down_.erase(peer);
  }
  log(std::string(down ? "down " : "up ") + peer);
}

bool SimNetwork::is_down(const std::string& peer) const { return down_.contains(peer); }

void SimNetwork::add_partition(Partition p) {
  if (p.from > p.to) throw std::invalid_argument("partition window ends before it starts");
  config_.partitions.push_back(std::move(p));
}

void SimNetwork::schedule(Timestamp at, std::string label, EventFn fn) {
  if (at < now_) at = now_;
  queue_.push(Event{at, order_++, std::move(label), std::move(fn)});
}

void SimNetwork::schedule_after(Duration delay, std::string label, EventFn fn) {
  schedule(now_ + delay.count(), std::move(label), std::move(fn));
}

bool SimNetwork::step() {
  if (queue_.empty()) return false;
  Event ev = queue_.top();
  queue_.pop();
  now_ = ev.at;
  if (!ev.label.empty()) log(ev.label);
  ev.fn();
  return true;
}

void SimNetwork::run_until(Timestamp t) {
  while (!queue_.empty() && queue_.top().at <= t) step();
  if (t > now_) now_ = t;
}

Duration SimNetwork::sample_latency() {
  std::uniform_int_distribution<Duration::rep> dist(config_.latency_min.count(),
                                                    config_.latency_max.count());
  return Duration(dist(rng_));
}

bool SimNetwork::survives(const std::string& from, const std::string& to, const Envelope& e) {
  std::string_view reason;
  for (const Partition& p : config_.partitions) {
    if (p.separates(from, to, now_)) {
      reason = "partition";
      break;
    }
  }
  if (reason.empty() && config_.drop_prob > 0.0) {
    std::bernoulli_distribution drop(config_.drop_prob);
    if (drop(rng_)) reason = "random";
  }
  if (reason.empty()) return true;
  log("drop " + std::string(to_string(e.kind)) + " " + from + "->" + to + " seq=" +
      std::to_string(e.seq) + " (" + std::string(reason) + ")");
  if (drop_observer_) drop_observer_(from, to, e, reason);
  return false;
}

void SimNetwork::request(const std::string& to, Envelope e, Duration timeout, ReplyCallback done) {
  const std::uint64_t id = next_request_++;
  if (!peers_.contains(to)) {
    requests_.emplace(id, PendingRequest{std::move(done), to});
    schedule(now_, "unknown_peer " + to, [this, id] { complete(id, TransportError::unknown_peer); });
    return;
  }
  requests_.emplace(id, PendingRequest{std::move(done), to});
  schedule(now_ + timeout.count(), {}, [this, id, to] {
    if (requests_.contains(id)) {
      log("timeout request " + std::to_string(id) + " to " + to);
      complete(id, TransportError::timeout);
    }
  });
  if (!survives(e.sender, to, e)) return;
  const Duration latency = sample_latency();
  std::string label = "deliver " + std::string(to_string(e.kind)) + " " + e.sender + "->" + to +
                      " seq=" + std::to_string(e.seq);
  schedule(now_ + latency.count(), std::move(label),
           [this, id, to, e = std::move(e)] { deliver_request(id, to, e); });
}

void SimNetwork::deliver_request(std::uint64_t id, const std::string& to, const Envelope& e) {
  auto peer = peers_.find(to);
  if (peer == peers_.end() || down_.contains(to)) {
    log("lost at down peer " + to);
    return;
  }
  std::optional<Envelope> reply = peer->second(e);
  if (!reply) return;
  if (!survives(to, e.sender, *reply)) return;
  const Duration latency = sample_latency();
  std::string label = "deliver " + std::string(to_string(reply->kind)) + " " + to + "->" +
                      e.sender + " seq=" + std::to_string(reply->seq);
  schedule(now_ + latency.count(), std::move(label),
           [this, id, from = to, to = e.sender, r = std::move(*reply)]() mutable {
             if (requests_.contains(id)) {
               complete(id, std::move(r));
               return;
             }
             log("late reply " + std::string(to_string(r.kind)) + " " + from + "->" + to);
             if (drop_observer_) drop_observer_(from, to, r, "late");
           });
}

void SimNetwork::complete(std::uint64_t id, RequestResult result) {
  auto it = requests_.find(id);
  if (it == requests_.end()) return;
  ReplyCallback done = std::move(it->second.done);
  requests_.erase(it);
  if (done) done(std::move(result));
}

void SimNetwork::send(const std::string& to, Envelope e) {
  if (!peers_.contains(to)) {
    log("send to unknown peer " + to);
    return;
  }
  if (!survives(e.sender, to, e)) return;
  const Duration latency = sample_latency();
  std::string label = "deliver " + std::string(to_string(e.kind)) + " " + e.sender + "->" + to +
                      " seq=" + std::to_string(e.seq);
  schedule(now_ + latency.count(), std::move(label), [this, to, e = std::move(e)] {
    auto peer = peers_.find(to);
    if (peer == peers_.end() || down_.contains(to)) {
      log("lost at down peer " + to);
      return;
    }
    peer->second(e);  // one-way: any reply is discarded
  });
}

void SimNetwork::publish(const Topic& topic, std::string payload) {
  const std::string name = topic.str();
  for (const auto& [id, sub] : subscriptions_) {
    if (!topic_match(sub.filter, topic)) continue;
    if (config_.drop_prob > 0.0) {
      std::bernoulli_distribution drop(config_.drop_prob);
      if (drop(rng_)) {
        log("drop publish " + name + " sub=" + std::to_string(id));
        continue;
      }
    }
    const Duration latency = sample_latency();
    schedule(now_ + latency.count(), "publish " + name + " sub=" + std::to_string(id),
             [this, id = id, topic, payload] {
               auto it = subscriptions_.find(id);
               if (it != subscriptions_.end()) it->second.deliver(topic, payload);
             });
  }
}

SubscriptionId SimNetwork::subscribe(const TopicFilter& filter, DeliveryCallback deliver) {
  const SubscriptionId id = next_subscription_++;
  subscriptions_.emplace(id, Subscription{filter, std::move(deliver)});
  return id;
}

void SimNetwork::unsubscribe(SubscriptionId id) { subscriptions_.erase(id); }

}  // namespace dcmon
