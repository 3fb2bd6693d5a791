#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "dcmon/transport.hpp"

namespace dcmon {

/// While active, every envelope between a member of `a` and a member of `b`
/// (either direction) is dropped at send time. Window is [from, to).
struct Partition {
  std::set<std::string> a;
  std::set<std::string> b;
  Timestamp from = 0;
  Timestamp to = 0;

  bool separates(const std::string& x, const std::string& y, Timestamp at) const;
};

struct SimNetConfig {
  std::uint64_t seed = 1;
  Duration latency_min{1};
  Duration latency_max{10};
  double drop_prob = 0.0;
  std::vector<Partition> partitions;

  /// Throws std::invalid_argument.
  void validate() const;
};

/// Deterministic discrete-event network. Single-threaded: every callback runs
/// from step()/run_until() in (time, scheduling order).
class SimNetwork final : public Transport {
 public:
  using EventFn = std::function<void()>;
  using DropObserver = std::function<void(const std::string& from, const std::string& to,
                                          const Envelope& e, std::string_view reason)>;

  explicit SimNetwork(SimNetConfig config, Timestamp start = 0);

  Timestamp now() const override { return now_; }

  void attach(const std::string& peer, MessageHandler handler) override;
  void detach(const std::string& peer) override;
  void request(const std::string& to, Envelope e, Duration timeout, ReplyCallback done) override;
  void send(const std::string& to, Envelope e) override;
  void publish(const Topic& topic, std::string payload) override;
  SubscriptionId subscribe(const TopicFilter& filter, DeliveryCallback deliver) override;
  void unsubscribe(SubscriptionId id) override;

  /// A down peer stays known but neither receives nor answers anything.
  void set_down(const std::string& peer, bool down);
  bool is_down(const std::string& peer) const;
  void add_partition(Partition p);

  void schedule(Timestamp at, std::string label, EventFn fn);
  void schedule_after(Duration delay, std::string label, EventFn fn);

  /// Fires the next event. Returns false when the queue is empty.
  bool step();
  /// Fires every event with time <= t, then sets the clock to t.
  void run_until(Timestamp t);
  std::size_t pending_events() const noexcept { return queue_.size(); }

  void set_drop_observer(DropObserver observer) { drop_observer_ = std::move(observer); }
  /// Keeps every log line in memory (the digest is always maintained).
  void set_keep_log(bool keep) { keep_log_ = keep; }
  const std::vector<std::string>& event_log() const noexcept { return log_; }
  std::uint64_t event_log_digest() const noexcept { return digest_; }
  std::uint64_t event_count() const noexcept { return events_logged_; }

  /// Appends a line to the event log stamped with the current time.
  void log(std::string_view line);

 private:
  struct Event {
    Timestamp at;
    std::uint64_t order;
    std::string label;
    EventFn fn;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.at != b.at ? a.at > b.at : a.order > b.order;
    }
  };
  struct PendingRequest {
    ReplyCallback done;
    std::string to;
  };
  struct Subscription {
    TopicFilter filter;
    DeliveryCallback deliver;
  };

  Duration sample_latency();
  /// Decides whether an envelope makes it onto the wire; logs and reports drops.
  bool survives(const std::string& from, const std::string& to, const Envelope& e);
  void deliver_request(std::uint64_t id, const std::string& to, const Envelope& e);
  void complete(std::uint64_t id, RequestResult result);

  SimNetConfig config_;
  Timestamp now_;
  std::mt19937_64 rng_;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::uint64_t order_ = 0;
  std::map<std::string, MessageHandler> peers_;
  std::set<std::string> down_;
  std::map<std::uint64_t, PendingRequest> requests_;
  std::uint64_t next_request_ = 1;
  std::map<SubscriptionId, Subscription> subscriptions_;
  SubscriptionId next_subscription_ = 1;
  DropObserver drop_observer_;
  bool keep_log_ = false;
  std::vector<std::string> log_;
  std::uint64_t digest_ = 14695981039346656037ull;
  std::uint64_t events_logged_ = 0;
};

}  // namespace dcmon
