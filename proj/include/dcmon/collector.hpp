#pragma once

#include <cstdint>
#include <deque>
#include <exception>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "dcmon/openmetrics.hpp"
#include "dcmon/time.hpp"

namespace dcmon {

/// Metric level a collector (and the agent target scraping it) belongs to.
enum class Level { machine, container, application };

std::string_view to_string(Level level) noexcept;
std::optional<Level> parse_level(std::string_view text) noexcept;

namespace pattern {
struct Constant {
  double value = 0.0;
};
struct RandomWalk {
  double start = 0.0;
  double step_stddev = 1.0;
  double min = 0.0;
  double max = 1.0;
};
struct Sine {
  double mean = 0.0;
  double amplitude = 1.0;
  double period_s = 60.0;
};
struct CounterRate {
  double rate_per_s = 1.0;
};
}  // namespace pattern

using Pattern = std::variant<pattern::Constant, pattern::RandomWalk, pattern::Sine, pattern::CounterRate>;

struct GeneratorSpec {
  std::string family;
  om::MetricType type = om::MetricType::gauge;
  om::LabelSet labels;
  Pattern pattern;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument.
  void validate() const;
};

/// A synthetic collector. Samples produced by ticks accumulate until the next
/// serve, so every sample is handed out exactly once.
class CollectorEndpoint {
 public:
  /// `max_pending` caps the buffer (oldest evicted first); unbounded when empty.
  CollectorEndpoint(Level level, std::string address, std::vector<GeneratorSpec> generators,
                    std::optional<std::size_t> max_pending = std::nullopt);

  Level level() const noexcept { return level_; }
  const std::string& address() const noexcept { return address_; }
  const std::vector<GeneratorSpec>& generators() const noexcept { return specs_; }

  /// One sample per generator stamped `now`. Returns the samples produced.
  om::Exposition generate_tick(Timestamp now);

  /// Serialized exposition of everything generated since the previous call.
  std::string serve_metrics();

  /// Structured form of serve_metrics.
  om::Exposition take_pending();

  /// Forgets buffered samples without serving them (process crash). Returns them.
  om::Exposition discard_pending();

  std::size_t pending_count() const noexcept { return pending_.size(); }
  std::uint64_t dropped_samples() const noexcept { return dropped_; }

 private:
  struct GeneratorState {
    std::mt19937_64 rng;
    double value = 0.0;
    bool started = false;
    std::optional<Timestamp> last;
  };
  struct Pending {
    std::size_t generator;
    om::Sample sample;
  };

  double advance(std::size_t index, Timestamp now);
  om::Exposition build(const std::deque<Pending>& pending) const;

  Level level_;
  std::string address_;
  std::vector<GeneratorSpec> specs_;
  std::vector<GeneratorState> states_;
  std::optional<std::size_t> max_pending_;
  std::deque<Pending> pending_;
  std::optional<Timestamp> last_tick_;
  std::uint64_t dropped_ = 0;
};

class ScrapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Unreachable : public ScrapeError {
 public:
  explicit Unreachable(const std::string& target) : ScrapeError("unreachable: " + target) {}
};

/// The body did not parse. The codec's exception is kept as the cause.
class BadPayload : public ScrapeError {
 public:
  BadPayload(const std::string& target, std::exception_ptr cause, const std::string& what)
      : ScrapeError("bad payload from " + target + ": " + what), cause_(std::move(cause)) {}
  [[noreturn]] void rethrow_cause() const { std::rethrow_exception(cause_); }

 private:
  std::exception_ptr cause_;
};

/// Turns a scraped body into an exposition, wrapping codec errors in BadPayload.
om::Exposition parse_scrape_body(const std::string& target, std::string_view body,
                                 Timestamp default_timestamp);

/// Performs `GET /metrics` against a target address.
class Scraper {
 public:
  virtual ~Scraper() = default;
  /// Throws Unreachable or BadPayload.
  virtual om::Exposition scrape(const std::string& address, Duration timeout,
                                Timestamp default_timestamp) = 0;
};

/// Scrapes collectors living in the same process (simulation).
class InProcessScraper : public Scraper {
 public:
  void attach(const std::string& address, CollectorEndpoint* endpoint);
  void detach(const std::string& address);
  void set_reachable(const std::string& address, bool reachable);

  om::Exposition scrape(const std::string& address, Duration timeout,
                        Timestamp default_timestamp) override;

 private:
  struct Entry {
    CollectorEndpoint* endpoint;
    bool reachable = true;
  };
  std::map<std::string, Entry, std::less<>> endpoints_;
};

/// Scrapes `http://<host:port>/metrics`.
class HttpScraper : public Scraper {
 public:
  om::Exposition scrape(const std::string& address, Duration timeout,
                        Timestamp default_timestamp) override;
};

/// Serves one CollectorEndpoint at `GET /metrics` over HTTP/1.1. The buffer is
/// capped at 10,000 samples and evictions are reported in the
/// `collector_dropped_samples_total` family.
class CollectorServer {
 public:
  static constexpr std::size_t kMaxPending = 10'000;

  CollectorServer(Level level, std::vector<GeneratorSpec> generators);
  ~CollectorServer();
  CollectorServer(const CollectorServer&) = delete;
  CollectorServer& operator=(const CollectorServer&) = delete;

  /// Binds and starts serving; port 0 picks a free port. Returns the port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  void stop();

  void tick(Timestamp now);
  std::string address() const;

 private:
  std::string serve();

  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace dcmon
