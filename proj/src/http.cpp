// Everything that speaks HTTP lives here so only one translation unit pulls in httplib.

#include <httplib.h>

#include <thread>

#include "dcmon/collector.hpp"
#include "dcmon/reader.hpp"

namespace dcmon {

namespace {

std::pair<std::string, int> split_host_port(const std::string& address) {
  std::string a = address;
  if (a.rfind("http://", 0) == 0) a = a.substr(7);
  if (const auto slash = a.find('/'); slash != std::string::npos) a = a.substr(0, slash);
  const auto colon = a.rfind(':');
  if (colon == std::string::npos) return {a, 80};
  return {a.substr(0, colon), std::stoi(a.substr(colon + 1))};
}

void set_timeouts(httplib::Client& cli, Duration timeout) {
  const auto us = std::chrono::duration_cast<std::chrono::microseconds>(timeout).count();
  cli.set_connection_timeout(us / 1'000'000, us % 1'000'000);
  cli.set_read_timeout(us / 1'000'000, us % 1'000'000);
}

// Shared server lifecycle: bind, listen on a thread, stop and join.
class BackgroundServer {
 public:
  httplib::Server& server() { return server_; }

  int start(const std::string& host, int port) {
    if (thread_.joinable()) throw std::runtime_error("server already started");
    if (port == 0) {
      port_ = server_.bind_to_any_port(host);
      if (port_ < 0) throw std::runtime_error("cannot bind " + host);
    } else {
      if (!server_.bind_to_port(host, port)) {
        throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
      }
      port_ = port;
    }
    host_ = host;
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  void stop() {
    if (!thread_.joinable()) return;
    server_.stop();
    thread_.join();
  }

  std::string address() const { return host_ + ":" + std::to_string(port_); }

  ~BackgroundServer() { stop(); }

 private:
  httplib::Server server_;
  std::thread thread_;
  std::string host_;
  int port_ = -1;
};

}  // namespace

om::Exposition HttpScraper::scrape(const std::string& address, Duration timeout,
                                   Timestamp default_timestamp) {
  std::pair<std::string, int> hp;
  try {
    hp = split_host_port(address);
  } catch (const std::exception&) {
    throw Unreachable(address);
  }
  httplib::Client cli(hp.first, hp.second);
  set_timeouts(cli, timeout);
  auto res = cli.Get("/metrics");
  if (!res || res->status != 200) throw Unreachable(address);
  return parse_scrape_body(address, res->body, default_timestamp);
}

struct CollectorServer::Impl {
  Impl(Level level, std::vector<GeneratorSpec> generators)
      : endpoint(level, "", std::move(generators), kMaxPending) {}

  std::mutex mu;
  CollectorEndpoint endpoint;
  std::optional<Timestamp> last_tick;
  BackgroundServer http;
};

CollectorServer::CollectorServer(Level level, std::vector<GeneratorSpec> generators)
    : impl_(std::make_unique<Impl>(level, std::move(generators))) {
  impl_->http.server().Get("/metrics", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(serve(), std::string(om::kContentType));
  });
}

CollectorServer::~CollectorServer() { stop(); }

int CollectorServer::start(const std::string& host, int port) { return impl_->http.start(host, port); }

void CollectorServer::stop() { impl_->http.stop(); }

void CollectorServer::tick(Timestamp now) {
  std::lock_guard lock(impl_->mu);
  impl_->endpoint.generate_tick(now);
  impl_->last_tick = now;
}

std::string CollectorServer::address() const { return impl_->http.address(); }

std::string CollectorServer::serve() {
  std::lock_guard lock(impl_->mu);
  om::Exposition e = impl_->endpoint.take_pending();
  om::MetricFamily dropped{.name = "collector_dropped_samples_total", .type = om::MetricType::counter};
  dropped.samples.push_back(om::Sample{
      {}, static_cast<double>(impl_->endpoint.dropped_samples()), impl_->last_tick, {}});
  e.families.push_back(std::move(dropped));
  return om::serialize_exposition(e);
}

struct ReaderServer::Impl {
  explicit Impl(const RestApi& a) : api(a) {}
  const RestApi& api;
  BackgroundServer http;
};

ReaderServer::ReaderServer(const RestApi& api) : impl_(std::make_unique<Impl>(api)) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    const HttpResponse r = impl_->api.handle_request(req.method, req.path);
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  auto& s = impl_->http.server();
  s.Get(".*", handler);
  s.Post(".*", handler);
  s.Put(".*", handler);
  s.Patch(".*", handler);
  s.Delete(".*", handler);
}

ReaderServer::~ReaderServer() { stop(); }

int ReaderServer::start(const std::string& host, int port) { return impl_->http.start(host, port); }

void ReaderServer::stop() { impl_->http.stop(); }

}  // namespace dcmon
