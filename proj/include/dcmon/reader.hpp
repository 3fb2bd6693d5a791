#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>

#include "dcmon/store.hpp"
#include "dcmon/transport.hpp"

namespace dcmon {

struct HttpResponse {
  int status = 200;
  std::string content_type;
  std::string body;

  friend bool operator==(const HttpResponse&, const HttpResponse&) = default;
};

/// Read-only query API over the store. All routes live under
/// `/api/metrics-api`; timestamps are integer milliseconds.
///
///   /nodes/{id}/{ts}   /nodes/{id}/{start}/{end}   /nodes/{id}/latest
///   /dc/{id}/{ts}      /dc/{id}/{start}/{end}      /dc/{id}/latest
///   /containers/{id}/{ts}   /containers/{id}/{start}/{end}
///   /apps/{id}/{ts}         /apps/{id}/{start}/{end}
///   /{ts}              /{start}/{end}
///
/// Literal segments win over captures; the two bare forms only match when the
/// first segment is an integer. `{ts}` means "from ts until now".
class RestApi {
 public:
  static constexpr std::string_view kPrefix = "/api/metrics-api";

  using Clock = std::function<Timestamp()>;

  RestApi(const MetricsStore& store, Clock clock);

  /// 200 with an OpenMetrics body; 400 bad timestamp or start > end;
  /// 404 unknown route; 405 anything but GET.
  HttpResponse handle_request(std::string_view method, std::string_view path) const;

 private:
  const MetricsStore& store_;
  Clock clock_;
};

/// Publishes the serialized exposition on `metrics.nodes.<id>` (node scope)
/// or `metrics.dc.<id>` (dc scope). Other scopes have no topic.
void publish_latest(Transport& transport, Scope scope, const std::string& scope_id,
                    const om::Exposition& e);

/// HTTP/1.1 front end for RestApi.
class ReaderServer {
 public:
  explicit ReaderServer(const RestApi& api);
  ~ReaderServer();
  ReaderServer(const ReaderServer&) = delete;
  ReaderServer& operator=(const ReaderServer&) = delete;

  /// Binds (port 0 picks a free port) and serves on a background thread.
  /// Returns the bound port; throws std::runtime_error when binding fails.
  int start(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace dcmon
