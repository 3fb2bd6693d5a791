#pragma once

#include <atomic>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "dcmon/transport.hpp"

namespace dcmon {

struct SocketTransportConfig {
  static constexpr int kDefaultPort = 7070;

  std::string listen_host = "127.0.0.1";
  /// 0 picks a free port; negative disables the listener (client only).
  int listen_port = kDefaultPort;
  /// Peer name -> "host:port".
  std::map<std::string, std::string> peers;
};

/// TCP backend. Every frame is a 4-byte big-endian length followed by the JSON
/// envelope. A request opens a connection, writes one frame and waits for one
/// reply frame; a connection that closes without replying completes the
/// request with `timeout` immediately.
///
/// One local peer may be attached at a time: inbound envelopes carry no
/// recipient, so the listener hands everything to that peer.
///
/// Remote subscribers send a `subscribe` envelope whose payload is the filter
/// and keep the connection open; matching publishes are pushed back as
/// `publish` envelopes carrying `<topic>\n<body>`.
class SocketTransport final : public Transport {
 public:
  explicit SocketTransport(SocketTransportConfig config);
  ~SocketTransport() override;
  SocketTransport(const SocketTransport&) = delete;
  SocketTransport& operator=(const SocketTransport&) = delete;

  /// Bound listener port, or -1 when not listening.
  int port() const noexcept { return port_; }
  void add_peer(const std::string& name, const std::string& address);

  Timestamp now() const override;

  void attach(const std::string& peer, MessageHandler handler) override;
  void detach(const std::string& peer) override;
  void request(const std::string& to, Envelope e, Duration timeout, ReplyCallback done) override;
  void send(const std::string& to, Envelope e) override;

  /// Delivers to local subscriptions and to remote subscriber connections.
  void publish(const Topic& topic, std::string payload) override;
  /// Local subscription.
  SubscriptionId subscribe(const TopicFilter& filter, DeliveryCallback deliver) override;
  /// Subscription served by the transport listening at `peer`.
  SubscriptionId subscribe_remote(const std::string& peer, const TopicFilter& filter,
                                  DeliveryCallback deliver);
  void unsubscribe(SubscriptionId id) override;

  void stop();

 private:
  struct RemoteSubscriber;
  struct Outbound;

  std::optional<std::string> address_of(const std::string& peer) const;
  void accept_loop();
  void serve_connection(int fd);
  void spawn(std::function<void()> fn);
  void reap();

  SocketTransportConfig config_;
  int listen_fd_ = -1;
  int port_ = -1;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;

  mutable std::mutex mu_;
  std::string local_peer_;
  MessageHandler handler_;
  std::map<SubscriptionId, std::pair<TopicFilter, DeliveryCallback>> local_subs_;
  std::map<int, std::shared_ptr<RemoteSubscriber>> remote_subs_;
  std::map<SubscriptionId, std::shared_ptr<Outbound>> outbound_subs_;
  SubscriptionId next_sub_ = 1;

  std::mutex workers_mu_;
  std::list<std::pair<std::thread, std::shared_ptr<std::atomic<bool>>>> workers_;
};

}  // namespace dcmon
