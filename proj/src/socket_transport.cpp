#include "dcmon/socket_transport.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

namespace dcmon {

namespace {

using Clock = std::chrono::steady_clock;
constexpr std::uint32_t kMaxFrame = 64u << 20;
constexpr int kPollSliceMs = 100;

enum class ReadStatus { ok, closed, timed_out, stopped };

std::pair<std::string, std::string> split_address(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos) return {address, std::to_string(SocketTransportConfig::kDefaultPort)};
  return {address.substr(0, colon), address.substr(colon + 1)};
}

int connect_to(const std::string& address, Clock::time_point deadline) {
  const auto [host, port] = split_address(address);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0) return -1;
  int fd = -1;
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC | SOCK_NONBLOCK, ai->ai_protocol);
    if (fd < 0) continue;
    int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
    if (rc != 0 && errno == EINPROGRESS) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
      pollfd p{fd, POLLOUT, 0};
      if (left.count() > 0 && ::poll(&p, 1, static_cast<int>(left.count())) == 1) {
        int err = 0;
        socklen_t len = sizeof err;
        ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        rc = err == 0 ? 0 : -1;
      }
    }
    if (rc == 0) {
      ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) & ~O_NONBLOCK);
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      break;
    }
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  return fd;
}

bool write_all(int fd, std::string_view bytes) {
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t n = ::send(fd, bytes.data() + done, bytes.size() - done, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    done += static_cast<std::size_t>(n);
  }
  return true;
}

// Reads exactly n bytes. With no deadline it waits until data, EOF or `stop`.
ReadStatus read_exact(int fd, char* out, std::size_t n, std::optional<Clock::time_point> deadline,
                      const std::atomic<bool>& stop) {
  std::size_t got = 0;
  while (got < n) {
    int wait = kPollSliceMs;
    if (deadline) {
      const auto left =
          std::chrono::duration_cast<std::chrono::milliseconds>(*deadline - Clock::now()).count();
      if (left <= 0) return ReadStatus::timed_out;
      wait = static_cast<int>(std::min<long long>(left, kPollSliceMs));
    }
    if (stop.load()) return ReadStatus::stopped;
    pollfd p{fd, POLLIN, 0};
    const int rc = ::poll(&p, 1, wait);
    if (rc < 0 && errno != EINTR) return ReadStatus::closed;
    if (rc <= 0) continue;
    const ssize_t r = ::recv(fd, out + got, n - got, 0);
    if (r == 0) return ReadStatus::closed;
    if (r < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      return ReadStatus::closed;
    }
    got += static_cast<std::size_t>(r);
  }
  return ReadStatus::ok;
}

ReadStatus read_frame(int fd, Envelope& out, std::optional<Clock::time_point> deadline,
                      const std::atomic<bool>& stop) {
  unsigned char len[4];
  if (auto s = read_exact(fd, reinterpret_cast<char*>(len), 4, deadline, stop); s != ReadStatus::ok) {
    return s;
  }
  const std::uint32_t n = (std::uint32_t{len[0]} << 24) | (std::uint32_t{len[1]} << 16) |
                          (std::uint32_t{len[2]} << 8) | std::uint32_t{len[3]};
  if (n > kMaxFrame) return ReadStatus::closed;
  std::string body(n, '\0');
  if (auto s = read_exact(fd, body.data(), n, deadline, stop); s != ReadStatus::ok) return s;
  try {
    out = decode_envelope_json(body);
  } catch (const WireError&) {
    return ReadStatus::closed;
  }
  return ReadStatus::ok;
}

}  // namespace

struct SocketTransport::RemoteSubscriber {
  std::mutex mu;
  int fd = -1;
  bool closed = false;
  TopicFilter filter;
};

struct SocketTransport::Outbound {
  int fd = -1;
  std::atomic<bool> stop{false};
  std::thread reader;
};

SocketTransport::SocketTransport(SocketTransportConfig config) : config_(std::move(config)) {
  if (config_.listen_port < 0) return;
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (listen_fd_ < 0) throw std::runtime_error(std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(config_.listen_port));
  if (::inet_pton(AF_INET, config_.listen_host.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw std::runtime_error("bad listen address " + config_.listen_host);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
      ::listen(listen_fd_, 64) != 0) {
    const std::string err = std::strerror(errno);
    ::close(listen_fd_);
    throw std::runtime_error("cannot listen on " + config_.listen_host + ":" +
                             std::to_string(config_.listen_port) + ": " + err);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
}

SocketTransport::~SocketTransport() { stop(); }

void SocketTransport::stop() {
  if (stopping_.exchange(true)) return;
  if (acceptor_.joinable()) acceptor_.join();
  if (listen_fd_ >= 0) ::close(listen_fd_);
  std::vector<SubscriptionId> outbound;
  {
    std::lock_guard lock(mu_);
    for (const auto& [id, o] : outbound_subs_) outbound.push_back(id);
  }
  for (auto id : outbound) unsubscribe(id);
  std::list<std::pair<std::thread, std::shared_ptr<std::atomic<bool>>>> workers;
  {
    std::lock_guard lock(workers_mu_);
    workers.swap(workers_);
  }
  for (auto& [t, done] : workers) t.join();
}

void SocketTransport::add_peer(const std::string& name, const std::string& address) {
  std::lock_guard lock(mu_);
  config_.peers[name] = address;
}

Timestamp SocketTransport::now() const { return wall_clock_now(); }

void SocketTransport::attach(const std::string& peer, MessageHandler handler) {
  std::lock_guard lock(mu_);
  if (!local_peer_.empty() && local_peer_ != peer) {
    throw std::logic_error("socket transport already hosts peer " + local_peer_);
  }
  local_peer_ = peer;
  handler_ = std::move(handler);
}

void SocketTransport::detach(const std::string& peer) {
  std::lock_guard lock(mu_);
  if (local_peer_ == peer) {
    local_peer_.clear();
    handler_ = nullptr;
  }
}

std::optional<std::string> SocketTransport::address_of(const std::string& peer) const {
  std::lock_guard lock(mu_);
  auto it = config_.peers.find(peer);
  if (it == config_.peers.end()) return std::nullopt;
  return it->second;
}

void SocketTransport::spawn(std::function<void()> fn) {
  reap();
  auto done = std::make_shared<std::atomic<bool>>(false);
  std::lock_guard lock(workers_mu_);
  workers_.emplace_back(std::thread([fn = std::move(fn), done] {
                          fn();
                          done->store(true);
                        }),
                        done);
}

void SocketTransport::reap() {
  std::lock_guard lock(workers_mu_);
  for (auto it = workers_.begin(); it != workers_.end();) {
    if (it->second->load()) {
      it->first.join();
      it = workers_.erase(it);
    } else {
      ++it;
    }
  }
}

void SocketTransport::request(const std::string& to, Envelope e, Duration timeout, ReplyCallback done) {
  const auto address = address_of(to);
  if (!address) {
    done(TransportError::unknown_peer);
    return;
  }
  spawn([this, address = *address, e = std::move(e), timeout, done = std::move(done)] {
    const auto deadline = Clock::now() + timeout;
    const int fd = connect_to(address, deadline);
    if (fd < 0) {
      // Nobody listening looks the same as a dead peer: no reply by the deadline.
      std::this_thread::sleep_until(deadline);
      done(TransportError::timeout);
      return;
    }
    Envelope reply;
    ReadStatus status = ReadStatus::closed;
    if (write_all(fd, encode_frame(e))) status = read_frame(fd, reply, deadline, stopping_);
    ::close(fd);
    if (status == ReadStatus::ok) {
      done(std::move(reply));
    } else {
      done(TransportError::timeout);
    }
  });
}

void SocketTransport::send(const std::string& to, Envelope e) {
  const auto address = address_of(to);
  if (!address) return;
  spawn([address = *address, e = std::move(e)] {
    const int fd = connect_to(address, Clock::now() + std::chrono::seconds(5));
    if (fd < 0) return;
    write_all(fd, encode_frame(e));
    ::shutdown(fd, SHUT_WR);
    ::close(fd);
  });
}

void SocketTransport::accept_loop() {
  while (!stopping_.load()) {
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, kPollSliceMs) <= 0) continue;
    const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    spawn([this, fd] { serve_connection(fd); });
  }
}

void SocketTransport::serve_connection(int fd) {
  std::shared_ptr<RemoteSubscriber> sub;
  Envelope e;
  while (read_frame(fd, e, std::nullopt, stopping_) == ReadStatus::ok) {
    if (e.kind == MessageKind::subscribe && !sub) {
      try {
        sub = std::make_shared<RemoteSubscriber>();
        sub->fd = fd;
        sub->filter = TopicFilter::parse(e.payload);
      } catch (const BadFilter&) {
        break;
      }
      std::lock_guard lock(mu_);
      remote_subs_[fd] = sub;
      continue;
    }
    if (e.kind == MessageKind::unsubscribe) break;
    MessageHandler handler;
    {
      std::lock_guard lock(mu_);
      handler = handler_;
    }
    if (!handler) break;
    const auto reply = handler(e);
    if (reply && !write_all(fd, encode_frame(*reply))) break;
  }
  if (sub) {
    {
      std::lock_guard lock(mu_);
      remote_subs_.erase(fd);
    }
    std::lock_guard lock(sub->mu);
    sub->closed = true;
  }
  ::close(fd);
}

void SocketTransport::publish(const Topic& topic, std::string payload) {
  std::vector<DeliveryCallback> local;
  std::vector<std::shared_ptr<RemoteSubscriber>> remote;
  std::string sender;
  {
    std::lock_guard lock(mu_);
    sender = local_peer_;
    for (const auto& [id, s] : local_subs_) {
      if (topic_match(s.first, topic)) local.push_back(s.second);
    }
    for (const auto& [fd, s] : remote_subs_) {
      if (topic_match(s->filter, topic)) remote.push_back(s);
    }
  }
  for (const auto& deliver : local) deliver(topic, payload);
  if (remote.empty()) return;
  const std::string frame = encode_frame(
      Envelope{Envelope::kVersion, MessageKind::publish, sender, 0, encode_publish_payload(topic, payload)});
  for (const auto& s : remote) {
    std::lock_guard lock(s->mu);
    if (!s->closed) write_all(s->fd, frame);
  }
}

SubscriptionId SocketTransport::subscribe(const TopicFilter& filter, DeliveryCallback deliver) {
  std::lock_guard lock(mu_);
  const SubscriptionId id = next_sub_++;
  local_subs_.emplace(id, std::make_pair(filter, std::move(deliver)));
  return id;
}

SubscriptionId SocketTransport::subscribe_remote(const std::string& peer, const TopicFilter& filter,
                                                 DeliveryCallback deliver) {
  const auto address = address_of(peer);
  if (!address) throw std::runtime_error("unknown peer " + peer);
  const int fd = connect_to(*address, Clock::now() + std::chrono::seconds(5));
  if (fd < 0) throw std::runtime_error("cannot connect to " + peer + " at " + *address);
  if (!write_all(fd, encode_frame(Envelope{Envelope::kVersion, MessageKind::subscribe, local_peer_, 0,
                                           filter.str()}))) {
    ::close(fd);
    throw std::runtime_error("cannot subscribe at " + peer);
  }
  auto out = std::make_shared<Outbound>();
  out->fd = fd;
  out->reader = std::thread([out = out.get(), deliver = std::move(deliver)] {
    Envelope e;
    while (read_frame(out->fd, e, std::nullopt, out->stop) == ReadStatus::ok) {
      if (e.kind != MessageKind::publish) continue;
      try {
        auto [topic, body] = decode_publish_payload(e.payload);
        deliver(topic, body);
      } catch (const std::exception&) {
        // A garbled publication is dropped like any other lost message.
      }
    }
  });
  std::lock_guard lock(mu_);
  const SubscriptionId id = next_sub_++;
  outbound_subs_.emplace(id, std::move(out));
  return id;
}

void SocketTransport::unsubscribe(SubscriptionId id) {
  std::shared_ptr<Outbound> out;
  {
    std::lock_guard lock(mu_);
    local_subs_.erase(id);
    auto it = outbound_subs_.find(id);
    if (it != outbound_subs_.end()) {
      out = it->second;
      outbound_subs_.erase(it);
    }
  }
  if (!out) return;
  out->stop.store(true);
  ::shutdown(out->fd, SHUT_RDWR);
  out->reader.join();
  ::close(out->fd);
}

}  // namespace dcmon
