#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>

#include "dcmon/time.hpp"
#include "dcmon/topic.hpp"

namespace dcmon {

enum class MessageKind {
  ping,
  pong,
  register_node,
  ack,
  app_target_add,
  app_target_remove,
  publish,
  subscribe,
  unsubscribe,
};

std::string_view to_string(MessageKind kind) noexcept;
std::optional<MessageKind> parse_message_kind(std::string_view text) noexcept;

struct Envelope {
  static constexpr int kVersion = 1;

  int version = kVersion;
  MessageKind kind = MessageKind::ping;
  std::string sender;
  std::uint64_t seq = 0;
  std::string payload;

  friend bool operator==(const Envelope&, const Envelope&) = default;
};

class WireError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// JSON body with the payload base64-encoded.
std::string encode_envelope_json(const Envelope& e);
Envelope decode_envelope_json(std::string_view json);  // throws WireError

/// 4-byte big-endian length prefix followed by the JSON body.
std::string encode_frame(const Envelope& e);
/// Decodes one complete frame; throws WireError on a short or malformed frame.
Envelope decode_frame(std::string_view frame);

/// Publish payload: `<topic>\n<exposition bytes>`.
std::string encode_publish_payload(const Topic& topic, std::string_view body);
std::pair<Topic, std::string> decode_publish_payload(std::string_view payload);

enum class TransportError { timeout, unknown_peer };
std::string_view to_string(TransportError error) noexcept;

using RequestResult = std::variant<Envelope, TransportError>;
using ReplyCallback = std::function<void(RequestResult)>;
/// Handles an inbound envelope; a returned envelope is the reply.
using MessageHandler = std::function<std::optional<Envelope>(const Envelope&)>;
using DeliveryCallback = std::function<void(const Topic&, const std::string&)>;
using SubscriptionId = std::uint64_t;

/// Message substrate between nodes and the control plane, plus topic pub/sub.
/// Delivery is at-most-once; reliability is left to the protocol.
class Transport {
 public:
  virtual ~Transport() = default;

  virtual Timestamp now() const = 0;

  virtual void attach(const std::string& peer, MessageHandler handler) = 0;
  virtual void detach(const std::string& peer) = 0;

  /// The callback fires exactly once: with the correlated reply, or with
  /// `timeout` after `timeout` elapsed, or with `unknown_peer`.
  virtual void request(const std::string& to, Envelope e, Duration timeout, ReplyCallback done) = 0;
  /// One-way message.
  virtual void send(const std::string& to, Envelope e) = 0;

  virtual void publish(const Topic& topic, std::string payload) = 0;
  virtual SubscriptionId subscribe(const TopicFilter& filter, DeliveryCallback deliver) = 0;
  virtual void unsubscribe(SubscriptionId id) = 0;
};

}  // namespace dcmon
