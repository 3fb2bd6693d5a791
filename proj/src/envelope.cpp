#include <openssl/evp.h>

#include <array>

#include <json.hpp>

#include "dcmon/transport.hpp"

namespace dcmon {

namespace {

constexpr std::array<std::string_view, 9> kKindNames = {
    "ping", "pong", "register_node", "ack", "app_target_add",
    "app_target_remove", "publish", "subscribe", "unsubscribe"};

std::string base64_encode(std::string_view in) {
  std::string out(4 * ((in.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(in.data()),
                                static_cast<int>(in.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string base64_decode(std::string_view in) {
  if (in.size() % 4 != 0) throw WireError("bad base64 length");
  std::string out(3 * in.size() / 4, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(in.data()),
                                static_cast<int>(in.size()));
  if (n < 0) throw WireError("bad base64 payload");
  std::size_t padding = 0;
  if (!in.empty() && in.back() == '=') ++padding;
  if (in.size() > 1 && in[in.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

}  // namespace

std::string_view to_string(MessageKind kind) noexcept {
  return kKindNames[static_cast<std::size_t>(kind)];
}

std::optional<MessageKind> parse_message_kind(std::string_view text) noexcept {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == text) return static_cast<MessageKind>(i);
  }
  return std::nullopt;
}

std::string_view to_string(TransportError error) noexcept {
  return error == TransportError::timeout ? "timeout" : "unknown_peer";
}

std::string encode_envelope_json(const Envelope& e) {
  nlohmann::json j;
  j["version"] = e.version;
  j["kind"] = to_string(e.kind);
  j["sender"] = e.sender;
  j["seq"] = e.seq;
  j["payload"] = base64_encode(e.payload);
  return j.dump();
}

Envelope decode_envelope_json(std::string_view json) {
  try {
    const auto j = nlohmann::json::parse(json);
    Envelope e;
    e.version = j.at("version").get<int>();
    if (e.version != Envelope::kVersion) throw WireError("unsupported envelope version");
    auto kind = parse_message_kind(j.at("kind").get<std::string>());
    if (!kind) throw WireError("unknown envelope kind");
    e.kind = *kind;
    e.sender = j.at("sender").get<std::string>();
    e.seq = j.at("seq").get<std::uint64_t>();
    e.payload = base64_decode(j.at("payload").get<std::string>());
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw WireError(std::string("malformed envelope: ") + ex.what());
  }
}

std::string encode_frame(const Envelope& e) {
  const std::string body = encode_envelope_json(e);
  const auto n = static_cast<std::uint32_t>(body.size());
  std::string frame;
  frame.reserve(4 + body.size());
  frame += static_cast<char>((n >> 24) & 0xFF);
  frame += static_cast<char>((n >> 16) & 0xFF);
  frame += static_cast<char>((n >> 8) & 0xFF);
  frame += static_cast<char>(n & 0xFF);
  frame += body;
  return frame;
}

Envelope decode_frame(std::string_view frame) {
  if (frame.size() < 4) throw WireError("short frame");
  std::uint32_t n = 0;
  for (int i = 0; i < 4; ++i) n = (n << 8) | static_cast<unsigned char>(frame[i]);
  if (frame.size() != 4 + static_cast<std::size_t>(n)) throw WireError("frame length mismatch");
  return decode_envelope_json(frame.substr(4));
}

std::string encode_publish_payload(const Topic& topic, std::string_view body) {
  std::string out = topic.str();
  out += '\n';
  out += body;
  return out;
}

std::pair<Topic, std::string> decode_publish_payload(std::string_view payload) {
  const auto nl = payload.find('\n');
  if (nl == std::string_view::npos) throw WireError("publish payload without topic line");
  try {
    return {Topic::parse(payload.substr(0, nl)), std::string(payload.substr(nl + 1))};
  } catch (const BadTopic& e) {
    throw WireError(e.what());
  }
}

}  // namespace dcmon
