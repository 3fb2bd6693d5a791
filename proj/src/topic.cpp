#include "dcmon/topic.hpp"

#include <array>
#include <optional>

namespace dcmon {

namespace {

constexpr std::string_view kRoot = "metrics";
constexpr std::array<std::string_view, 2> kKinds = {"nodes", "dc"};

bool is_kind(std::string_view s) { return s == kKinds[0] || s == kKinds[1]; }

bool is_id(std::string_view s) {
  return !s.empty() && s.find('.') == std::string_view::npos &&
         s.find('*') == std::string_view::npos;
}

std::optional<std::array<std::string_view, 3>> split3(std::string_view text) {
  const auto a = text.find('.');
  if (a == std::string_view::npos) return std::nullopt;
  const auto b = text.find('.', a + 1);
  if (b == std::string_view::npos) return std::nullopt;
  if (text.find('.', b + 1) != std::string_view::npos) return std::nullopt;
  return std::array{text.substr(0, a), text.substr(a + 1, b - a - 1), text.substr(b + 1)};
}

}  // namespace

Topic Topic::parse(std::string_view text) {
  auto parts = split3(text);
  if (!parts || (*parts)[0] != kRoot || !is_kind((*parts)[1]) || !is_id((*parts)[2])) {
    throw BadTopic("bad topic '" + std::string(text) + "'");
  }
  return Topic{std::string((*parts)[1]), std::string((*parts)[2])};
}

Topic Topic::nodes(std::string id) {
  if (!is_id(id)) throw BadTopic("bad topic id '" + id + "'");
  return Topic{"nodes", std::move(id)};
}

Topic Topic::dc(std::string id) {
  if (!is_id(id)) throw BadTopic("bad topic id '" + id + "'");
  return Topic{"dc", std::move(id)};
}

std::string Topic::str() const { return std::string(kRoot) + "." + kind + "." + id; }

TopicFilter TopicFilter::parse(std::string_view text) {
  auto parts = split3(text);
  if (!parts || (*parts)[0] != kRoot) throw BadFilter("bad filter '" + std::string(text) + "'");
  const auto kind = (*parts)[1];
  const auto id = (*parts)[2];
  if (!(kind == "*" || is_kind(kind)) || !(id == "*" || is_id(id))) {
    throw BadFilter("bad filter '" + std::string(text) + "'");
  }
  return TopicFilter{std::string(kind), std::string(id)};
}

std::string TopicFilter::str() const { return std::string(kRoot) + "." + kind + "." + id; }

bool topic_match(const TopicFilter& filter, const Topic& topic) noexcept {
  return (filter.kind == "*" || filter.kind == topic.kind) &&
         (filter.id == "*" || filter.id == topic.id);
}

std::vector<Topic> expand(const TopicFilter& filter, std::span<const std::string> ids) {
  std::vector<Topic> out;
  for (std::string_view kind : kKinds) {
    if (filter.kind != "*" && filter.kind != kind) continue;
    for (const std::string& id : ids) {
      if (filter.id != "*" && filter.id != id) continue;
      out.push_back(Topic{std::string(kind), id});
    }
  }
  return out;
}

}  // namespace dcmon
