#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dcmon {

class BadTopic : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class BadFilter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Concrete streaming topic `metrics.<kind>.<id>` with kind `nodes` or `dc`.
struct Topic {
  std::string kind;
  std::string id;

  static Topic parse(std::string_view text);  // throws BadTopic
  static Topic nodes(std::string id);
  static Topic dc(std::string id);
  std::string str() const;

  friend auto operator<=>(const Topic&, const Topic&) = default;
};

/// `metrics.<kind|*>.<id|*>`; `*` stands for exactly one whole segment.
struct TopicFilter {
  std::string kind;
  std::string id;

  static TopicFilter parse(std::string_view text);  // throws BadFilter
  std::string str() const;

  friend auto operator<=>(const TopicFilter&, const TopicFilter&) = default;
};

bool topic_match(const TopicFilter& filter, const Topic& topic) noexcept;

/// Every topic over the given id universe that the filter matches.
std::vector<Topic> expand(const TopicFilter& filter, std::span<const std::string> ids);

}  // namespace dcmon
