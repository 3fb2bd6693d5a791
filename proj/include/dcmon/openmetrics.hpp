#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dcmon/time.hpp"

namespace dcmon::om {

/// Content type used by every HTTP surface that carries an exposition.
inline constexpr std::string_view kContentType =
    "application/openmetrics-text; version=1.0.0; charset=utf-8";

enum class MetricType { gauge, counter, unknown };

std::string_view to_string(MetricType type) noexcept;
std::optional<MetricType> parse_metric_type(std::string_view text) noexcept;

bool is_metric_name(std::string_view name) noexcept;
bool is_label_name(std::string_view name) noexcept;

class OpenMetricsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed line. `line` and `column` are 1-based.
class SyntaxError : public OpenMetricsError {
 public:
  SyntaxError(std::size_t line, std::size_t column, std::string reason);
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t line_;
  std::size_t column_;
  std::string reason_;
};

/// Well-formed lines that together violate the data model.
class SemanticError : public OpenMetricsError {
 public:
  explicit SemanticError(const std::string& reason)
      : OpenMetricsError("semantic error: " + reason) {}
};

class InvariantViolation : public OpenMetricsError {
 public:
  explicit InvariantViolation(const std::string& reason)
      : OpenMetricsError("invariant violation: " + reason) {}
};

class MergeConflict : public OpenMetricsError {
 public:
  explicit MergeConflict(std::string family)
      : OpenMetricsError("conflicting definitions of family " + family),
        family_(std::move(family)) {}
  const std::string& family() const noexcept { return family_; }

 private:
  std::string family_;
};

class DuplicateSample : public OpenMetricsError {
 public:
  explicit DuplicateSample(const std::string& family)
      : OpenMetricsError("duplicate (labels, timestamp) in family " + family) {}
};

struct Label {
  std::string name;
  std::string value;

  friend auto operator<=>(const Label&, const Label&) = default;
  friend bool operator==(const Label&, const Label&) = default;
};

/// A set of labels kept in canonical order (ascending by name). Equality and
/// ordering are therefore canonical by construction.
class LabelSet {
 public:
  LabelSet() = default;
  LabelSet(std::initializer_list<Label> labels);
  explicit LabelSet(std::vector<Label> labels);

  /// Inserts or replaces.
  void set(std::string name, std::string value);
  bool erase(std::string_view name);
  const std::string* find(std::string_view name) const noexcept;
  bool contains(std::string_view name) const noexcept { return find(name) != nullptr; }

  const std::vector<Label>& labels() const noexcept { return labels_; }
  bool empty() const noexcept { return labels_.empty(); }
  std::size_t size() const noexcept { return labels_.size(); }
  auto begin() const noexcept { return labels_.begin(); }
  auto end() const noexcept { return labels_.end(); }

  /// `{a="x",b="y"}` or the empty string for an empty set.
  std::string to_string() const;

  friend auto operator<=>(const LabelSet&, const LabelSet&) = default;
  friend bool operator==(const LabelSet&, const LabelSet&) = default;

 private:
  std::vector<Label> labels_;
};

struct Sample {
  LabelSet labels;
  double value = 0.0;
  std::optional<Timestamp> timestamp;
  /// Non-empty only for pass-through families (histogram, summary, ...), where
  /// the raw sample name is `family.name + suffix`.
  std::string suffix;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct MetricFamily {
  std::string name;
  MetricType type = MetricType::unknown;
  /// The declared OpenMetrics type for families parsed as `unknown` from an
  /// unsupported type such as `histogram`; re-emitted on serialization.
  std::string passthrough_type;
  std::optional<std::string> help;
  std::optional<std::string> unit;
  std::vector<Sample> samples;

  friend bool operator==(const MetricFamily&, const MetricFamily&) = default;
};

struct Exposition {
  std::vector<MetricFamily> families;

  const MetricFamily* find(std::string_view name) const noexcept;
  MetricFamily* find(std::string_view name) noexcept;
  std::size_t sample_count() const noexcept;
  bool empty() const noexcept { return sample_count() == 0; }

  friend bool operator==(const Exposition&, const Exposition&) = default;
};

/// Throws InvariantViolation describing the first broken invariant.
void validate(const Exposition& exposition);

/// Parses the supported OpenMetrics text subset. Samples without a timestamp
/// get `default_timestamp` when given and are left untimed otherwise.
Exposition parse_exposition(std::string_view text,
                            std::optional<Timestamp> default_timestamp = std::nullopt);

std::string serialize_exposition(const Exposition& exposition);

/// Merges by family name in first-occurrence order, concatenating samples.
Exposition merge_expositions(std::span<const Exposition> parts);

/// Shortest text that parses back to exactly `value`.
std::string format_value(double value);

}  // namespace dcmon::om
