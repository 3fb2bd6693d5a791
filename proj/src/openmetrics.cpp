#include "dcmon/openmetrics.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <set>
#include <unordered_set>
#include <utility>

namespace dcmon::om {

namespace {

constexpr std::string_view kEof = "# EOF";

constexpr std::array<std::string_view, 5> kPassthroughTypes = {
    "histogram", "gaugehistogram", "summary", "stateset", "info"};

constexpr std::array<std::string_view, 8> kPassthroughSuffixes = {
    "_bucket", "_count", "_sum", "_created", "_total", "_gcount", "_gsum", "_info"};

bool is_passthrough_type(std::string_view type) {
  return std::find(kPassthroughTypes.begin(), kPassthroughTypes.end(), type) !=
         kPassthroughTypes.end();
}

bool is_passthrough_suffix(std::string_view suffix) {
  return std::find(kPassthroughSuffixes.begin(), kPassthroughSuffixes.end(), suffix) !=
         kPassthroughSuffixes.end();
}

constexpr bool is_alpha(char c) noexcept {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}
constexpr bool is_digit(char c) noexcept { return c >= '0' && c <= '9'; }

constexpr bool is_name_start(char c) noexcept { return is_alpha(c) || c == '_' || c == ':'; }
constexpr bool is_name_char(char c) noexcept { return is_name_start(c) || is_digit(c); }
constexpr bool is_label_start(char c) noexcept { return is_alpha(c) || c == '_'; }
constexpr bool is_label_char(char c) noexcept { return is_label_start(c) || is_digit(c); }

// Returns the byte offset of the first invalid UTF-8 sequence, or npos.
std::size_t find_invalid_utf8(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t extra = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      extra = 1;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return i;
    }
    if (i + extra >= text.size()) return i;
    for (std::size_t k = 1; k <= extra; ++k) {
      const auto cc = static_cast<unsigned char>(text[i + k]);
      if ((cc & 0xC0) != 0x80) return i;
      cp = (cp << 6) | (cc & 0x3F);
    }
    const bool overlong = (extra == 1 && cp < 0x80) || (extra == 2 && cp < 0x800) ||
                          (extra == 3 && cp < 0x10000);
    if (overlong || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return i;
    i += extra + 1;
  }
  return std::string_view::npos;
}

bool is_valid_utf8(std::string_view text) { return find_invalid_utf8(text) == std::string_view::npos; }

void escape_label_value(std::string& out, std::string_view value) {
  for (char c : value) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '"': out += "\\\""; break;
      case '\n': out += "\\n"; break;
      default: out += c;
    }
  }
}

std::string sample_key(const Sample& s) {
  std::string key = s.suffix;
  key += '\x1f';
  key += s.labels.to_string();
  key += '\x1f';
  if (s.timestamp) key += std::to_string(*s.timestamp);
  return key;
}

void validate_family(const MetricFamily& f) {
  if (!is_metric_name(f.name)) throw InvariantViolation("bad metric name '" + f.name + "'");
  if (!f.passthrough_type.empty()) {
    if (f.type != MetricType::unknown || !is_passthrough_type(f.passthrough_type)) {
      throw InvariantViolation("bad pass-through type on " + f.name);
    }
  }
  if (f.help && f.help->find('\n') != std::string::npos) {
    throw InvariantViolation("help text of " + f.name + " contains a newline");
  }
  if (f.unit) {
    if (f.unit->empty() || !std::all_of(f.unit->begin(), f.unit->end(), is_name_char)) {
      throw InvariantViolation("bad unit on " + f.name);
    }
    const std::string tail = "_" + *f.unit;
    if (f.name.size() <= tail.size() ||
        f.name.compare(f.name.size() - tail.size(), tail.size(), tail) != 0) {
      throw InvariantViolation("family " + f.name + " does not end with _" + *f.unit);
    }
  }
  std::unordered_set<std::string> seen;
  for (const Sample& s : f.samples) {
    if (!s.suffix.empty() && (f.passthrough_type.empty() || !is_passthrough_suffix(s.suffix))) {
      throw InvariantViolation("unexpected sample suffix " + s.suffix + " in " + f.name);
    }
    if (!std::isfinite(s.value)) throw InvariantViolation("non-finite value in " + f.name);
    if (f.type == MetricType::counter && s.value < 0) {
      throw InvariantViolation("negative counter value in " + f.name);
    }
    if (s.timestamp && *s.timestamp < 0) throw InvariantViolation("negative timestamp in " + f.name);
    for (const Label& l : s.labels) {
      if (!is_valid_utf8(l.value)) throw InvariantViolation("label value is not UTF-8 in " + f.name);
    }
    if (!seen.insert(sample_key(s)).second) {
      throw InvariantViolation("duplicate (labels, timestamp) in " + f.name);
    }
  }
}

// --- parser ---------------------------------------------------------------

class LineParser {
 public:
  LineParser(std::string_view line, std::size_t line_no) : line_(line), line_no_(line_no) {}

  [[noreturn]] void fail(const std::string& reason) const {
    throw SyntaxError(line_no_, pos_ + 1, reason);
  }

  bool at_end() const noexcept { return pos_ == line_.size(); }
  char peek() const noexcept { return at_end() ? '\0' : line_[pos_]; }

  void expect(char c, const char* what) {
    if (peek() != c) fail(std::string("expected ") + what);
    ++pos_;
  }

  void expect_literal(std::string_view lit) {
    if (line_.substr(pos_, lit.size()) != lit) fail("expected '" + std::string(lit) + "'");
    pos_ += lit.size();
  }

  std::string_view metric_name() {
    const std::size_t start = pos_;
    if (!is_name_start(peek())) fail("expected metric name");
    while (!at_end() && is_name_char(line_[pos_])) ++pos_;
    return line_.substr(start, pos_ - start);
  }

  std::string_view label_name() {
    const std::size_t start = pos_;
    if (!is_label_start(peek())) fail("expected label name");
    while (!at_end() && is_label_char(line_[pos_])) ++pos_;
    return line_.substr(start, pos_ - start);
  }

  std::string label_value() {
    std::string out;
    while (true) {
      if (at_end()) fail("unterminated label value");
      const char c = line_[pos_];
      if (c == '"') {
        ++pos_;
        return out;
      }
      if (c == '\\') {
        ++pos_;
        switch (peek()) {
          case '\\': out += '\\'; break;
          case '"': out += '"'; break;
          case 'n': out += '\n'; break;
          default: fail("invalid escape sequence");
        }
        ++pos_;
        continue;
      }
      out += c;
      ++pos_;
    }
  }

  std::string_view token() {
    const std::size_t start = pos_;
    while (!at_end() && line_[pos_] != ' ') ++pos_;
    return line_.substr(start, pos_ - start);
  }

  std::string_view rest() {
    auto r = line_.substr(pos_);
    pos_ = line_.size();
    return r;
  }

  std::size_t pos() const noexcept { return pos_; }
  void set_pos(std::size_t p) noexcept { pos_ = p; }

 private:
  std::string_view line_;
  std::size_t line_no_;
  std::size_t pos_ = 0;
};

bool matches_value_grammar(std::string_view t) {
  // [+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?
  std::size_t i = 0;
  if (i < t.size() && (t[i] == '+' || t[i] == '-')) ++i;
  std::size_t int_digits = 0;
  while (i < t.size() && is_digit(t[i])) ++i, ++int_digits;
  std::size_t frac_digits = 0;
  if (i < t.size() && t[i] == '.') {
    ++i;
    while (i < t.size() && is_digit(t[i])) ++i, ++frac_digits;
  }
  if (int_digits == 0 && frac_digits == 0) return false;
  if (i < t.size() && (t[i] == 'e' || t[i] == 'E')) {
    ++i;
    if (i < t.size() && (t[i] == '+' || t[i] == '-')) ++i;
    std::size_t exp_digits = 0;
    while (i < t.size() && is_digit(t[i])) ++i, ++exp_digits;
    if (exp_digits == 0) return false;
  }
  return i == t.size();
}

// Integer text is milliseconds; text with a fractional part is seconds,
// converted to milliseconds with round-half-to-even.
std::optional<Timestamp> parse_timestamp(std::string_view t) {
  const auto dot = t.find('.');
  const std::string_view int_part = t.substr(0, dot);
  if (int_part.empty() || !std::all_of(int_part.begin(), int_part.end(), is_digit)) return std::nullopt;
  constexpr auto kMax = std::numeric_limits<Timestamp>::max();
  Timestamp whole = 0;
  auto [p, ec] = std::from_chars(int_part.data(), int_part.data() + int_part.size(), whole);
  if (ec != std::errc{} || p != int_part.data() + int_part.size()) return std::nullopt;
  if (dot == std::string_view::npos) return whole;

  const std::string_view frac = t.substr(dot + 1);
  if (frac.empty() || !std::all_of(frac.begin(), frac.end(), is_digit)) return std::nullopt;
  if (whole > kMax / 1000) return std::nullopt;
  Timestamp ms = whole * 1000;
  Timestamp millis_part = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    millis_part = millis_part * 10 + (k < frac.size() ? frac[k] - '0' : 0);
  }
  if (ms > kMax - millis_part) return std::nullopt;
  ms += millis_part;
  if (frac.size() > 3) {
    const std::string_view rem = frac.substr(3);
    const bool tail_nonzero =
        std::any_of(rem.begin() + 1, rem.end(), [](char c) { return c != '0'; });
    const int first = rem[0] - '0';
    bool round_up = false;
    if (first > 5 || (first == 5 && tail_nonzero)) {
      round_up = true;
    } else if (first == 5) {
      round_up = (ms % 2) != 0;
    }
    if (round_up) {
      if (ms == kMax) return std::nullopt;
      ++ms;
    }
  }
  return ms;
}

struct FamilyBuilder {
  MetricFamily family;
  bool saw_type = false;
  bool explicit_family = false;
  std::unordered_set<std::string> sample_keys;
};

class ExpositionParser {
 public:
  ExpositionParser(std::string_view text, std::optional<Timestamp> default_ts)
      : text_(text), default_ts_(default_ts) {}

  Exposition run() {
    if (auto bad = find_invalid_utf8(text_); bad != std::string_view::npos) {
      std::size_t line = 1, col = 1;
      for (std::size_t i = 0; i < bad; ++i) {
        if (text_[i] == '\n') {
          ++line;
          col = 1;
        } else {
          ++col;
        }
      }
      throw SyntaxError(line, col, "invalid UTF-8");
    }

    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text_.size()) {
      const std::size_t nl = text_.find('\n', start);
      if (nl == std::string_view::npos) {
        lines.push_back(text_.substr(start));
        break;
      }
      lines.push_back(text_.substr(start, nl - start));
      start = nl + 1;
    }
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i] == kEof) {
        if (i + 1 != lines.size()) throw SyntaxError(i + 2, 1, "content after # EOF");
        return finish();
      }
      handle_line(lines[i], i + 1);
    }
    throw SyntaxError(lines.size() + 1, 1, "missing # EOF terminator");
  }

 private:
  Exposition finish() {
    close_current();
    return std::move(result_);
  }

  void close_current() {
    if (current_) {
      result_.families.push_back(std::move(current_->family));
      current_.reset();
    }
  }

  FamilyBuilder& family_for_metadata(std::string_view name) {
    if (current_ && current_->family.name == name) {
      if (!current_->family.samples.empty()) {
        throw SemanticError("metadata for " + std::string(name) + " after its samples");
      }
      return *current_;
    }
    open_family(name, true);
    return *current_;
  }

  void open_family(std::string_view name, bool explicit_family) {
    if (!seen_.insert(std::string(name)).second) {
      throw SemanticError("duplicate family " + std::string(name));
    }
    close_current();
    current_.emplace();
    current_->family.name = std::string(name);
    current_->explicit_family = explicit_family;
  }

  void handle_line(std::string_view line, std::size_t line_no) {
    LineParser p(line, line_no);
    if (line.empty()) p.fail("empty line");
    if (line[0] == '#') {
      handle_metadata(p);
    } else {
      handle_sample(p);
    }
  }

  void handle_metadata(LineParser& p) {
    p.expect('#', "'#'");
    p.expect(' ', "space");
    const std::string_view keyword = p.token();
    if (keyword != "TYPE" && keyword != "HELP" && keyword != "UNIT") {
      p.set_pos(2);
      p.fail("unknown metadata keyword");
    }
    p.expect(' ', "space");
    const std::string_view name = p.metric_name();
    p.expect(' ', "space");
    if (keyword == "TYPE") {
      const std::size_t type_pos = p.pos();
      const std::string_view type = p.token();
      if (!p.at_end()) p.fail("trailing characters after type");
      std::string passthrough;
      MetricType parsed = MetricType::unknown;
      if (auto t = parse_metric_type(type)) {
        parsed = *t;
      } else if (is_passthrough_type(type)) {
        passthrough = std::string(type);
      } else {
        p.set_pos(type_pos);
        p.fail("unknown metric type");
      }
      FamilyBuilder& fb = family_for_metadata(name);
      if (fb.saw_type) throw SemanticError("duplicate TYPE for " + std::string(name));
      fb.saw_type = true;
      fb.family.type = parsed;
      fb.family.passthrough_type = std::move(passthrough);
    } else if (keyword == "HELP") {
      const std::string_view text = p.rest();
      FamilyBuilder& fb = family_for_metadata(name);
      if (fb.family.help) throw SemanticError("duplicate HELP for " + std::string(name));
      fb.family.help = std::string(text);
    } else {
      const std::size_t unit_pos = p.pos();
      const std::string_view unit = p.token();
      if (unit.empty() || !std::all_of(unit.begin(), unit.end(), is_name_char)) {
        p.set_pos(unit_pos);
        p.fail("bad unit");
      }
      if (!p.at_end()) p.fail("trailing characters after unit");
      FamilyBuilder& fb = family_for_metadata(name);
      if (fb.family.unit) throw SemanticError("duplicate UNIT for " + std::string(name));
      const std::string tail = "_" + std::string(unit);
      if (name.size() <= tail.size() || name.substr(name.size() - tail.size()) != tail) {
        throw SemanticError("family " + std::string(name) + " does not end with " + tail);
      }
      fb.family.unit = std::string(unit);
    }
  }

  void handle_sample(LineParser& p) {
    const std::string_view name = p.metric_name();
    Sample sample;
    if (p.peek() == '{') {
      p.expect('{', "'{'");
      std::vector<Label> labels;
      std::set<std::string, std::less<>> names;
      while (true) {
        const std::size_t name_pos = p.pos();
        const std::string_view lname = p.label_name();
        p.expect_literal("=\"");
        std::string value = p.label_value();
        if (!names.insert(std::string(lname)).second) {
          p.set_pos(name_pos);
          p.fail("duplicate label name");
        }
        labels.push_back({std::string(lname), std::move(value)});
        if (p.peek() == ',') {
          p.expect(',', "','");
          continue;
        }
        p.expect('}', "'}' or ','");
        break;
      }
      sample.labels = LabelSet(std::move(labels));
    }
    p.expect(' ', "space");
    const std::size_t value_pos = p.pos();
    const std::string_view value_text = p.token();
    if (!matches_value_grammar(value_text)) {
      p.set_pos(value_pos);
      p.fail("bad sample value");
    }
    {
      const char* first = value_text.data();
      if (*first == '+') ++first;
      double v = 0;
      auto [ptr, ec] = std::from_chars(first, value_text.data() + value_text.size(), v);
      if (ec == std::errc::result_out_of_range) throw SemanticError("sample value out of range");
      if (ec != std::errc{} || ptr != value_text.data() + value_text.size()) {
        p.set_pos(value_pos);
        p.fail("bad sample value");
      }
      sample.value = v;
    }
    if (!p.at_end()) {
      p.expect(' ', "space");
      const std::size_t ts_pos = p.pos();
      const std::string_view ts_text = p.token();
      auto ts = parse_timestamp(ts_text);
      if (!ts) {
        p.set_pos(ts_pos);
        p.fail("bad timestamp");
      }
      if (!p.at_end()) p.fail("trailing characters after timestamp");
      sample.timestamp = *ts;
    } else {
      sample.timestamp = default_ts_;
    }

    attach_sample(name, std::move(sample));
  }

  void attach_sample(std::string_view name, Sample sample) {
    if (current_) {
      const MetricFamily& f = current_->family;
      const bool passthrough = !f.passthrough_type.empty();
      if (name == f.name) {
        // plain sample of the current family
      } else if (passthrough && name.size() > f.name.size() &&
                 name.substr(0, f.name.size()) == f.name &&
                 is_passthrough_suffix(name.substr(f.name.size()))) {
        sample.suffix = std::string(name.substr(f.name.size()));
      } else {
        open_family(name, false);
      }
    } else {
      open_family(name, false);
    }
    FamilyBuilder& fb = *current_;
    if (fb.family.type == MetricType::counter && sample.value < 0) {
      throw SemanticError("negative value for counter " + fb.family.name);
    }
    if (!std::isfinite(sample.value)) throw SemanticError("non-finite value in " + fb.family.name);
    if (!fb.sample_keys.insert(sample_key(sample)).second) {
      throw SemanticError("duplicate (labels, timestamp) in " + fb.family.name);
    }
    fb.family.samples.push_back(std::move(sample));
  }

  std::string_view text_;
  std::optional<Timestamp> default_ts_;
  Exposition result_;
  std::optional<FamilyBuilder> current_;
  std::unordered_set<std::string> seen_;
};

}  // namespace

std::string_view to_string(MetricType type) noexcept {
  switch (type) {
    case MetricType::gauge: return "gauge";
    case MetricType::counter: return "counter";
    case MetricType::unknown: return "unknown";
  }
  return "unknown";
}

std::optional<MetricType> parse_metric_type(std::string_view text) noexcept {
  if (text == "gauge") return MetricType::gauge;
  if (text == "counter") return MetricType::counter;
  if (text == "unknown") return MetricType::unknown;
  return std::nullopt;
}

bool is_metric_name(std::string_view name) noexcept {
  return !name.empty() && is_name_start(name[0]) && std::all_of(name.begin(), name.end(), is_name_char);
}

bool is_label_name(std::string_view name) noexcept {
  return !name.empty() && is_label_start(name[0]) &&
         std::all_of(name.begin(), name.end(), is_label_char);
}

SyntaxError::SyntaxError(std::size_t line, std::size_t column, std::string reason)
    : OpenMetricsError("syntax error at " + std::to_string(line) + ":" + std::to_string(column) +
                       ": " + reason),
      line_(line),
      column_(column),
      reason_(std::move(reason)) {}

LabelSet::LabelSet(std::initializer_list<Label> labels)
    : LabelSet(std::vector<Label>(labels)) {}

LabelSet::LabelSet(std::vector<Label> labels) : labels_(std::move(labels)) {
  std::sort(labels_.begin(), labels_.end(),
            [](const Label& a, const Label& b) { return a.name < b.name; });
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (!is_label_name(labels_[i].name)) {
      throw InvariantViolation("bad label name '" + labels_[i].name + "'");
    }
    if (i > 0 && labels_[i - 1].name == labels_[i].name) {
      throw InvariantViolation("duplicate label name '" + labels_[i].name + "'");
    }
  }
}

void LabelSet::set(std::string name, std::string value) {
  if (!is_label_name(name)) throw InvariantViolation("bad label name '" + name + "'");
  auto it = std::lower_bound(labels_.begin(), labels_.end(), name,
                             [](const Label& l, const std::string& n) { return l.name < n; });
  if (it != labels_.end() && it->name == name) {
    it->value = std::move(value);
  } else {
    labels_.insert(it, Label{std::move(name), std::move(value)});
  }
}

bool LabelSet::erase(std::string_view name) {
  auto it = std::find_if(labels_.begin(), labels_.end(), [&](const Label& l) { return l.name == name; });
  if (it == labels_.end()) return false;
  labels_.erase(it);
  return true;
}

const std::string* LabelSet::find(std::string_view name) const noexcept {
  auto it = std::lower_bound(labels_.begin(), labels_.end(), name,
                             [](const Label& l, std::string_view n) { return l.name < n; });
  if (it != labels_.end() && it->name == name) return &it->value;
  return nullptr;
}

std::string LabelSet::to_string() const {
  if (labels_.empty()) return {};
  std::string out = "{";
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (i > 0) out += ',';
    out += labels_[i].name;
    out += "=\"";
    escape_label_value(out, labels_[i].value);
    out += '"';
  }
  out += '}';
  return out;
}

const MetricFamily* Exposition::find(std::string_view name) const noexcept {
  for (const auto& f : families) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

MetricFamily* Exposition::find(std::string_view name) noexcept {
  for (auto& f : families) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

std::size_t Exposition::sample_count() const noexcept {
  std::size_t n = 0;
  for (const auto& f : families) n += f.samples.size();
  return n;
}

void validate(const Exposition& exposition) {
  std::unordered_set<std::string> names;
  for (const MetricFamily& f : exposition.families) {
    if (!names.insert(f.name).second) throw InvariantViolation("duplicate family " + f.name);
    validate_family(f);
  }
}

Exposition parse_exposition(std::string_view text, std::optional<Timestamp> default_timestamp) {
  return ExpositionParser(text, default_timestamp).run();
}

std::string format_value(double value) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) throw InvariantViolation("unformattable value");
  return std::string(buf.data(), ptr);
}

std::string serialize_exposition(const Exposition& exposition) {
  validate(exposition);
  std::string out;
  for (const MetricFamily& f : exposition.families) {
    out += "# TYPE ";
    out += f.name;
    out += ' ';
    out += f.passthrough_type.empty() ? to_string(f.type) : std::string_view(f.passthrough_type);
    out += '\n';
    if (f.help) {
      out += "# HELP ";
      out += f.name;
      out += ' ';
      out += *f.help;
      out += '\n';
    }
    if (f.unit) {
      out += "# UNIT ";
      out += f.name;
      out += ' ';
      out += *f.unit;
      out += '\n';
    }
    for (const Sample& s : f.samples) {
      out += f.name;
      out += s.suffix;
      out += s.labels.to_string();
      out += ' ';
      out += format_value(s.value);
      if (s.timestamp) {
        out += ' ';
        out += std::to_string(*s.timestamp);
      }
      out += '\n';
    }
  }
  out += kEof;
  out += '\n';
  return out;
}

Exposition merge_expositions(std::span<const Exposition> parts) {
  Exposition merged;
  std::vector<std::unordered_set<std::string>> keys;
  for (const Exposition& part : parts) {
    for (const MetricFamily& f : part.families) {
      std::size_t idx = merged.families.size();
      for (std::size_t i = 0; i < merged.families.size(); ++i) {
        if (merged.families[i].name == f.name) {
          idx = i;
          break;
        }
      }
      if (idx == merged.families.size()) {
        MetricFamily copy = f;
        copy.samples.clear();
        merged.families.push_back(std::move(copy));
        keys.emplace_back();
      } else {
        MetricFamily& into = merged.families[idx];
        if (into.type != f.type || into.passthrough_type != f.passthrough_type ||
            (into.unit && f.unit && *into.unit != *f.unit)) {
          throw MergeConflict(f.name);
        }
        if (!into.unit) into.unit = f.unit;
        if (!into.help) into.help = f.help;
      }
      MetricFamily& into = merged.families[idx];
      for (const Sample& s : f.samples) {
        if (!keys[idx].insert(sample_key(s)).second) throw DuplicateSample(f.name);
        into.samples.push_back(s);
      }
    }
  }
  return merged;
}

}  // namespace dcmon::om
