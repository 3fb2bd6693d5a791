#pragma once

// Second, deliberately different implementation of the accepted exposition
// subset: whole-line regexes plus a small family state machine. Used to
// classify mutated inputs and to cross-check the codec.

#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace oracle {

struct Verdict {
  bool valid = true;
  std::string why;
};

// Unicode Table 3-7 well-formed byte sequences.
inline bool utf8_well_formed(std::string_view s) {
  auto in = [](unsigned char c, int lo, int hi) { return c >= lo && c <= hi; };
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    auto at = [&](std::size_t k) -> int {
      return i + k < s.size() ? static_cast<unsigned char>(s[i + k]) : -1;
    };
    auto cont = [&](std::size_t k, int lo = 0x80, int hi = 0xBF) {
      const int c = at(k);
      return c >= 0 && in(static_cast<unsigned char>(c), lo, hi);
    };
    if (b0 <= 0x7F) {
      i += 1;
    } else if (in(b0, 0xC2, 0xDF)) {
      if (!cont(1)) return false;
      i += 2;
    } else if (b0 == 0xE0) {
      if (!cont(1, 0xA0, 0xBF) || !cont(2)) return false;
      i += 3;
    } else if (in(b0, 0xE1, 0xEC) || in(b0, 0xEE, 0xEF)) {
      if (!cont(1) || !cont(2)) return false;
      i += 3;
    } else if (b0 == 0xED) {
      if (!cont(1, 0x80, 0x9F) || !cont(2)) return false;
      i += 3;
    } else if (b0 == 0xF0) {
      if (!cont(1, 0x90, 0xBF) || !cont(2) || !cont(3)) return false;
      i += 4;
    } else if (in(b0, 0xF1, 0xF3)) {
      if (!cont(1) || !cont(2) || !cont(3)) return false;
      i += 4;
    } else if (b0 == 0xF4) {
      if (!cont(1, 0x80, 0x8F) || !cont(2) || !cont(3)) return false;
      i += 4;
    } else {
      return false;
    }
  }
  return true;
}

class GrammarOracle {
 public:
  Verdict check(const std::string& text) const {
    if (!utf8_well_formed(text)) return bad("utf8");
    std::vector<std::string> lines;
    {
      std::string cur;
      bool any = false;
      for (char c : text) {
        any = true;
        if (c == '\n') {
          lines.push_back(cur);
          cur.clear();
        } else {
          cur += c;
        }
      }
      if (!cur.empty()) lines.push_back(cur);
      if (!any) return bad("empty input");
    }
    if (lines.empty() || lines.back() != "# EOF") return bad("last line is not # EOF");
    lines.pop_back();

    State st;
    for (const std::string& line : lines) {
      Verdict v = line_verdict(line, st);
      if (!v.valid) return v;
    }
    return {};
  }

 private:
  struct Fam {
    std::string name;
    bool typed = false, helped = false, united = false;
    std::string type = "unknown";
    bool has_samples = false;
    std::set<std::string> keys;
  };
  struct State {
    std::optional<Fam> cur;
    std::set<std::string> seen;
  };

  static Verdict bad(std::string why) { return {false, std::move(why)}; }

  static bool passthrough_type(const std::string& t) {
    return t == "histogram" || t == "gaugehistogram" || t == "summary" || t == "stateset" ||
           t == "info";
  }

  static Verdict open(State& st, const std::string& name) {
    if (st.seen.count(name)) return bad("family reopened");
    st.seen.insert(name);
    st.cur = Fam{};
    st.cur->name = name;
    return {};
  }

  Verdict line_verdict(const std::string& line, State& st) const {
    static const std::regex type_re(R"(^# TYPE ([a-zA-Z_:][a-zA-Z0-9_:]*) (gauge|counter|unknown|histogram|gaugehistogram|summary|stateset|info)$)");
    static const std::regex help_re(R"(^# HELP ([a-zA-Z_:][a-zA-Z0-9_:]*) [^\n]*$)");
    static const std::regex unit_re(R"(^# UNIT ([a-zA-Z_:][a-zA-Z0-9_:]*) ([a-zA-Z0-9_:]+)$)");
    static const std::regex sample_re(
        R"(^([a-zA-Z_:][a-zA-Z0-9_:]*)(\{([a-zA-Z_][a-zA-Z0-9_]*="(?:[^"\\]|\\[\\"n])*")(,[a-zA-Z_][a-zA-Z0-9_]*="(?:[^"\\]|\\[\\"n])*")*\})? ([+-]?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?)(?: ([0-9]+(?:\.[0-9]+)?))?$)");

    if (line.empty()) return bad("blank line");
    std::smatch m;
    if (line[0] == '#') {
      std::string kind;
      if (std::regex_match(line, m, type_re)) kind = "TYPE";
      else if (std::regex_match(line, m, help_re)) kind = "HELP";
      else if (std::regex_match(line, m, unit_re)) kind = "UNIT";
      else return bad("bad metadata line");
      const std::string name = m[1];
      if (!st.cur || st.cur->name != name) {
        if (Verdict v = open(st, name); !v.valid) return v;
      } else if (st.cur->has_samples) {
        return bad("metadata after samples");
      }
      Fam& f = *st.cur;
      if (kind == "TYPE") {
        if (f.typed) return bad("second TYPE");
        f.typed = true;
        f.type = m[2];
      } else if (kind == "HELP") {
        if (f.helped) return bad("second HELP");
        f.helped = true;
      } else {
        if (f.united) return bad("second UNIT");
        f.united = true;
        const std::string tail = "_" + std::string(m[2]);
        if (name.size() <= tail.size() || name.compare(name.size() - tail.size(), tail.size(), tail) != 0) {
          return bad("unit suffix");
        }
      }
      return {};
    }

    if (!std::regex_match(line, m, sample_re)) return bad("bad sample line");
    const std::string name = m[1];
    std::string suffix;
    static const char* kSuffixes[] = {"_bucket", "_count", "_sum", "_created",
                                      "_total", "_gcount", "_gsum", "_info"};
    bool same = st.cur && st.cur->name == name;
    if (!same && st.cur && passthrough_type(st.cur->type)) {
      for (const char* sfx : kSuffixes) {
        if (name == st.cur->name + sfx) {
          same = true;
          suffix = sfx;
        }
      }
    }
    if (!same) {
      if (Verdict v = open(st, name); !v.valid) return v;
    }
    Fam& f = *st.cur;

    // Labels: re-scan the brace body to collect names and unescaped values.
    std::map<std::string, std::string> labels;
    if (m[2].matched) {
      const std::string body = std::string(m[2]).substr(1, m[2].length() - 2);
      std::size_t i = 0;
      while (i < body.size()) {
        const std::size_t eq = body.find('=', i);
        const std::string lname = body.substr(i, eq - i);
        std::string value;
        std::size_t j = eq + 2;
        while (body[j] != '"') {
          if (body[j] == '\\') {
            ++j;
            value += body[j] == 'n' ? '\n' : body[j];
          } else {
            value += body[j];
          }
          ++j;
        }
        if (!labels.emplace(lname, value).second) return bad("repeated label");
        i = j + 2;  // closing quote and comma
      }
    }

    const std::string vtext = m[5];
    errno = 0;
    const double v = std::strtod(vtext.c_str(), nullptr);
    if (errno == ERANGE) return bad("value range");
    if (!std::isfinite(v)) return bad("value not finite");
    if (f.type == "counter" && v < 0) return bad("negative counter");

    std::string ts_key;
    if (m[6].matched) {
      const std::string ts = m[6];
      const auto dot = ts.find('.');
      const std::string whole = ts.substr(0, dot);
      // int64 max has 19 digits.
      const std::string digits = whole.substr(std::min(whole.find_first_not_of('0'), whole.size()));
      const std::string kMax = "9223372036854775807";
      if (digits.size() > kMax.size() || (digits.size() == kMax.size() && digits > kMax)) {
        return bad("timestamp range");
      }
      if (dot == std::string::npos) {
        ts_key = digits.empty() ? "0" : digits;
      } else {
        // Seconds with a fraction, rounded half to even at the millisecond.
        std::string frac = ts.substr(dot + 1);
        while (frac.size() < 3) frac += '0';
        __int128 ms = 0;
        for (char c : whole) ms = ms * 10 + (c - '0');
        for (int k = 0; k < 3; ++k) ms = ms * 10 + (frac[k] - '0');
        const std::string rem = frac.substr(3);
        if (!rem.empty()) {
          const bool tail = rem.find_first_not_of('0', 1) != std::string::npos;
          if (rem[0] > '5' || (rem[0] == '5' && (tail || ms % 2 != 0))) ++ms;
        }
        if (ms > static_cast<__int128>(INT64_MAX)) return bad("timestamp range");
        ts_key = std::to_string(static_cast<long long>(ms));
      }
    }
    std::string key = suffix + "\x1f";
    for (const auto& [k, val] : labels) key += k + "\x1e" + val + "\x1d";
    key += "\x1f" + ts_key;
    if (!f.keys.insert(key).second) return bad("duplicate sample");
    f.has_samples = true;
    return {};
  }
};

}  // namespace oracle
