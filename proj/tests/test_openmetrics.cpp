#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "dcmon/openmetrics.hpp"
#include "oracles/om_grammar.hpp"
#include "oracles/random_exposition.hpp"

using namespace dcmon;
using namespace dcmon::om;

namespace {

Exposition parse(std::string_view s) { return parse_exposition(s); }

}  // namespace

TEST(Codec, ParsesTypedFamilyWithLabelsAndTimestamp) {
  const auto e = parse(
      "# TYPE node_cpu_seconds counter\n"
      "# HELP node_cpu_seconds CPU time, in seconds\n"
      "node_cpu_seconds{cpu=\"0\",mode=\"idle\"} 12.5 1700000000000\n"
      "# EOF\n");
  ASSERT_EQ(e.families.size(), 1u);
  const auto& f = e.families[0];
  EXPECT_EQ(f.name, "node_cpu_seconds");
  EXPECT_EQ(f.type, MetricType::counter);
  EXPECT_EQ(f.help, "CPU time, in seconds");
  ASSERT_EQ(f.samples.size(), 1u);
  EXPECT_EQ(*f.samples[0].labels.find("mode"), "idle");
  EXPECT_DOUBLE_EQ(f.samples[0].value, 12.5);
  EXPECT_EQ(f.samples[0].timestamp, 1700000000000);
}

TEST(Codec, LabelOrderIsCanonical) {
  const auto a = parse("m{b=\"2\",a=\"1\"} 1\n# EOF\n");
  const auto b = parse("m{a=\"1\",b=\"2\"} 1\n# EOF\n");
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.families[0].samples[0].labels.to_string(), "{a=\"1\",b=\"2\"}");
}

TEST(Codec, EscapesRoundTrip) {
  Exposition e;
  MetricFamily f{.name = "m", .type = MetricType::gauge};
  f.samples.push_back(Sample{LabelSet({{"path", "a\\b\"c\nd"}}), 1.0, 5, {}});
  e.families.push_back(f);
  const std::string text = serialize_exposition(e);
  EXPECT_NE(text.find(R"(path="a\\b\"c\nd")"), std::string::npos);
  EXPECT_EQ(parse(text), e);
}

TEST(Codec, DecimalTimestampIsSecondsRoundedHalfEven) {
  EXPECT_EQ(parse("m 1 1.0005\n# EOF\n").families[0].samples[0].timestamp, 1000);
  EXPECT_EQ(parse("m 1 1.0015\n# EOF\n").families[0].samples[0].timestamp, 1002);
  EXPECT_EQ(parse("m 1 1.00150001\n# EOF\n").families[0].samples[0].timestamp, 1002);
  EXPECT_EQ(parse("m 1 2.5\n# EOF\n").families[0].samples[0].timestamp, 2500);
}

TEST(Codec, DefaultTimestampAppliesToUntimedSamplesOnly) {
  const auto e = parse_exposition("a 1\nb 2 7\n# EOF\n", 99);
  EXPECT_EQ(e.families[0].samples[0].timestamp, 99);
  EXPECT_EQ(e.families[1].samples[0].timestamp, 7);
}

TEST(Codec, PassthroughFamilySuffixes) {
  const auto e = parse(
      "# TYPE rpc histogram\n"
      "rpc_bucket{le=\"1\"} 3\n"
      "rpc_count 3\n"
      "rpc_sum 1.5\n"
      "# EOF\n");
  ASSERT_EQ(e.families.size(), 1u);
  EXPECT_EQ(e.families[0].type, MetricType::unknown);
  EXPECT_EQ(e.families[0].passthrough_type, "histogram");
  EXPECT_EQ(e.families[0].samples[1].suffix, "_count");
  EXPECT_EQ(parse(serialize_exposition(e)), e);
}

TEST(Codec, UnitMustSuffixTheName) {
  EXPECT_NO_THROW(parse("# UNIT disk_bytes bytes\n# EOF\n"));
  EXPECT_THROW(parse("# UNIT disk bytes\n# EOF\n"), SemanticError);
}

TEST(Codec, Rejections) {
  const char* bad[] = {
      "",
      "m 1\n",
      "m 1\n# EOF\nm 2\n",
      "m 1\n\n# EOF\n",
      "m{} 1\n# EOF\n",
      "m{a=\"1\",a=\"2\"} 1\n# EOF\n",
      "m{a=\"\\t\"} 1\n# EOF\n",
      "m NaN\n# EOF\n",
      "m +Inf\n# EOF\n",
      "m 1e999\n# EOF\n",
      "m  1\n# EOF\n",
      "m 1 -5\n# EOF\n",
      "m 1 99999999999999999999\n# EOF\n",
      "m 1 9223372036854775.999\n# EOF\n",
      "# TYPE m counter\nm -1\n# EOF\n",
      "# TYPE m gauge\nm 1\n# HELP m late\n# EOF\n",
      "# TYPE m gauge\n# TYPE m gauge\n# EOF\n",
      "m 1\nn 1\nm 2\n# EOF\n",
      "m 1 5\nm 2 5\n# EOF\n",
      "# TYPE m gauge\nm_count 1\nm 1\n# EOF\n",
      "# TYPE m histogram_x\n# EOF\n",
      "# comment\n# EOF\n",
      "m{a=\"\xff\"} 1\n# EOF\n",
      "m 0x10\n# EOF\n",
  };
  for (const char* text : bad) {
    EXPECT_THROW(parse(text), OpenMetricsError) << "accepted: " << text;
  }
}

TEST(Codec, SyntaxErrorReportsPosition) {
  try {
    parse("a 1\nb{x=1} 2\n# EOF\n");
    FAIL();
  } catch (const SyntaxError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_GT(e.column(), 1u);
  }
}

TEST(Codec, FormatValueIsShortestExact) {
  for (double v : {0.1, 1.0 / 3.0, 1e300, -2.5e-200, 16e9, 0.0}) {
    const std::string s = format_value(v);
    EXPECT_EQ(std::strtod(s.c_str(), nullptr), v) << s;
  }
  EXPECT_EQ(format_value(8.0), "8");
}

TEST(Codec, SerializerRejectsBrokenInvariants) {
  Exposition e;
  e.families.push_back(MetricFamily{.name = "c", .type = MetricType::counter});
  e.families[0].samples.push_back(Sample{{}, -1.0, {}, {}});
  EXPECT_THROW(serialize_exposition(e), InvariantViolation);
  e.families[0].samples[0].value = std::numeric_limits<double>::quiet_NaN();
  e.families[0].type = MetricType::gauge;
  EXPECT_THROW(serialize_exposition(e), InvariantViolation);
  e.families[0].samples[0].value = 1;
  e.families.push_back(e.families[0]);
  EXPECT_THROW(serialize_exposition(e), InvariantViolation);
}

TEST(Codec, MergeKeepsFirstOccurrenceOrderAndDetectsConflicts) {
  const auto a = parse("# TYPE x gauge\nx{n=\"1\"} 1 1\n# TYPE y gauge\ny 1 1\n# EOF\n");
  const auto b = parse("# TYPE x gauge\nx{n=\"2\"} 1 1\n# EOF\n");
  const std::vector<Exposition> parts{a, b};
  const auto m = merge_expositions(parts);
  ASSERT_EQ(m.families.size(), 2u);
  EXPECT_EQ(m.families[0].samples.size(), 2u);
  const auto c = parse("# TYPE x counter\nx 1 1\n# EOF\n");
  const std::vector<Exposition> clash{a, c};
  EXPECT_THROW(merge_expositions(clash), MergeConflict);
  const std::vector<Exposition> dup{a, a};
  EXPECT_THROW(merge_expositions(dup), DuplicateSample);
}

// Property: random valid expositions survive parse(serialize(e)) == e, and
// the independent grammar accepts every serialized form.
TEST(CodecProperty, RandomRoundTrip) {
  oracle::ExpositionGenerator gen(42);
  oracle::GrammarOracle grammar;
  for (int i = 0; i < 300; ++i) {
    const Exposition e = gen.next();
    const std::string text = serialize_exposition(e);
    ASSERT_TRUE(grammar.check(text).valid) << grammar.check(text).why << "\n" << text;
    ASSERT_EQ(parse(text), e) << text;
  }
}

// Property: parser and grammar oracle agree on single-byte mutants.
TEST(CodecProperty, MutantsAgreeWithGrammar) {
  oracle::ExpositionGenerator gen(7);
  oracle::GrammarOracle grammar;
  std::mt19937_64 rng(8);
  int checked = 0;
  while (checked < 400) {
    const std::string text = serialize_exposition(gen.next());
    const std::string m = oracle::mutate_one_byte(text, rng);
    const bool expect_ok = grammar.check(m).valid;
    bool ok = true;
    try {
      parse(m);
    } catch (const OpenMetricsError&) {
      ok = false;
    }
    ASSERT_EQ(ok, expect_ok) << grammar.check(m).why << "\n---\n" << m;
    ++checked;
  }
}

TEST(GrammarOracle, Utf8Table) {
  EXPECT_TRUE(oracle::utf8_well_formed("plain é € 🙂"));
  EXPECT_FALSE(oracle::utf8_well_formed("\xc0\xaf"));          // overlong
  EXPECT_FALSE(oracle::utf8_well_formed("\xed\xa0\x80"));      // surrogate
  EXPECT_FALSE(oracle::utf8_well_formed("\xf4\x90\x80\x80"));  // > U+10FFFF
  EXPECT_FALSE(oracle::utf8_well_formed("\xe2\x82"));          // truncated
}
