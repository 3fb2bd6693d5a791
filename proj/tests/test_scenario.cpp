#include <gtest/gtest.h>

#include <algorithm>

#include "dcmon/scenario.hpp"

using namespace dcmon;

namespace {

const char* kSmall = R"(
name: small
seed: 4
duration: 120s
agent:
  delivery_mode: acknowledged
dcs:
  - id: a
    node_count: 2
  - id: b
    nodes:
      - id: solo
        machine:
          - {family: temp, pattern: sine, mean: 40, amplitude: 5, period_s: 60}
        apps:
          - id: api
            generators:
              - {family: api_calls_total, type: counter, pattern: counter_rate, rate_per_s: 3}
expect:
  lost: 0
  stored_equals_generated: true
  no_duplicates: true
)";

bool has_problem(const InvalidScenario& e, const std::string& needle) {
  return std::any_of(e.problems().begin(), e.problems().end(),
                     [&](const std::string& p) { return p.find(needle) != std::string::npos; });
}

}  // namespace

TEST(Scenario, ParsesNodesAndDefaults) {
  const auto s = parse_scenario(kSmall);
  EXPECT_EQ(s.name, "small");
  EXPECT_EQ(s.duration, Duration(120'000));
  ASSERT_EQ(s.dcs.size(), 2u);
  EXPECT_EQ(s.dcs[0].nodes.size(), 2u);
  EXPECT_EQ(s.dcs[0].nodes[0].node_id, "a-n1");
  EXPECT_EQ(s.dcs[0].nodes[0].machine.size(), 5u);  // default generators
  EXPECT_EQ(s.dcs[1].nodes[0].agent.delivery_mode, DeliveryMode::acknowledged);
  EXPECT_EQ(s.dcs[1].nodes[0].apps[0].app_id, "api");
  EXPECT_TRUE(validate_scenario(s).empty());
}

TEST(Scenario, CollectsEveryProblem) {
  try {
    parse_scenario(R"(
seed: 1
duration: forever
bogus: 1
dcs:
  - id: a
    node_count: 1
faults:
  - kind: meteor
)");
    FAIL();
  } catch (const InvalidScenario& e) {
    EXPECT_GE(e.problems().size(), 3u);
    EXPECT_TRUE(has_problem(e, "bogus"));
    EXPECT_TRUE(has_problem(e, "duration"));
    EXPECT_TRUE(has_problem(e, "meteor"));
  }
  EXPECT_THROW(parse_scenario("dcs: [\n"), InvalidScenario);
}

TEST(Scenario, SemanticValidation) {
  auto s = parse_scenario(kSmall);
  s.faults.push_back(fault::NodeCrash{"nobody", 10'000});
  s.dcs[0].nodes[1].node_id = "bad.id";
  const auto problems = validate_scenario(s);
  EXPECT_GE(problems.size(), 2u);
}

TEST(Scenario, RunConservesAndIsDeterministic) {
  const auto s = parse_scenario(kSmall);
  const auto r1 = run_scenario(s);
  const auto r2 = run_scenario(s);
  EXPECT_TRUE(r1.all_passed()) << render_report_text(r1);
  EXPECT_GT(r1.generated(), 0u);
  EXPECT_EQ(r1.generated(), r1.stored());
  EXPECT_EQ(r1.event_log_digest, r2.event_log_digest);
  EXPECT_EQ(r1, r2);
  EXPECT_GT(r1.stored_by_scope.at("app"), 0u);
  std::string text = kSmall;
  text.replace(text.find("seed: 4"), 7, "seed: 5");
  EXPECT_NE(run_scenario(parse_scenario(text)).event_log_digest, r1.event_log_digest);
}

TEST(Scenario, FailedExpectationIsReported) {
  auto s = parse_scenario(kSmall);
  s.expect.min_aggregates = 1'000'000;
  const auto r = run_scenario(s);
  EXPECT_FALSE(r.all_passed());
  const auto it = std::find_if(r.assertions.begin(), r.assertions.end(),
                               [](const AssertionResult& a) { return a.name == "min_aggregates"; });
  ASSERT_NE(it, r.assertions.end());
  EXPECT_FALSE(it->passed);
}

TEST(Report, CsvRoundTrip) {
  const auto r = run_scenario(parse_scenario(kSmall));
  const std::string csv = render_report_csv(r);
  EXPECT_EQ(csv.rfind("kind,id,metric,value\n", 0), 0u);
  EXPECT_EQ(parse_report_csv(csv), r);
}

TEST(Report, EmptyReportIsHeaderOnly) {
  const RunReport empty;
  EXPECT_EQ(render_report_csv(empty), "kind,id,metric,value\n");
  EXPECT_EQ(parse_report_csv("kind,id,metric,value\n"), empty);
  EXPECT_THROW(parse_report_csv("a,b\n"), std::invalid_argument);
}

TEST(Report, CsvQuotesAwkwardFields) {
  RunReport r;
  r.assertions.push_back({"x", false, "has, comma and \"quotes\"\nand a newline"});
  EXPECT_EQ(parse_report_csv(render_report_csv(r)), r);
}

TEST(Report, TextEndsWithAssertionLines) {
  const auto r = run_scenario(parse_scenario(kSmall));
  const std::string text = render_report_text(r);
  EXPECT_NE(text.find("PASS conservation"), std::string::npos);
}
