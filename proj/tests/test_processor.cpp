#include <gtest/gtest.h>

#include "dcmon/agent.hpp"
#include "dcmon/processor.hpp"
#include "dcmon/sim_network.hpp"
#include "test_util.hpp"

using namespace dcmon;

namespace {

MetricsBatch batch_for(const std::string& node, std::vector<std::pair<std::string, double>> values,
                       Timestamp ts, std::uint64_t seq = 1) {
  MetricsBatch b{.node_id = node, .dc_id = "d", .batch_seq = seq, .segment_seqs = {seq}};
  om::Exposition e;
  for (auto& [fam, v] : values) {
    om::MetricFamily f{.name = fam, .type = om::MetricType::gauge};
    f.samples.push_back(om::Sample{om::LabelSet({{"node", node}}), v, ts, {}});
    e.families.push_back(f);
  }
  b.expositions.emplace_back(Level::machine, e);
  return b;
}

MessageHandler pong_with(const std::string& node, std::function<MetricsBatch()> make) {
  return [node, make](const Envelope& e) -> std::optional<Envelope> {
    if (e.kind != MessageKind::ping) return std::nullopt;
    const MetricsBatch b = make();
    return Envelope{1, MessageKind::pong, node, b.batch_seq, encode_batch(b)};
  };
}

struct AckCounter {
  int acks = 0;
  MessageHandler wrap(MessageHandler inner) {
    return [this, inner](const Envelope& e) -> std::optional<Envelope> {
      if (e.kind == MessageKind::ack) {
        ++acks;
        return std::nullopt;
      }
      return inner(e);
    };
  }
};

}  // namespace

TEST(ProcessorConfig, ParseReplacesDefaultAggregations) {
  const auto c = parse_processor_config(
      "health_period=5s\nping_deadline=1s\naggregation=cpu:avg:30s\naggregation=mem:sum\n");
  EXPECT_EQ(c.health_period, Duration(5000));
  ASSERT_EQ(c.aggregations.size(), 2u);
  EXPECT_EQ(c.aggregations[0], (AggregationSpec{"cpu", AggFunction::avg, Duration(30'000)}));
  EXPECT_EQ(c.aggregations[1].staleness_window, Duration(60'000));
  EXPECT_THROW(parse_processor_config("aggregation=cpu:median\n"), std::invalid_argument);
  EXPECT_EQ(default_aggregations().size(), 4u);
}

TEST(Processor, RegistryAndDcMismatch) {
  SimNetwork net(SimNetConfig{});
  MetricsStore store;
  ControlProcessor p(ProcessorConfig{}, store, net);
  p.register_node("n1", "west");
  p.register_node("n1", "west");
  EXPECT_THROW(p.register_node("n1", "east"), DcMismatch);
  const auto reply = p.handle_envelope(Envelope{1, MessageKind::register_node, "n2", 3, "east"});
  ASSERT_TRUE(reply);
  EXPECT_EQ(reply->payload, "ok");
  EXPECT_EQ(p.dcs(), (std::vector<std::string>{"east", "west"}));
  EXPECT_EQ(p.handle_envelope(Envelope{1, MessageKind::register_node, "n2", 4, "west"})->payload.rfind("error", 0), 0u);
}

TEST(Processor, IngestRejectsForeignOrUntimedSamples) {
  SimNetwork net(SimNetConfig{});
  MetricsStore store;
  ControlProcessor p(ProcessorConfig{}, store, net);
  auto foreign = batch_for("n1", {{"cpu", 1}}, 10);
  foreign.node_id = "n2";
  EXPECT_THROW(p.ingest_batch(foreign), MalformedBatch);
  auto untimed = batch_for("n1", {{"cpu", 1}}, 10);
  untimed.expositions[0].second.families[0].samples[0].timestamp.reset();
  EXPECT_THROW(p.ingest_batch(untimed), MalformedBatch);
  EXPECT_EQ(store.point_count(), 0u);
  EXPECT_EQ(p.ingest_failures(), 2u);
}

TEST(Processor, ScopesFollowLevels) {
  SimNetwork net(SimNetConfig{});
  MetricsStore store;
  ControlProcessor p(ProcessorConfig{}, store, net);
  MetricsBatch b{.node_id = "n1", .dc_id = "d", .batch_seq = 1};
  om::Exposition c, a;
  c.families.push_back(om::MetricFamily{.name = "cm", .type = om::MetricType::gauge});
  c.families[0].samples.push_back(om::Sample{om::LabelSet({{"node", "n1"}, {"container", "c9"}}), 1, 5, {}});
  a.families.push_back(om::MetricFamily{.name = "am", .type = om::MetricType::gauge});
  a.families[0].samples.push_back(om::Sample{om::LabelSet({{"node", "n1"}, {"app", "web"}}), 1, 5, {}});
  b.expositions = {{Level::container, c}, {Level::application, a}};
  p.ingest_batch(b);
  EXPECT_EQ(store.query_range(Scope::container, "c9", 0, 10).sample_count(), 1u);
  EXPECT_EQ(store.query_range(Scope::app, "web", 0, 10).sample_count(), 1u);
}

TEST(Processor, PersistFailureIsAtomicAndSuppressesAck) {
  SimNetwork net(SimNetConfig{});
  MetricsStore store;
  ControlProcessor p(ProcessorConfig{}, store, net);
  AckCounter acks;
  std::uint64_t seq = 0;
  net.attach("n1", acks.wrap(pong_with("n1", [&] {
    ++seq;
    return batch_for("n1", {{"a", 1}, {"b", 2}}, Timestamp(seq) * 10, seq);
  })));
  p.register_node("n1", "d");
  p.inject_persist_failures(1);
  p.health_check_round();
  net.run_until(5'000);
  EXPECT_EQ(store.point_count(), 0u);
  EXPECT_EQ(acks.acks, 0);
  EXPECT_EQ(p.ingest_failures(), 1u);
  p.health_check_round();
  net.run_until(10'000);
  EXPECT_EQ(store.point_count(), 2u);
  EXPECT_EQ(acks.acks, 1);
}

TEST(Processor, DeadAfterMissedPingThenRevivedByPong) {
  SimNetwork net(SimNetConfig{});
  MetricsStore store;
  ProcessorConfig cfg;
  cfg.dead_ping_every = 2;
  ControlProcessor p(cfg, store, net);
  net.attach("n1", pong_with("n1", [] { return MetricsBatch{.node_id = "n1", .dc_id = "d"}; }));
  p.register_node("n1", "d");
  net.set_down("n1", true);
  std::vector<RoundReport> reports;
  p.health_check_round([&](const RoundReport& r) { reports.push_back(r); });
  net.run_until(10'000);
  ASSERT_EQ(reports.size(), 1u);
  EXPECT_EQ(reports[0].newly_dead, std::vector<std::string>{"n1"});
  EXPECT_EQ(p.node("n1")->state, NodeState::dead);
  net.set_down("n1", false);
  p.health_check_round([&](const RoundReport& r) { reports.push_back(r); });  // round 2: dead pinged
  net.run_until(20'000);
  EXPECT_EQ(reports[1].pinged, 1u);
  EXPECT_EQ(p.node("n1")->state, NodeState::alive);
  p.health_check_round([&](const RoundReport& r) { reports.push_back(r); });
  net.run_until(30'000);
  EXPECT_EQ(reports[2].replied, 1u);
}

TEST(Processor, DeadNodesSkippedBetweenProbeRounds) {
  SimNetwork net(SimNetConfig{});
  MetricsStore store;
  ControlProcessor p(ProcessorConfig{}, store, net);  // dead pinged every 5th round
  p.register_node("ghost", "d");
  std::vector<std::size_t> pinged;
  for (int r = 0; r < 6; ++r) {
    p.health_check_round([&](const RoundReport& rep) { pinged.push_back(rep.pinged); });
    net.run_until((r + 1) * 10'000);
  }
  EXPECT_EQ(pinged, (std::vector<std::size_t>{1, 0, 0, 0, 1, 0}));
}

TEST(Processor, AggregateSumAvgAndStaleness) {
  SimNetwork net(SimNetConfig{});
  MetricsStore store;
  ControlProcessor p(ProcessorConfig{}, store, net);
  p.register_node("n1", "d");
  p.register_node("n2", "d");
  p.register_node("x", "other");
  p.ingest_batch(batch_for("n1", {{"mem", 10}, {"cpu", 0.2}}, 1000));
  p.ingest_batch(batch_for("n2", {{"mem", 30}, {"cpu", 0.6}}, 50'000));
  p.ingest_batch(batch_for("x", {{"mem", 1000}}, 50'000));
  std::vector<std::string> topics;
  net.subscribe(TopicFilter::parse("metrics.dc.*"), [&](const Topic& t, const std::string&) { topics.push_back(t.str()); });
  const std::vector<AggregationSpec> specs{{"mem", AggFunction::sum, Duration(60'000)},
                                           {"cpu", AggFunction::avg, Duration(10'000)},
                                           {"absent", AggFunction::sum, Duration(60'000)}};
  const auto e = p.aggregate_dc("d", specs, 55'000);
  ASSERT_EQ(e.families.size(), 2u);
  EXPECT_EQ(e.families[0].name, "cpu");
  EXPECT_DOUBLE_EQ(e.families[0].samples[0].value, 0.6);  // n1's point is stale
  EXPECT_DOUBLE_EQ(e.families[1].samples[0].value, 40.0);
  EXPECT_EQ(*e.families[1].samples[0].labels.find("dc"), "d");
  EXPECT_EQ(store.query_range(Scope::dc, "d", 55'000, 55'001).sample_count(), 2u);
  net.run_until(60'000);
  EXPECT_EQ(topics, std::vector<std::string>{"metrics.dc.d"});
}

TEST(Processor, PongsIngestAndPublishNodeTopic) {
  testutil::TempDir dir;
  SimNetwork net(SimNetConfig{});
  MetricsStore store;
  ControlProcessor p(ProcessorConfig{}, store, net);
  CollectorEndpoint machine(Level::machine, "n1/machine",
                            {GeneratorSpec{.family = "machine_memory_total_bytes", .pattern = pattern::Constant{4}}});
  InProcessScraper scraper;
  scraper.attach("n1/machine", &machine);
  AgentConfig ac{.node_id = "n1", .dc_id = "d", .delivery_mode = DeliveryMode::acknowledged,
                 .buffer_dir = dir / "buf", .buffer_fsync = false};
  NodeAgent agent(ac, scraper, "n1/machine");
  net.attach("n1", [&](const Envelope& e) { return agent.handle_envelope(e, net.now()); });
  p.register_node("n1", "d");
  int published = 0;
  net.subscribe(TopicFilter::parse("metrics.nodes.n1"), [&](const Topic&, const std::string& body) {
    ++published;
    EXPECT_NE(body.find("machine_memory_total_bytes"), std::string::npos);
  });
  machine.generate_tick(500);
  agent.poll_cycle(500);
  p.health_check_round();
  net.run_until(5'000);
  EXPECT_EQ(published, 1);
  EXPECT_TRUE(agent.buffered().empty());  // acked
  EXPECT_EQ(store.query_range(Scope::node, "n1", 0, 1000).find("machine_memory_total_bytes")->samples.size(), 1u);
  const auto self = p.self_metrics(6'000);
  EXPECT_NE(self.find(ControlProcessor::kIngestFailures), nullptr);
}
