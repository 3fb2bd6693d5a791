#include <gtest/gtest.h>

#include "dcmon/agent.hpp"
#include "test_util.hpp"

using namespace dcmon;

namespace {

struct Rig {
  testutil::TempDir dir;
  CollectorEndpoint machine{Level::machine, "n1/machine",
                            {GeneratorSpec{.family = "cpu_cores", .pattern = pattern::Constant{8}},
                             GeneratorSpec{.family = "mem", .pattern = pattern::RandomWalk{5, 1, 0, 10}, .seed = 9}}};
  CollectorEndpoint container{Level::container, "n1/container",
                              {GeneratorSpec{.family = "ctr_mem", .pattern = pattern::Constant{1}}}};
  CollectorEndpoint app{Level::application, "n1/app/web",
                        {GeneratorSpec{.family = "reqs_total", .type = om::MetricType::counter,
                                       .pattern = pattern::CounterRate{5}}}};
  InProcessScraper scraper;

  Rig() {
    scraper.attach(machine.address(), &machine);
    scraper.attach(container.address(), &container);
    scraper.attach(app.address(), &app);
  }

  AgentConfig config(DeliveryMode mode) const {
    AgentConfig c;
    c.node_id = "n1";
    c.dc_id = "dc1";
    c.delivery_mode = mode;
    c.buffer_dir = dir.path() / "buf";
    c.buffer_fsync = false;
    return c;
  }

  void tick(Timestamp t) {
    machine.generate_tick(t);
    container.generate_tick(t);
    app.generate_tick(t);
  }
};

std::size_t data_samples(const MetricsBatch& b) {
  std::size_t n = 0;
  for (const auto& [level, e] : b.expositions) {
    for (const auto& f : e.families) {
      if (f.name.rfind("agent_", 0) != 0) n += f.samples.size();
    }
  }
  return n;
}

}  // namespace

TEST(AgentConfig, ParseAndFormatRoundTrip) {
  const auto c = parse_agent_config(
      "# comment\n"
      "node_id = n7\n"
      "dc_id=west\n"
      "poll_period=15s\n"
      "delivery_mode=acknowledged\n"
      "ack_timeout=2500ms\n"
      "buffer_dir=/tmp/x\n");
  EXPECT_EQ(c.node_id, "n7");
  EXPECT_EQ(c.poll_period, Duration(15'000));
  EXPECT_EQ(c.delivery_mode, DeliveryMode::acknowledged);
  EXPECT_EQ(c.ack_timeout, Duration(2500));
  const auto again = parse_agent_config(format_agent_config(c));
  EXPECT_EQ(again.node_id, c.node_id);
  EXPECT_EQ(again.ack_timeout, c.ack_timeout);
  EXPECT_THROW(parse_agent_config("node_id\n"), std::invalid_argument);
  EXPECT_THROW(parse_duration("10 parsecs"), std::invalid_argument);
  EXPECT_EQ(parse_duration("2m"), Duration(120'000));
  EXPECT_EQ(parse_duration("1h"), Duration(3'600'000));
}

TEST(Agent, InjectsLabelsPerLevel) {
  Rig r;
  NodeAgent a(r.config(DeliveryMode::lossy), r.scraper, "n1/machine",
              TargetEntry{"n1-c0", Level::container, "n1/container", std::nullopt});
  a.register_app_target("web", "n1/app/web");
  r.tick(1000);
  a.poll_cycle(1000);
  const auto batch = a.drain_for_pong(1500);
  ASSERT_EQ(batch.expositions.size(), 3u);
  for (const auto& [level, e] : batch.expositions) {
    for (const auto& f : e.families) {
      for (const auto& s : f.samples) {
        EXPECT_EQ(*s.labels.find("node"), "n1");
        if (level == Level::container) EXPECT_EQ(*s.labels.find("container"), "n1-c0");
        if (level == Level::application) EXPECT_EQ(*s.labels.find("app"), "web");
      }
    }
  }
}

TEST(Agent, LossyDeletesOnDrain) {
  Rig r;
  NodeAgent a(r.config(DeliveryMode::lossy), r.scraper, "n1/machine");
  r.tick(1000);
  a.poll_cycle(1000);
  EXPECT_EQ(a.buffered().size(), 1u);
  const auto b = a.drain_for_pong(2000);
  EXPECT_EQ(data_samples(b), 2u);
  EXPECT_TRUE(a.buffered().empty());
  EXPECT_EQ(data_samples(a.drain_for_pong(3000)), 0u);
  EXPECT_TRUE(a.drain_for_pong(3000).segment_seqs.empty());
}

TEST(Agent, AcknowledgedResendsUntilAcked) {
  Rig r;
  NodeAgent a(r.config(DeliveryMode::acknowledged), r.scraper, "n1/machine");
  r.tick(1000);
  a.poll_cycle(1000);
  const auto first = a.drain_for_pong(2000);
  EXPECT_EQ(first.segment_seqs.size(), 1u);
  // In flight, timeout not expired: nothing to resend.
  EXPECT_TRUE(a.drain_for_pong(3000).segment_seqs.empty());
  const auto again = a.drain_for_pong(7000);
  EXPECT_EQ(again.segment_seqs, first.segment_seqs);
  // A stale ack for the first batch does not release the resent copy's batch.
  a.handle_ack(first.batch_seq);
  a.handle_ack(again.batch_seq);
  EXPECT_TRUE(a.buffered().empty());
  a.handle_ack(12345);  // unknown: ignored
}

TEST(Agent, AckEnvelopeReleasesSegments) {
  Rig r;
  NodeAgent a(r.config(DeliveryMode::acknowledged), r.scraper, "n1/machine");
  r.tick(1000);
  a.poll_cycle(1000);
  const auto pong = a.handle_envelope(Envelope{1, MessageKind::ping, "processor", 1, ""}, 2000);
  ASSERT_TRUE(pong);
  EXPECT_EQ(pong->kind, MessageKind::pong);
  const auto batch = decode_batch(pong->payload);
  EXPECT_EQ(pong->seq, batch.batch_seq);
  a.handle_envelope(Envelope{1, MessageKind::ack, "processor", 0, std::to_string(batch.batch_seq)}, 2100);
  EXPECT_TRUE(a.buffered().empty());
}

TEST(Agent, BufferSurvivesRestart) {
  Rig r;
  std::uint64_t last_seq = 0;
  {
    NodeAgent a(r.config(DeliveryMode::acknowledged), r.scraper, "n1/machine");
    r.tick(1000);
    a.poll_cycle(1000);
    a.drain_for_pong(1500);  // in flight, never acked
    r.tick(2000);
    a.poll_cycle(2000);
    last_seq = a.last_batch_seq();
  }
  NodeAgent b(r.config(DeliveryMode::acknowledged), r.scraper, "n1/machine");
  EXPECT_EQ(b.buffered().size(), 2u);
  const auto batch = b.drain_for_pong(2500);
  EXPECT_GT(batch.batch_seq, last_seq);
  EXPECT_EQ(data_samples(batch), 4u);
}

TEST(Agent, ScrapeFailuresAreCounted) {
  Rig r;
  NodeAgent a(r.config(DeliveryMode::lossy), r.scraper, "n1/machine");
  r.scraper.set_reachable("n1/machine", false);
  a.poll_cycle(1000);
  EXPECT_EQ(a.scrape_failures(), 1u);
  r.scraper.set_reachable("n1/machine", true);
  r.tick(2000);
  a.poll_cycle(2000);
  const auto b = a.drain_for_pong(2500);
  const auto* f = b.expositions.at(0).second.find(NodeAgent::kScrapeFailures);
  ASSERT_NE(f, nullptr);
  EXPECT_EQ(f->samples.at(0).value, 1.0);
}

TEST(Agent, BufferCapEvictsOldestSegments) {
  Rig r;
  auto cfg = r.config(DeliveryMode::acknowledged);
  cfg.buffer_cap_bytes = 400;
  NodeAgent a(cfg, r.scraper, "n1/machine");
  for (int i = 1; i <= 10; ++i) {
    r.tick(i * 1000);
    a.poll_cycle(i * 1000);
  }
  EXPECT_GT(a.dropped_segments(), 0u);
  EXPECT_LE(a.buffered_bytes(), 400u);
  const auto segs = a.buffered();
  ASSERT_FALSE(segs.empty());
  EXPECT_EQ(segs.back().seq, 10u);
}

TEST(Agent, AppTargetLifecycle) {
  Rig r;
  NodeAgent a(r.config(DeliveryMode::lossy), r.scraper, "n1/machine");
  const auto reply = a.handle_envelope(
      Envelope{1, MessageKind::app_target_add, "processor", 4, "web\nn1/app/web"}, 0);
  ASSERT_TRUE(reply);
  const std::string id = reply->payload;
  EXPECT_EQ(a.targets().size(), 2u);
  EXPECT_THROW(a.register_app_target("web2", "n1/app/web"), DuplicateTarget);
  EXPECT_THROW(a.deregister_app_target(a.targets()[0].target_id), NotRemovable);
  a.deregister_app_target(id);
  EXPECT_THROW(a.deregister_app_target(id), UnknownTarget);
  EXPECT_EQ(a.handle_envelope(Envelope{1, MessageKind::app_target_add, "p", 5, "noline"}, 0)->payload.rfind("error", 0), 0u);
}

TEST(Agent, ReductionAppliesBeforeBuffering) {
  Rig r;
  auto cfg = r.config(DeliveryMode::lossy);
  cfg.reduction.dedup_enabled = true;
  NodeAgent a(cfg, r.scraper, "n1/machine");
  for (int i = 1; i <= 5; ++i) {
    r.tick(i * 1000);
    a.poll_cycle(i * 1000);
  }
  // cpu_cores is constant: 4 repeats dropped.
  EXPECT_GE(a.reduction_dropped(), 4u);
}

TEST(Batch, EncodeDecodeRoundTrip) {
  MetricsBatch b{.node_id = "n", .dc_id = "d", .batch_seq = 9, .segment_seqs = {3, 4}};
  om::Exposition e;
  e.families.push_back(om::MetricFamily{.name = "x", .type = om::MetricType::gauge});
  e.families[0].samples.push_back(om::Sample{om::LabelSet({{"node", "n"}}), 2.5, 10, {}});
  b.expositions.emplace_back(Level::container, e);
  EXPECT_EQ(decode_batch(encode_batch(b)), b);
  EXPECT_EQ(b.sample_count(), 1u);
  EXPECT_THROW(decode_batch("{"), std::exception);
}
