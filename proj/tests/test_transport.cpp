#include <gtest/gtest.h>

#include <chrono>
#include <condition_variable>
#include <future>

#include "dcmon/sim_network.hpp"
#include "dcmon/socket_transport.hpp"
#include "dcmon/topic.hpp"
#include "oracles/model.hpp"

using namespace dcmon;

namespace {

MessageHandler echo(const std::string& name) {
  return [name](const Envelope& e) -> std::optional<Envelope> {
    return Envelope{Envelope::kVersion, MessageKind::pong, name, e.seq, "re:" + e.payload};
  };
}

}  // namespace

TEST(Envelope, JsonAndFrameRoundTrip) {
  Envelope e{1, MessageKind::app_target_add, "processor", 77, std::string("bin\0ary\n\xff", 10)};
  EXPECT_EQ(decode_envelope_json(encode_envelope_json(e)), e);
  EXPECT_EQ(decode_frame(encode_frame(e)), e);
  const std::string frame = encode_frame(e);
  EXPECT_THROW(decode_frame(frame.substr(0, frame.size() - 1)), WireError);
  EXPECT_THROW(decode_envelope_json("{\"version\":1}"), WireError);
  EXPECT_THROW(decode_envelope_json(R"({"version":1,"kind":"shout","sender":"x","seq":1,"payload":""})"),
               WireError);
}

TEST(Envelope, PublishPayload) {
  const auto [t, body] = decode_publish_payload(encode_publish_payload(Topic::dc("west"), "a\nb"));
  EXPECT_EQ(t, Topic::dc("west"));
  EXPECT_EQ(body, "a\nb");
}

TEST(Topic, ParseAndReject) {
  EXPECT_EQ(Topic::parse("metrics.nodes.n1").id, "n1");
  for (const char* bad : {"metrics.nodes", "metrics.nodes.a.b", "metrics.pods.x", "metrics.dc.*",
                          "stats.dc.x", "metrics.dc."}) {
    EXPECT_THROW(Topic::parse(bad), BadTopic) << bad;
  }
  EXPECT_EQ(TopicFilter::parse("metrics.*.*").str(), "metrics.*.*");
  for (const char* bad : {"metrics.**.x", "metrics.nodes.a*", "metrics.*", "metrics.x.*", "m.*.*"}) {
    EXPECT_THROW(TopicFilter::parse(bad), BadFilter) << bad;
  }
}

TEST(Topic, MatchAgainstDenotedSet) {
  const std::vector<std::string> kinds{"nodes", "dc"};
  const std::vector<std::string> ids{"a", "b"};
  for (const std::string k : {"nodes", "dc", "*"}) {
    for (const std::string i : {"a", "b", "*"}) {
      const auto f = TopicFilter::parse("metrics." + k + "." + i);
      const auto set = oracle::denoted(k, i, kinds, ids);
      for (const auto& kk : kinds) {
        for (const auto& ii : ids) {
          EXPECT_EQ(topic_match(f, Topic{kk, ii}), set.count({kk, ii}) == 1);
        }
      }
    }
  }
}

TEST(SimNetwork, RequestReplyAndTimeout) {
  SimNetwork net(SimNetConfig{.seed = 1, .latency_min = Duration(5), .latency_max = Duration(5)});
  net.attach("b", echo("b"));
  std::optional<RequestResult> got;
  net.request("b", Envelope{1, MessageKind::ping, "a", 3, "hi"}, Duration(100),
              [&](RequestResult r) { got = std::move(r); });
  net.run_until(1000);
  ASSERT_TRUE(got);
  EXPECT_EQ(std::get<Envelope>(*got).payload, "re:hi");

  net.set_down("b", true);
  got.reset();
  net.request("b", Envelope{1, MessageKind::ping, "a", 4, ""}, Duration(100),
              [&](RequestResult r) { got = std::move(r); });
  net.run_until(1050);
  EXPECT_FALSE(got);
  net.run_until(1100);
  ASSERT_TRUE(got);
  EXPECT_EQ(std::get<TransportError>(*got), TransportError::timeout);

  got.reset();
  net.request("nobody", Envelope{}, Duration(100), [&](RequestResult r) { got = std::move(r); });
  net.run_until(1100);
  EXPECT_EQ(std::get<TransportError>(*got), TransportError::unknown_peer);
}

TEST(SimNetwork, LateReplyIsReportedNotDelivered) {
  SimNetwork net(SimNetConfig{.seed = 1, .latency_min = Duration(50), .latency_max = Duration(50)});
  net.attach("b", echo("b"));
  std::vector<std::string> reasons;
  net.set_drop_observer([&](auto&, auto&, auto&, std::string_view why) { reasons.emplace_back(why); });
  int calls = 0;
  net.request("b", Envelope{1, MessageKind::ping, "a", 1, ""}, Duration(60),
              [&](RequestResult r) {
                ++calls;
                EXPECT_TRUE(std::holds_alternative<TransportError>(r));
              });
  net.run_until(500);
  EXPECT_EQ(calls, 1);
  EXPECT_EQ(reasons, std::vector<std::string>{"late"});
}

TEST(SimNetwork, PartitionDropsBothDirections) {
  SimNetwork net(SimNetConfig{});
  net.attach("b", echo("b"));
  net.add_partition(Partition{{"a"}, {"b"}, 0, 100});
  int timeouts = 0;
  net.request("b", Envelope{1, MessageKind::ping, "a", 1, ""}, Duration(50),
              [&](RequestResult r) { timeouts += std::holds_alternative<TransportError>(r); });
  net.run_until(60);
  EXPECT_EQ(timeouts, 1);
  net.run_until(200);
  net.request("b", Envelope{1, MessageKind::ping, "a", 2, ""}, Duration(50),
              [&](RequestResult r) { timeouts += std::holds_alternative<TransportError>(r); });
  net.run_until(300);
  EXPECT_EQ(timeouts, 1);
}

TEST(SimNetwork, EventsFireInTimeThenScheduleOrder) {
  SimNetwork net(SimNetConfig{});
  std::string order;
  net.schedule(10, "x", [&] { order += "b"; });
  net.schedule(5, "y", [&] { order += "a"; });
  net.schedule(10, "z", [&] { order += "c"; });
  net.run_until(10);
  EXPECT_EQ(order, "abc");
  EXPECT_EQ(net.now(), 10);
}

TEST(SimNetwork, SameSeedSameDigest) {
  auto run = [](std::uint64_t seed) {
    SimNetwork net(SimNetConfig{.seed = seed, .drop_prob = 0.3});
    net.attach("b", echo("b"));
    for (int i = 0; i < 50; ++i) {
      net.request("b", Envelope{1, MessageKind::ping, "a", std::uint64_t(i), ""}, Duration(20), [](auto) {});
    }
    net.run_until(10'000);
    return net.event_log_digest();
  };
  EXPECT_EQ(run(3), run(3));
  EXPECT_NE(run(3), run(4));
}

TEST(SimNetwork, PubSubWildcards) {
  SimNetwork net(SimNetConfig{});
  std::vector<std::string> got;
  const auto id = net.subscribe(TopicFilter::parse("metrics.dc.*"),
                                [&](const Topic& t, const std::string& p) { got.push_back(t.str() + "=" + p); });
  net.publish(Topic::dc("w"), "1");
  net.publish(Topic::nodes("n"), "2");
  net.run_until(100);
  EXPECT_EQ(got, std::vector<std::string>{"metrics.dc.w=1"});
  net.unsubscribe(id);
  net.publish(Topic::dc("w"), "3");
  net.run_until(200);
  EXPECT_EQ(got.size(), 1u);
}

TEST(SocketTransport, RequestReplyOverLoopback) {
  SocketTransport server(SocketTransportConfig{.listen_port = 0});
  server.attach("node", echo("node"));
  SocketTransport client(SocketTransportConfig{.listen_port = -1});
  client.add_peer("node", "127.0.0.1:" + std::to_string(server.port()));

  std::promise<RequestResult> p;
  client.request("node", Envelope{1, MessageKind::ping, "processor", 5, "x"}, Duration(2000),
                 [&](RequestResult r) { p.set_value(std::move(r)); });
  auto r = p.get_future().get();
  ASSERT_TRUE(std::holds_alternative<Envelope>(r));
  EXPECT_EQ(std::get<Envelope>(r).payload, "re:x");

  std::promise<RequestResult> q;
  client.request("ghost", Envelope{}, Duration(200), [&](RequestResult r2) { q.set_value(std::move(r2)); });
  EXPECT_EQ(std::get<TransportError>(q.get_future().get()), TransportError::unknown_peer);
  client.stop();
  server.stop();
}

TEST(SocketTransport, OneWaySendAndRemoteSubscribe) {
  SocketTransport server(SocketTransportConfig{.listen_port = 0});
  std::mutex mu;
  std::condition_variable cv;
  std::vector<std::string> inbox;
  server.attach("node", [&](const Envelope& e) -> std::optional<Envelope> {
    std::lock_guard lock(mu);
    inbox.push_back(e.payload);
    cv.notify_all();
    return std::nullopt;
  });
  SocketTransport client(SocketTransportConfig{.listen_port = -1});
  client.add_peer("node", "127.0.0.1:" + std::to_string(server.port()));
  client.send("node", Envelope{1, MessageKind::ack, "processor", 1, "7"});

  std::vector<std::string> delivered;
  client.subscribe_remote("node", TopicFilter::parse("metrics.nodes.*"),
                          [&](const Topic& t, const std::string& body) {
                            std::lock_guard lock(mu);
                            delivered.push_back(t.id + ":" + body);
                            cv.notify_all();
                          });
  std::unique_lock lock(mu);
  ASSERT_TRUE(cv.wait_for(lock, std::chrono::seconds(5), [&] { return !inbox.empty(); }));
  EXPECT_EQ(inbox[0], "7");
  lock.unlock();
  // The subscription registers asynchronously; publish until it lands.
  for (int i = 0; i < 50; ++i) {
    server.publish(Topic::nodes("n1"), "body");
    server.publish(Topic::dc("d"), "skip");
    lock.lock();
    const bool done = cv.wait_for(lock, std::chrono::milliseconds(100), [&] { return !delivered.empty(); });
    lock.unlock();
    if (done) break;
  }
  lock.lock();
  ASSERT_FALSE(delivered.empty());
  EXPECT_EQ(delivered[0], "n1:body");
  lock.unlock();
  client.stop();
  server.stop();
}
