#include <gtest/gtest.h>

#include "../support/sim_links.hpp"
#include "aal/patient/agent.hpp"

using namespace aal;
using namespace aal::patient;
using mqtt::QoS;

namespace {

std::string notif(std::uint64_t id, std::string_view modality, std::string_view asset, std::string_view rule = "r",
                  std::string_view text = "") {
  rules::Notification n;
  n.notif_id = id;
  n.modality = *rules::parse_modality(modality);
  n.asset_ref = asset;
  n.text = text;
  n.rule_id = rule;
  return n.to_json();
}

struct Rig {
  sim::VirtualNetwork net;
  aal::testing::Recorder seen;
  std::unique_ptr<Agent> agent;

  explicit Rig(bool clean = true) {
    seen.attach(net.add_client("observer"), "patient/#");
    auto& ep = net.add_client("patient", clean);
    agent = std::make_unique<Agent>(std::shared_ptr<client::Link>(&ep, [](client::Link*) {}), net.clock());
    agent->start();
    net.settle();
  }
};

}  // namespace

TEST(Scan, ThreeSecondBoundary) {
  EXPECT_TRUE(scan_detects(ms(2900)));
  EXPECT_TRUE(scan_detects(seconds(3)));
  EXPECT_FALSE(scan_detects(seconds(3) + Nanos{1}));
  EXPECT_FALSE(scan_detects(ms(3100)));
}

TEST(Scan, DetectionPublishesAndTimeoutDoesNot) {
  Rig r;
  EXPECT_EQ(r.agent->scan_qr("bedroom_door", ms(400)), ScanOutcome::detected);
  r.net.settle();
  r.net.clock().advance(seconds(10));
  EXPECT_EQ(r.agent->scan_qr("fridge", ms(3500)), ScanOutcome::timeout);
  r.net.settle();
  EXPECT_EQ(r.seen.trace(), "patient/qr/bedroom_door detected\n");
}

TEST(Scan, OneAtATime) {
  Rig r;
  EXPECT_EQ(r.agent->scan_qr("a", ms(2000)), ScanOutcome::detected);
  r.net.clock().advance(ms(1999));
  EXPECT_THROW(r.agent->scan_qr("b", ms(100)), ScanInProgress);
  r.net.clock().advance(ms(1));
  EXPECT_EQ(r.agent->scan_qr("b", ms(5000)), ScanOutcome::timeout);
  r.net.clock().advance(ms(2999));
  EXPECT_THROW(r.agent->scan_qr("c", ms(100)), ScanInProgress);
  r.net.clock().advance(ms(1));
  EXPECT_NO_THROW(r.agent->scan_qr("c", ms(100)));
}

TEST(Scan, DemoLatencyRange) {
  std::mt19937_64 rng(3);
  int timeouts = 0;
  for (int i = 0; i < 2000; ++i) {
    auto l = random_scan_latency(rng);
    EXPECT_GE(l, ms(100));
    EXPECT_LE(l, ms(4000));
    timeouts += !scan_detects(l);
  }
  EXPECT_GT(timeouts, 0);
}

TEST(Render, CostsPerModality) {
  Rig r;
  r.net.clock().set(seconds(1));
  r.agent->on_notification(notif(1, "image3d", "umbrella"), seconds(1));
  r.agent->on_notification(notif(2, "audio", "umbrella_reminder"), seconds(1));
  r.agent->on_notification(notif(3, "text", "", "r", "hello"), seconds(2));
  auto log = r.agent->render_log();
  ASSERT_EQ(log.size(), 3u);
  EXPECT_EQ(log[0].render_complete - log[0].receive_time, ms(106));
  EXPECT_EQ(log[1].render_start, seconds(1) + ms(106));
  EXPECT_EQ(log[1].render_complete, seconds(1) + ms(106) + ms(364));
  EXPECT_EQ(log[2].render_start, seconds(2));
  EXPECT_EQ(log[2].render_complete, seconds(2));
}

TEST(Render, BatchRendersInIdOrder) {
  Rig r;
  r.agent->on_batch({notif(8, "audio", "b"), notif(7, "image3d", "a")}, ms(0));
  auto log = r.agent->render_log();
  ASSERT_EQ(log.size(), 2u);
  EXPECT_EQ(log[0].notif_id, 7u);
  EXPECT_EQ(log[1].notif_id, 8u);
  for (const auto& e : log) EXPECT_GE(e.render_complete, e.receive_time);
}

TEST(Render, QueuedEntriesAreReorderedWhenLowerIdArrives) {
  Rig r;
  r.agent->on_notification(notif(10, "audio", "a"), ms(0));
  r.agent->on_notification(notif(12, "audio", "c"), ms(0));
  r.agent->on_notification(notif(11, "audio", "b"), ms(10));
  auto log = r.agent->render_log();
  ASSERT_EQ(log.size(), 3u);
  EXPECT_EQ(log[1].notif_id, 11u);
  EXPECT_EQ(log[2].notif_id, 12u);
  EXPECT_EQ(log[2].render_complete, ms(3 * 364));
}

TEST(Render, DuplicatesAndMalformedDropped) {
  Rig r;
  r.agent->on_notification(notif(1, "audio", "a"), ms(0));
  r.agent->on_notification(notif(1, "audio", "a"), ms(5));
  r.agent->on_notification("not json", ms(5));
  r.agent->on_notification(R"({"notif_id": 2, "modality": "smell"})", ms(5));
  EXPECT_EQ(r.agent->render_log().size(), 1u);
}

TEST(Render, HistoryNewestFirstWithFilter) {
  Rig r;
  r.agent->on_notification(notif(1, "image3d", "a"), ms(0));
  r.agent->on_notification(notif(2, "audio", "b"), ms(0));
  r.agent->on_notification(notif(3, "image3d", "c"), ms(0));
  auto h = r.agent->history();
  ASSERT_EQ(h.size(), 3u);
  EXPECT_EQ(h[0].notif_id, 3u);
  EXPECT_EQ(h[2].notif_id, 1u);
  auto img = r.agent->history(Modality::image3d);
  ASSERT_EQ(img.size(), 2u);
  EXPECT_EQ(img[0].asset_ref, "c");
}

TEST(Render, ConfirmPublishesRuleId) {
  Rig r;
  r.agent->on_notification(notif(4, "text", "heater_prompt", "scenario4_cold", "cold?"), ms(0));
  r.agent->confirm(4);
  r.net.settle();
  EXPECT_EQ(r.seen.trace(), "patient/confirm {\"notif_id\":4,\"rule_id\":\"scenario4_cold\"}\n");
  EXPECT_THROW(r.agent->confirm(99), std::invalid_argument);
}

TEST(Render, EveryNotificationOverTheBrokerAppearsOnce) {
  Rig r;
  auto& engine = r.net.add_client("engine");
  for (int i = 1; i <= 20; ++i) {
    engine.publish("patient/notify/" + std::to_string(i), notif(i, i % 2 ? "audio" : "image3d", "x"),
                   QoS::at_least_once, false);
  }
  r.net.settle();
  auto log = r.agent->render_log();
  ASSERT_EQ(log.size(), 20u);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(log[i].notif_id, std::uint64_t(i + 1));
}

TEST(Render, MissedNotificationsArriveAfterReconnect) {
  sim::VirtualNetwork net;
  auto& ep = net.add_client("patient", false);
  Agent agent(std::shared_ptr<client::Link>(&ep, [](client::Link*) {}), net.clock());
  agent.start();
  net.settle();
  ep.drop();
  net.settle();
  auto& engine = net.add_client("engine");
  for (int i = 1; i <= 5; ++i) {
    engine.publish("patient/notify/" + std::to_string(i), notif(i, "audio", "x"), QoS::at_least_once, false);
  }
  net.settle();
  EXPECT_TRUE(agent.render_log().empty());
  ep.connect();
  net.settle();
  auto log = agent.render_log();
  ASSERT_EQ(log.size(), 5u);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(log[i].notif_id, std::uint64_t(i + 1));
}

TEST(Render, ParseRenderCosts) {
  auto c = parse_render_costs("364,106");
  EXPECT_EQ(c.audio, ms(364));
  EXPECT_EQ(c.image, ms(106));
  EXPECT_EQ(parse_render_costs("0,0").audio, Nanos{0});
  EXPECT_THROW(parse_render_costs("364"), std::invalid_argument);
  EXPECT_THROW(parse_render_costs("a,b"), std::invalid_argument);
}
