#include <gtest/gtest.h>

#include <sstream>

#include "../support/sim_links.hpp"
#include "aal/devices/fleet.hpp"

using namespace aal;
using namespace aal::devices;
using aal::testing::Recorder;
using aal::testing::sim_links;
using mqtt::QoS;

namespace {

struct Home {
  sim::VirtualNetwork net;
  Recorder seen;
  std::unique_ptr<Fleet> fleet;

  explicit Home(Topology topo = default_topology()) {
    seen.attach(net.add_client("observer"), "home/#");
    net.settle();
    fleet = std::make_unique<Fleet>(std::move(topo), sim_links(net), net.clock());
    fleet->start();
    net.settle();
    seen.messages.clear();
  }

  void command(const std::string& topic, const std::string& payload) {
    auto& ep = net.add_client("cmd-" + std::to_string(++cmds));
    ep.publish(topic, payload, QoS::at_least_once, false);
    net.settle();
  }
  int cmds = 0;
};

}  // namespace

TEST(Topology, DefaultHomeHasEightDevices) {
  auto topo = default_topology();
  std::vector<std::string> topics;
  for (const auto& d : topo.devices) topics.push_back(d.topic());
  EXPECT_EQ(topics, (std::vector<std::string>{
                        "home/terrace/rain", "home/kitchen/flame", "home/tvroom/temperature", "home/kitchen/pir",
                        "home/bedroom/drawer_relay", "home/kitchen/oven_relay", "home/tvroom/heater_relay",
                        "home/main_entrance/entrance_led"}));
  auto reparsed = parse_topology(topology_json(topo));
  ASSERT_EQ(reparsed.devices.size(), 8u);
  EXPECT_EQ(reparsed.devices[2].sample_period, topo.devices[2].sample_period);
}

TEST(Topology, EmptyAndInvalidConfigs) {
  EXPECT_TRUE(parse_topology(R"({"devices": []})").devices.empty());
  EXPECT_THROW(parse_topology(R"({"devices": [
      {"device_id": "a", "kind": "pir", "location": "kitchen"},
      {"device_id": "a", "kind": "rain", "location": "terrace"}]})"),
               ConfigError);
  EXPECT_THROW(parse_topology(R"({"devices": [{"device_id": "a", "kind": "sonar", "location": "kitchen"}]})"),
               ConfigError);
  EXPECT_THROW(parse_topology(R"({"devices": [{"device_id": "a", "kind": "pir", "location": "attic"}]})"),
               ConfigError);
  EXPECT_THROW(parse_topology(R"({"devices": [{"device_id": "a/b", "kind": "pir", "location": "kitchen"}]})"),
               ConfigError);
  EXPECT_THROW(parse_topology(R"({"devices": [{"device_id": "t", "kind": "temperature", "location": "tvroom",
                                               "initial_state": "120"}]})"),
               ConfigError);
  EXPECT_THROW(parse_topology("{not json"), ConfigError);
  EXPECT_THROW(parse_topology(R"({"things": []})"), ConfigError);
}

TEST(Topology, GasIsFlameAlias) {
  auto topo = parse_topology(R"({"devices": [{"device_id": "gas", "kind": "gas", "location": "kitchen"}]})");
  EXPECT_EQ(topo.devices.at(0).kind, DeviceKind::flame);
}

TEST(Values, Encoding) {
  EXPECT_EQ(encode_value(DeviceKind::flame, "1"), "1");
  EXPECT_EQ(encode_value(DeviceKind::relay, "0"), "0");
  EXPECT_FALSE(encode_value(DeviceKind::relay, "x"));
  EXPECT_FALSE(encode_value(DeviceKind::pir, "true"));
  EXPECT_EQ(encode_value(DeviceKind::temperature, "15"), "15.0");
  EXPECT_EQ(encode_value(DeviceKind::temperature, "21.5"), "21.5");
  EXPECT_EQ(encode_value(DeviceKind::temperature, "-40"), "-40.0");
  EXPECT_EQ(encode_value(DeviceKind::temperature, "85"), "85.0");
  EXPECT_FALSE(encode_value(DeviceKind::temperature, "85.1"));
  EXPECT_FALSE(encode_value(DeviceKind::temperature, "-41"));
  EXPECT_FALSE(encode_value(DeviceKind::temperature, "nan"));
  EXPECT_FALSE(encode_value(DeviceKind::temperature, "12C"));
}

TEST(Script, ParsesLinesAndRejectsGarbage) {
  std::istringstream in("# scenario\n0 flame 1\n\n1500 temperature 15.0  # cold\n");
  auto ev = parse_script(in);
  ASSERT_EQ(ev.size(), 2u);
  EXPECT_EQ(ev[1].at, ms(1500));
  EXPECT_EQ(ev[1].device_id, "temperature");
  EXPECT_EQ(ev[1].value, "15.0");
  std::istringstream bad("10 flame\n");
  EXPECT_THROW(parse_script(bad), ConfigError);
  std::istringstream extra("10 flame 1 2\n");
  EXPECT_THROW(parse_script(extra), ConfigError);
}

TEST(Fleet, StartPublishesRetainedInitialStates) {
  sim::VirtualNetwork net;
  Fleet fleet(default_topology(), sim_links(net), net.clock());
  fleet.start();
  net.settle();
  EXPECT_EQ(fleet.size(), 8u);
  EXPECT_EQ(net.broker().retained().size(), 8u);
  EXPECT_EQ(net.broker().retained().at("home/tvroom/temperature").payload, "21.0");
}

TEST(Fleet, EmptyTopologyIsEmptyFleet) {
  sim::VirtualNetwork net;
  Fleet fleet({}, sim_links(net), net.clock());
  fleet.start();
  EXPECT_EQ(fleet.size(), 0u);
}

TEST(Fleet, InjectPublishesSensorValues) {
  Home h;
  h.fleet->inject("flame", "1", ms(0));
  h.fleet->inject("temperature", "15", ms(10));
  h.fleet->inject("pir", "1", ms(20));
  h.fleet->inject("pir", "1", ms(30));
  h.net.settle();
  EXPECT_EQ(h.seen.trace(),
            "home/kitchen/flame 1\n"
            "home/tvroom/temperature 15.0\n"
            "home/kitchen/pir 1\n"
            "home/kitchen/pir 1\n");
  EXPECT_TRUE(h.net.broker().retained().at("home/tvroom/temperature").retain);
  EXPECT_THROW(h.fleet->inject("nope", "1", ms(0)), UnknownDevice);
  EXPECT_THROW(h.fleet->inject("flame", "2", ms(0)), InvalidValue);
}

TEST(Fleet, ActuatorAppliesCommandsAndConfirmsRetained) {
  Home h;
  h.command("home/bedroom/drawer_relay/set", "1");
  EXPECT_EQ(h.fleet->state("drawer_relay"), "1");
  EXPECT_EQ(h.net.broker().retained().at("home/bedroom/drawer_relay").payload, "1");
  h.command("home/bedroom/drawer_relay/set", "1");
  h.command("home/bedroom/drawer_relay/set", "x");
  EXPECT_EQ(h.fleet->state("drawer_relay"), "1");

  auto log = h.fleet->actuator_log();
  ASSERT_EQ(log.size(), 2u);
  EXPECT_EQ(log[0].old_value, "0");
  EXPECT_EQ(log[0].new_value, "1");
  EXPECT_FALSE(log[0].no_op);
  EXPECT_TRUE(log[1].no_op);
  EXPECT_EQ(h.seen.trace(),
            "home/bedroom/drawer_relay/set 1\n"
            "home/bedroom/drawer_relay 1\n"
            "home/bedroom/drawer_relay/set 1\n"
            "home/bedroom/drawer_relay 1\n"
            "home/bedroom/drawer_relay/set x\n");
}

TEST(Fleet, LateSubscriberSeesActuatorStateRetained) {
  Home h;
  h.command("home/main_entrance/entrance_led/set", "1");
  auto& late = h.net.add_client("late");
  Recorder r;
  r.attach(late, "home/main_entrance/#");
  h.net.settle();
  EXPECT_EQ(r.trace(), "home/main_entrance/entrance_led 1 r\n");
}

TEST(Fleet, StepPublishesPeriodicSensors) {
  Home h;
  EXPECT_TRUE(h.fleet->step(ms(59999)).empty());
  auto due = h.fleet->step(ms(60000));
  ASSERT_EQ(due.size(), 1u);
  EXPECT_EQ(due[0].device_id, "temperature");
  EXPECT_TRUE(h.fleet->step(ms(60001)).empty());
  EXPECT_EQ(h.fleet->step(ms(185000)).size(), 1u);
  EXPECT_EQ(h.fleet->step(ms(239999)).size(), 0u);
  EXPECT_EQ(h.fleet->step(ms(240000)).size(), 1u);
}

TEST(Fleet, TopicNamespaceIsClosed) {
  Home h;
  h.fleet->inject("rain", "1", ms(0));
  h.command("home/kitchen/oven_relay/set", "1");
  h.fleet->step(ms(60000));
  h.net.settle();
  for (const auto& e : h.fleet->published()) {
    EXPECT_TRUE(h.fleet->state(e.device_id));
  }
  for (const auto& m : h.seen.messages) {
    std::string t = m.topic;
    if (t.ends_with("/set")) t.resize(t.size() - 4);
    EXPECT_NE(h.fleet->find_by_topic(t), nullptr) << m.topic;
  }
}

TEST(Fleet, TraceIsDeterministic) {
  auto run = [] {
    Home h;
    std::istringstream script("0 flame 1\n100 temperature 15.0\n200 pir 1\n300 drawer_relay 1\n400 flame 0\n");
    for (const auto& ev : parse_script(script)) {
      h.net.clock().set(ev.at);
      h.fleet->inject(ev.device_id, ev.value, ev.at);
      h.net.settle();
    }
    h.command("home/tvroom/heater_relay/set", "1");
    h.fleet->step(ms(60000));
    h.net.settle();
    return h.seen.trace() + h.net.broker().snapshot_json();
  };
  EXPECT_EQ(run(), run());
}
