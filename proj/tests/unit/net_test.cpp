#include <gtest/gtest.h>

#include <boost/asio.hpp>
#include <chrono>
#include <thread>

#include "aal/broker/tcp_server.hpp"
#include "aal/client/client.hpp"

using namespace aal;
using namespace std::chrono_literals;
using client::Client;
using client::ClientConfig;
using client::ClientError;
using client::DeliveryStatus;
using mqtt::QoS;

namespace {

broker::ServerConfig local_server() {
  broker::ServerConfig cfg;
  cfg.port = 0;
  return cfg;
}

ClientConfig client_cfg(std::uint16_t port, const std::string& id, bool clean = true) {
  ClientConfig cfg;
  cfg.port = port;
  cfg.client_id = id;
  cfg.clean_session = clean;
  return cfg;
}

std::uint16_t unused_port() {
  boost::asio::io_context io;
  boost::asio::ip::tcp::acceptor a(io, {boost::asio::ip::make_address("127.0.0.1"), 0});
  return a.local_endpoint().port();
}

}  // namespace

TEST(Net, FirstContactHasNoSessionThenPersistentResumes) {
  broker::TcpServer server(local_server());
  server.start();
  {
    auto c = Client::connect(client_cfg(server.port(), "p1", false));
    EXPECT_FALSE(c->session_present());
    c->disconnect();
  }
  auto again = Client::connect(client_cfg(server.port(), "p1", false));
  EXPECT_TRUE(again->session_present());
  server.stop();
}

TEST(Net, ClosedPortFailsWithNetworkErrorWithinTimeout) {
  auto cfg = client_cfg(unused_port(), "nobody");
  auto start = std::chrono::steady_clock::now();
  try {
    Client::connect(cfg);
    FAIL() << "connect should fail";
  } catch (const ClientError& e) {
    EXPECT_EQ(e.kind(), ClientError::Kind::network);
  }
  EXPECT_LT(std::chrono::steady_clock::now() - start, cfg.connect_timeout);
}

TEST(Net, InvalidClientIdRejected) {
  auto cfg = client_cfg(1883, std::string(65, 'x'));
  EXPECT_THROW(Client::connect(cfg), ClientError);
  cfg.client_id.clear();
  EXPECT_THROW(Client::connect(cfg), ClientError);
}

TEST(Net, TokensCompleteAndSecondSubscriberObservesMessage) {
  broker::TcpServer server(local_server());
  server.start();
  auto sub = Client::connect(client_cfg(server.port(), "sub"));
  sub->subscribe({{"home/#", 1}});
  auto pub = Client::connect(client_cfg(server.port(), "pub"));

  auto t0 = pub->publish_async("home/tvroom/temperature", "21.5", QoS::at_most_once, false);
  EXPECT_EQ(t0.wait(2s), DeliveryStatus::delivered);
  auto t1 = pub->publish_async("home/kitchen/flame", "1", QoS::at_least_once, false);
  EXPECT_EQ(t1.wait(2s), DeliveryStatus::delivered);

  auto m0 = sub->receive(2s);
  auto m1 = sub->receive(2s);
  ASSERT_TRUE(m0 && m1);
  EXPECT_EQ(m0->topic, "home/tvroom/temperature");
  EXPECT_EQ(m1->topic, "home/kitchen/flame");
  EXPECT_EQ(m1->payload, "1");
  EXPECT_FALSE(sub->receive(100ms));
  server.stop();
}

TEST(Net, SubscribeFailureCodeSurfaces) {
  broker::TcpServer server(local_server());
  server.start();
  auto c = Client::connect(client_cfg(server.port(), "c"));
  auto codes = c->subscribe_codes({{"a/#/b", 1}, {"a/+", 0}});
  EXPECT_EQ(codes, (std::vector<std::uint8_t>{0x80, 0}));
  EXPECT_THROW(c->subscribe({{"x/#/y", 1}}), ClientError);
  server.stop();
}

TEST(Net, UnsubscribeEndsStreamForFilter) {
  broker::TcpServer server(local_server());
  server.start();
  auto c = Client::connect(client_cfg(server.port(), "c"));
  c->subscribe({{"a/b", 1}});
  c->unsubscribe({"a/b"});
  auto p = Client::connect(client_cfg(server.port(), "p"));
  EXPECT_EQ(p->publish_async("a/b", "x", QoS::at_least_once, false).wait(2s), DeliveryStatus::delivered);
  EXPECT_FALSE(c->receive(200ms));
  server.stop();
}

TEST(Net, PublishAfterBrokerKillFails) {
  auto server = std::make_unique<broker::TcpServer>(local_server());
  server->start();
  auto c = Client::connect(client_cfg(server->port(), "k"));
  server->stop();
  server.reset();
  for (int i = 0; i < 50 && c->connected(); ++i) std::this_thread::sleep_for(20ms);
  EXPECT_FALSE(c->connected());
  EXPECT_EQ(c->publish_async("a", "b", QoS::at_least_once, false).wait(1s), DeliveryStatus::failed);
  EXPECT_EQ(c->publish_async("a", "b", QoS::at_most_once, false).wait(1s), DeliveryStatus::failed);
}

TEST(Net, ThousandQos1TransfersWithoutLoss) {
  broker::TcpServer server(local_server());
  server.start();
  auto sub = Client::connect(client_cfg(server.port(), "sink"));
  sub->subscribe({{"bench/#", 1}});
  auto pub = Client::connect(client_cfg(server.port(), "source"));
  std::vector<client::DeliveryToken> tokens;
  for (int i = 0; i < 1000; ++i) {
    tokens.push_back(pub->publish_async("bench/seq", std::to_string(i), QoS::at_least_once, false));
  }
  for (auto& t : tokens) ASSERT_EQ(t.wait(5s), DeliveryStatus::delivered);
  for (int i = 0; i < 1000; ++i) {
    auto m = sub->receive(5s);
    ASSERT_TRUE(m) << "missing message " << i;
    EXPECT_EQ(m->payload, std::to_string(i));
  }
  server.stop();
}

TEST(Net, ReconnectingClientRecoversAfterConnectionLoss) {
  broker::TcpServer server(local_server());
  server.start();
  auto cfg = client_cfg(server.port(), "rc", false);
  cfg.reconnect = client::ReconnectPolicy::fixed_delay;
  cfg.reconnect_delay = 50ms;
  auto c = Client::connect(cfg);
  c->subscribe({{"t/#", 1}});
  c->kill_connection();
  auto p = Client::connect(client_cfg(server.port(), "p"));
  EXPECT_EQ(p->publish_async("t/1", "queued", QoS::at_least_once, false).wait(2s), DeliveryStatus::delivered);
  auto m = c->receive(3s);
  ASSERT_TRUE(m);
  EXPECT_EQ(m->payload, "queued");
  EXPECT_TRUE(c->connected());
  server.stop();
}

TEST(Net, KeepaliveHoldsIdleConnectionOpen) {
  broker::TcpServer server(local_server());
  server.start();
  auto cfg = client_cfg(server.port(), "idle");
  cfg.keepalive_s = 1;
  auto c = Client::connect(cfg);
  std::this_thread::sleep_for(2500ms);
  EXPECT_TRUE(c->connected());
  EXPECT_EQ(server.connection_count(), 1u);
  server.stop();
}

TEST(Net, SnapshotCarriesSessionAcrossRestart) {
  auto path = std::filesystem::temp_directory_path() / "aal_net_snapshot.json";
  std::filesystem::remove(path);
  auto cfg = local_server();
  cfg.snapshot_path = path;
  std::uint16_t port;
  {
    broker::TcpServer server(cfg);
    server.start();
    port = server.port();
    auto c = Client::connect(client_cfg(port, "keeper", false));
    c->subscribe({{"notes/#", 1}});
    c->disconnect();
    auto p = Client::connect(client_cfg(port, "writer"));
    EXPECT_EQ(p->publish_async("notes/1", "remember", QoS::at_least_once, false).wait(2s),
              DeliveryStatus::delivered);
    server.stop();
  }
  cfg.port = port;
  broker::TcpServer server(cfg);
  server.start();
  auto c = Client::connect(client_cfg(server.port(), "keeper", false));
  EXPECT_TRUE(c->session_present());
  auto m = c->receive(2s);
  ASSERT_TRUE(m);
  EXPECT_EQ(m->payload, "remember");
  server.stop();
  std::filesystem::remove(path);
}
