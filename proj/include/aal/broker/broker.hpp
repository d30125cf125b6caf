#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "aal/common/clock.hpp"
#include "aal/mqtt/codec.hpp"
#include "aal/mqtt/packet.hpp"

namespace aal::broker {

using ConnectionId = std::uint64_t;
using mqtt::QoS;

struct Message {
  std::string topic;
  std::string payload;
  QoS qos = QoS::at_most_once;
  bool retain = false;
  Nanos enqueue_time{0};
  bool operator==(const Message&) const = default;
};

struct Subscription {
  std::string filter;
  QoS qos = QoS::at_most_once;
  bool operator==(const Subscription&) const = default;
};

struct InflightMessage {
  std::uint16_t packet_id = 0;
  Message message;
};

struct Session {
  std::string client_id;
  bool clean_session = true;
  std::vector<Subscription> subscriptions;
  std::optional<ConnectionId> connection;  // set while connected
  std::deque<Message> offline_queue;
  std::deque<InflightMessage> inflight;  // send order
  std::unordered_set<std::uint16_t> inflight_ids;
  std::uint16_t next_packet_id = 1;

  bool connected() const { return connection.has_value(); }
};

/// Where the broker writes bytes. Implementations must not call back into the
/// broker synchronously.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send(ConnectionId conn, mqtt::Bytes bytes) = 0;
  virtual void close(ConnectionId conn) = 0;
};

struct BrokerConfig {
  std::uint32_t max_packet_bytes = mqtt::kDefaultMaxPacketBytes;
  std::size_t offline_queue_cap = 1024;
  Nanos connect_timeout = seconds(10);
};

struct BrokerStats {
  std::uint64_t publishes_received = 0;
  std::uint64_t messages_delivered = 0;
  std::uint64_t messages_dropped = 0;
};

/// MQTT 3.1.1-subset broker state machine. Not thread-safe: callers serialize
/// every call, which makes routing linearizable. With a virtual clock the
/// resulting state is a deterministic function of the call trace.
class Broker {
 public:
  Broker(BrokerConfig config, Transport& transport);

  void open(ConnectionId conn, Nanos now);
  void on_bytes(ConnectionId conn, std::span<const std::uint8_t> bytes, Nanos now);
  void on_packet(ConnectionId conn, const mqtt::ControlPacket& packet, Nanos now);
  /// The transport observed the peer going away.
  void on_closed(ConnectionId conn, Nanos now);
  /// Closes connections silent for more than 1.5x their keepalive.
  void tick(Nanos now);

  const Session* session(std::string_view client_id) const;
  const std::map<std::string, Message, std::less<>>& retained() const { return retained_; }
  bool is_open(ConnectionId conn) const { return connections_.count(conn) != 0; }
  std::size_t connection_count() const { return connections_.size(); }
  const BrokerStats& stats() const { return stats_; }
  const BrokerConfig& config() const { return config_; }

  /// Persistent sessions and retained messages. Restored sessions start disconnected.
  void save_snapshot(const std::filesystem::path& path) const;
  void load_snapshot(const std::filesystem::path& path);
  std::string snapshot_json() const;
  void restore_json(std::string_view text);

 private:
  struct Connection {
    mqtt::StreamDecoder decoder;
    std::optional<std::string> client_id;
    std::uint16_t keepalive_s = 0;
    Nanos opened{0};
    Nanos last_rx{0};
  };

  void handle_connect(ConnectionId conn, Connection& c, const mqtt::Connect& packet);
  void handle_publish(Session& from, const mqtt::Publish& packet, Nanos now);
  void handle_subscribe(Session& session, const mqtt::Subscribe& packet, Nanos now);
  void handle_unsubscribe(Session& session, const mqtt::Unsubscribe& packet);
  void handle_puback(Session& session, std::uint16_t packet_id);

  void route(const Message& message);
  void deliver(Session& session, Message message);
  void pump(Session& session);
  bool send_publish(Session& session, const Message& message, bool dup, std::uint16_t packet_id);
  std::optional<std::uint16_t> allocate_packet_id(Session& session);
  void send(ConnectionId conn, const mqtt::ControlPacket& packet);
  /// Broker-initiated close.
  void close(ConnectionId conn, std::string_view reason);
  void drop(ConnectionId conn, std::string_view reason);

  BrokerConfig config_;
  Transport& transport_;
  std::map<ConnectionId, Connection> connections_;
  std::map<std::string, Session, std::less<>> sessions_;
  std::map<std::string, Message, std::less<>> retained_;
  std::uint64_t generated_ids_ = 0;
  BrokerStats stats_;
};

}  // namespace aal::broker
