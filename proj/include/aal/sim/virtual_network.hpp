#pragma once

#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "aal/broker/broker.hpp"
#include "aal/client/link.hpp"
#include "aal/client/session.hpp"
#include "aal/common/clock.hpp"

namespace aal::sim {

class VirtualNetwork;

/// An MQTT client attached to the in-process broker. Bytes travel through the
/// network's FIFO, so delivery happens only inside VirtualNetwork::settle().
class Endpoint final : public client::Link {
 public:
  const std::string& client_id() const override { return session_.client_id(); }
  void publish(const std::string& topic, const std::string& payload, mqtt::QoS qos, bool retain) override;
  void subscribe(const std::vector<mqtt::TopicRequest>& filters) override;
  void set_handler(client::MessageHandler handler) override { handler_ = std::move(handler); }

  void unsubscribe(const std::vector<std::string>& filters);

  /// Opens a new connection and sends CONNECT (un-acked publishes are resent
  /// after a CONNACK with session_present).
  void connect();
  /// Graceful DISCONNECT.
  void disconnect();
  /// Abrupt loss: frames in flight to or from this endpoint are discarded.
  void drop();

  bool connected() const { return connected_; }
  bool session_present() const { return session_present_; }
  const std::vector<std::vector<std::uint8_t>>& suback_codes() const { return subacks_; }
  std::size_t unacked_count() const { return session_.unacked_count(); }
  std::size_t pongs() const { return pongs_; }
  void ping();

 private:
  friend class VirtualNetwork;
  Endpoint(VirtualNetwork& net, std::string client_id, bool clean_session, std::uint16_t keepalive_s);

  void receive(std::span<const std::uint8_t> bytes);

  VirtualNetwork& net_;
  client::ClientSession session_;
  client::MessageHandler handler_;
  std::optional<broker::ConnectionId> conn_;
  bool connected_ = false;  // CONNACK received on the current connection
  bool session_present_ = false;
  std::vector<std::vector<std::uint8_t>> subacks_;
  std::size_t pongs_ = 0;
};

/// Deterministic single-threaded harness: one broker, any number of endpoints,
/// a virtual clock and a FIFO of in-flight frames.
class VirtualNetwork final : private broker::Transport {
 public:
  explicit VirtualNetwork(broker::BrokerConfig config = {});
  ~VirtualNetwork() override;

  ManualClock& clock() { return clock_; }
  const Clock& clock() const { return clock_; }
  broker::Broker& broker() { return broker_; }

  /// Creates an endpoint and connects it (call settle() to complete the handshake).
  Endpoint& add_client(const std::string& client_id, bool clean_session = true, std::uint16_t keepalive_s = 0);

  /// Delivers one frame; false if none were queued.
  bool step();
  /// Delivers frames until none remain.
  void settle();
  /// Moves the clock forward, runs broker keepalive checks and settles.
  void advance_to(Nanos t);

  std::size_t frames_in_flight() const { return frames_.size(); }

 private:
  friend class Endpoint;

  struct Frame {
    bool to_broker = false;
    broker::ConnectionId conn = 0;
    mqtt::Bytes bytes;
  };

  void send(broker::ConnectionId conn, mqtt::Bytes bytes) override;
  void close(broker::ConnectionId conn) override;

  broker::ConnectionId open_connection(Endpoint& endpoint);
  void to_broker(broker::ConnectionId conn, mqtt::Bytes bytes);
  void discard(broker::ConnectionId conn);

  ManualClock clock_;
  broker::Broker broker_;
  std::deque<Frame> frames_;
  std::map<broker::ConnectionId, Endpoint*> by_conn_;
  std::vector<std::unique_ptr<Endpoint>> endpoints_;
  broker::ConnectionId next_conn_ = 1;
};

}  // namespace aal::sim
