#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "aal/client/link.hpp"
#include "aal/common/clock.hpp"
#include "aal/mqtt/codec.hpp"

namespace aal::client {

struct ConnackReceived {
  bool session_present = false;
  mqtt::ConnectReturn code = mqtt::ConnectReturn::accepted;
};
struct PublishAcked {
  std::uint16_t packet_id = 0;
};
struct SubackReceived {
  std::uint16_t packet_id = 0;
  std::vector<std::uint8_t> return_codes;
};
struct UnsubackReceived {
  std::uint16_t packet_id = 0;
};
struct PongReceived {};
struct MessageReceived {
  InboundMessage message;
};

using ClientEvent = std::variant<ConnackReceived, PublishAcked, SubackReceived, UnsubackReceived,
                                 PongReceived, MessageReceived>;

/// Transport-free MQTT client protocol state: packet ids, un-acked QoS-1
/// publishes, inbound acknowledgement and keepalive bookkeeping.
class ClientSession {
 public:
  ClientSession(std::string client_id, bool clean_session, std::uint16_t keepalive_s,
                std::uint32_t max_packet_bytes = mqtt::kDefaultMaxPacketBytes);

  const std::string& client_id() const { return client_id_; }
  bool clean_session() const { return clean_session_; }
  std::uint16_t keepalive_s() const { return keepalive_s_; }

  struct Outgoing {
    std::uint16_t packet_id = 0;
    mqtt::Bytes bytes;
  };

  /// Starts a new connection attempt; clears the inbound stream state.
  mqtt::Bytes connect_packet(Nanos now);
  Outgoing publish(const std::string& topic, const std::string& payload, QoS qos, bool retain, Nanos now);
  Outgoing subscribe(const std::vector<mqtt::TopicRequest>& filters, Nanos now);
  Outgoing unsubscribe(const std::vector<std::string>& filters, Nanos now);
  mqtt::Bytes disconnect_packet(Nanos now);

  /// Decodes inbound bytes. Acknowledgements owed to the broker (PUBACK) are
  /// appended to `replies`. Throws mqtt::MalformedPacket.
  std::vector<ClientEvent> feed(std::span<const std::uint8_t> bytes, Nanos now, mqtt::Bytes& replies);

  /// PINGREQ once a full keepalive interval has passed without sending anything.
  std::optional<mqtt::Bytes> drive_keepalive(Nanos now);
  /// True when nothing has arrived for 1.5x keepalive.
  bool broker_silent(Nanos now) const;

  /// Un-acked QoS-1 publishes re-encoded with DUP set, in original order.
  mqtt::Bytes resend_unacked(Nanos now);
  std::size_t unacked_count() const { return unacked_.size(); }
  bool is_unacked(std::uint16_t packet_id) const;

 private:
  std::uint16_t next_id();

  std::string client_id_;
  bool clean_session_;
  std::uint16_t keepalive_s_;
  mqtt::StreamDecoder decoder_;
  std::deque<mqtt::Publish> unacked_;
  std::uint16_t next_packet_id_ = 1;
  Nanos last_tx_{0};
  Nanos last_rx_{0};
};

}  // namespace aal::client
