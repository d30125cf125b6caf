#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace aal::mqtt {

using Bytes = std::vector<std::uint8_t>;

enum class PacketType : std::uint8_t {
  connect = 1,
  connack = 2,
  publish = 3,
  puback = 4,
  subscribe = 8,
  suback = 9,
  unsubscribe = 10,
  unsuback = 11,
  pingreq = 12,
  pingresp = 13,
  disconnect = 14,
};

std::string_view to_string(PacketType type);

enum class QoS : std::uint8_t { at_most_once = 0, at_least_once = 1 };

inline constexpr std::uint8_t to_int(QoS q) { return static_cast<std::uint8_t>(q); }
inline constexpr QoS min_qos(QoS a, QoS b) { return to_int(a) < to_int(b) ? a : b; }

/// CONNACK return codes (3.1.1 subset).
enum class ConnectReturn : std::uint8_t {
  accepted = 0,
  unacceptable_protocol = 1,
  identifier_rejected = 2,
  server_unavailable = 3,
  bad_credentials = 4,
  not_authorized = 5,
};

/// SUBACK per-filter return code; 0x80 is failure.
inline constexpr std::uint8_t kSubackFailure = 0x80;

/// Protocol name and level are fixed to "MQTT"/4. Will, username and password
/// are not part of the supported subset.
struct Connect {
  std::string client_id;
  bool clean_session = true;
  std::uint16_t keepalive_s = 0;
  bool operator==(const Connect&) const = default;
};

struct Connack {
  bool session_present = false;
  ConnectReturn code = ConnectReturn::accepted;
  bool operator==(const Connack&) const = default;
};

struct Publish {
  std::string topic;
  std::string payload;
  QoS qos = QoS::at_most_once;
  bool retain = false;
  bool dup = false;
  std::uint16_t packet_id = 0;  // nonzero iff qos > 0
  bool operator==(const Publish&) const = default;
};

struct Puback {
  std::uint16_t packet_id = 0;
  bool operator==(const Puback&) const = default;
};

struct TopicRequest {
  std::string filter;
  std::uint8_t qos = 0;  // requested 0..2; the broker grants at most 1
  bool operator==(const TopicRequest&) const = default;
};

struct Subscribe {
  std::uint16_t packet_id = 0;
  std::vector<TopicRequest> topics;
  bool operator==(const Subscribe&) const = default;
};

struct Suback {
  std::uint16_t packet_id = 0;
  std::vector<std::uint8_t> return_codes;
  bool operator==(const Suback&) const = default;
};

struct Unsubscribe {
  std::uint16_t packet_id = 0;
  std::vector<std::string> filters;
  bool operator==(const Unsubscribe&) const = default;
};

struct Unsuback {
  std::uint16_t packet_id = 0;
  bool operator==(const Unsuback&) const = default;
};

struct Pingreq {
  bool operator==(const Pingreq&) const = default;
};
struct Pingresp {
  bool operator==(const Pingresp&) const = default;
};
struct Disconnect {
  bool operator==(const Disconnect&) const = default;
};

using ControlPacket = std::variant<Connect, Connack, Publish, Puback, Subscribe, Suback,
                                   Unsubscribe, Unsuback, Pingreq, Pingresp, Disconnect>;

PacketType packet_type(const ControlPacket& packet);

}  // namespace aal::mqtt
