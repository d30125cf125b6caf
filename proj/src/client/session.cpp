#include "aal/client/session.hpp"

#include <algorithm>

namespace aal::client {

using namespace aal::mqtt;

ClientSession::ClientSession(std::string client_id, bool clean_session, std::uint16_t keepalive_s,
                             std::uint32_t max_packet_bytes)
    : client_id_(std::move(client_id)),
      clean_session_(clean_session),
      keepalive_s_(keepalive_s),
      decoder_(max_packet_bytes) {}

std::uint16_t ClientSession::next_id() {
  while (true) {
    std::uint16_t id = next_packet_id_;
    next_packet_id_ = id == 65535 ? 1 : static_cast<std::uint16_t>(id + 1);
    if (!is_unacked(id)) return id;
  }
}

bool ClientSession::is_unacked(std::uint16_t packet_id) const {
  return std::any_of(unacked_.begin(), unacked_.end(),
                     [&](const Publish& p) { return p.packet_id == packet_id; });
}

Bytes ClientSession::connect_packet(Nanos now) {
  decoder_.reset();
  last_tx_ = now;
  last_rx_ = now;
  if (clean_session_) unacked_.clear();
  return encode_packet(Connect{client_id_, clean_session_, keepalive_s_});
}

ClientSession::Outgoing ClientSession::publish(const std::string& topic, const std::string& payload,
                                               QoS qos, bool retain, Nanos now) {
  Publish p{topic, payload, qos, retain, false, 0};
  if (qos == QoS::at_least_once) p.packet_id = next_id();
  Outgoing out{p.packet_id, encode_packet(p)};
  if (qos == QoS::at_least_once) unacked_.push_back(std::move(p));
  last_tx_ = now;
  return out;
}

ClientSession::Outgoing ClientSession::subscribe(const std::vector<TopicRequest>& filters, Nanos now) {
  Subscribe s{next_id(), filters};
  last_tx_ = now;
  return {s.packet_id, encode_packet(s)};
}

ClientSession::Outgoing ClientSession::unsubscribe(const std::vector<std::string>& filters, Nanos now) {
  Unsubscribe u{next_id(), filters};
  last_tx_ = now;
  return {u.packet_id, encode_packet(u)};
}

Bytes ClientSession::disconnect_packet(Nanos now) {
  last_tx_ = now;
  return encode_packet(Disconnect{});
}

std::vector<ClientEvent> ClientSession::feed(std::span<const std::uint8_t> bytes, Nanos now, Bytes& replies) {
  std::vector<ClientEvent> events;
  decoder_.feed(bytes);
  while (auto packet = decoder_.next()) {
    last_rx_ = now;
    switch (packet_type(*packet)) {
      case PacketType::connack: {
        const auto& c = std::get<Connack>(*packet);
        events.emplace_back(ConnackReceived{c.session_present, c.code});
        break;
      }
      case PacketType::puback: {
        auto id = std::get<Puback>(*packet).packet_id;
        auto it = std::find_if(unacked_.begin(), unacked_.end(),
                               [&](const Publish& p) { return p.packet_id == id; });
        if (it != unacked_.end()) {
          unacked_.erase(it);
          events.emplace_back(PublishAcked{id});
        }
        break;
      }
      case PacketType::suback: {
        auto& s = std::get<Suback>(*packet);
        events.emplace_back(SubackReceived{s.packet_id, std::move(s.return_codes)});
        break;
      }
      case PacketType::unsuback:
        events.emplace_back(UnsubackReceived{std::get<Unsuback>(*packet).packet_id});
        break;
      case PacketType::pingresp:
        events.emplace_back(PongReceived{});
        break;
      case PacketType::publish: {
        auto& p = std::get<Publish>(*packet);
        if (p.qos == QoS::at_least_once) {
          encode_packet(Puback{p.packet_id}, replies);
          last_tx_ = now;
        }
        events.emplace_back(MessageReceived{
            InboundMessage{std::move(p.topic), std::move(p.payload), p.qos, p.retain, p.dup}});
        break;
      }
      default:
        throw MalformedPacket("unexpected " + std::string(to_string(packet_type(*packet))) +
                              " from broker");
    }
  }
  return events;
}

std::optional<Bytes> ClientSession::drive_keepalive(Nanos now) {
  if (keepalive_s_ == 0) return std::nullopt;
  if (now - last_tx_ < seconds(keepalive_s_)) return std::nullopt;
  last_tx_ = now;
  return encode_packet(Pingreq{});
}

bool ClientSession::broker_silent(Nanos now) const {
  if (keepalive_s_ == 0) return false;
  return now - last_rx_ > ms(static_cast<std::int64_t>(keepalive_s_) * 1500);
}

Bytes ClientSession::resend_unacked(Nanos now) {
  Bytes out;
  for (auto& p : unacked_) {
    p.dup = true;
    encode_packet(p, out);
  }
  if (!out.empty()) last_tx_ = now;
  return out;
}

}  // namespace aal::client
