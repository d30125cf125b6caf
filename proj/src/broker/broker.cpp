#include "aal/broker/broker.hpp"

#include <algorithm>
#include <set>

#include "aal/common/log.hpp"
#include "aal/mqtt/topic.hpp"

namespace aal::broker {

using namespace aal::mqtt;

Broker::Broker(BrokerConfig config, Transport& transport)
    : config_(config), transport_(transport) {}

const Session* Broker::session(std::string_view client_id) const {
  auto it = sessions_.find(client_id);
  return it == sessions_.end() ? nullptr : &it->second;
}

void Broker::open(ConnectionId conn, Nanos now) {
  Connection c{StreamDecoder(config_.max_packet_bytes), std::nullopt, 0, now, now};
  connections_.insert_or_assign(conn, std::move(c));
}

void Broker::on_bytes(ConnectionId conn, std::span<const std::uint8_t> bytes, Nanos now) {
  auto it = connections_.find(conn);
  if (it == connections_.end()) return;
  it->second.decoder.feed(bytes);
  while (true) {
    it = connections_.find(conn);
    if (it == connections_.end()) return;
    std::optional<ControlPacket> packet;
    try {
      packet = it->second.decoder.next();
    } catch (const MalformedPacket& e) {
      close(conn, std::string("malformed packet: ") + e.what());
      return;
    }
    if (!packet) return;
    on_packet(conn, *packet, now);
  }
}

void Broker::on_packet(ConnectionId conn, const ControlPacket& packet, Nanos now) {
  auto it = connections_.find(conn);
  if (it == connections_.end()) return;
  Connection& c = it->second;
  c.last_rx = now;

  if (const auto* connect = std::get_if<Connect>(&packet)) {
    if (c.client_id) {
      close(conn, "protocol violation: second CONNECT");
      return;
    }
    handle_connect(conn, c, *connect);
    return;
  }
  if (!c.client_id) {
    close(conn, "protocol violation: packet before CONNECT");
    return;
  }
  Session& s = sessions_.at(*c.client_id);

  switch (packet_type(packet)) {
    case PacketType::publish:
      handle_publish(s, std::get<Publish>(packet), now);
      break;
    case PacketType::puback:
      handle_puback(s, std::get<Puback>(packet).packet_id);
      break;
    case PacketType::subscribe:
      handle_subscribe(s, std::get<Subscribe>(packet), now);
      break;
    case PacketType::unsubscribe:
      handle_unsubscribe(s, std::get<Unsubscribe>(packet));
      break;
    case PacketType::pingreq:
      send(conn, Pingresp{});
      break;
    case PacketType::disconnect:
      close(conn, "client disconnect");
      break;
    default:
      close(conn, "protocol violation: unexpected " + std::string(to_string(packet_type(packet))));
      break;
  }
}

void Broker::handle_connect(ConnectionId conn, Connection& c, const Connect& packet) {
  std::string client_id = packet.client_id;
  if (client_id.empty()) {
    if (!packet.clean_session) {
      send(conn, Connack{false, ConnectReturn::identifier_rejected});
      close(conn, "empty client id with persistent session");
      return;
    }
    client_id = "auto-" + std::to_string(++generated_ids_);
  }

  auto existing = sessions_.find(client_id);
  if (existing != sessions_.end() && existing->second.connection) {
    auto old = *existing->second.connection;
    log::info("evict", client_id, {}, "old_conn=" + std::to_string(old));
    transport_.close(old);
    drop(old, "evicted by new connection");
    existing = sessions_.find(client_id);
  }

  bool session_present = false;
  if (packet.clean_session) {
    if (existing != sessions_.end()) sessions_.erase(existing);
  } else {
    session_present = existing != sessions_.end();
  }

  Session& s = sessions_[client_id];
  s.client_id = client_id;
  s.clean_session = packet.clean_session;
  s.connection = conn;
  c.client_id = client_id;
  c.keepalive_s = packet.keepalive_s;

  log::info("connect", client_id, {},
            "conn=" + std::to_string(conn) + " clean_session=" + (packet.clean_session ? "1" : "0") +
                " session_present=" + (session_present ? "1" : "0"));
  send(conn, Connack{session_present, ConnectReturn::accepted});

  if (session_present) {
    // un-acked messages first, in their original order, then the offline backlog
    for (const auto& entry : s.inflight) {
      if (!send_publish(s, entry.message, true, entry.packet_id)) return;
    }
    pump(s);
  }
}

void Broker::handle_publish(Session& from, const Publish& packet, Nanos now) {
  ++stats_.publishes_received;
  if (packet.qos == QoS::at_least_once) send(*from.connection, Puback{packet.packet_id});
  log::debug("publish", from.client_id, packet.topic,
             "qos=" + std::to_string(to_int(packet.qos)) + " retain=" + (packet.retain ? "1" : "0"));

  Message message{packet.topic, packet.payload, packet.qos, false, now};
  if (packet.retain) {
    if (packet.payload.empty()) {
      retained_.erase(packet.topic);
    } else {
      Message kept = message;
      kept.retain = true;
      retained_.insert_or_assign(packet.topic, std::move(kept));
    }
  }
  route(message);
}

void Broker::route(const Message& message) {
  for (auto& [id, session] : sessions_) {
    std::optional<QoS> granted;
    for (const auto& sub : session.subscriptions) {
      if (topic_matches(sub.filter, message.topic)) {
        if (!granted || to_int(sub.qos) > to_int(*granted)) granted = sub.qos;
      }
    }
    if (!granted) continue;
    Message copy = message;
    copy.qos = min_qos(message.qos, *granted);
    copy.retain = false;
    deliver(session, std::move(copy));
  }
}

void Broker::deliver(Session& session, Message message) {
  if (!session.connected()) {
    if (session.clean_session) {
      ++stats_.messages_dropped;
      return;
    }
  } else if (session.offline_queue.empty()) {
    if (message.qos == QoS::at_most_once) {
      send_publish(session, message, false, 0);
      return;
    }
    if (auto id = allocate_packet_id(session)) {
      session.inflight.push_back({*id, message});
      session.inflight_ids.insert(*id);
      send_publish(session, message, false, *id);
      return;
    }
  }
  session.offline_queue.push_back(std::move(message));
  if (session.offline_queue.size() > config_.offline_queue_cap) {
    log::warn("queue_overflow", session.client_id, session.offline_queue.front().topic,
              "dropped oldest, cap=" + std::to_string(config_.offline_queue_cap));
    session.offline_queue.pop_front();
    ++stats_.messages_dropped;
  }
}

void Broker::pump(Session& session) {
  while (session.connected() && !session.offline_queue.empty()) {
    Message& next = session.offline_queue.front();
    std::uint16_t id = 0;
    if (next.qos == QoS::at_least_once) {
      auto allocated = allocate_packet_id(session);
      if (!allocated) return;
      id = *allocated;
      session.inflight.push_back({id, next});
      session.inflight_ids.insert(id);
    }
    Message out = std::move(next);
    session.offline_queue.pop_front();
    if (!send_publish(session, out, false, id)) return;
  }
}

bool Broker::send_publish(Session& session, const Message& message, bool dup, std::uint16_t packet_id) {
  if (!session.connection) return false;
  Publish p;
  p.topic = message.topic;
  p.payload = message.payload;
  p.qos = message.qos;
  p.retain = message.retain;
  p.dup = dup && message.qos == QoS::at_least_once;
  p.packet_id = packet_id;
  ++stats_.messages_delivered;
  send(*session.connection, p);
  return true;
}

std::optional<std::uint16_t> Broker::allocate_packet_id(Session& session) {
  if (session.inflight_ids.size() >= 65535) return std::nullopt;
  while (true) {
    std::uint16_t id = session.next_packet_id;
    session.next_packet_id = id == 65535 ? 1 : static_cast<std::uint16_t>(id + 1);
    if (!session.inflight_ids.count(id)) return id;
  }
}

void Broker::handle_puback(Session& session, std::uint16_t packet_id) {
  if (!session.inflight_ids.erase(packet_id)) return;
  auto it = std::find_if(session.inflight.begin(), session.inflight.end(),
                         [&](const InflightMessage& m) { return m.packet_id == packet_id; });
  if (it != session.inflight.end()) session.inflight.erase(it);
  pump(session);
}

void Broker::handle_subscribe(Session& session, const Subscribe& packet, Nanos) {
  Suback ack{packet.packet_id, {}};
  std::vector<Subscription> granted;
  for (const auto& request : packet.topics) {
    if (!is_valid_filter(request.filter)) {
      ack.return_codes.push_back(kSubackFailure);
      log::warn("subscribe_rejected", session.client_id, request.filter, "invalid filter");
      continue;
    }
    QoS qos = request.qos >= 1 ? QoS::at_least_once : QoS::at_most_once;
    auto existing = std::find_if(session.subscriptions.begin(), session.subscriptions.end(),
                                 [&](const Subscription& s) { return s.filter == request.filter; });
    if (existing != session.subscriptions.end()) {
      existing->qos = qos;
    } else {
      session.subscriptions.push_back({request.filter, qos});
    }
    granted.push_back({request.filter, qos});
    ack.return_codes.push_back(to_int(qos));
    log::info("subscribe", session.client_id, request.filter, "qos=" + std::to_string(to_int(qos)));
  }
  send(*session.connection, ack);

  std::set<std::string> replayed;
  for (const auto& sub : granted) {
    for (const auto& [topic, message] : retained_) {
      if (replayed.count(topic) || !topic_matches(sub.filter, topic)) continue;
      replayed.insert(topic);
      Message copy = message;
      copy.qos = min_qos(message.qos, sub.qos);
      copy.retain = true;
      deliver(session, std::move(copy));
    }
  }
}

void Broker::handle_unsubscribe(Session& session, const Unsubscribe& packet) {
  for (const auto& filter : packet.filters) {
    std::erase_if(session.subscriptions, [&](const Subscription& s) { return s.filter == filter; });
    log::info("unsubscribe", session.client_id, filter);
  }
  send(*session.connection, Unsuback{packet.packet_id});
}

void Broker::tick(Nanos now) {
  std::vector<std::pair<ConnectionId, std::string>> expired;
  for (const auto& [id, c] : connections_) {
    if (!c.client_id) {
      if (now - c.opened > config_.connect_timeout) expired.emplace_back(id, "no CONNECT received");
      continue;
    }
    if (c.keepalive_s == 0) continue;
    // 1.5x keepalive, computed in milliseconds to stay exact
    auto limit = ms(static_cast<std::int64_t>(c.keepalive_s) * 1500);
    if (now - c.last_rx > limit) expired.emplace_back(id, "keepalive expired");
  }
  for (const auto& [id, reason] : expired) close(id, reason);
}

void Broker::on_closed(ConnectionId conn, Nanos) { drop(conn, "connection lost"); }

void Broker::send(ConnectionId conn, const ControlPacket& packet) {
  transport_.send(conn, encode_packet(packet));
}

void Broker::close(ConnectionId conn, std::string_view reason) {
  if (!connections_.count(conn)) return;
  transport_.close(conn);
  drop(conn, reason);
}

void Broker::drop(ConnectionId conn, std::string_view reason) {
  auto it = connections_.find(conn);
  if (it == connections_.end()) return;
  std::optional<std::string> client_id = std::move(it->second.client_id);
  connections_.erase(it);
  if (!client_id) {
    log::debug("disconnect", {}, {}, "conn=" + std::to_string(conn) + " reason=" + std::string(reason));
    return;
  }
  log::info("disconnect", *client_id, {}, "conn=" + std::to_string(conn) + " reason=" + std::string(reason));
  auto s = sessions_.find(*client_id);
  if (s == sessions_.end() || s->second.connection != conn) return;
  if (s->second.clean_session) {
    sessions_.erase(s);
  } else {
    s->second.connection.reset();
  }
}

}  // namespace aal::broker
