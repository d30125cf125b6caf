#include "aal/sim/virtual_network.hpp"

#include "aal/common/log.hpp"

namespace aal::sim {

Endpoint::Endpoint(VirtualNetwork& net, std::string client_id, bool clean_session, std::uint16_t keepalive_s)
    : net_(net), session_(std::move(client_id), clean_session, keepalive_s) {}

void Endpoint::connect() {
  if (conn_) drop();
  conn_ = net_.open_connection(*this);
  connected_ = false;
  net_.to_broker(*conn_, session_.connect_packet(net_.clock_.now()));
}

void Endpoint::disconnect() {
  if (!conn_) return;
  net_.to_broker(*conn_, session_.disconnect_packet(net_.clock_.now()));
  net_.by_conn_.erase(*conn_);
  conn_.reset();
  connected_ = false;
}

void Endpoint::drop() {
  if (!conn_) return;
  auto conn = *conn_;
  net_.discard(conn);
  net_.by_conn_.erase(conn);
  conn_.reset();
  connected_ = false;
  net_.broker_.on_closed(conn, net_.clock_.now());
}

void Endpoint::publish(const std::string& topic, const std::string& payload, mqtt::QoS qos, bool retain) {
  auto out = session_.publish(topic, payload, qos, retain, net_.clock_.now());
  if (conn_) net_.to_broker(*conn_, std::move(out.bytes));
}

void Endpoint::subscribe(const std::vector<mqtt::TopicRequest>& filters) {
  auto out = session_.subscribe(filters, net_.clock_.now());
  if (conn_) net_.to_broker(*conn_, std::move(out.bytes));
}

void Endpoint::unsubscribe(const std::vector<std::string>& filters) {
  auto out = session_.unsubscribe(filters, net_.clock_.now());
  if (conn_) net_.to_broker(*conn_, std::move(out.bytes));
}

void Endpoint::ping() {
  if (conn_) net_.to_broker(*conn_, mqtt::encode_packet(mqtt::Pingreq{}));
}

void Endpoint::receive(std::span<const std::uint8_t> bytes) {
  mqtt::Bytes replies;
  std::vector<client::ClientEvent> events;
  try {
    events = session_.feed(bytes, net_.clock_.now(), replies);
  } catch (const mqtt::MalformedPacket& e) {
    log::warn("malformed_from_broker", client_id(), {}, e.what());
    drop();
    return;
  }
  if (!replies.empty() && conn_) net_.to_broker(*conn_, std::move(replies));
  for (auto& ev : events) {
    if (auto* ack = std::get_if<client::ConnackReceived>(&ev)) {
      connected_ = ack->code == mqtt::ConnectReturn::accepted;
      session_present_ = ack->session_present;
      if (connected_ && !session_.clean_session()) {
        auto resend = session_.resend_unacked(net_.clock_.now());
        if (!resend.empty()) net_.to_broker(*conn_, std::move(resend));
      }
    } else if (auto* sub = std::get_if<client::SubackReceived>(&ev)) {
      subacks_.push_back(sub->return_codes);
    } else if (std::holds_alternative<client::PongReceived>(ev)) {
      ++pongs_;
    } else if (auto* msg = std::get_if<client::MessageReceived>(&ev)) {
      if (handler_) handler_(msg->message);
    }
  }
}

VirtualNetwork::VirtualNetwork(broker::BrokerConfig config) : broker_(config, *this) {}

VirtualNetwork::~VirtualNetwork() = default;

Endpoint& VirtualNetwork::add_client(const std::string& client_id, bool clean_session, std::uint16_t keepalive_s) {
  endpoints_.push_back(std::unique_ptr<Endpoint>(new Endpoint(*this, client_id, clean_session, keepalive_s)));
  auto& ep = *endpoints_.back();
  ep.connect();
  return ep;
}

broker::ConnectionId VirtualNetwork::open_connection(Endpoint& endpoint) {
  auto id = next_conn_++;
  by_conn_[id] = &endpoint;
  broker_.open(id, clock_.now());
  return id;
}

void VirtualNetwork::to_broker(broker::ConnectionId conn, mqtt::Bytes bytes) {
  frames_.push_back({true, conn, std::move(bytes)});
}

void VirtualNetwork::send(broker::ConnectionId conn, mqtt::Bytes bytes) {
  frames_.push_back({false, conn, std::move(bytes)});
}

void VirtualNetwork::close(broker::ConnectionId conn) {
  // Data already queued still arrives; an empty frame marks the close.
  frames_.push_back({false, conn, {}});
}

void VirtualNetwork::discard(broker::ConnectionId conn) {
  std::erase_if(frames_, [&](const Frame& f) { return f.conn == conn; });
}

bool VirtualNetwork::step() {
  if (frames_.empty()) return false;
  Frame f = std::move(frames_.front());
  frames_.pop_front();
  if (f.to_broker) {
    broker_.on_bytes(f.conn, f.bytes, clock_.now());
    return true;
  }
  auto it = by_conn_.find(f.conn);
  if (it == by_conn_.end()) return true;
  Endpoint& ep = *it->second;
  if (f.bytes.empty()) {
    by_conn_.erase(it);
    ep.conn_.reset();
    ep.connected_ = false;
    return true;
  }
  ep.receive(f.bytes);
  return true;
}

void VirtualNetwork::settle() {
  while (step()) {
  }
}

void VirtualNetwork::advance_to(Nanos t) {
  if (t > clock_.now()) clock_.set(t);
  broker_.tick(clock_.now());
  settle();
}

}  // namespace aal::sim
