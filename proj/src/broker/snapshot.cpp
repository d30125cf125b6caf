#include <fstream>
#include <json.hpp>
#include <sstream>

#include "aal/broker/broker.hpp"
#include "aal/common/base64.hpp"
#include "aal/common/log.hpp"

namespace aal::broker {
namespace {

using nlohmann::json;

json to_json(const Message& m) {
  return json{{"topic", m.topic},
              {"payload", base64_encode(m.payload)},
              {"qos", to_int(m.qos)},
              {"retain", m.retain}};
}

Message message_from(const json& j) {
  Message m;
  m.topic = j.at("topic").get<std::string>();
  auto payload = base64_decode(j.at("payload").get<std::string>());
  if (!payload) throw std::runtime_error("snapshot: bad payload encoding");
  m.payload = std::move(*payload);
  m.qos = j.at("qos").get<int>() >= 1 ? QoS::at_least_once : QoS::at_most_once;
  m.retain = j.value("retain", false);
  return m;
}

}  // namespace

std::string Broker::snapshot_json() const {
  json sessions = json::array();
  for (const auto& [id, s] : sessions_) {
    if (s.clean_session) continue;
    json subs = json::array();
    for (const auto& sub : s.subscriptions) subs.push_back({{"filter", sub.filter}, {"qos", to_int(sub.qos)}});
    json inflight = json::array();
    for (const auto& m : s.inflight) {
      auto entry = to_json(m.message);
      entry["packet_id"] = m.packet_id;
      inflight.push_back(std::move(entry));
    }
    json queue = json::array();
    for (const auto& m : s.offline_queue) queue.push_back(to_json(m));
    sessions.push_back({{"client_id", id},
                        {"subscriptions", std::move(subs)},
                        {"inflight", std::move(inflight)},
                        {"queue", std::move(queue)},
                        {"next_packet_id", s.next_packet_id}});
  }
  json retained = json::array();
  for (const auto& [topic, m] : retained_) retained.push_back(to_json(m));
  return json{{"version", 1}, {"sessions", std::move(sessions)}, {"retained", std::move(retained)}}.dump(2);
}

void Broker::restore_json(std::string_view text) {
  auto doc = json::parse(text);
  if (doc.value("version", 0) != 1) throw std::runtime_error("snapshot: unsupported version");
  for (const auto& js : doc.at("sessions")) {
    Session s;
    s.client_id = js.at("client_id").get<std::string>();
    s.clean_session = false;
    for (const auto& sub : js.at("subscriptions")) {
      s.subscriptions.push_back({sub.at("filter").get<std::string>(),
                                 sub.at("qos").get<int>() >= 1 ? QoS::at_least_once : QoS::at_most_once});
    }
    for (const auto& m : js.at("inflight")) {
      auto id = m.at("packet_id").get<std::uint16_t>();
      s.inflight.push_back({id, message_from(m)});
      s.inflight_ids.insert(id);
    }
    for (const auto& m : js.at("queue")) s.offline_queue.push_back(message_from(m));
    s.next_packet_id = js.value("next_packet_id", std::uint16_t{1});
    if (s.next_packet_id == 0) s.next_packet_id = 1;
    sessions_.insert_or_assign(s.client_id, std::move(s));
  }
  for (const auto& m : doc.at("retained")) {
    auto message = message_from(m);
    message.retain = true;
    retained_.insert_or_assign(message.topic, std::move(message));
  }
}

void Broker::save_snapshot(const std::filesystem::path& path) const {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write snapshot " + tmp.string());
    out << snapshot_json();
  }
  std::filesystem::rename(tmp, path);
  log::info("snapshot_saved", {}, {}, "path=" + path.string());
}

void Broker::load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read snapshot " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  restore_json(buf.str());
  log::info("snapshot_loaded", {}, {}, "path=" + path.string());
}

}  // namespace aal::broker
