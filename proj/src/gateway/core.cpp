#include "aal/gateway/core.hpp"

#include <chrono>
#include <json.hpp>

#include "aal/common/base64.hpp"
#include "aal/common/log.hpp"
#include "aal/mqtt/topic.hpp"
#include "aal/rules/engine.hpp"

namespace aal::gateway {

using nlohmann::json;

namespace {

std::int64_t system_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

bool is_state_topic(std::string_view topic) {
  return topic.starts_with("home/") && !topic.ends_with("/set");
}

std::string error_frame(const json& seq, std::string_view error) {
  return json{{"type", "error"}, {"seq", seq}, {"error", error}}.dump();
}

std::string reject_frame(const json& seq, std::string_view reason) {
  return json{{"type", "reject"}, {"seq", seq}, {"reason", reason}}.dump();
}

}  // namespace

std::string event_frame(std::uint64_t seq, const GatewayEvent& e) {
  return json{{"type", "event"},         {"seq", seq},       {"topic", e.topic},
              {"payload", e.payload},    {"binary", e.binary}, {"retain", e.retain},
              {"server_time", e.server_time_ms}}
      .dump();
}

bool command_allowed(std::string_view topic) {
  if (!mqtt::is_valid_topic_name(topic)) return false;
  for (const auto& f : kCommandAllowList) {
    if (mqtt::topic_matches(f, topic)) return true;
  }
  return false;
}

Core::Core(PublishFn publish, std::function<std::int64_t()> wall_ms)
    : publish_(std::move(publish)), wall_ms_(wall_ms ? std::move(wall_ms) : system_ms) {}

GatewayEvent Core::make_event(const client::InboundMessage& m) const {
  GatewayEvent e;
  e.topic = m.topic;
  e.retain = m.retain;
  e.server_time_ms = wall_ms_();
  if (is_valid_utf8(m.payload)) {
    e.payload = m.payload;
  } else {
    e.payload = base64_encode(m.payload);
    e.binary = true;
  }
  return e;
}

void Core::on_message(const client::InboundMessage& message) {
  auto e = make_event(message);
  std::lock_guard lock(mu_);
  if (is_state_topic(e.topic)) {
    if (message.payload.empty()) {
      snapshot_.erase(e.topic);
    } else {
      auto held = e;
      held.retain = true;
      snapshot_[e.topic] = std::move(held);
    }
  }
  for (auto& [id, sink] : sinks_) sink(e);
}

std::pair<std::uint64_t, std::vector<GatewayEvent>> Core::attach(EventSink sink) {
  std::lock_guard lock(mu_);
  auto id = next_sink_++;
  sinks_.emplace(id, std::move(sink));
  std::vector<GatewayEvent> snap;
  snap.reserve(snapshot_.size());
  for (const auto& [topic, e] : snapshot_) snap.push_back(e);
  return {id, std::move(snap)};
}

void Core::detach(std::uint64_t id) {
  std::lock_guard lock(mu_);
  sinks_.erase(id);
}

std::size_t Core::connections() const {
  std::lock_guard lock(mu_);
  return sinks_.size();
}

std::uint64_t Core::next_notif_id() {
  std::lock_guard lock(mu_);
  auto now = static_cast<std::uint64_t>(std::max<std::int64_t>(wall_ms_(), 0));
  last_notif_id_ = std::max(last_notif_id_ + 1, now);
  return last_notif_id_;
}

void Core::handle_command(std::string_view text, Reply reply) {
  json cmd = json::parse(text, nullptr, false);
  if (cmd.is_discarded() || !cmd.is_object()) return reply(error_frame(nullptr, "malformed frame: expected a JSON object"));
  json seq = cmd.contains("seq") ? cmd["seq"] : json(nullptr);
  auto str = [&](const char* key) -> std::optional<std::string> {
    auto it = cmd.find(key);
    if (it == cmd.end() || !it->is_string()) return std::nullopt;
    return it->get<std::string>();
  };

  auto action = str("action");
  if (!action) return reply(error_frame(seq, "missing string field 'action'"));

  if (*action == "publish") {
    auto topic = str("topic");
    auto payload = str("payload");
    if (!topic || !payload) return reply(error_frame(seq, "publish needs string fields 'topic' and 'payload'"));
    if (!command_allowed(*topic)) {
      log::warn("gateway_reject", {}, *topic, "not on allow-list");
      return reply(reject_frame(seq, "topic not writable: " + *topic));
    }
    publish_(*topic, *payload, [seq, topic = *topic, reply](bool delivered) {
      reply(json{{"type", "ack"}, {"seq", seq}, {"action", "publish"}, {"topic", topic}, {"delivered", delivered}}
                .dump());
    });
    return;
  }

  if (*action == "notify") {
    auto modality = str("modality");
    auto m = modality ? rules::parse_modality(*modality) : std::nullopt;
    if (!m) return reply(error_frame(seq, "notify needs 'modality' of audio, text or image3d"));
    rules::Notification n;
    n.modality = *m;
    n.asset_ref = str("asset_ref").value_or("");
    n.text = str("text").value_or("");
    if (n.modality == rules::Modality::text && n.text.empty()) {
      return reply(error_frame(seq, "text notifications need a nonempty 'text'"));
    }
    if (n.modality != rules::Modality::text && n.asset_ref.empty()) {
      return reply(error_frame(seq, "audio and image3d notifications need 'asset_ref'"));
    }
    n.notif_id = next_notif_id();
    n.created_at = ms(wall_ms_());
    auto topic = std::string(rules::kNotifyPrefix) + std::to_string(n.notif_id);
    publish_(topic, n.to_json(), [seq, topic, id = n.notif_id, reply](bool delivered) {
      reply(json{{"type", "ack"},
                 {"seq", seq},
                 {"action", "notify"},
                 {"topic", topic},
                 {"notif_id", id},
                 {"delivered", delivered}}
                .dump());
    });
    return;
  }

  reply(error_frame(seq, "unknown action: " + *action));
}

}  // namespace aal::gateway
