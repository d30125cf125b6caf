#include "aal/rules/engine.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "aal/common/log.hpp"
#include "aal/mqtt/topic.hpp"

namespace aal::rules {

using nlohmann::json;

namespace {

std::optional<double> parse_number(std::string_view s) {
  double v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

Nanos seconds_field(const json& j, const char* key, Nanos fallback) {
  if (!j.contains(key)) return fallback;
  double s = j.at(key).get<double>();
  if (!(s >= 0) || !std::isfinite(s)) throw RuleConfigError(std::string(key) + " must be >= 0");
  return Nanos(static_cast<std::int64_t>(std::llround(s * 1e9)));
}

NotifyTemplate parse_notify(const json& j) {
  NotifyTemplate t;
  auto m = parse_modality(j.at("modality").get<std::string>());
  if (!m) throw RuleConfigError("unknown modality '" + j.at("modality").get<std::string>() + "'");
  t.modality = *m;
  t.asset_ref = j.value("asset_ref", "");
  t.text = j.value("text", "");
  if (t.modality == Modality::text && t.text.empty()) throw RuleConfigError("text notification needs text");
  if (t.modality != Modality::text && t.asset_ref.empty()) throw RuleConfigError("notification needs asset_ref");
  return t;
}

Action parse_action(const json& j) {
  Action a;
  if (j.contains("actuate")) {
    const auto& x = j.at("actuate");
    a.kind = Action::Kind::actuate;
    a.topic = x.at("topic").get<std::string>();
    a.value = x.at("value").is_string() ? x.at("value").get<std::string>() : x.at("value").dump();
    if (!mqtt::is_valid_topic_name(a.topic)) throw RuleConfigError("invalid actuate topic '" + a.topic + "'");
  } else if (j.contains("notify")) {
    a.kind = Action::Kind::notify;
    a.notify = parse_notify(j.at("notify"));
  } else {
    throw RuleConfigError("action must be {\"actuate\": ...} or {\"notify\": ...}");
  }
  return a;
}

json notify_json(const NotifyTemplate& t) {
  json j = {{"modality", to_string(t.modality)}};
  if (!t.asset_ref.empty()) j["asset_ref"] = t.asset_ref;
  if (!t.text.empty()) j["text"] = t.text;
  return j;
}

json action_json(const Action& a) {
  if (a.kind == Action::Kind::actuate) return {{"actuate", {{"topic", a.topic}, {"value", a.value}}}};
  return {{"notify", notify_json(a.notify)}};
}

std::string_view op_name(PredicateOp op) {
  switch (op) {
    case PredicateOp::equals: return "equals";
    case PredicateOp::less_than: return "less_than";
    case PredicateOp::greater_than: return "greater_than";
    case PredicateOp::any: return "any";
  }
  return "?";
}

}  // namespace

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::audio: return "audio";
    case Modality::text: return "text";
    case Modality::image3d: return "image3d";
  }
  return "?";
}

std::optional<Modality> parse_modality(std::string_view name) {
  if (name == "audio") return Modality::audio;
  if (name == "text") return Modality::text;
  if (name == "image3d") return Modality::image3d;
  return std::nullopt;
}

std::string Notification::to_json() const {
  json j = {{"notif_id", notif_id},
            {"modality", to_string(modality)},
            {"asset_ref", asset_ref},
            {"text", text},
            {"created_at", to_whole_ms(created_at)}};
  if (!rule_id.empty()) j["rule_id"] = rule_id;
  return j.dump();
}

Notification Notification::from_json(std::string_view payload) {
  json j;
  try {
    j = json::parse(payload);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("notification: ") + e.what());
  }
  try {
    Notification n;
    n.notif_id = j.at("notif_id").get<std::uint64_t>();
    auto m = parse_modality(j.at("modality").get<std::string>());
    if (!m) throw std::invalid_argument("notification: unknown modality");
    n.modality = *m;
    n.asset_ref = j.value("asset_ref", "");
    n.text = j.value("text", "");
    n.created_at = ms(j.value("created_at", std::int64_t{0}));
    n.rule_id = j.value("rule_id", "");
    if (n.modality == Modality::text && n.text.empty()) throw std::invalid_argument("notification: empty text");
    return n;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("notification: ") + e.what());
  }
}

std::optional<bool> Predicate::matches(std::string_view payload) const {
  if (op == PredicateOp::any) return true;
  if (const auto* s = std::get_if<std::string>(&value)) {
    if (op != PredicateOp::equals) return std::nullopt;
    return payload == *s;
  }
  auto v = parse_number(payload);
  if (!v) return std::nullopt;
  double want = std::get<double>(value);
  switch (op) {
    case PredicateOp::equals: return *v == want;
    case PredicateOp::less_than: return *v < want;
    case PredicateOp::greater_than: return *v > want;
    default: return std::nullopt;
  }
}

RuleSet parse_rules(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw RuleConfigError(std::string("rules: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("rules") || !doc["rules"].is_array()) {
    throw RuleConfigError("rules: expected an object with a \"rules\" array");
  }
  RuleSet set;
  std::set<std::string> ids;
  for (const auto& r : doc["rules"]) {
    Rule rule;
    try {
      rule.rule_id = r.at("rule_id").get<std::string>();
      if (rule.rule_id.empty()) throw RuleConfigError("empty rule_id");
      if (!ids.insert(rule.rule_id).second) throw RuleConfigError("duplicate rule_id");
      const auto& trig = r.at("trigger");
      rule.filter = trig.at("topic").get<std::string>();
      if (!mqtt::is_valid_filter(rule.filter)) throw RuleConfigError("invalid trigger topic '" + rule.filter + "'");
      auto op = trig.at("predicate").get<std::string>();
      if (op == "any") {
        rule.predicate.op = PredicateOp::any;
      } else {
        if (op == "equals") rule.predicate.op = PredicateOp::equals;
        else if (op == "less_than") rule.predicate.op = PredicateOp::less_than;
        else if (op == "greater_than") rule.predicate.op = PredicateOp::greater_than;
        else throw RuleConfigError("unknown predicate '" + op + "'");
        const auto& v = trig.at("value");
        if (v.is_number()) {
          rule.predicate.value = v.get<double>();
        } else if (v.is_string() && rule.predicate.op == PredicateOp::equals) {
          rule.predicate.value = v.get<std::string>();
        } else {
          throw RuleConfigError("predicate '" + op + "' needs a " +
                                (rule.predicate.op == PredicateOp::equals ? "number or string" : "number"));
        }
      }
      for (const auto& a : r.value("actions", json::array())) rule.actions.push_back(parse_action(a));
      if (r.contains("confirmation")) {
        const auto& c = r.at("confirmation");
        Confirmation conf;
        conf.prompt = parse_notify(c.at("prompt"));
        for (const auto& a : c.value("on_confirm", json::array())) conf.on_confirm.push_back(parse_action(a));
        conf.timeout = seconds_field(c, "timeout_s", seconds(60));
        rule.confirmation = std::move(conf);
      }
      rule.debounce = seconds_field(r, "debounce_s", Nanos{0});
      if (rule.actions.empty() && !rule.confirmation) throw RuleConfigError("rule has no actions");
    } catch (const json::exception& e) {
      throw RuleConfigError(fmt::format("rules: rule '{}': {}", rule.rule_id, e.what()));
    } catch (const RuleConfigError& e) {
      if (std::string_view(e.what()).starts_with("rules:")) throw;
      throw RuleConfigError(fmt::format("rules: rule '{}': {}", rule.rule_id, e.what()));
    }
    set.rules.push_back(std::move(rule));
  }
  return set;
}

RuleSet load_rules(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RuleConfigError("rules: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_rules(ss.str());
}

RuleSet default_rules() {
  auto notify = [](Modality m, std::string asset, std::string text = {}) {
    Action a;
    a.kind = Action::Kind::notify;
    a.notify = {m, std::move(asset), std::move(text)};
    return a;
  };
  auto actuate = [](std::string topic, std::string value) {
    Action a;
    a.kind = Action::Kind::actuate;
    a.topic = std::move(topic);
    a.value = std::move(value);
    return a;
  };
  auto rule = [](std::string id, std::string filter, PredicateOp op, std::variant<double, std::string> v,
                 std::vector<Action> actions) {
    Rule r;
    r.rule_id = std::move(id);
    r.filter = std::move(filter);
    r.predicate = {op, std::move(v)};
    r.actions = std::move(actions);
    return r;
  };

  RuleSet set;
  set.rules.push_back(rule("scenario1_medication", "home/bedroom/drawer_relay", PredicateOp::equals, 1.0,
                           {notify(Modality::image3d, "pills"), notify(Modality::audio, "medication_time")}));
  set.rules.push_back(rule("scenario2_family", "patient/qr/bedroom_door", PredicateOp::equals,
                           std::string("detected"),
                           {notify(Modality::image3d, "family_photo"), notify(Modality::audio, "family_info")}));
  auto dishes = rule("scenario3_dishes", "home/kitchen/pir", PredicateOp::equals, 1.0,
                     {notify(Modality::image3d, "dishes"), notify(Modality::audio, "dishes_place")});
  dishes.debounce = seconds(5);
  set.rules.push_back(std::move(dishes));
  auto cold = rule("scenario4_cold", "home/tvroom/temperature", PredicateOp::less_than, 18.0, {});
  cold.confirmation = Confirmation{{Modality::text, "heater_prompt", "Indoor is cold. Turn on the heater?"},
                                   {actuate("home/tvroom/heater_relay/set", "1")},
                                   seconds(60)};
  set.rules.push_back(std::move(cold));
  set.rules.push_back(rule("scenario5_flame", "home/kitchen/flame", PredicateOp::equals, 1.0,
                           {actuate("home/kitchen/oven_relay/set", "0"), notify(Modality::image3d, "flame_alert")}));
  set.rules.push_back(rule("rain_umbrella", "home/terrace/rain", PredicateOp::equals, 1.0,
                           {notify(Modality::image3d, "umbrella"), notify(Modality::audio, "umbrella_reminder")}));
  return set;
}

std::string rules_json(const RuleSet& set) {
  json rules = json::array();
  for (const auto& r : set.rules) {
    json trig = {{"topic", r.filter}, {"predicate", op_name(r.predicate.op)}};
    if (r.predicate.op != PredicateOp::any) {
      std::visit([&](const auto& v) { trig["value"] = v; }, r.predicate.value);
    }
    json j = {{"rule_id", r.rule_id}, {"trigger", trig}, {"actions", json::array()}};
    for (const auto& a : r.actions) j["actions"].push_back(action_json(a));
    if (r.confirmation) {
      json oc = json::array();
      for (const auto& a : r.confirmation->on_confirm) oc.push_back(action_json(a));
      j["confirmation"] = {{"prompt", notify_json(r.confirmation->prompt)},
                           {"on_confirm", oc},
                           {"timeout_s", std::chrono::duration<double>(r.confirmation->timeout).count()}};
    }
    if (r.debounce.count() > 0) j["debounce_s"] = std::chrono::duration<double>(r.debounce).count();
    rules.push_back(std::move(j));
  }
  return json{{"rules", rules}}.dump(2);
}

std::string Emission::trace_line() const {
  auto t = to_whole_ms(at);
  if (kind == Action::Kind::actuate) return fmt::format("{} {} actuate {} {}", t, rule_id, topic, value);
  const auto& n = *notification;
  auto line = fmt::format("{} {} notify {} {} {}", t, rule_id, n.notif_id, to_string(n.modality),
                          n.asset_ref.empty() ? "-" : n.asset_ref);
  if (!n.text.empty()) line += fmt::format(" \"{}\"", n.text);
  return line;
}

Engine::Engine(RuleSet rules) : rules_(std::move(rules)) {}

Emission Engine::make_notification(const Rule& rule, const NotifyTemplate& t, Nanos now) {
  Notification n{next_notif_id_++, t.modality, t.asset_ref, t.text, now, rule.rule_id};
  Emission e;
  e.at = now;
  e.rule_id = rule.rule_id;
  e.kind = Action::Kind::notify;
  e.topic = std::string(kNotifyPrefix) + std::to_string(n.notif_id);
  e.value = n.to_json();
  e.notification = std::move(n);
  return e;
}

void Engine::emit(const Rule& rule, const Action& action, Nanos now, std::vector<Emission>& out) {
  if (action.kind == Action::Kind::notify) {
    out.push_back(make_notification(rule, action.notify, now));
    return;
  }
  Emission e;
  e.at = now;
  e.rule_id = rule.rule_id;
  e.kind = Action::Kind::actuate;
  e.topic = action.topic;
  e.value = action.value;
  out.push_back(std::move(e));
}

std::vector<Emission> Engine::on_event(std::string_view topic, std::string_view payload, Nanos now) {
  std::vector<Emission> out;
  for (const auto& rule : rules_.rules) {
    if (!mqtt::topic_matches(rule.filter, topic)) continue;
    auto hit = rule.predicate.matches(payload);
    if (!hit) {
      log::warn("payload_decode_failed", {}, topic, "rule " + rule.rule_id + " skipped, payload='" +
                                                        std::string(payload) + "'");
      continue;
    }
    if (!*hit) continue;
    if (rule.debounce.count() > 0) {
      auto last = last_fired_.find(rule.rule_id);
      if (last != last_fired_.end() && now - last->second < rule.debounce) {
        log::debug("debounced", {}, topic, rule.rule_id);
        continue;
      }
    }
    last_fired_[rule.rule_id] = now;
    for (const auto& a : rule.actions) emit(rule, a, now, out);
    if (rule.confirmation) {
      auto it = pending_.find(rule.rule_id);
      if (it != pending_.end() && now <= it->second.deadline) {
        it->second.deadline = now + rule.confirmation->timeout;
        continue;
      }
      auto prompt = make_notification(rule, rule.confirmation->prompt, now);
      pending_[rule.rule_id] = {rule.rule_id, prompt.notification->notif_id, now + rule.confirmation->timeout};
      out.push_back(std::move(prompt));
    }
  }
  return out;
}

std::vector<Emission> Engine::on_confirm(std::string_view rule_id, Nanos now) {
  std::vector<Emission> out;
  auto it = pending_.find(std::string(rule_id));
  if (it == pending_.end()) {
    log::info("confirm_unknown", {}, kConfirmTopic, std::string(rule_id));
    return out;
  }
  if (now > it->second.deadline) {
    log::info("confirm_late", {}, kConfirmTopic, std::string(rule_id));
    pending_.erase(it);
    return out;
  }
  pending_.erase(it);
  for (const auto& rule : rules_.rules) {
    if (rule.rule_id != rule_id || !rule.confirmation) continue;
    for (const auto& a : rule.confirmation->on_confirm) emit(rule, a, now, out);
  }
  return out;
}

std::vector<std::string> Engine::expire_pending(Nanos now) {
  std::vector<std::string> expired;
  for (auto it = pending_.begin(); it != pending_.end();) {
    if (now > it->second.deadline) {
      expired.push_back(it->first);
      it = pending_.erase(it);
    } else {
      ++it;
    }
  }
  return expired;
}

EngineNode::EngineNode(RuleSet rules, std::shared_ptr<client::Link> link, const Clock& clock)
    : engine_(std::move(rules)), link_(std::move(link)), clock_(clock) {}

void EngineNode::start() {
  link_->set_handler([this](const client::InboundMessage& m) { handle(m); });
  link_->subscribe({{"home/#", 1}, {"patient/qr/#", 1}, {std::string(kConfirmTopic), 1}});
}

void EngineNode::tick() {
  std::lock_guard lock(mu_);
  for (const auto& id : engine_.expire_pending(clock_.now())) log::info("confirm_expired", link_->client_id(), {}, id);
}

void EngineNode::handle(const client::InboundMessage& m) {
  // Retained replays describe the past, not new events.
  if (m.retain) return;
  std::lock_guard lock(mu_);
  auto now = clock_.now();
  for (const auto& id : engine_.expire_pending(now)) log::info("confirm_expired", link_->client_id(), {}, id);
  if (m.topic == kConfirmTopic) {
    std::string rule_id = m.payload;
    try {
      auto j = json::parse(m.payload);
      if (j.is_object()) rule_id = j.at("rule_id").get<std::string>();
    } catch (const json::exception&) {
    }
    dispatch(engine_.on_confirm(rule_id, now));
    return;
  }
  dispatch(engine_.on_event(m.topic, m.payload, now));
}

void EngineNode::dispatch(const std::vector<Emission>& emissions) {
  for (const auto& e : emissions) {
    link_->publish(e.topic, e.value, mqtt::QoS::at_least_once, false);
    trace_.push_back(e.trace_line());
    log::info(e.kind == Action::Kind::actuate ? "actuate" : "notify", link_->client_id(), e.topic, e.rule_id);
  }
}

std::vector<std::string> EngineNode::trace() const {
  std::lock_guard lock(mu_);
  return trace_;
}

std::size_t EngineNode::pending_count() const {
  std::lock_guard lock(mu_);
  return engine_.pending().size();
}

}  // namespace aal::rules
