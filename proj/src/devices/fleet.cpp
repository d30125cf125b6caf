#include "aal/devices/fleet.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "aal/common/log.hpp"
#include "aal/mqtt/topic.hpp"

namespace aal::devices {

using nlohmann::json;

namespace {

constexpr std::pair<DeviceKind, std::string_view> kKinds[] = {
    {DeviceKind::rain, "rain"}, {DeviceKind::flame, "flame"}, {DeviceKind::temperature, "temperature"},
    {DeviceKind::pir, "pir"},   {DeviceKind::relay, "relay"}, {DeviceKind::led, "led"},
};

constexpr std::pair<Location, std::string_view> kLocations[] = {
    {Location::bedroom, "bedroom"},
    {Location::kitchen, "kitchen"},
    {Location::tvroom, "tvroom"},
    {Location::main_entrance, "main_entrance"},
    {Location::terrace, "terrace"},
};

std::string default_state(DeviceKind kind) { return kind == DeviceKind::temperature ? "21.0" : "0"; }

}  // namespace

std::string_view to_string(DeviceKind kind) {
  for (auto& [k, n] : kKinds)
    if (k == kind) return n;
  return "?";
}

std::string_view to_string(Location location) {
  for (auto& [l, n] : kLocations)
    if (l == location) return n;
  return "?";
}

std::optional<DeviceKind> parse_kind(std::string_view name) {
  if (name == "gas") return DeviceKind::flame;
  for (auto& [k, n] : kKinds)
    if (n == name) return k;
  return std::nullopt;
}

std::optional<Location> parse_location(std::string_view name) {
  for (auto& [l, n] : kLocations)
    if (n == name) return l;
  return std::nullopt;
}

std::string DeviceSpec::topic() const { return fmt::format("home/{}/{}", to_string(location), device_id); }

std::optional<std::string> encode_value(DeviceKind kind, std::string_view raw) {
  if (kind != DeviceKind::temperature) {
    if (raw == "0" || raw == "1") return std::string(raw);
    return std::nullopt;
  }
  double v = 0;
  auto [end, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
  if (ec != std::errc() || end != raw.data() + raw.size() || !std::isfinite(v)) return std::nullopt;
  if (v < -40.0 || v > 85.0) return std::nullopt;
  return fmt::format("{:.1f}", v);
}

Topology parse_topology(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("topology: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("devices") || !doc["devices"].is_array()) {
    throw ConfigError("topology: expected an object with a \"devices\" array");
  }
  Topology topo;
  std::set<std::string> seen;
  for (const auto& d : doc["devices"]) {
    try {
      DeviceSpec spec;
      spec.device_id = d.at("device_id").get<std::string>();
      if (spec.device_id.empty() || !mqtt::is_valid_topic_name(spec.device_id) ||
          spec.device_id.find('/') != std::string::npos) {
        throw ConfigError("topology: invalid device_id '" + spec.device_id + "'");
      }
      auto kind = parse_kind(d.at("kind").get<std::string>());
      if (!kind) throw ConfigError("topology: unknown kind for " + spec.device_id);
      spec.kind = *kind;
      auto loc = parse_location(d.at("location").get<std::string>());
      if (!loc) throw ConfigError("topology: unknown location for " + spec.device_id);
      spec.location = *loc;
      auto period = d.value("sample_period_ms", 0);
      if (period < 0) throw ConfigError("topology: negative sample_period_ms for " + spec.device_id);
      if (period > 0 && is_actuator(spec.kind)) {
        throw ConfigError("topology: actuators do not sample (" + spec.device_id + ")");
      }
      spec.sample_period = ms(period);
      auto initial = d.value("initial_state", default_state(spec.kind));
      auto encoded = encode_value(spec.kind, initial);
      if (!encoded) throw ConfigError("topology: invalid initial_state for " + spec.device_id);
      spec.initial_state = *encoded;
      if (!seen.insert(spec.device_id).second) {
        throw ConfigError("topology: duplicate device_id '" + spec.device_id + "'");
      }
      topo.devices.push_back(std::move(spec));
    } catch (const json::exception& e) {
      throw ConfigError(std::string("topology: ") + e.what());
    }
  }
  return topo;
}

Topology load_topology(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("topology: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_topology(ss.str());
}

Topology default_topology() {
  auto dev = [](std::string id, DeviceKind k, Location l, int period_ms = 0) {
    return DeviceSpec{std::move(id), k, l, ms(period_ms), default_state(k)};
  };
  return {{
      dev("rain", DeviceKind::rain, Location::terrace),
      dev("flame", DeviceKind::flame, Location::kitchen),
      dev("temperature", DeviceKind::temperature, Location::tvroom, 60000),
      dev("pir", DeviceKind::pir, Location::kitchen),
      dev("drawer_relay", DeviceKind::relay, Location::bedroom),
      dev("oven_relay", DeviceKind::relay, Location::kitchen),
      dev("heater_relay", DeviceKind::relay, Location::tvroom),
      dev("entrance_led", DeviceKind::led, Location::main_entrance),
  }};
}

std::string topology_json(const Topology& topology) {
  json devices = json::array();
  for (const auto& d : topology.devices) {
    json j = {{"device_id", d.device_id},
              {"kind", to_string(d.kind)},
              {"location", to_string(d.location)},
              {"initial_state", d.initial_state}};
    if (d.sample_period.count() > 0) j["sample_period_ms"] = to_whole_ms(d.sample_period);
    devices.push_back(std::move(j));
  }
  return json{{"devices", devices}}.dump(2);
}

std::vector<ScriptEvent> parse_script(std::istream& in) {
  std::vector<ScriptEvent> events;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    long long t = 0;
    ScriptEvent ev;
    if (!(ls >> t)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      throw ConfigError(fmt::format("script line {}: expected <sim_time_ms> <device_id> <value>", lineno));
    }
    std::string extra;
    if (!(ls >> ev.device_id >> ev.value) || (ls >> extra) || t < 0) {
      throw ConfigError(fmt::format("script line {}: expected <sim_time_ms> <device_id> <value>", lineno));
    }
    ev.at = ms(t);
    events.push_back(std::move(ev));
  }
  return events;
}

Fleet::Fleet(Topology topology, LinkFactory links, const Clock& clock) : clock_(clock), links_(std::move(links)) {
  for (auto& spec : topology.devices) {
    order_.push_back(spec.device_id);
    Device d;
    d.value = spec.initial_state;
    d.next_due = spec.sample_period;
    d.spec = std::move(spec);
    devices_.emplace(d.spec.device_id, std::move(d));
  }
}

void Fleet::start() {
  std::lock_guard lock(mu_);
  auto now = clock_.now();
  for (const auto& id : order_) {
    auto& d = devices_.at(id);
    d.link = links_("dev-" + id);
    if (is_actuator(d.spec.kind)) {
      d.link->set_handler([this, &d](const client::InboundMessage& m) { on_command(d, m); });
      d.link->subscribe({{d.spec.command_topic(), 1}});
    }
    publish_locked(d, now);
  }
}

void Fleet::publish_locked(Device& d, Nanos sim_time) {
  d.link->publish(d.spec.topic(), d.value, mqtt::QoS::at_least_once, true);
  published_.push_back({d.spec.device_id, d.value, sim_time});
}

void Fleet::on_command(Device& d, const client::InboundMessage& message) {
  std::lock_guard lock(mu_);
  auto value = encode_value(d.spec.kind, message.payload);
  if (!value) {
    log::warn("bad_command", d.link->client_id(), message.topic, "payload='" + message.payload + "' ignored");
    return;
  }
  auto now = clock_.now();
  bool no_op = *value == d.value;
  actuator_log_.push_back({now, d.spec.device_id, d.value, *value, no_op});
  log::info("actuator", d.link->client_id(), d.spec.topic(), d.value + "->" + *value + (no_op ? " no-op" : ""));
  d.value = *value;
  publish_locked(d, now);
}

void Fleet::inject(const std::string& device_id, const std::string& value, Nanos sim_time) {
  std::lock_guard lock(mu_);
  auto it = devices_.find(device_id);
  if (it == devices_.end()) throw UnknownDevice("unknown device '" + device_id + "'");
  auto& d = it->second;
  auto encoded = encode_value(d.spec.kind, value);
  if (!encoded) {
    throw InvalidValue(fmt::format("value '{}' is not valid for {} ({})", value, device_id, to_string(d.spec.kind)));
  }
  if (!d.link) throw std::logic_error("fleet not started");
  if (is_actuator(d.spec.kind)) {
    actuator_log_.push_back({sim_time, device_id, d.value, *encoded, *encoded == d.value});
  }
  d.value = *encoded;
  publish_locked(d, sim_time);
}

std::vector<DeviceEvent> Fleet::step(Nanos sim_time) {
  std::lock_guard lock(mu_);
  std::vector<DeviceEvent> out;
  for (const auto& id : order_) {
    auto& d = devices_.at(id);
    if (d.spec.sample_period.count() <= 0 || sim_time < d.next_due) continue;
    while (d.next_due <= sim_time) d.next_due += d.spec.sample_period;
    publish_locked(d, sim_time);
    out.push_back(published_.back());
  }
  return out;
}

std::optional<std::string> Fleet::state(const std::string& device_id) const {
  std::lock_guard lock(mu_);
  auto it = devices_.find(device_id);
  if (it == devices_.end()) return std::nullopt;
  return it->second.value;
}

const DeviceSpec* Fleet::find_by_topic(std::string_view topic) const {
  for (const auto& [id, d] : devices_) {
    if (d.spec.topic() == topic) return &d.spec;
  }
  return nullptr;
}

std::vector<ActuatorLogEntry> Fleet::actuator_log() const {
  std::lock_guard lock(mu_);
  return actuator_log_;
}

std::vector<DeviceEvent> Fleet::published() const {
  std::lock_guard lock(mu_);
  return published_;
}

}  // namespace aal::devices
