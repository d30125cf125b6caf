#pragma once

#include <filesystem>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "aal/client/link.hpp"
#include "aal/common/clock.hpp"

namespace aal::devices {

enum class DeviceKind { rain, flame, temperature, pir, relay, led };
enum class Location { bedroom, kitchen, tvroom, main_entrance, terrace };

std::string_view to_string(DeviceKind kind);
std::string_view to_string(Location location);
/// "gas" is accepted as an alias of flame.
std::optional<DeviceKind> parse_kind(std::string_view name);
std::optional<Location> parse_location(std::string_view name);

inline bool is_actuator(DeviceKind k) { return k == DeviceKind::relay || k == DeviceKind::led; }

struct DeviceSpec {
  std::string device_id;
  DeviceKind kind = DeviceKind::rain;
  Location location = Location::bedroom;
  Nanos sample_period{0};  // 0 = publish on change only
  std::string initial_state;

  std::string topic() const;
  std::string command_topic() const { return topic() + "/set"; }
};

struct Topology {
  std::vector<DeviceSpec> devices;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Throws ConfigError (parse errors, unknown kind/location, duplicate device_id, bad initial_state).
Topology parse_topology(std::string_view json_text);
Topology load_topology(const std::filesystem::path& path);
/// The eight-device home used when no config is given.
Topology default_topology();
std::string topology_json(const Topology& topology);

/// Normalised payload for `kind`, or nullopt when `raw` is not a valid value:
/// "0"/"1" for booleans, one-decimal Celsius in [-40, 85] for temperature.
std::optional<std::string> encode_value(DeviceKind kind, std::string_view raw);

struct ScriptEvent {
  Nanos at{0};
  std::string device_id;
  std::string value;
};

/// Lines of `<sim_time_ms> <device_id> <value>`; blank lines and '#' comments skipped.
std::vector<ScriptEvent> parse_script(std::istream& in);

struct DeviceEvent {
  std::string device_id;
  std::string value;
  Nanos sim_time{0};
};

struct ActuatorLogEntry {
  Nanos sim_time{0};
  std::string device_id;
  std::string old_value;
  std::string new_value;
  bool no_op = false;
};

class UnknownDevice : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};
class InvalidValue : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using LinkFactory = std::function<std::shared_ptr<client::Link>(const std::string& client_id)>;

/// One simulated client per device. Sensors publish retained QoS-1 readings;
/// relays and LEDs obey `<topic>/set` and republish their confirmed state.
class Fleet {
 public:
  Fleet(Topology topology, LinkFactory links, const Clock& clock);

  /// Connects every device, subscribes actuators and publishes initial states.
  void start();

  /// Publishes `value` from a sensor or forces an actuator's state.
  /// Throws UnknownDevice / InvalidValue.
  void inject(const std::string& device_id, const std::string& value, Nanos sim_time);
  /// Periodic sensors due at `sim_time` republish their held value.
  std::vector<DeviceEvent> step(Nanos sim_time);

  std::size_t size() const { return devices_.size(); }
  std::optional<std::string> state(const std::string& device_id) const;
  const DeviceSpec* find_by_topic(std::string_view topic) const;
  std::vector<ActuatorLogEntry> actuator_log() const;
  std::vector<DeviceEvent> published() const;

 private:
  struct Device {
    DeviceSpec spec;
    std::shared_ptr<client::Link> link;
    std::string value;
    Nanos next_due{0};
  };

  void publish_locked(Device& d, Nanos sim_time);
  void on_command(Device& d, const client::InboundMessage& message);

  const Clock& clock_;
  LinkFactory links_;
  mutable std::mutex mu_;
  std::map<std::string, Device> devices_;
  std::vector<std::string> order_;
  std::vector<ActuatorLogEntry> actuator_log_;
  std::vector<DeviceEvent> published_;
};

}  // namespace aal::devices
