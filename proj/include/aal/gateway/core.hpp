#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "aal/client/link.hpp"

namespace aal::gateway {

struct GatewayEvent {
  std::string topic;
  std::string payload;  // base64 when `binary`
  bool binary = false;
  bool retain = false;
  std::int64_t server_time_ms = 0;  // unix epoch
};

/// {"type":"event","seq",...} text frame.
std::string event_frame(std::uint64_t seq, const GatewayEvent& event);

/// Only actuator command topics and patient notifications may be written.
bool command_allowed(std::string_view topic);
inline const std::vector<std::string> kCommandAllowList = {"home/+/+/set", "patient/notify/#"};

/// Filters the gateway subscribes to upstream.
inline const std::vector<std::string> kUpstreamFilters = {"home/#", "patient/#"};

/// Forwards one QoS-1 publish; `done(true)` once the broker acknowledged it.
using PublishFn =
    std::function<void(const std::string& topic, const std::string& payload, std::function<void(bool)> done)>;
using EventSink = std::function<void(const GatewayEvent&)>;
using Reply = std::function<void(std::string frame)>;

/// Protocol logic of the gateway, free of sockets: fan-out of broker traffic,
/// the per-topic state snapshot, and command validation.
class Core {
 public:
  explicit Core(PublishFn publish, std::function<std::int64_t()> wall_ms = {});

  /// Upstream delivery, in broker order.
  void on_message(const client::InboundMessage& message);

  /// Registers `sink` and returns the snapshot it must send first. Atomic with
  /// respect to on_message, so a connection sees no gap and no duplicate.
  /// `sink` is invoked under the core lock and must not block.
  std::pair<std::uint64_t, std::vector<GatewayEvent>> attach(EventSink sink);
  void detach(std::uint64_t id);
  std::size_t connections() const;

  /// Parses a command frame and eventually calls `reply` exactly once, possibly
  /// from another thread.
  void handle_command(std::string_view text, Reply reply);

  /// Strictly increasing, seeded from wall-clock milliseconds so that ids do
  /// not collide with the rule engine's counter.
  std::uint64_t next_notif_id();

 private:
  GatewayEvent make_event(const client::InboundMessage& message) const;

  PublishFn publish_;
  std::function<std::int64_t()> wall_ms_;
  mutable std::mutex mu_;
  std::map<std::string, GatewayEvent> snapshot_;
  std::map<std::uint64_t, EventSink> sinks_;
  std::uint64_t next_sink_ = 1;
  std::uint64_t last_notif_id_ = 0;
};

}  // namespace aal::gateway
