#pragma once

#include <functional>
#include <string>
#include <vector>

#include "aal/mqtt/packet.hpp"

namespace aal::client {

using mqtt::QoS;

struct InboundMessage {
  std::string topic;
  std::string payload;
  QoS qos = QoS::at_most_once;
  bool retain = false;
  bool dup = false;
};

using MessageHandler = std::function<void(const InboundMessage&)>;

/// Minimal publish/subscribe surface the home components are written against.
/// Implemented by the TCP client and by the in-process virtual network.
class Link {
 public:
  virtual ~Link() = default;
  virtual const std::string& client_id() const = 0;
  virtual void publish(const std::string& topic, const std::string& payload, QoS qos, bool retain) = 0;
  virtual void subscribe(const std::vector<mqtt::TopicRequest>& filters) = 0;
  /// Must be installed before subscribing to see retained replays.
  virtual void set_handler(MessageHandler handler) = 0;
};

}  // namespace aal::client
