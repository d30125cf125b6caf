#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "aal/client/link.hpp"
#include "aal/common/clock.hpp"

namespace aal::client {

enum class ReconnectPolicy { off, fixed_delay };

struct ClientConfig {
  std::string host = "127.0.0.1";
  std::uint16_t port = 1883;
  std::string client_id;
  bool clean_session = true;
  std::uint16_t keepalive_s = 30;
  ReconnectPolicy reconnect = ReconnectPolicy::off;
  std::chrono::milliseconds reconnect_delay{1000};
  std::chrono::milliseconds connect_timeout{5000};
};

/// Parses "host:port" (port optional, default 1883).
void parse_broker_address(const std::string& address, ClientConfig& config);

class ClientError : public std::runtime_error {
 public:
  enum class Kind { invalid_config, network, refused, timeout, disconnected, subscribe_failed };
  ClientError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

enum class DeliveryStatus { pending, delivered, failed };

/// Completion handle for one publish: QoS 0 completes when written to the
/// socket, QoS 1 when the broker's PUBACK arrives.
class DeliveryToken {
 public:
  struct State;
  explicit DeliveryToken(std::shared_ptr<State> state) : state_(std::move(state)) {}

  DeliveryStatus status() const;
  /// Waits up to `timeout`; returns the status at that point.
  DeliveryStatus wait(std::chrono::milliseconds timeout) const;
  /// Runs `callback` once the token settles (immediately if it already has).
  /// Invoked on the client's network thread.
  void on_complete(std::function<void(DeliveryStatus)> callback) const;

 private:
  std::shared_ptr<State> state_;
};

/// MQTT client over TCP. One background thread owns the socket; every public
/// member is thread-safe. Message handlers run on that thread and must not
/// block on this client's own tokens.
class Client final : public Link {
 public:
  /// Connects and waits for CONNACK. Throws ClientError.
  static std::unique_ptr<Client> connect(const ClientConfig& config);
  ~Client() override;

  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  const std::string& client_id() const override;
  bool session_present() const;
  bool connected() const;

  DeliveryToken publish_async(const std::string& topic, const std::string& payload, QoS qos, bool retain);
  void publish(const std::string& topic, const std::string& payload, QoS qos, bool retain) override;

  /// Waits for SUBACK and returns the granted codes (0x80 = failure).
  std::vector<std::uint8_t> subscribe_codes(const std::vector<mqtt::TopicRequest>& filters);
  /// As subscribe_codes, but throws ClientError(subscribe_failed) if any filter was refused.
  void subscribe(const std::vector<mqtt::TopicRequest>& filters) override;
  void unsubscribe(const std::vector<std::string>& filters);

  void set_handler(MessageHandler handler) override;
  /// Pull-style consumption when no handler is installed. nullopt on timeout
  /// or once the client is permanently disconnected.
  std::optional<InboundMessage> receive(std::chrono::milliseconds timeout);

  /// Sends DISCONNECT and closes. Idempotent.
  void disconnect();
  /// Drops the socket without DISCONNECT (test hook for abrupt loss).
  void kill_connection();

 private:
  class Impl;
  explicit Client(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

}  // namespace aal::client
