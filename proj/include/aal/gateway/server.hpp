#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>

namespace aal::gateway {

struct GatewayConfig {
  std::string bind_address = "127.0.0.1";
  std::uint16_t port = 8080;  // 0 picks a free port
  std::string broker = "127.0.0.1:1883";
  /// Bearer token required on /events when nonempty.
  std::string token;
  std::string client_id = "gateway";
  std::chrono::milliseconds backoff_min{100};
  std::chrono::milliseconds backoff_max{5000};
  /// A dashboard that falls this far behind is disconnected.
  std::size_t max_queued_frames = 10000;
};

/// HTTP + WebSocket front end:
///   GET /events   WebSocket; event frames out, command frames in
///   GET /health   {"status","broker_connected"}; 503 while the broker is down
///   GET /qr-size  QR sizing report as JSON; query keys mirror the CLI flags
/// One upstream MQTT session, reconnected with exponential backoff.
class Gateway {
 public:
  explicit Gateway(GatewayConfig config);
  ~Gateway();

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Binds and serves on a background thread; the upstream session is
  /// established asynchronously.
  void start();
  /// Like start() but blocks until stop().
  void run();
  void stop();

  std::uint16_t port() const;
  bool broker_connected() const;
  std::size_t connection_count() const;

  class Impl;  // shared with the per-connection sessions

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace aal::gateway
