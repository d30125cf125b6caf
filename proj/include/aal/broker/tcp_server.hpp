#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "aal/broker/broker.hpp"

namespace aal::broker {

struct ServerConfig {
  std::string bind_address = "127.0.0.1";
  std::uint16_t port = 1883;  // 0 picks a free port
  BrokerConfig broker;
  std::optional<std::filesystem::path> snapshot_path;
};

/// TCP front end for Broker. All broker work runs on a single network thread,
/// which serializes sessions and gives one global publish order.
class TcpServer {
 public:
  explicit TcpServer(ServerConfig config);
  ~TcpServer();

  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  /// Binds, loads the snapshot if present, and starts a background thread.
  void start();
  /// Like start() but runs on the calling thread until stop().
  void run();
  /// Closes every connection, writes the snapshot, joins the thread.
  void stop();

  std::uint16_t port() const;
  BrokerStats stats() const;
  std::size_t connection_count() const;

 private:
  class Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace aal::broker
