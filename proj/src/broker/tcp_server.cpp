#include "aal/broker/tcp_server.hpp"

#include <array>
#include <boost/asio.hpp>
#include <deque>
#include <future>
#include <map>
#include <thread>

#include "aal/common/log.hpp"

namespace aal::broker {

namespace asio = boost::asio;
using asio::ip::tcp;

class TcpServer::Impl final : private Transport {
 public:
  explicit Impl(ServerConfig config)
      : config_(std::move(config)), broker_(config_.broker, *this), acceptor_(io_), tick_timer_(io_) {}

  void bind() {
    if (config_.snapshot_path && std::filesystem::exists(*config_.snapshot_path)) {
      broker_.load_snapshot(*config_.snapshot_path);
      log::info("snapshot_loaded", {}, {}, config_.snapshot_path->string());
    }
    tcp::endpoint ep(asio::ip::make_address(config_.bind_address), config_.port);
    acceptor_.open(ep.protocol());
    acceptor_.set_option(tcp::acceptor::reuse_address(true));
    acceptor_.bind(ep);
    acceptor_.listen();
    port_ = acceptor_.local_endpoint().port();
    log::info("listening", {}, {}, config_.bind_address + ":" + std::to_string(port_));
    accept();
    schedule_tick();
  }

  void start() {
    bind();
    thread_ = std::thread([this] { io_.run(); });
  }

  void run() {
    bind();
    io_.run();
  }

  void stop() {
    if (stopped_.exchange(true)) return;
    auto shutdown = [this] {
      boost::system::error_code ec;
      acceptor_.close(ec);
      tick_timer_.cancel();
      auto now = clock_.now();
      for (auto& [id, c] : conns_) {
        c->socket.close(ec);
        if (broker_.is_open(id)) broker_.on_closed(id, now);
      }
      conns_.clear();
      if (config_.snapshot_path) {
        try {
          broker_.save_snapshot(*config_.snapshot_path);
          log::info("snapshot_saved", {}, {}, config_.snapshot_path->string());
        } catch (const std::exception& e) {
          log::warn("snapshot_failed", {}, {}, e.what());
        }
      }
      io_.stop();
    };
    if (thread_.joinable()) {
      asio::post(io_, shutdown);
      thread_.join();
    } else if (!io_.stopped()) {
      asio::post(io_, shutdown);
    }
  }

  std::uint16_t port() const { return port_; }

  template <class F>
  auto query(F f) const {
    if (!thread_.joinable() || stopped_) return f();
    std::packaged_task<decltype(f())()> task(f);
    auto result = task.get_future();
    asio::post(const_cast<asio::io_context&>(io_), [&task] { task(); });
    return result.get();
  }

  BrokerStats stats() const {
    return query([this] { return broker_.stats(); });
  }
  std::size_t connection_count() const {
    return query([this] { return broker_.connection_count(); });
  }

  ~Impl() override { stop(); }

 private:
  struct Connection {
    explicit Connection(tcp::socket s) : socket(std::move(s)) {}
    tcp::socket socket;
    std::array<std::uint8_t, 16384> buf{};
    std::deque<mqtt::Bytes> writes;
    bool writing = false;
    bool closing = false;
  };

  void accept() {
    acceptor_.async_accept([this](boost::system::error_code ec, tcp::socket socket) {
      if (ec) {
        if (ec != asio::error::operation_aborted) {
          log::warn("accept_failed", {}, {}, ec.message());
          accept();
        }
        return;
      }
      boost::system::error_code opt;
      socket.set_option(tcp::no_delay(true), opt);
      auto id = next_id_++;
      auto conn = std::make_shared<Connection>(std::move(socket));
      conns_[id] = conn;
      broker_.open(id, clock_.now());
      read(id, conn);
      accept();
    });
  }

  void read(ConnectionId id, const std::shared_ptr<Connection>& conn) {
    conn->socket.async_read_some(asio::buffer(conn->buf),
                                 [this, id, conn](boost::system::error_code ec, std::size_t n) {
                                   if (conn->closing) return;
                                   if (ec) {
                                     peer_closed(id);
                                     return;
                                   }
                                   broker_.on_bytes(id, std::span(conn->buf.data(), n), clock_.now());
                                   if (!conn->closing) read(id, conn);
                                 });
  }

  void peer_closed(ConnectionId id) {
    auto it = conns_.find(id);
    if (it == conns_.end()) return;
    boost::system::error_code ec;
    it->second->socket.close(ec);
    conns_.erase(it);
    if (broker_.is_open(id)) broker_.on_closed(id, clock_.now());
  }

  void send(ConnectionId id, mqtt::Bytes bytes) override {
    auto it = conns_.find(id);
    if (it == conns_.end() || it->second->closing) return;
    auto& c = it->second;
    c->writes.push_back(std::move(bytes));
    if (!c->writing) write_next(id, c);
  }

  // The broker has already forgotten the connection; flush what is queued, then close.
  void close(ConnectionId id) override {
    auto it = conns_.find(id);
    if (it == conns_.end()) return;
    auto c = it->second;
    c->closing = true;
    conns_.erase(it);
    if (!c->writing) finish_close(c);
  }

  void finish_close(const std::shared_ptr<Connection>& c) {
    boost::system::error_code ec;
    c->socket.shutdown(tcp::socket::shutdown_both, ec);
    c->socket.close(ec);
  }

  void write_next(ConnectionId id, const std::shared_ptr<Connection>& c) {
    if (c->writes.empty()) {
      c->writing = false;
      if (c->closing) finish_close(c);
      return;
    }
    c->writing = true;
    asio::async_write(c->socket, asio::buffer(c->writes.front()),
                      [this, id, c](boost::system::error_code ec, std::size_t) {
                        if (ec) {
                          c->writing = false;
                          c->writes.clear();
                          if (c->closing) {
                            finish_close(c);
                          } else {
                            peer_closed(id);
                          }
                          return;
                        }
                        c->writes.pop_front();
                        write_next(id, c);
                      });
  }

  void schedule_tick() {
    tick_timer_.expires_after(std::chrono::milliseconds(100));
    tick_timer_.async_wait([this](boost::system::error_code ec) {
      if (ec) return;
      broker_.tick(clock_.now());
      schedule_tick();
    });
  }

  ServerConfig config_;
  SteadyClock clock_;
  Broker broker_;
  asio::io_context io_;
  tcp::acceptor acceptor_;
  asio::steady_timer tick_timer_;
  std::map<ConnectionId, std::shared_ptr<Connection>> conns_;
  ConnectionId next_id_ = 1;
  std::uint16_t port_ = 0;
  std::thread thread_;
  std::atomic<bool> stopped_{false};
};

TcpServer::TcpServer(ServerConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}
TcpServer::~TcpServer() = default;

void TcpServer::start() { impl_->start(); }
void TcpServer::run() { impl_->run(); }
void TcpServer::stop() { impl_->stop(); }
std::uint16_t TcpServer::port() const { return impl_->port(); }
BrokerStats TcpServer::stats() const { return impl_->stats(); }
std::size_t TcpServer::connection_count() const { return impl_->connection_count(); }

}  // namespace aal::broker
