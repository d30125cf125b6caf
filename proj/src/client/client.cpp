#include "aal/client/client.hpp"

#include <array>
#include <boost/asio.hpp>
#include <condition_variable>
#include <deque>
#include <future>
#include <map>
#include <mutex>
#include <thread>

#include "aal/client/session.hpp"
#include "aal/common/log.hpp"

namespace aal::client {

namespace asio = boost::asio;
using asio::ip::tcp;
using namespace std::chrono_literals;

void parse_broker_address(const std::string& address, ClientConfig& config) {
  auto colon = address.rfind(':');
  if (colon == std::string::npos) {
    config.host = address;
    return;
  }
  config.host = address.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(address.substr(colon + 1));
  } catch (const std::exception&) {
    port = -1;
  }
  if (port <= 0 || port > 65535) {
    throw ClientError(ClientError::Kind::invalid_config, "invalid broker port in '" + address + "'");
  }
  config.port = static_cast<std::uint16_t>(port);
}

struct DeliveryToken::State {
  std::mutex mu;
  std::condition_variable cv;
  DeliveryStatus status = DeliveryStatus::pending;
  std::vector<std::function<void(DeliveryStatus)>> callbacks;

  void settle(DeliveryStatus s) {
    std::vector<std::function<void(DeliveryStatus)>> run;
    {
      std::lock_guard lock(mu);
      if (status != DeliveryStatus::pending) return;
      status = s;
      run.swap(callbacks);
    }
    cv.notify_all();
    for (auto& cb : run) cb(s);
  }
};

DeliveryStatus DeliveryToken::status() const {
  std::lock_guard lock(state_->mu);
  return state_->status;
}

DeliveryStatus DeliveryToken::wait(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(state_->mu);
  state_->cv.wait_for(lock, timeout, [&] { return state_->status != DeliveryStatus::pending; });
  return state_->status;
}

void DeliveryToken::on_complete(std::function<void(DeliveryStatus)> callback) const {
  DeliveryStatus s;
  {
    std::lock_guard lock(state_->mu);
    s = state_->status;
    if (s == DeliveryStatus::pending) {
      state_->callbacks.push_back(std::move(callback));
      return;
    }
  }
  callback(s);
}

class Client::Impl {
 public:
  explicit Impl(const ClientConfig& config)
      : config_(config),
        session_(config.client_id, config.clean_session, config.keepalive_s),
        socket_(io_),
        resolver_(io_),
        connect_timer_(io_),
        keepalive_timer_(io_),
        reconnect_timer_(io_),
        work_(asio::make_work_guard(io_)) {}

  ~Impl() { shutdown(); }

  void start() {
    thread_ = std::thread([this] { io_.run(); });
    auto ready = connect_promise_.get_future();
    asio::post(io_, [this] { start_connect(); });
    try {
      ready.get();
    } catch (...) {
      shutdown();
      throw;
    }
  }

  void shutdown() {
    if (!thread_.joinable()) return;
    disconnect();
    work_.reset();
    asio::post(io_, [this] {
      connect_timer_.cancel();
      keepalive_timer_.cancel();
      reconnect_timer_.cancel();
      resolver_.cancel();
      boost::system::error_code ec;
      socket_.close(ec);
    });
    thread_.join();
  }

  const std::string& client_id() const { return config_.client_id; }
  bool connected() const { return connected_.load(); }
  bool session_present() const { return session_present_.load(); }

  DeliveryToken publish(const std::string& topic, const std::string& payload, QoS qos, bool retain) {
    auto state = std::make_shared<DeliveryToken::State>();
    asio::post(io_, [this, state, topic, payload, qos, retain] {
      do_publish(state, topic, payload, qos, retain);
    });
    return DeliveryToken(state);
  }

  std::vector<std::uint8_t> subscribe(const std::vector<mqtt::TopicRequest>& filters) {
    auto promise = std::make_shared<std::promise<std::vector<std::uint8_t>>>();
    auto result = promise->get_future();
    asio::post(io_, [this, promise, filters] {
      if (!connected_) {
        promise->set_exception(std::make_exception_ptr(
            ClientError(ClientError::Kind::disconnected, "subscribe while disconnected")));
        return;
      }
      for (const auto& f : filters) remember_subscription(f);
      auto out = session_.subscribe(filters, clock_.now());
      suback_waiters_[out.packet_id] = promise;
      write(std::move(out.bytes));
    });
    return wait_result(result, "SUBACK");
  }

  void unsubscribe(const std::vector<std::string>& filters) {
    auto promise = std::make_shared<std::promise<std::vector<std::uint8_t>>>();
    auto result = promise->get_future();
    asio::post(io_, [this, promise, filters] {
      if (!connected_) {
        promise->set_exception(std::make_exception_ptr(
            ClientError(ClientError::Kind::disconnected, "unsubscribe while disconnected")));
        return;
      }
      for (const auto& f : filters) {
        std::erase_if(subscriptions_, [&](const mqtt::TopicRequest& r) { return r.filter == f; });
      }
      auto out = session_.unsubscribe(filters, clock_.now());
      suback_waiters_[out.packet_id] = promise;
      write(std::move(out.bytes));
    });
    wait_result(result, "UNSUBACK");
  }

  void set_handler(MessageHandler handler) {
    std::lock_guard lock(handler_mu_);
    handler_ = std::move(handler);
  }

  std::optional<InboundMessage> receive(std::chrono::milliseconds timeout) {
    std::unique_lock lock(inbox_mu_);
    inbox_cv_.wait_for(lock, timeout, [&] { return !inbox_.empty() || closed_.load(); });
    if (inbox_.empty()) return std::nullopt;
    auto m = std::move(inbox_.front());
    inbox_.pop_front();
    return m;
  }

  void disconnect() {
    if (!thread_.joinable() || closed_.exchange(true)) return;
    auto flushed = std::make_shared<std::promise<void>>();
    auto finished = flushed->get_future();
    asio::post(io_, [this, flushed] {
      reconnect_timer_.cancel();
      if (!connected_) {
        flushed->set_value();
        return;
      }
      disconnect_waiter_ = flushed;
      write(session_.disconnect_packet(clock_.now()), [this] { release_disconnect_waiter(); });
    });
    finished.wait_for(2s);
    std::promise<void> closed;
    asio::post(io_, [this, &closed] {
      ++generation_;
      connected_ = false;
      close_socket();
      keepalive_timer_.cancel();
      fail_all("client disconnected");
      disconnect_waiter_.reset();
      closed.set_value();
    });
    closed.get_future().wait();
    inbox_cv_.notify_all();
  }

  void kill_connection() {
    asio::post(io_, [this] {
      boost::system::error_code ec;
      socket_.close(ec);
    });
  }

 private:
  struct PendingWrite {
    mqtt::Bytes bytes;
    std::function<void()> on_written;
  };

  template <class T>
  T wait_result(std::future<T>& result, const char* what) {
    if (result.wait_for(config_.connect_timeout) != std::future_status::ready) {
      throw ClientError(ClientError::Kind::timeout, std::string("timed out waiting for ") + what);
    }
    return result.get();
  }

  void remember_subscription(const mqtt::TopicRequest& request) {
    for (auto& s : subscriptions_) {
      if (s.filter == request.filter) {
        s.qos = request.qos;
        return;
      }
    }
    subscriptions_.push_back(request);
  }

  // ---- connection lifecycle (network thread) ----

  void start_connect() {
    ++generation_;
    auto gen = generation_;
    boost::system::error_code ec;
    socket_.close(ec);
    socket_ = tcp::socket(io_);
    connect_timer_.expires_after(config_.connect_timeout);
    connect_timer_.async_wait([this, gen](boost::system::error_code e) {
      if (e || gen != generation_ || connected_) return;
      connection_failed(ClientError::Kind::timeout, "connect timed out");
    });
    resolver_.async_resolve(config_.host, std::to_string(config_.port),
                            [this, gen](boost::system::error_code e, tcp::resolver::results_type results) {
                              if (gen != generation_) return;
                              if (e) {
                                connection_failed(ClientError::Kind::network, "resolve: " + e.message());
                                return;
                              }
                              asio::async_connect(socket_, results,
                                                  [this, gen](boost::system::error_code e2, const tcp::endpoint&) {
                                                    if (gen != generation_) return;
                                                    if (e2) {
                                                      connection_failed(ClientError::Kind::network,
                                                                        "connect: " + e2.message());
                                                      return;
                                                    }
                                                    on_tcp_connected();
                                                  });
                            });
  }

  void on_tcp_connected() {
    boost::system::error_code ec;
    socket_.set_option(tcp::no_delay(true), ec);
    writes_.clear();
    writing_ = false;
    write(session_.connect_packet(clock_.now()));
    read();
  }

  void connection_failed(ClientError::Kind kind, const std::string& why) {
    if (!first_connect_done_) {
      ++generation_;
      close_socket();
      first_connect_done_ = true;
      connect_promise_.set_exception(std::make_exception_ptr(ClientError(kind, why)));
      return;
    }
    on_lost(why);
  }

  void release_disconnect_waiter() {
    if (!disconnect_waiter_) return;
    disconnect_waiter_->set_value();
    disconnect_waiter_.reset();
  }

  void on_lost(const std::string& why) {
    ++generation_;
    release_disconnect_waiter();
    bool was_connected = connected_.exchange(false);
    close_socket();
    keepalive_timer_.cancel();
    if (was_connected) log::info("connection_lost", config_.client_id, {}, why);
    fail_writes();
    for (auto& [id, p] : suback_waiters_) {
      p->set_exception(std::make_exception_ptr(ClientError(ClientError::Kind::disconnected, why)));
    }
    suback_waiters_.clear();
    if (closed_) return;
    if (config_.reconnect == ReconnectPolicy::fixed_delay) {
      reconnect_timer_.expires_after(config_.reconnect_delay);
      reconnect_timer_.async_wait([this](boost::system::error_code e) {
        if (!e && !closed_) start_connect();
      });
      return;
    }
    closed_ = true;
    fail_all(why);
    inbox_cv_.notify_all();
  }

  void close_socket() {
    boost::system::error_code ec;
    socket_.close(ec);
  }

  void fail_writes() {
    for (auto& w : writes_) {
      if (w.on_written) w.on_written = nullptr;
    }
    writes_.clear();
    writing_ = false;
    for (auto& t : qos0_tokens_) t->settle(DeliveryStatus::failed);
    qos0_tokens_.clear();
  }

  void fail_all(const std::string&) {
    fail_writes();
    for (auto& [id, t] : qos1_tokens_) t->settle(DeliveryStatus::failed);
    qos1_tokens_.clear();
    for (auto& [id, p] : suback_waiters_) {
      p->set_exception(std::make_exception_ptr(ClientError(ClientError::Kind::disconnected, "closed")));
    }
    suback_waiters_.clear();
  }

  void read() {
    auto gen = generation_;
    socket_.async_read_some(asio::buffer(read_buf_), [this, gen](boost::system::error_code e, std::size_t n) {
      if (gen != generation_) return;
      if (e) {
        if (!first_connect_done_) {
          connection_failed(ClientError::Kind::network, "connection closed before CONNACK");
        } else {
          on_lost(e.message());
        }
        return;
      }
      mqtt::Bytes replies;
      std::vector<ClientEvent> events;
      try {
        events = session_.feed(std::span(read_buf_.data(), n), clock_.now(), replies);
      } catch (const mqtt::MalformedPacket& ex) {
        log::warn("malformed_from_broker", config_.client_id, {}, ex.what());
        connection_failed(ClientError::Kind::network, ex.what());
        return;
      }
      if (!replies.empty()) write(std::move(replies));
      for (auto& ev : events) {
        handle_event(ev);
        if (gen != generation_) return;
      }
      read();
    });
  }

  void handle_event(ClientEvent& ev) {
    if (auto* ack = std::get_if<ConnackReceived>(&ev)) {
      on_connack(*ack);
    } else if (auto* pub = std::get_if<PublishAcked>(&ev)) {
      auto it = qos1_tokens_.find(pub->packet_id);
      if (it != qos1_tokens_.end()) {
        auto token = it->second;
        qos1_tokens_.erase(it);
        token->settle(DeliveryStatus::delivered);
      }
    } else if (auto* sub = std::get_if<SubackReceived>(&ev)) {
      resolve_waiter(sub->packet_id, std::move(sub->return_codes));
    } else if (auto* unsub = std::get_if<UnsubackReceived>(&ev)) {
      resolve_waiter(unsub->packet_id, {});
    } else if (auto* msg = std::get_if<MessageReceived>(&ev)) {
      dispatch(std::move(msg->message));
    }
  }

  void resolve_waiter(std::uint16_t packet_id, std::vector<std::uint8_t> codes) {
    auto it = suback_waiters_.find(packet_id);
    if (it == suback_waiters_.end()) return;
    it->second->set_value(std::move(codes));
    suback_waiters_.erase(it);
  }

  void on_connack(const ConnackReceived& ack) {
    connect_timer_.cancel();
    if (ack.code != mqtt::ConnectReturn::accepted) {
      connection_failed(ClientError::Kind::refused,
                        "CONNACK refused, code " + std::to_string(static_cast<int>(ack.code)));
      return;
    }
    bool reconnect = first_connect_done_;
    connected_ = true;
    session_present_ = ack.session_present;
    if (!config_.clean_session) {
      auto resend = session_.resend_unacked(clock_.now());
      if (!resend.empty()) write(std::move(resend));
    }
    if (reconnect && !ack.session_present && !subscriptions_.empty()) {
      write(session_.subscribe(subscriptions_, clock_.now()).bytes);
    }
    schedule_keepalive();
    log::info("connected", config_.client_id, {}, std::string("session_present=") + (ack.session_present ? "1" : "0"));
    if (!first_connect_done_) {
      first_connect_done_ = true;
      connect_promise_.set_value();
    }
  }

  void dispatch(InboundMessage message) {
    MessageHandler handler;
    {
      std::lock_guard lock(handler_mu_);
      handler = handler_;
    }
    if (handler) {
      handler(message);
      return;
    }
    {
      std::lock_guard lock(inbox_mu_);
      inbox_.push_back(std::move(message));
    }
    inbox_cv_.notify_one();
  }

  void schedule_keepalive() {
    if (config_.keepalive_s == 0) return;
    auto period = std::max<std::chrono::milliseconds>(100ms, std::chrono::seconds(config_.keepalive_s) / 4);
    keepalive_timer_.expires_after(period);
    auto gen = generation_;
    keepalive_timer_.async_wait([this, gen](boost::system::error_code e) {
      if (e || gen != generation_ || !connected_) return;
      auto now = clock_.now();
      if (session_.broker_silent(now)) {
        on_lost("broker silent beyond keepalive");
        return;
      }
      if (auto ping = session_.drive_keepalive(now)) write(std::move(*ping));
      schedule_keepalive();
    });
  }

  void do_publish(const std::shared_ptr<DeliveryToken::State>& state, const std::string& topic,
                  const std::string& payload, QoS qos, bool retain) {
    if (!connected_) {
      bool will_retry = qos == QoS::at_least_once && !closed_ && !config_.clean_session &&
                        config_.reconnect == ReconnectPolicy::fixed_delay;
      if (!will_retry) {
        state->settle(DeliveryStatus::failed);
        return;
      }
      auto out = session_.publish(topic, payload, qos, retain, clock_.now());
      qos1_tokens_[out.packet_id] = state;
      return;
    }
    ClientSession::Outgoing out;
    try {
      out = session_.publish(topic, payload, qos, retain, clock_.now());
    } catch (const mqtt::InvalidPacket& e) {
      log::warn("publish_rejected", config_.client_id, topic, e.what());
      state->settle(DeliveryStatus::failed);
      return;
    }
    if (qos == QoS::at_least_once) {
      qos1_tokens_[out.packet_id] = state;
      write(std::move(out.bytes));
    } else {
      qos0_tokens_.push_back(state);
      write(std::move(out.bytes), [this, state] {
        std::erase(qos0_tokens_, state);
        state->settle(DeliveryStatus::delivered);
      });
    }
  }

  void write(mqtt::Bytes bytes, std::function<void()> on_written = nullptr) {
    writes_.push_back({std::move(bytes), std::move(on_written)});
    if (!writing_) write_next();
  }

  void write_next() {
    if (writes_.empty()) {
      writing_ = false;
      return;
    }
    writing_ = true;
    auto gen = generation_;
    asio::async_write(socket_, asio::buffer(writes_.front().bytes),
                      [this, gen](boost::system::error_code e, std::size_t) {
                        if (gen != generation_) return;
                        if (e) {
                          on_lost("write: " + e.message());
                          return;
                        }
                        auto done = std::move(writes_.front().on_written);
                        writes_.pop_front();
                        if (done) done();
                        write_next();
                      });
  }

  ClientConfig config_;
  SteadyClock clock_;
  ClientSession session_;
  asio::io_context io_;
  tcp::socket socket_;
  tcp::resolver resolver_;
  asio::steady_timer connect_timer_;
  asio::steady_timer keepalive_timer_;
  asio::steady_timer reconnect_timer_;
  asio::executor_work_guard<asio::io_context::executor_type> work_;
  std::thread thread_;

  std::array<std::uint8_t, 16384> read_buf_{};
  std::deque<PendingWrite> writes_;
  bool writing_ = false;
  std::uint64_t generation_ = 0;
  bool first_connect_done_ = false;
  std::promise<void> connect_promise_;
  std::shared_ptr<std::promise<void>> disconnect_waiter_;

  std::map<std::uint16_t, std::shared_ptr<DeliveryToken::State>> qos1_tokens_;
  std::vector<std::shared_ptr<DeliveryToken::State>> qos0_tokens_;
  std::map<std::uint16_t, std::shared_ptr<std::promise<std::vector<std::uint8_t>>>> suback_waiters_;
  std::vector<mqtt::TopicRequest> subscriptions_;

  std::atomic<bool> connected_{false};
  std::atomic<bool> session_present_{false};
  std::atomic<bool> closed_{false};

  std::mutex handler_mu_;
  MessageHandler handler_;
  std::mutex inbox_mu_;
  std::condition_variable inbox_cv_;
  std::deque<InboundMessage> inbox_;
};

std::unique_ptr<Client> Client::connect(const ClientConfig& config) {
  if (config.client_id.empty() || config.client_id.size() > 64) {
    throw ClientError(ClientError::Kind::invalid_config, "client_id must be 1..64 characters");
  }
  auto impl = std::make_unique<Impl>(config);
  impl->start();
  return std::unique_ptr<Client>(new Client(std::move(impl)));
}

Client::Client(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
Client::~Client() = default;

const std::string& Client::client_id() const { return impl_->client_id(); }
bool Client::session_present() const { return impl_->session_present(); }
bool Client::connected() const { return impl_->connected(); }

DeliveryToken Client::publish_async(const std::string& topic, const std::string& payload, QoS qos, bool retain) {
  return impl_->publish(topic, payload, qos, retain);
}

void Client::publish(const std::string& topic, const std::string& payload, QoS qos, bool retain) {
  impl_->publish(topic, payload, qos, retain);
}

std::vector<std::uint8_t> Client::subscribe_codes(const std::vector<mqtt::TopicRequest>& filters) {
  return impl_->subscribe(filters);
}

void Client::subscribe(const std::vector<mqtt::TopicRequest>& filters) {
  auto codes = subscribe_codes(filters);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] == mqtt::kSubackFailure) {
      throw ClientError(ClientError::Kind::subscribe_failed,
                        "subscription refused for " + (i < filters.size() ? filters[i].filter : "?"));
    }
  }
}

void Client::unsubscribe(const std::vector<std::string>& filters) { impl_->unsubscribe(filters); }
void Client::set_handler(MessageHandler handler) { impl_->set_handler(std::move(handler)); }
std::optional<InboundMessage> Client::receive(std::chrono::milliseconds timeout) { return impl_->receive(timeout); }
void Client::disconnect() { impl_->disconnect(); }
void Client::kill_connection() { impl_->kill_connection(); }

}  // namespace aal::client
