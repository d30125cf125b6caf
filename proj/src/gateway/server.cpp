#include "aal/gateway/server.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <condition_variable>
#include <deque>
#include <json.hpp>
#include <map>
#include <mutex>
#include <thread>

#include "aal/client/client.hpp"
#include "aal/common/log.hpp"
#include "aal/gateway/core.hpp"
#include "aal/qr/sizing.hpp"

namespace aal::gateway {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using nlohmann::json;

namespace {

std::string percent_decode(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size()) {
      out += static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16));
      i += 2;
    } else if (s[i] == '+') {
      out += ' ';
    } else {
      out += s[i];
    }
  }
  return out;
}

struct Target {
  std::string path;
  std::map<std::string, std::string> query;
};

Target parse_target(std::string_view target) {
  Target t;
  auto q = target.find('?');
  t.path = std::string(target.substr(0, q));
  if (q == std::string_view::npos) return t;
  auto rest = target.substr(q + 1);
  while (!rest.empty()) {
    auto amp = rest.find('&');
    auto pair = rest.substr(0, amp);
    auto eq = pair.find('=');
    try {
      if (eq == std::string_view::npos) {
        t.query[percent_decode(pair)] = "";
      } else {
        t.query[percent_decode(pair.substr(0, eq))] = percent_decode(pair.substr(eq + 1));
      }
    } catch (const std::exception&) {
      // malformed escape: skip the pair
    }
    if (amp == std::string_view::npos) break;
    rest = rest.substr(amp + 1);
  }
  return t;
}

qr::QrSizingInput qr_input_from_query(const std::map<std::string, std::string>& q) {
  qr::QrSizingInput in;
  auto num = [&](const char* key, double& field) {
    if (auto it = q.find(key); it != q.end()) {
      std::size_t used = 0;
      field = std::stod(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument(std::string("bad number for ") + key);
    }
  };
  auto flag = [&](const char* key, bool& field) {
    if (auto it = q.find(key); it != q.end()) field = it->second.empty() || it->second == "1" || it->second == "true";
  };
  double modules = in.modules_per_side, ppm = in.pixels_per_module;
  num("d_scan_mm", in.d_scan_mm);
  num("modules", modules);
  num("px_per_module", ppm);
  num("fov_mm", in.fov_mm);
  num("resolution_px", in.resolution_pixels);
  num("aspect", in.aspect_phi);
  flag("poor_lighting", in.conditions.poor_lighting);
  flag("mid_light", in.conditions.mid_light_colored_code);
  flag("not_front_on", in.conditions.not_front_on);
  in.modules_per_side = static_cast<int>(modules);
  in.pixels_per_module = static_cast<int>(ppm);
  if (in.modules_per_side != modules || in.pixels_per_module != ppm) {
    throw std::invalid_argument("modules and px_per_module must be integers");
  }
  return in;
}

}  // namespace

class Gateway::Impl {
 public:
  explicit Impl(GatewayConfig config)
      : config_(std::move(config)),
        core_([this](const std::string& topic, const std::string& payload, std::function<void(bool)> done) {
          forward(topic, payload, std::move(done));
        }) {}

  ~Impl() { stop(); }

  void bind() {
    tcp::endpoint ep(asio::ip::make_address(config_.bind_address), config_.port);
    acceptor_.open(ep.protocol());
    acceptor_.set_option(asio::socket_base::reuse_address(true));
    acceptor_.bind(ep);
    acceptor_.listen();
    port_ = acceptor_.local_endpoint().port();
    log::info("gateway_listening", {}, {}, config_.bind_address + ":" + std::to_string(port_));
    do_accept();
    upstream_thread_ = std::thread([this] { supervise(); });
  }

  void start() {
    bind();
    io_thread_ = std::thread([this] { io_.run(); });
  }

  void run() {
    bind();
    io_.run();
  }

  void stop() {
    {
      std::lock_guard lock(up_mu_);
      if (stopping_) return;
      stopping_ = true;
    }
    up_cv_.notify_all();
    if (upstream_thread_.joinable()) upstream_thread_.join();
    work_.reset();
    io_.stop();
    if (io_thread_.joinable()) io_thread_.join();
    beast::error_code ec;
    acceptor_.close(ec);
  }

  std::uint16_t port() const { return port_; }

  bool broker_connected() const {
    std::lock_guard lock(up_mu_);
    return upstream_ && upstream_->connected();
  }

  Core& core() { return core_; }
  asio::io_context& io() { return io_; }
  const GatewayConfig& config() const { return config_; }

 private:
  void do_accept();

  void forward(const std::string& topic, const std::string& payload, std::function<void(bool)> done) {
    std::shared_ptr<client::Client> up;
    {
      std::lock_guard lock(up_mu_);
      up = upstream_;
    }
    if (!up || !up->connected()) return done(false);
    auto token = up->publish_async(topic, payload, mqtt::QoS::at_least_once, false);
    token.on_complete([done = std::move(done)](client::DeliveryStatus s) { done(s == client::DeliveryStatus::delivered); });
  }

  // Keeps one upstream session alive, retrying with exponential backoff.
  void supervise() {
    client::ClientConfig cfg;
    cfg.client_id = config_.client_id;
    cfg.keepalive_s = 5;
    client::parse_broker_address(config_.broker, cfg);
    auto backoff = config_.backoff_min;
    std::unique_lock lock(up_mu_);
    while (!stopping_) {
      lock.unlock();
      std::shared_ptr<client::Client> c;
      try {
        c = client::Client::connect(cfg);
        c->set_handler([this](const client::InboundMessage& m) { core_.on_message(m); });
        std::vector<mqtt::TopicRequest> filters;
        for (const auto& f : kUpstreamFilters) filters.push_back({f, 1});
        c->subscribe(filters);
        log::info("gateway_upstream_connected", cfg.client_id, {}, config_.broker);
      } catch (const client::ClientError& e) {
        log::warn("gateway_upstream_unavailable", cfg.client_id, {}, e.what());
        c.reset();
      }
      lock.lock();
      if (c) {
        upstream_ = c;
        backoff = config_.backoff_min;
        while (!stopping_ && c->connected()) up_cv_.wait_for(lock, std::chrono::milliseconds(100));
        upstream_.reset();
        lock.unlock();
        if (!stopping_) log::warn("gateway_upstream_lost", cfg.client_id);
        c->disconnect();
        c.reset();
        lock.lock();
      } else {
        up_cv_.wait_for(lock, backoff, [&] { return stopping_; });
        backoff = std::min(backoff * 2, config_.backoff_max);
      }
    }
  }

  GatewayConfig config_;
  Core core_;
  asio::io_context io_;
  std::optional<asio::executor_work_guard<asio::io_context::executor_type>> work_{asio::make_work_guard(io_)};
  tcp::acceptor acceptor_{io_};
  std::uint16_t port_ = 0;
  std::thread io_thread_;

  mutable std::mutex up_mu_;
  std::condition_variable up_cv_;
  bool stopping_ = false;
  std::shared_ptr<client::Client> upstream_;
  std::thread upstream_thread_;
};

namespace {

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket socket, Gateway::Impl& gw) : ws_(std::move(socket)), gw_(gw) {}

  ~WsSession() {
    if (sink_id_) gw_.core().detach(sink_id_);
  }

  void start(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.text(true);
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    std::weak_ptr<WsSession> weak = shared_from_this();
    auto& io = gw_.io();
    auto [id, snapshot] = gw_.core().attach([weak, &io](const GatewayEvent& e) {
      asio::post(io, [weak, e] {
        if (auto s = weak.lock()) s->send_event(e);
      });
    });
    sink_id_ = id;
    for (const auto& e : snapshot) send_event(e);
    do_read();
  }

  void send_event(const GatewayEvent& e) { enqueue(event_frame(++seq_, e)); }

  void enqueue(std::string frame) {
    if (closed_) return;
    if (out_.size() >= gw_.config().max_queued_frames) {
      log::warn("gateway_slow_consumer", {}, {}, "closing connection");
      fail();
      return;
    }
    out_.push_back(std::move(frame));
    if (out_.size() == 1) do_write();
  }

  void do_write() {
    ws_.async_write(asio::buffer(out_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->fail();
      self->out_.pop_front();
      if (!self->out_.empty() && !self->closed_) self->do_write();
    });
  }

  void do_read() {
    ws_.async_read(in_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->fail();
      auto text = beast::buffers_to_string(self->in_.data());
      self->in_.consume(self->in_.size());
      std::weak_ptr<WsSession> weak = self;
      auto& io = self->gw_.io();
      self->gw_.core().handle_command(text, [weak, &io](std::string reply) {
        asio::post(io, [weak, reply = std::move(reply)]() mutable {
          if (auto s = weak.lock()) s->enqueue(std::move(reply));
        });
      });
      self->do_read();
    });
  }

  void fail() {
    if (closed_) return;
    closed_ = true;
    if (sink_id_) gw_.core().detach(std::exchange(sink_id_, 0));
    beast::error_code ec;
    beast::get_lowest_layer(ws_).socket().close(ec);
  }

  websocket::stream<beast::tcp_stream> ws_;
  Gateway::Impl& gw_;
  beast::flat_buffer in_;
  std::deque<std::string> out_;
  std::uint64_t seq_ = 0;
  std::uint64_t sink_id_ = 0;
  bool closed_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket socket, Gateway::Impl& gw) : stream_(std::move(socket)), gw_(gw) {}

  void start() { do_read(); }

 private:
  using Response = http::response<http::string_body>;

  void do_read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buf_, req_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec) {
    if (ec) {
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    auto target = parse_target(std::string_view(req_.target().data(), req_.target().size()));
    if (websocket::is_upgrade(req_)) {
      if (target.path != "/events") return send(plain(http::status::not_found, R"({"error":"not found"})"));
      if (!authorized(target)) return send(plain(http::status::unauthorized, R"({"error":"bad or missing token"})"));
      if (!gw_.broker_connected()) {
        return send(plain(http::status::service_unavailable, R"({"error":"broker unavailable"})"));
      }
      stream_.expires_never();
      std::make_shared<WsSession>(stream_.release_socket(), gw_)->start(std::move(req_));
      return;
    }
    send(route(target));
  }

  bool authorized(const Target& target) const {
    const auto& token = gw_.config().token;
    if (token.empty()) return true;
    if (auto it = target.query.find("token"); it != target.query.end() && it->second == token) return true;
    auto auth = req_[http::field::authorization];
    return std::string_view(auth.data(), auth.size()) == "Bearer " + token;
  }

  Response plain(http::status status, std::string body) const {
    Response res{status, req_.version()};
    res.set(http::field::content_type, "application/json");
    res.keep_alive(req_.keep_alive());
    res.body() = std::move(body);
    res.prepare_payload();
    return res;
  }

  Response route(const Target& target) const {
    if (req_.method() != http::verb::get) return plain(http::status::method_not_allowed, R"({"error":"GET only"})");
    if (target.path == "/health") {
      bool up = gw_.broker_connected();
      return plain(up ? http::status::ok : http::status::service_unavailable,
                   json{{"status", up ? "ok" : "unavailable"}, {"broker_connected", up}}.dump());
    }
    if (target.path == "/qr-size") {
      try {
        auto in = qr_input_from_query(target.query);
        return plain(http::status::ok, qr::report_json(in, qr::min_qr_size(in)));
      } catch (const std::exception& e) {
        return plain(http::status::bad_request, json{{"error", e.what()}}.dump());
      }
    }
    if (target.path == "/events") return plain(http::status::upgrade_required, R"({"error":"websocket only"})");
    return plain(http::status::not_found, R"({"error":"not found"})");
  }

  void send(Response res) {
    auto msg = std::make_shared<Response>(std::move(res));
    http::async_write(stream_, *msg, [self = shared_from_this(), msg](beast::error_code ec, std::size_t) {
      if (ec || msg->need_eof()) {
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
        return;
      }
      self->do_read();
    });
  }

  beast::tcp_stream stream_;
  Gateway::Impl& gw_;
  beast::flat_buffer buf_;
  http::request<http::string_body> req_;
};

}  // namespace

void Gateway::Impl::do_accept() {
  acceptor_.async_accept(io_, [this](beast::error_code ec, tcp::socket socket) {
    if (ec) {
      if (ec == asio::error::operation_aborted) return;
      log::warn("gateway_accept_failed", {}, {}, ec.message());
    } else {
      std::make_shared<HttpSession>(std::move(socket), *this)->start();
    }
    do_accept();
  });
}

Gateway::Gateway(GatewayConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}
Gateway::~Gateway() = default;
void Gateway::start() { impl_->start(); }
void Gateway::run() { impl_->run(); }
void Gateway::stop() { impl_->stop(); }
std::uint16_t Gateway::port() const { return impl_->port(); }
bool Gateway::broker_connected() const { return impl_->broker_connected(); }
std::size_t Gateway::connection_count() const { return impl_->core().connections(); }

}  // namespace aal::gateway
