#include "aal/bench/harness.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include "aal/broker/tcp_server.hpp"
#include "aal/client/client.hpp"
#include "aal/common/log.hpp"
#include "aal/devices/fleet.hpp"
#include "aal/rules/engine.hpp"

namespace aal::bench {

std::string_view to_string(Kind k) { return k == Kind::audio ? "audio" : "image"; }

std::optional<Kind> parse_kind(std::string_view name) {
  if (name == "audio") return Kind::audio;
  if (name == "image") return Kind::image;
  return std::nullopt;
}

std::optional<double> LatencySample::latency_ms() const {
  if (!t_render) return std::nullopt;
  return static_cast<double>((*t_render - t_publish).count()) / 1e6;
}

double nearest_rank(const std::vector<double>& sorted, double percent) {
  auto n = sorted.size();
  auto rank = static_cast<std::size_t>(std::ceil(percent / 100.0 * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  return sorted[rank - 1];
}

TrialReport stats(Kind kind, const std::vector<LatencySample>& samples) {
  TrialReport r;
  r.kind = kind;
  r.n = static_cast<int>(samples.size());
  std::vector<double> v;
  for (const auto& s : samples) {
    if (auto l = s.latency_ms()) v.push_back(*l);
  }
  r.received = static_cast<int>(v.size());
  r.loss_count = samples.size() - v.size();
  if (v.empty()) {
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    r.mean_ms = r.std_ms = r.min_ms = r.max_ms = r.p50_ms = r.p95_ms = nan;
    return r;
  }
  std::sort(v.begin(), v.end());
  double sum = std::accumulate(v.begin(), v.end(), 0.0);
  r.mean_ms = sum / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0;
    for (double x : v) ss += (x - r.mean_ms) * (x - r.mean_ms);
    r.std_ms = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  r.min_ms = v.front();
  r.max_ms = v.back();
  r.p50_ms = nearest_rank(v, 50);
  r.p95_ms = nearest_rank(v, 95);
  return r;
}

std::size_t loss_audit(const std::vector<std::uint64_t>& sent, const std::vector<std::uint64_t>& received) {
  std::set<std::uint64_t> got(received.begin(), received.end());
  std::set<std::uint64_t> want(sent.begin(), sent.end());
  std::size_t lost = 0;
  for (auto id : want) lost += !got.count(id);
  return lost;
}

void write_csv(const std::vector<LatencySample>& samples, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const auto& s : samples) {
    out << fmt::format("{},{},{},", s.trial, to_string(s.kind), s.t_publish.count());
    if (s.t_render) {
      // Integer nanoseconds printed as milliseconds with six decimals: exact.
      auto d = (*s.t_render - s.t_publish).count();
      out << fmt::format("{},{}{}.{:06d}", s.t_render->count(), d < 0 ? "-" : "", std::llabs(d) / 1000000,
                         std::llabs(d) % 1000000);
    } else {
      out << ',';
    }
    out << '\n';
  }
}

void export_csv(const std::vector<LatencySample>& samples, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  write_csv(samples, f);
}

std::string report_text(const TrialReport& r, const patient::RenderCosts& costs) {
  auto num = [](double v) { return std::isnan(v) ? std::string("-") : fmt::format("{:.6f}", v); };
  std::string out;
  out += fmt::format("bench kind={} n={} received={} loss_count={}\n", to_string(r.kind), r.n, r.received,
                     r.loss_count);
  out += fmt::format("  mean_ms  {}\n", std::isnan(r.mean_ms) ? "-" : fmt::format("{:.9f}", r.mean_ms));
  out += fmt::format("  std_ms   {}\n", num(r.std_ms));
  out += fmt::format("  min_ms   {}\n", num(r.min_ms));
  out += fmt::format("  p50_ms   {}\n", num(r.p50_ms));
  out += fmt::format("  p95_ms   {}\n", num(r.p95_ms));
  out += fmt::format("  max_ms   {}\n", num(r.max_ms));
  auto cost = r.kind == Kind::audio ? costs.audio : costs.image;
  out += fmt::format("  configured render cost {:.3f} ms\n", to_ms(cost));
  out += "reference device means (phone hardware, not a desk-scale target): audio 364 ms, image 106 ms\n";
  return out;
}

namespace {

using client::Client;
using client::ClientConfig;

// Private broker (unless an address is given) plus the home components, all
// on real TCP connections against a monotonic clock.
class Rig {
 public:
  explicit Rig(const std::string& broker_address) {
    if (broker_address.empty()) {
      broker::ServerConfig sc;
      sc.port = 0;
      server_ = std::make_unique<broker::TcpServer>(sc);
      server_->start();
      base_.port = server_->port();
    } else {
      client::parse_broker_address(broker_address, base_);
    }
  }

  ~Rig() {
    for (auto& c : clients_) c->disconnect();
  }

  std::shared_ptr<Client> connect(const std::string& id) {
    auto cfg = base_;
    cfg.client_id = "bench-" + id;
    std::shared_ptr<Client> c(Client::connect(cfg));
    clients_.push_back(c);
    return c;
  }

  void start_home(const patient::RenderCosts& costs) {
    fleet_ = std::make_unique<devices::Fleet>(
        devices::default_topology(), [this](const std::string& id) { return connect(id); }, clock_);
    fleet_->start();
    engine_ = std::make_unique<rules::EngineNode>(rules::default_rules(), connect("rules"), clock_);
    engine_->start();
    agent_ = std::make_unique<patient::Agent>(connect("patient"), clock_, costs);
    agent_->start();
    publisher_ = connect("publisher");
  }

  const SteadyClock& clock() const { return clock_; }
  devices::Fleet& fleet() { return *fleet_; }
  patient::Agent& agent() { return *agent_; }
  Client& publisher() { return *publisher_; }

 private:
  SteadyClock clock_;
  std::unique_ptr<broker::TcpServer> server_;
  ClientConfig base_;
  std::vector<std::shared_ptr<Client>> clients_;
  std::unique_ptr<devices::Fleet> fleet_;
  std::unique_ptr<rules::EngineNode> engine_;
  std::unique_ptr<patient::Agent> agent_;
  std::shared_ptr<Client> publisher_;
};

constexpr std::string_view kDrawerSet = "home/bedroom/drawer_relay/set";

std::uint64_t last_id(const patient::Agent& agent) {
  std::uint64_t id = 0;
  for (const auto& e : agent.render_log()) id = std::max(id, e.notif_id);
  return id;
}

void sleep_until_renders_done(const patient::Agent& agent, const Clock& clock) {
  Nanos done{0};
  for (const auto& e : agent.render_log()) done = std::max(done, e.render_complete);
  auto now = clock.now();
  if (done > now) std::this_thread::sleep_for(done - now);
}

bool wait_state(devices::Fleet& fleet, const std::string& id, const std::string& value,
                std::chrono::milliseconds timeout) {
  auto deadline = std::chrono::steady_clock::now() + timeout;
  while (fleet.state(id) != value) {
    if (std::chrono::steady_clock::now() > deadline) return false;
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  return true;
}

}  // namespace

std::vector<LatencySample> run_trials(const BenchConfig& config) {
  if (config.n < 1) throw std::invalid_argument("n must be >= 1");
  SteadyClock fallback;
  std::vector<LatencySample> samples;
  auto all_lost = [&] {
    for (int i = static_cast<int>(samples.size()) + 1; i <= config.n; ++i) {
      samples.push_back({i, config.kind, fallback.now(), std::nullopt});
    }
    return samples;
  };

  std::unique_ptr<Rig> rig;
  try {
    rig = std::make_unique<Rig>(config.broker);
    rig->start_home(config.costs);
  } catch (const client::ClientError& e) {
    log::warn("bench_broker_unavailable", {}, {}, e.what());
    return all_lost();
  }

  const bool audio = config.kind == Kind::audio;
  const std::string rule = audio ? "scenario1_medication" : "scenario2_family";
  const auto modality = audio ? rules::Modality::audio : rules::Modality::image3d;

  for (int i = 1; i <= config.n; ++i) {
    auto& agent = rig->agent();
    auto baseline = last_id(agent);
    LatencySample s{i, config.kind, Nanos{0}, std::nullopt};
    try {
      s.t_publish = rig->clock().now();
      if (audio) {
        rig->publisher().publish(std::string(kDrawerSet), "1", mqtt::QoS::at_least_once, false);
      } else {
        agent.scan_qr("bedroom_door", Nanos{0});
      }
      auto hit = agent.wait_for(
          [&](const patient::RenderLogEntry& e) {
            return e.notif_id > baseline && e.rule_id == rule && e.modality == modality;
          },
          config.trial_timeout);
      if (hit) s.t_render = hit->render_complete;
    } catch (const client::ClientError& e) {
      log::warn("bench_trial_failed", {}, {}, e.what());
    }
    samples.push_back(s);
    // Serial trials: the next one starts on an idle agent and a reset relay.
    sleep_until_renders_done(agent, rig->clock());
    if (audio) {
      rig->publisher().publish(std::string(kDrawerSet), "0", mqtt::QoS::at_least_once, false);
      wait_state(rig->fleet(), "drawer_relay", "0", config.trial_timeout);
    }
  }
  return samples;
}

TransferAudit run_transfer_audit(std::size_t count, const std::string& broker_address,
                                 std::chrono::milliseconds timeout) {
  TransferAudit audit;
  std::vector<std::uint64_t> sent;
  std::vector<std::uint64_t> received;
  std::mutex mu;
  std::condition_variable cv;
  try {
    Rig rig(broker_address);
    auto sub = rig.connect("audit-sub");
    sub->set_handler([&](const client::InboundMessage& m) {
      std::lock_guard lock(mu);
      received.push_back(std::stoull(m.payload));
      cv.notify_all();
    });
    sub->subscribe({{"bench/audit/#", 1}});
    auto pub = rig.connect("audit-pub");
    for (std::size_t i = 1; i <= count; ++i) {
      sent.push_back(i);
      pub->publish("bench/audit/transfer", std::to_string(i), mqtt::QoS::at_least_once, false);
    }
    std::unique_lock lock(mu);
    cv.wait_for(lock, timeout, [&] { return std::set(received.begin(), received.end()).size() >= count; });
  } catch (const client::ClientError& e) {
    log::warn("bench_broker_unavailable", {}, {}, e.what());
  }
  // First occurrences only: QoS 1 may legitimately redeliver.
  std::set<std::uint64_t> seen;
  std::uint64_t prev = 0;
  for (auto id : received) {
    if (!seen.insert(id).second) continue;
    if (id <= prev) audit.in_order = false;
    prev = id;
  }
  audit.sent = sent.size();
  audit.received = seen.size();
  audit.loss_count = loss_audit(sent, received);
  return audit;
}

}  // namespace aal::bench
