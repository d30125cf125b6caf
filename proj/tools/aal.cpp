// aal: single entry point for every home component.

#include <fmt/format.h>
#include <signal.h>

#include <CLI11.hpp>
#include <atomic>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "aal/bench/harness.hpp"
#include "aal/broker/tcp_server.hpp"
#include "aal/client/client.hpp"
#include "aal/common/log.hpp"
#include "aal/devices/fleet.hpp"
#include "aal/gateway/server.hpp"
#include "aal/patient/agent.hpp"
#include "aal/qr/sizing.hpp"
#include "aal/rules/engine.hpp"

using namespace aal;

namespace {

sigset_t shutdown_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  return set;
}

// Returns true once SIGINT/SIGTERM arrived; otherwise waits up to `timeout`.
bool shutdown_requested(std::chrono::milliseconds timeout) {
  auto set = shutdown_signals();
  timespec ts{static_cast<time_t>(timeout.count() / 1000), static_cast<long>(timeout.count() % 1000) * 1'000'000};
  return sigtimedwait(&set, nullptr, &ts) > 0;
}

std::shared_ptr<client::Client> connect_link(const std::string& broker, const std::string& client_id,
                                             bool clean = true) {
  client::ClientConfig cfg;
  client::parse_broker_address(broker, cfg);
  cfg.client_id = client_id;
  cfg.clean_session = clean;
  cfg.reconnect = client::ReconnectPolicy::fixed_delay;
  return client::Client::connect(cfg);
}

int run_broker(std::uint16_t port, std::uint32_t max_packet, std::size_t queue_cap, const std::string& snapshot) {
  broker::ServerConfig cfg;
  cfg.bind_address = "0.0.0.0";
  cfg.port = port;
  cfg.broker.max_packet_bytes = max_packet;
  cfg.broker.offline_queue_cap = queue_cap;
  if (!snapshot.empty()) cfg.snapshot_path = snapshot;
  broker::TcpServer server(cfg);
  server.start();
  std::cout << "broker listening on port " << server.port() << std::endl;
  while (!shutdown_requested(std::chrono::seconds(1))) {
  }
  server.stop();
  return 0;
}

struct DeviceOptions {
  std::string config;
  std::string broker = "127.0.0.1:1883";
  std::string mode = "wall";
  std::string script;
};

int run_devices(const DeviceOptions& o) {
  auto topology = o.config.empty() ? devices::default_topology() : devices::load_topology(o.config);
  std::vector<devices::ScriptEvent> script;
  if (!o.script.empty()) {
    std::ifstream in(o.script);
    if (!in) throw std::runtime_error("cannot open script " + o.script);
    script = devices::parse_script(in);
  }
  std::vector<std::shared_ptr<client::Client>> clients;
  auto links = [&](const std::string& id) {
    auto c = connect_link(o.broker, id);
    clients.push_back(c);
    return c;
  };

  if (o.mode == "virtual") {
    // Script time runs as fast as the broker accepts the publishes.
    ManualClock clock;
    devices::Fleet fleet(topology, links, clock);
    fleet.start();
    for (const auto& ev : script) {
      clock.set(ev.at);
      fleet.step(ev.at);
      fleet.inject(ev.device_id, ev.value, ev.at);
      std::cout << fmt::format("{} {} {}", to_whole_ms(ev.at), ev.device_id, ev.value) << std::endl;
    }
    for (auto& c : clients) c->disconnect();
    return 0;
  }
  if (o.mode != "wall") throw CLI::ValidationError("--mode", "must be virtual or wall");

  SteadyClock clock;
  devices::Fleet fleet(topology, links, clock);
  fleet.start();
  auto origin = clock.now();
  std::size_t next = 0;
  while (true) {
    auto t = clock.now() - origin;
    fleet.step(t);
    for (; next < script.size() && script[next].at <= t; ++next) {
      fleet.inject(script[next].device_id, script[next].value, t);
    }
    if (shutdown_requested(std::chrono::milliseconds(50))) break;
  }
  for (auto& c : clients) c->disconnect();
  return 0;
}

int run_rules(const std::string& config, const std::string& broker) {
  auto rules = config.empty() ? rules::default_rules() : rules::load_rules(config);
  SteadyClock clock;
  auto link = connect_link(broker, "rules");
  rules::EngineNode node(std::move(rules), link, clock);
  node.start();
  std::size_t printed = 0;
  while (true) {
    node.tick();
    auto trace = node.trace();
    for (; printed < trace.size(); ++printed) std::cout << trace[printed] << std::endl;
    if (shutdown_requested(std::chrono::milliseconds(100))) break;
  }
  link->disconnect();
  return 0;
}

// stdin commands: "scan <tag> [latency_ms]", "confirm <notif_id>".
void patient_commands(patient::Agent& agent, std::atomic<bool>& done) {
  std::mt19937_64 rng(std::random_device{}());
  std::string line;
  while (!done && std::getline(std::cin, line)) {
    std::istringstream in(line);
    std::string cmd;
    in >> cmd;
    try {
      if (cmd == "scan") {
        std::string tag;
        double latency_ms = -1;
        in >> tag >> latency_ms;
        auto latency = latency_ms >= 0 ? Nanos(static_cast<std::int64_t>(latency_ms * 1e6)) : patient::random_scan_latency(rng);
        auto out = agent.scan_qr(tag, latency);
        std::cerr << fmt::format("scan {} {:.3f}s {}", tag, to_ms(latency) / 1000,
                                 out == patient::ScanOutcome::detected ? "detected" : "timeout")
                  << std::endl;
      } else if (cmd == "confirm") {
        std::uint64_t id = 0;
        in >> id;
        agent.confirm(id);
      } else if (!cmd.empty()) {
        std::cerr << "unknown command: " << cmd << std::endl;
      }
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << std::endl;
    }
  }
}

int run_patient(const std::string& broker, const std::string& client_id, bool persistent,
                const std::string& render_costs) {
  auto costs = render_costs.empty() ? patient::RenderCosts{} : patient::parse_render_costs(render_costs);
  SteadyClock clock;
  auto link = connect_link(broker, client_id, !persistent);
  patient::Agent agent(link, clock, costs);
  agent.start();
  std::atomic<bool> done{false};
  std::thread input([&] { patient_commands(agent, done); });
  input.detach();
  std::size_t printed = 0;
  while (true) {
    auto log = agent.render_log();
    for (; printed < log.size(); ++printed) std::cout << log[printed].to_json() << std::endl;
    if (shutdown_requested(std::chrono::milliseconds(50))) break;
  }
  done = true;
  link->disconnect();
  return 0;
}

int run_gateway(std::uint16_t port, const std::string& broker, const std::string& token) {
  gateway::GatewayConfig cfg;
  cfg.bind_address = "0.0.0.0";
  cfg.port = port;
  cfg.broker = broker;
  cfg.token = token;
  gateway::Gateway gw(cfg);
  gw.start();
  std::cout << "gateway listening on port " << gw.port() << std::endl;
  while (!shutdown_requested(std::chrono::seconds(1))) {
  }
  gw.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // Signals are consumed synchronously with sigtimedwait; block them in every thread.
  auto sigs = shutdown_signals();
  pthread_sigmask(SIG_BLOCK, &sigs, nullptr);

  CLI::App app{"Ambient assisted living home: broker, devices, rules, patient agent, gateway, tools"};
  app.require_subcommand(1);
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off")->capture_default_str();

  auto* broker_cmd = app.add_subcommand("broker", "MQTT 3.1.1 broker");
  std::uint16_t broker_port = 1883;
  std::uint32_t max_packet = mqtt::kDefaultMaxPacketBytes;
  std::size_t queue_cap = 1024;
  std::string snapshot;
  broker_cmd->add_option("--port", broker_port)->capture_default_str();
  broker_cmd->add_option("--max-packet-bytes", max_packet)->capture_default_str();
  broker_cmd->add_option("--offline-queue-cap", queue_cap)->capture_default_str();
  broker_cmd->add_option("--snapshot-path", snapshot, "persist retained messages and sessions here");
  broker_cmd->add_option("--log-level", log_level);

  auto* dev_cmd = app.add_subcommand("devices", "Simulated sensors and actuators");
  DeviceOptions dev;
  dev_cmd->add_option("--config", dev.config, "topology JSON (default: built-in home)");
  dev_cmd->add_option("--broker", dev.broker)->capture_default_str();
  dev_cmd->add_option("--mode", dev.mode, "virtual|wall")->check(CLI::IsMember({"virtual", "wall"}))->capture_default_str();
  dev_cmd->add_option("--script", dev.script, "event file: <ms> <device_id> <value> per line");

  auto* rules_cmd = app.add_subcommand("rules", "Scenario rule engine");
  std::string rules_config;
  std::string rules_broker = "127.0.0.1:1883";
  rules_cmd->add_option("--config", rules_config, "rules JSON (default: built-in scenarios)");
  rules_cmd->add_option("--broker", rules_broker)->capture_default_str();

  auto* pat_cmd = app.add_subcommand("patient", "Patient-side agent; render log on stdout, commands on stdin");
  std::string pat_broker = "127.0.0.1:1883";
  std::string pat_id = "patient";
  bool persistent = false;
  std::string render_costs;
  pat_cmd->add_option("--broker", pat_broker)->capture_default_str();
  pat_cmd->add_option("--client-id", pat_id)->capture_default_str();
  pat_cmd->add_flag("--persistent", persistent, "clean_session=false");
  pat_cmd->add_option("--render-costs", render_costs, "t_audio_ms,t_image_ms (default 364,106)");

  auto* gw_cmd = app.add_subcommand("gateway", "Dashboard bridge: WebSocket /events, GET /health");
  std::uint16_t gw_port = 8080;
  std::string gw_broker = "127.0.0.1:1883";
  std::string token;
  gw_cmd->add_option("--port", gw_port)->capture_default_str();
  gw_cmd->add_option("--broker", gw_broker)->capture_default_str();
  gw_cmd->add_option("--token", token, "require this bearer token on /events");

  auto* qr_cmd = app.add_subcommand("qr-size", "Minimum printable QR code size");
  qr::QrSizingInput qin;
  std::string qr_format = "text";
  qr_cmd->add_option("--d-scan-mm", qin.d_scan_mm)->capture_default_str();
  qr_cmd->add_flag("--poor-lighting", qin.conditions.poor_lighting);
  qr_cmd->add_flag("--mid-light", qin.conditions.mid_light_colored_code, "mid-light colored code");
  qr_cmd->add_flag("--not-front-on", qin.conditions.not_front_on);
  qr_cmd->add_option("--modules", qin.modules_per_side, "21 or 25")->capture_default_str();
  qr_cmd->add_option("--px-per-module", qin.pixels_per_module)->capture_default_str();
  qr_cmd->add_option("--fov-mm", qin.fov_mm)->capture_default_str();
  qr_cmd->add_option("--resolution-px", qin.resolution_pixels)->capture_default_str();
  qr_cmd->add_option("--aspect", qin.aspect_phi)->capture_default_str();
  qr_cmd->add_option("--format", qr_format)->check(CLI::IsMember({"text", "json"}))->capture_default_str();

  auto* bench_cmd = app.add_subcommand("bench", "End-to-end notification latency trials");
  bench::BenchConfig bcfg;
  std::string kind = "audio";
  std::string csv;
  std::string bench_costs;
  bench_cmd->add_option("--kind", kind)->check(CLI::IsMember({"audio", "image"}))->capture_default_str();
  bench_cmd->add_option("--n", bcfg.n)->check(CLI::PositiveNumber)->capture_default_str();
  bench_cmd->add_option("--csv", csv, "write samples here");
  bench_cmd->add_option("--broker", bcfg.broker, "external broker (default: private loopback broker)");
  bench_cmd->add_option("--render-costs", bench_costs, "t_audio_ms,t_image_ms (default 364,106)");

  auto* defaults_cmd = app.add_subcommand("defaults", "Print the built-in topology or rule set as JSON");
  std::string what = "topology";
  defaults_cmd->add_option("what", what)->check(CLI::IsMember({"topology", "rules"}))->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    log::set_level(log::parse_level(log_level));
    if (*broker_cmd) return run_broker(broker_port, max_packet, queue_cap, snapshot);
    if (*dev_cmd) return run_devices(dev);
    if (*rules_cmd) return run_rules(rules_config, rules_broker);
    if (*pat_cmd) return run_patient(pat_broker, pat_id, persistent, render_costs);
    if (*gw_cmd) return run_gateway(gw_port, gw_broker, token);
    if (*qr_cmd) {
      auto result = qr::min_qr_size(qin);
      std::cout << (qr_format == "json" ? qr::report_json(qin, result) + "\n" : qr::report_text(qin, result));
      return 0;
    }
    if (*defaults_cmd) {
      std::cout << (what == "rules" ? rules::rules_json(rules::default_rules())
                                    : devices::topology_json(devices::default_topology()))
                << "\n";
      return 0;
    }
    if (*bench_cmd) {
      bcfg.kind = *bench::parse_kind(kind);
      if (!bench_costs.empty()) bcfg.costs = patient::parse_render_costs(bench_costs);
      auto samples = bench::run_trials(bcfg);
      if (!csv.empty()) bench::export_csv(samples, csv);
      std::cout << bench::report_text(bench::stats(bcfg.kind, samples), bcfg.costs);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
