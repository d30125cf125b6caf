#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "aal/common/clock.hpp"
#include "aal/patient/agent.hpp"

namespace aal::bench {

enum class Kind { audio, image };

std::string_view to_string(Kind k);
std::optional<Kind> parse_kind(std::string_view name);

struct LatencySample {
  int trial = 0;  // 1-based
  Kind kind = Kind::audio;
  Nanos t_publish{0};
  std::optional<Nanos> t_render;  // empty for a lost trial

  bool lost() const { return !t_render.has_value(); }
  /// Exact: nanoseconds divided by 1e6.
  std::optional<double> latency_ms() const;
};

struct TrialReport {
  Kind kind = Kind::audio;
  int n = 0;
  int received = 0;
  // NaN when nothing was received.
  double mean_ms = 0;
  double std_ms = 0;  // sample standard deviation; 0 for a single sample
  double min_ms = 0;
  double max_ms = 0;
  double p50_ms = 0;  // nearest rank
  double p95_ms = 0;
  std::size_t loss_count = 0;
};

/// Summary over the received samples; losses only count toward loss_count.
TrialReport stats(Kind kind, const std::vector<LatencySample>& samples);

/// Nearest-rank percentile of an ascending, nonempty vector.
double nearest_rank(const std::vector<double>& sorted, double percent);

/// Number of sent ids with no matching received id.
std::size_t loss_audit(const std::vector<std::uint64_t>& sent, const std::vector<std::uint64_t>& received);

inline constexpr std::string_view kCsvHeader = "trial,kind,t_publish_ns,t_render_ns,latency_ms";

void write_csv(const std::vector<LatencySample>& samples, std::ostream& out);
void export_csv(const std::vector<LatencySample>& samples, const std::filesystem::path& path);

/// Human-readable report, ending with the reference device figures.
std::string report_text(const TrialReport& report, const patient::RenderCosts& costs);

struct BenchConfig {
  Kind kind = Kind::audio;
  int n = 50;
  /// "host:port" of an external broker; empty runs a private broker on loopback.
  std::string broker;
  patient::RenderCosts costs;
  std::chrono::milliseconds trial_timeout{10000};
};

/// Runs n serial end-to-end trials over TCP: a triggering publish goes through
/// the broker, the relay device, the rule engine and the patient agent, and the
/// sample ends at the agent's render-complete time. Never throws for an
/// unreachable broker; every trial is then recorded as lost.
std::vector<LatencySample> run_trials(const BenchConfig& config);

struct TransferAudit {
  std::size_t sent = 0;
  std::size_t received = 0;
  std::size_t loss_count = 0;
  bool in_order = true;
};

/// Publishes `count` QoS-1 messages to one subscriber and audits what arrived.
TransferAudit run_transfer_audit(std::size_t count, const std::string& broker = {},
                                 std::chrono::milliseconds timeout = std::chrono::milliseconds(30000));

}  // namespace aal::bench
