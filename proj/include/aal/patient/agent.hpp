#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "aal/client/link.hpp"
#include "aal/common/clock.hpp"
#include "aal/rules/engine.hpp"

namespace aal::patient {

using rules::Modality;

inline constexpr Nanos kScanTimeout = seconds(3);
inline constexpr std::string_view kQrPrefix = "patient/qr/";

/// Detection succeeds iff the symbol is recognised within the timeout (inclusive).
inline bool scan_detects(Nanos detect_latency) { return detect_latency <= kScanTimeout; }

/// Demo-mode latency: uniform over [0.1 s, 4.0 s] so that some scans time out.
Nanos random_scan_latency(std::mt19937_64& rng);

struct RenderCosts {
  Nanos audio = ms(364);
  Nanos image = ms(106);

  Nanos for_modality(Modality m) const;
};

/// Parses "t_audio_ms,t_image_ms".
RenderCosts parse_render_costs(std::string_view text);

struct RenderLogEntry {
  std::uint64_t notif_id = 0;
  Modality modality = Modality::audio;
  std::string asset_ref;
  std::string text;
  std::string rule_id;
  Nanos receive_time{0};
  Nanos render_start{0};
  Nanos render_complete{0};

  std::string to_json() const;
};

enum class ScanOutcome { detected, timeout };

class ScanInProgress : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Patient-side app: scans QR tags one at a time, renders notifications in
/// id order with a fixed cost per modality, and sends confirmations.
class Agent {
 public:
  Agent(std::shared_ptr<client::Link> link, const Clock& clock, RenderCosts costs = {});

  /// Subscribes to patient/notify/#.
  void start();

  /// Throws ScanInProgress while a previous scan is still running.
  ScanOutcome scan_qr(const std::string& tag_id, Nanos detect_latency);

  /// Handles one notification payload received at `now`; malformed payloads
  /// are logged and dropped, duplicate ids ignored.
  void on_notification(std::string_view payload, Nanos now);
  /// Several payloads that arrived together; rendered in notif_id order.
  void on_batch(const std::vector<std::string>& payloads, Nanos now);

  /// Publishes {"rule_id", "notif_id"} on patient/confirm. Throws
  /// std::invalid_argument if the notification is unknown or not rule-backed.
  void confirm(std::uint64_t notif_id);

  /// Render log, oldest first.
  std::vector<RenderLogEntry> render_log() const;
  /// Newest first, optionally restricted to one modality.
  std::vector<RenderLogEntry> history(std::optional<Modality> filter = std::nullopt) const;
  /// Blocks until an entry satisfying `pred` is logged or `timeout` elapses.
  std::optional<RenderLogEntry> wait_for(const std::function<bool(const RenderLogEntry&)>& pred,
                                         std::chrono::milliseconds timeout) const;

  const RenderCosts& costs() const { return costs_; }

 private:
  void accept_locked(std::vector<rules::Notification> batch, Nanos now);

  std::shared_ptr<client::Link> link_;
  const Clock& clock_;
  RenderCosts costs_;
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::vector<RenderLogEntry> log_;
  std::set<std::uint64_t> seen_;
  Nanos scan_busy_until_{std::numeric_limits<std::int64_t>::min()};
};

}  // namespace aal::patient
