#include "aal/patient/agent.hpp"

#include <algorithm>
#include <charconv>
#include <json.hpp>

#include "aal/common/log.hpp"

namespace aal::patient {

using nlohmann::json;

Nanos random_scan_latency(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(0.1, 4.0);
  return Nanos(static_cast<std::int64_t>(d(rng) * 1e9));
}

Nanos RenderCosts::for_modality(Modality m) const {
  switch (m) {
    case Modality::audio: return audio;
    case Modality::image3d: return image;
    case Modality::text: return Nanos{0};
  }
  return Nanos{0};
}

RenderCosts parse_render_costs(std::string_view text) {
  auto comma = text.find(',');
  auto parse = [&](std::string_view s) {
    double v = 0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size() || v < 0) {
      throw std::invalid_argument("render costs must be 't_audio_ms,t_image_ms'");
    }
    return Nanos(static_cast<std::int64_t>(v * 1e6));
  };
  if (comma == std::string_view::npos) throw std::invalid_argument("render costs must be 't_audio_ms,t_image_ms'");
  return {parse(text.substr(0, comma)), parse(text.substr(comma + 1))};
}

std::string RenderLogEntry::to_json() const {
  return json{{"notif_id", notif_id},
              {"modality", rules::to_string(modality)},
              {"asset_ref", asset_ref},
              {"text", text},
              {"rule_id", rule_id},
              {"receive_time_ns", receive_time.count()},
              {"render_start_ns", render_start.count()},
              {"render_complete_ns", render_complete.count()}}
      .dump();
}

Agent::Agent(std::shared_ptr<client::Link> link, const Clock& clock, RenderCosts costs)
    : link_(std::move(link)), clock_(clock), costs_(costs) {}

void Agent::start() {
  link_->set_handler([this](const client::InboundMessage& m) {
    if (m.topic.starts_with(rules::kNotifyPrefix)) on_notification(m.payload, clock_.now());
  });
  link_->subscribe({{std::string(rules::kNotifyPrefix) + "#", 1}});
}

ScanOutcome Agent::scan_qr(const std::string& tag_id, Nanos detect_latency) {
  if (detect_latency.count() < 0) throw std::invalid_argument("detect latency must be >= 0");
  std::unique_lock lock(mu_);
  auto now = clock_.now();
  if (now < scan_busy_until_) throw ScanInProgress("a QR scan is already in progress");
  scan_busy_until_ = now + std::min(detect_latency, kScanTimeout);
  if (!scan_detects(detect_latency)) {
    log::info("qr_timeout", link_->client_id(), std::string(kQrPrefix) + tag_id);
    return ScanOutcome::timeout;
  }
  lock.unlock();
  link_->publish(std::string(kQrPrefix) + tag_id, "detected", mqtt::QoS::at_least_once, false);
  log::info("qr_detected", link_->client_id(), std::string(kQrPrefix) + tag_id);
  return ScanOutcome::detected;
}

void Agent::on_notification(std::string_view payload, Nanos now) { on_batch({std::string(payload)}, now); }

void Agent::on_batch(const std::vector<std::string>& payloads, Nanos now) {
  std::vector<rules::Notification> batch;
  for (const auto& p : payloads) {
    try {
      batch.push_back(rules::Notification::from_json(p));
    } catch (const std::invalid_argument& e) {
      log::warn("bad_notification", link_->client_id(), {}, e.what());
    }
  }
  {
    std::lock_guard lock(mu_);
    accept_locked(std::move(batch), now);
  }
  cv_.notify_all();
}

void Agent::accept_locked(std::vector<rules::Notification> batch, Nanos now) {
  std::vector<RenderLogEntry> queued;
  for (auto& n : batch) {
    if (!seen_.insert(n.notif_id).second) continue;
    RenderLogEntry e;
    e.notif_id = n.notif_id;
    e.modality = n.modality;
    e.asset_ref = std::move(n.asset_ref);
    e.text = std::move(n.text);
    e.rule_id = std::move(n.rule_id);
    e.receive_time = now;
    queued.push_back(std::move(e));
  }
  if (queued.empty()) return;
  // Entries not yet started are rescheduled together with the new arrivals.
  while (!log_.empty() && log_.back().render_start > now) {
    queued.push_back(std::move(log_.back()));
    log_.pop_back();
  }
  std::sort(queued.begin(), queued.end(), [](const auto& a, const auto& b) { return a.notif_id < b.notif_id; });
  Nanos free_at = log_.empty() ? now : std::max(now, log_.back().render_complete);
  for (auto& e : queued) {
    e.render_start = std::max(free_at, e.receive_time);
    e.render_complete = e.render_start + costs_.for_modality(e.modality);
    free_at = e.render_complete;
    log_.push_back(std::move(e));
  }
}

void Agent::confirm(std::uint64_t notif_id) {
  std::string rule_id;
  {
    std::lock_guard lock(mu_);
    auto it = std::find_if(log_.begin(), log_.end(), [&](const auto& e) { return e.notif_id == notif_id; });
    if (it == log_.end()) throw std::invalid_argument("unknown notification " + std::to_string(notif_id));
    if (it->rule_id.empty()) throw std::invalid_argument("notification " + std::to_string(notif_id) + " has no rule");
    rule_id = it->rule_id;
  }
  link_->publish(std::string(rules::kConfirmTopic), json{{"rule_id", rule_id}, {"notif_id", notif_id}}.dump(),
                 mqtt::QoS::at_least_once, false);
}

std::vector<RenderLogEntry> Agent::render_log() const {
  std::lock_guard lock(mu_);
  return log_;
}

std::vector<RenderLogEntry> Agent::history(std::optional<Modality> filter) const {
  std::lock_guard lock(mu_);
  std::vector<RenderLogEntry> out;
  for (auto it = log_.rbegin(); it != log_.rend(); ++it) {
    if (!filter || it->modality == *filter) out.push_back(*it);
  }
  return out;
}

std::optional<RenderLogEntry> Agent::wait_for(const std::function<bool(const RenderLogEntry&)>& pred,
                                              std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  std::optional<RenderLogEntry> found;
  cv_.wait_for(lock, timeout, [&] {
    for (const auto& e : log_) {
      if (pred(e)) {
        found = e;
        return true;
      }
    }
    return false;
  });
  return found;
}

}  // namespace aal::patient
