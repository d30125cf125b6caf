#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "aal/client/link.hpp"
#include "aal/common/clock.hpp"

namespace aal::rules {

enum class Modality { audio, text, image3d };
std::string_view to_string(Modality m);
std::optional<Modality> parse_modality(std::string_view name);

struct Notification {
  std::uint64_t notif_id = 0;
  Modality modality = Modality::audio;
  std::string asset_ref;
  std::string text;
  Nanos created_at{0};
  std::string rule_id;  // empty when not produced by a rule

  std::string to_json() const;
  /// Throws std::invalid_argument on a malformed payload.
  static Notification from_json(std::string_view payload);
};

struct NotifyTemplate {
  Modality modality = Modality::audio;
  std::string asset_ref;
  std::string text;
};

struct Action {
  enum class Kind { actuate, notify };
  Kind kind = Kind::notify;
  std::string topic;  // actuate
  std::string value;  // actuate
  NotifyTemplate notify;
};

enum class PredicateOp { equals, less_than, greater_than, any };

struct Predicate {
  PredicateOp op = PredicateOp::any;
  std::variant<double, std::string> value;

  /// nullopt when the payload cannot be decoded for a numeric comparison.
  std::optional<bool> matches(std::string_view payload) const;
};

struct Confirmation {
  NotifyTemplate prompt;
  std::vector<Action> on_confirm;
  Nanos timeout = seconds(60);
};

struct Rule {
  std::string rule_id;
  std::string filter;
  Predicate predicate;
  std::vector<Action> actions;
  std::optional<Confirmation> confirmation;
  Nanos debounce{0};
};

struct RuleSet {
  std::vector<Rule> rules;
};

class RuleConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

RuleSet parse_rules(std::string_view json_text);
RuleSet load_rules(const std::filesystem::path& path);
RuleSet default_rules();
std::string rules_json(const RuleSet& rules);

inline constexpr std::string_view kConfirmTopic = "patient/confirm";
inline constexpr std::string_view kNotifyPrefix = "patient/notify/";

struct Emission {
  Nanos at{0};
  std::string rule_id;
  Action::Kind kind = Action::Kind::notify;
  std::string topic;
  std::string value;
  std::optional<Notification> notification;

  /// `<t_ms> <rule_id> actuate <topic> <value>` or
  /// `<t_ms> <rule_id> notify <id> <modality> <asset> ["text"]`.
  std::string trace_line() const;
};

struct PendingConfirmation {
  std::string rule_id;
  std::uint64_t notif_id = 0;
  Nanos deadline{0};
};

/// Transport-free evaluation of a rule set. Events are processed one at a
/// time; every output is a pure function of the input sequence.
class Engine {
 public:
  explicit Engine(RuleSet rules);

  std::vector<Emission> on_event(std::string_view topic, std::string_view payload, Nanos now);
  std::vector<Emission> on_confirm(std::string_view rule_id, Nanos now);
  /// Drops confirmations whose deadline has passed; returns their rule ids.
  std::vector<std::string> expire_pending(Nanos now);

  const RuleSet& rules() const { return rules_; }
  const std::map<std::string, PendingConfirmation>& pending() const { return pending_; }
  std::uint64_t last_notif_id() const { return next_notif_id_ - 1; }

 private:
  void emit(const Rule& rule, const Action& action, Nanos now, std::vector<Emission>& out);
  Emission make_notification(const Rule& rule, const NotifyTemplate& t, Nanos now);

  RuleSet rules_;
  std::map<std::string, PendingConfirmation> pending_;
  std::map<std::string, Nanos> last_fired_;
  std::uint64_t next_notif_id_ = 1;
};

/// Engine attached to the broker: subscribes to home/#, patient/qr/# and
/// patient/confirm and publishes commands and notifications at QoS 1.
class EngineNode {
 public:
  EngineNode(RuleSet rules, std::shared_ptr<client::Link> link, const Clock& clock);

  void start();
  /// Runs expiry without an inbound event (wall-clock mode).
  void tick();

  std::vector<std::string> trace() const;
  std::size_t pending_count() const;

 private:
  void handle(const client::InboundMessage& message);
  void dispatch(const std::vector<Emission>& emissions);

  mutable std::mutex mu_;
  Engine engine_;
  std::shared_ptr<client::Link> link_;
  const Clock& clock_;
  std::vector<std::string> trace_;
};

}  // namespace aal::rules
