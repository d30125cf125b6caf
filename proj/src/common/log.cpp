#include "aal/common/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <stdexcept>
#include <string>

namespace aal::log {
namespace {

std::shared_ptr<spdlog::logger> make_logger() {
  auto logger = spdlog::stderr_color_mt("aal");
  logger->set_pattern("%Y-%m-%dT%H:%M:%S.%fZ %l %v", spdlog::pattern_time_type::utc);
  logger->set_level(spdlog::level::warn);
  return logger;
}

spdlog::logger& logger() {
  static auto instance = make_logger();
  return *instance;
}

spdlog::level::level_enum to_spdlog(Level level) {
  switch (level) {
    case Level::trace: return spdlog::level::trace;
    case Level::debug: return spdlog::level::debug;
    case Level::info: return spdlog::level::info;
    case Level::warn: return spdlog::level::warn;
    case Level::error: return spdlog::level::err;
    case Level::off: return spdlog::level::off;
  }
  return spdlog::level::info;
}

}  // namespace

Level parse_level(std::string_view name) {
  if (name == "trace") return Level::trace;
  if (name == "debug") return Level::debug;
  if (name == "info") return Level::info;
  if (name == "warn" || name == "warning") return Level::warn;
  if (name == "error") return Level::error;
  if (name == "off") return Level::off;
  throw std::invalid_argument("unknown log level: " + std::string(name));
}

void set_level(Level level) { logger().set_level(to_spdlog(level)); }

void event(Level level, std::string_view ev, std::string_view client_id, std::string_view topic,
           std::string_view detail) {
  auto lvl = to_spdlog(level);
  if (!logger().should_log(lvl)) return;
  std::string line = "event=";
  line.append(ev);
  if (!client_id.empty()) line.append(" client_id=").append(client_id);
  if (!topic.empty()) line.append(" topic=").append(topic);
  if (!detail.empty()) line.append(" ").append(detail);
  logger().log(lvl, line);
}

}  // namespace aal::log
