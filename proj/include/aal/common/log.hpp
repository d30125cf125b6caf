#pragma once

#include <string_view>

namespace aal::log {

enum class Level { trace, debug, info, warn, error, off };

Level parse_level(std::string_view name);
void set_level(Level level);

// Emits one structured line: timestamp, level, event=..., client_id=..., topic=..., detail.
// Empty fields are omitted.
void event(Level level, std::string_view event, std::string_view client_id = {},
           std::string_view topic = {}, std::string_view detail = {});

inline void info(std::string_view ev, std::string_view client_id = {}, std::string_view topic = {},
                 std::string_view detail = {}) {
  event(Level::info, ev, client_id, topic, detail);
}
inline void warn(std::string_view ev, std::string_view client_id = {}, std::string_view topic = {},
                 std::string_view detail = {}) {
  event(Level::warn, ev, client_id, topic, detail);
}
inline void debug(std::string_view ev, std::string_view client_id = {}, std::string_view topic = {},
                  std::string_view detail = {}) {
  event(Level::debug, ev, client_id, topic, detail);
}

}  // namespace aal::log
