#include "aal/mqtt/topic.hpp"

namespace aal::mqtt {

std::vector<std::string_view> split_levels(std::string_view topic) {
  std::vector<std::string_view> levels;
  std::size_t start = 0;
  while (true) {
    auto slash = topic.find('/', start);
    if (slash == std::string_view::npos) {
      levels.push_back(topic.substr(start));
      return levels;
    }
    levels.push_back(topic.substr(start, slash - start));
    start = slash + 1;
  }
}

bool is_valid_filter(std::string_view filter) {
  if (filter.empty()) return false;
  auto levels = split_levels(filter);
  for (std::size_t i = 0; i < levels.size(); ++i) {
    auto level = levels[i];
    if (level.find('#') != std::string_view::npos) {
      if (level != "#" || i + 1 != levels.size()) return false;
    }
    if (level.find('+') != std::string_view::npos && level != "+") return false;
  }
  return true;
}

bool is_valid_topic_name(std::string_view topic) {
  return !topic.empty() && topic.find_first_of("+#") == std::string_view::npos;
}

bool topic_matches(std::string_view filter, std::string_view topic) {
  if (!is_valid_filter(filter)) throw InvalidFilter("invalid topic filter: " + std::string(filter));
  if (!topic.empty() && topic.front() == '$' && (filter.front() == '+' || filter.front() == '#')) {
    return false;
  }
  std::size_t f = 0;
  std::size_t t = 0;
  while (true) {
    auto f_end = filter.find('/', f);
    auto f_level = filter.substr(f, f_end == std::string_view::npos ? std::string_view::npos : f_end - f);
    if (f_level == "#") return true;

    auto t_end = topic.find('/', t);
    auto t_level = topic.substr(t, t_end == std::string_view::npos ? std::string_view::npos : t_end - t);
    if (f_level != "+" && f_level != t_level) return false;

    const bool filter_done = f_end == std::string_view::npos;
    const bool topic_done = t_end == std::string_view::npos;
    if (filter_done && topic_done) return true;
    if (topic_done) {
      // "a/#" also matches "a"
      return filter.substr(f_end + 1) == "#";
    }
    if (filter_done) return false;
    f = f_end + 1;
    t = t_end + 1;
  }
}

}  // namespace aal::mqtt
