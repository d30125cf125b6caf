#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace aal::mqtt {

class InvalidFilter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Splits on '/', keeping empty levels ("a//b" has three levels).
std::vector<std::string_view> split_levels(std::string_view topic);

/// Nonempty, '+' alone in its level, '#' alone and last.
bool is_valid_filter(std::string_view filter);
/// Nonempty and wildcard-free.
bool is_valid_topic_name(std::string_view topic);

/// `+` matches exactly one level, `#` zero or more trailing levels (including the
/// parent: "a/#" matches "a"). Topics starting with '$' are not matched by a
/// leading wildcard. Throws InvalidFilter for a malformed filter.
bool topic_matches(std::string_view filter, std::string_view topic);

}  // namespace aal::mqtt
