#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace aal {

std::string base64_encode(std::string_view bytes);
std::optional<std::string> base64_decode(std::string_view text);

/// True if `bytes` is well-formed UTF-8 without NUL or surrogate code points.
bool is_valid_utf8(std::string_view bytes);

}  // namespace aal
