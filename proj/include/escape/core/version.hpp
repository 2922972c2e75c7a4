#pragma once

#include <string_view>

namespace escape {

inline constexpr std::string_view kToolkitVersion = "0.3.0";

}  // namespace escape
