#pragma once

#include <string_view>

namespace lpbf {

inline constexpr std::string_view version_string = "0.3.0";

}  // namespace lpbf
