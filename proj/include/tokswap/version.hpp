#pragma once

#include <string_view>

namespace tokswap {

inline constexpr std::string_view kToolVersion = "0.1.0";

}  // namespace tokswap
