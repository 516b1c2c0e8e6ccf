#pragma once

namespace nlwmix {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace nlwmix
