#pragma once

namespace nkfg {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace nkfg
