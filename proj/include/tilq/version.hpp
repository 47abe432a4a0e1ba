#pragma once

namespace tilq {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace tilq
