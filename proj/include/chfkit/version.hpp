#pragma once

namespace chfkit {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace chfkit
