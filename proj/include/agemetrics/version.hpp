#pragma once

namespace agemetrics {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace agemetrics
