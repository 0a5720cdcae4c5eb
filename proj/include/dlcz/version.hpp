#pragma once

namespace dlcz {

inline constexpr const char* kToolName = "dlczsim";
inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace dlcz
