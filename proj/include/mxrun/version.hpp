#pragma once

namespace mxrun {

inline constexpr const char* tool_version = "0.1.0";

// Version of the canonical task encoding. Bump whenever the byte format of
// canonical_encode() changes; old cache entries must never alias new ones.
inline constexpr int encoding_version = 1;

}  // namespace mxrun
