#pragma once

namespace npinfer {

inline constexpr const char* kVersion = "0.1.0";

} // namespace npinfer
