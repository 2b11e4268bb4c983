#pragma once

namespace minimalist {
inline constexpr const char* kVersion = "0.1.0";
}
