#pragma once

namespace rcti {
inline constexpr const char* kVersion = "0.1.0";
}
