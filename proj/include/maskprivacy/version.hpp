#pragma once

namespace maskprivacy {
inline constexpr const char* kVersion = "0.1.0";
}
