#pragma once

namespace affkp {
inline constexpr const char* kToolVersion = "0.1.0";
}
