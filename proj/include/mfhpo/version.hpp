#pragma once

namespace mfhpo {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace mfhpo
