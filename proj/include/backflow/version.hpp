#pragma once

namespace backflow {

inline constexpr const char* version = "0.1.0";

} // namespace backflow
