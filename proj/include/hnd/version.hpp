#pragma once

#include <string_view>

#ifndef HND_VERSION
#define HND_VERSION "0.1.0"
#endif

namespace hnd {

inline constexpr std::string_view kLibraryVersion = HND_VERSION;

}  // namespace hnd
