#pragma once

#include <iosfwd>

namespace tipping::cli {

// Exit codes: 0 success, 1 domain error (including unreadable inputs),
// 2 usage error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tipping::cli
