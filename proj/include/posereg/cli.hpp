#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace posereg {

inline constexpr const char* kToolVersion = "posereg 1.0.0";

/// Exit codes: 0 success, 1 runtime failure (missing inputs, digest
/// mismatch, divergence), 2 usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace posereg
