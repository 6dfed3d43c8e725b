#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pancsynth::cli {

inline constexpr const char* kToolName = "pancsynth";
inline constexpr const char* kVersion = "0.1.0";

/// Exit codes: 0 success, 1 I/O or invariant failure, 2 invalid arguments.
/// Failures print a one-line JSON error report to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// argv entry point; args[0] is the program name.
int run(int argc, char** argv);

}  // namespace pancsynth::cli
