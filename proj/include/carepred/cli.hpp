#pragma once

#include <string>
#include <vector>

namespace carepred::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Exit codes: 0 success, 1 domain/numeric failure, 2 usage error.
int dispatch(int argc, char** argv);
int dispatch(std::vector<std::string> args);

}  // namespace carepred::cli
