#pragma once

#include <string>
#include <vector>

namespace actionkit::cli {

// Exit codes: 0 success, 1 validation/runtime failure, 2 usage error.
int dispatch(const std::vector<std::string>& args);
int dispatch(int argc, const char* const* argv);

}  // namespace actionkit::cli
