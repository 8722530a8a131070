#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fscil {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr int kExitIo = 3;

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name. Errors are reported on `err` as "<ErrorName>: message".
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fscil
