#ifndef PRIMSEG_COMMANDS_HPP_
#define PRIMSEG_COMMANDS_HPP_

#include <ostream>
#include <string>
#include <vector>

namespace primseg::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kInput = 3,
  kNumeric = 4,
  kCatalog = 5,
};

// Runs one primseg invocation. `args` excludes the program name. Reports go
// to `out`, diagnostics (prefixed "<error-class>: ") to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Exit code for an error kind tag such as "parse" or "integrity".
int exit_code_for(const std::string& kind);

}  // namespace primseg::cli

#endif  // PRIMSEG_COMMANDS_HPP_
