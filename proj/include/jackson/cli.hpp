#ifndef JACKSON_CLI_HPP
#define JACKSON_CLI_HPP

#include <ostream>
#include <string>
#include <vector>

namespace jackson {

// Exit codes: 0 ok, 2 invalid input, 3 product-form refusal,
// 4 infeasible customer count, 5 state-space cap exceeded,
// 6 absorbing state reached.
enum ExitCode {
  kOk = 0,
  kInvalid = 2,
  kNoProductForm = 3,
  kInfeasible = 4,
  kStateCap = 5,
  kAbsorbing = 6,
};

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace jackson

#endif
