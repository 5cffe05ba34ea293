#pragma once

#include <string>
#include <vector>

namespace rgan {

/// Entry point behind the rosette-gan binary. `args` excludes the program
/// name. Returns 0 on success, 1 on validation/usage errors, 2 on
/// runtime or numeric errors.
int cli_run(const std::vector<std::string>& args);

}  // namespace rgan
