#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace aqsp {

/// Runs one subcommand. Returns 0 on success, 1 on usage errors, 2 on runtime errors.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace aqsp
