#pragma once

#include <iosfwd>

namespace htdsm {

/// Entry point of the htdsm binary. Returns 0 on success, 1 on numerical or
/// runtime failure and 2 on usage errors (unknown subcommand, bad flags or
/// malformed config).
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace htdsm
