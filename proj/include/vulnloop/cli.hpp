#pragma once

#include <iosfwd>

namespace vulnloop {

/// Exit codes: 0 secure (or batch finished), 2 completed but still
/// vulnerable, 1 operational error. Errors go to `err` as
/// "vulnloop: error[<Kind>]: <message>".
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace vulnloop
