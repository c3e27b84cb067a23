#pragma once

#include <iosfwd>

namespace rhec {

/// Runs the oracle checks, one PASS/FAIL line each. Returns the failure count.
int run_selftest(std::ostream& os);

}  // namespace rhec
