#pragma once

#include <ostream>

namespace wavelatent::cli {

/// Exit codes: 0 success, 1 usage or configuration, 2 data / format /
/// dimension, 3 numeric or training failure.
enum Exit : int { ok = 0, usage = 1, data = 2, numeric = 3 };

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace wavelatent::cli
