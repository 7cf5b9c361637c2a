#pragma once

namespace weaksurg::cli {

/// Exit codes: 0 success, 2 bad flags/config, 3 I/O failure, 4 corrupt checkpoint.
int run(int argc, const char* const* argv);

}  // namespace weaksurg::cli
