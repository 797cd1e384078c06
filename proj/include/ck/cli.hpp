#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace ck {

/// Runs the `ck` command line: ingest, gen-synthetic, train, eval, predict,
/// explain. Returns the process exit status (0 ok, 2 usage, 3 data,
/// 4 provider, 5 internal). Failures print one machine-parsable line to `err`:
///
///   error: code=<ErrorCode> exit=<status> message=<text>
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ck
