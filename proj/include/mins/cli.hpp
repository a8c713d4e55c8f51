#pragma once

#include <string>
#include <vector>

namespace mins {

// Parses and runs one command (train, eval, predict, ablate, synth) given
// the arguments after the program name. Returns the process exit code:
// 0 ok, 2 config error, 3 data error, 4 runtime error.
int run_cli(const std::vector<std::string>& args);

}  // namespace mins
