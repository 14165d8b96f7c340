#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace cao {

/// Entry point of the `cao` tool: `synth`, `preprocess` and `train-eval`.
/// `args` excludes the program name. Returns the process exit code; on
/// failure a one-line JSON object {"error": ..., "command": ...} goes to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cao
