#pragma once

#include <filesystem>

#include "markovlab/experiments.hpp"

namespace markovlab {

// Entry point behind the markovlab binary. Returns the process exit code:
// 0 success, 1 validation error, 2 lemma-suite failure.
int run_cli(int argc, const char* const* argv);

// Key=value config file (or a previously written manifest) merged over the
// experiment defaults. Flags applied later win.
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentKind kind);

}  // namespace markovlab
