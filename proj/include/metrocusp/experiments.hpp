#pragma once

#include <string>

#include "metrocusp/config.hpp"

namespace metrocusp {

// Runs the configured experiment; persists JSON reports and CSV plot data
// under config.output_dir, printing one summary line per sweep point.
// Returns the process exit code: 0 success, 2 validation failure, 3 numerical
// failure (partially completed sweeps persist finished points).
int run_experiment(const ExperimentConfig& config);

}  // namespace metrocusp
