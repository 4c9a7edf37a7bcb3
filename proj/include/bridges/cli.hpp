#pragma once

// Batch command-line front end. Every stage reads its inputs from and writes
// its outputs to the output directory, so `pipeline` is the stage commands
// run in order.
//
// Exit status: 0 success, 1 validation or usage error, 2 runtime failure.
// BRIDGES_LOG=quiet|info|debug controls progress messages on stderr.

#include "bridges/config.hpp"

#include <optional>
#include <string>
#include <vector>

namespace bridges::cli {

struct StageOptions {
    std::optional<std::string> scenario;
    std::optional<int> year;
};

void stage_ingest(const RunConfig& rc);
void stage_synth(const RunConfig& rc);
void stage_metrics(const RunConfig& rc);
void stage_network(const RunConfig& rc);
void stage_anomaly(const RunConfig& rc);
void stage_simulate(const RunConfig& rc, const StageOptions& options = {});
void stage_ensemble(const RunConfig& rc);
void stage_plot(const RunConfig& rc);
void stage_pipeline(const RunConfig& rc);

/// Full command line including the program name.
int run(const std::vector<std::string>& args);
int run(int argc, const char* const* argv);

} // namespace bridges::cli
