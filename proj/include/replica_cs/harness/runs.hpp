#pragma once

#include <functional>
#include <string>
#include <vector>

#include "replica_cs/harness/config.hpp"
#include "replica_cs/harness/records.hpp"
#include "replica_cs/recovery.hpp"

namespace replica_cs::harness {

struct RunContext {
    int threads = 1; // wall time only; results never depend on it
};

struct RunResult {
    std::vector<std::string> header;
    std::vector<ResultRecord> records;
    int points = 0;
    int failed = 0;   // points without a usable result
    int degraded = 0; // points that succeeded with some failed trials
    std::vector<std::string> warnings;
};

/// Runs body(i) for i in [0, count) on up to `threads` workers. The first
/// exception (lowest index) is rethrown after all workers finish.
void parallel_for(int count, int threads, const std::function<void(int)>& body);

RunResult run_predict(const ExperimentConfig& cfg, const RunContext& ctx = {});
RunResult run_simulate(const ExperimentConfig& cfg, const RunContext& ctx = {});
RunResult run_sweep_region(const ExperimentConfig& cfg, const RunContext& ctx = {});
RunResult run_tune(const ExperimentConfig& cfg, const RunContext& ctx = {});
RunResult run_spectrum(const ExperimentConfig& cfg, const RunContext& ctx = {});

/// Dispatches on cfg.mode.
RunResult run(const ExperimentConfig& cfg, const RunContext& ctx = {});

/// Finite-N instance of trial t: matrices, signal and noise all drawn from
/// streams derived from (seed, t).
Instance make_instance(const ExperimentConfig& cfg, int trial);

struct TrialOutcome {
    bool failed = false;
    std::string reason;
    double distortion = 0.0;
    bool converged = false;
    int iterations = 0;
};

TrialOutcome run_trial(const ExperimentConfig& cfg, int trial);

/// Exit status convention: 0 success, 3 all points failed, 4 partial
/// failures (3 when strict).
int exit_code(const RunResult& r, bool strict);

} // namespace replica_cs::harness
