#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "replica_cs/errors.hpp"
#include "replica_cs/replica_rs.hpp"
#include "replica_cs/tuning.hpp"

namespace replica_cs::harness {

enum class Mode { predict, simulate, sweep_region, tune, spectrum };
enum class OutputFormat { csv, json };

/// Schema violation; `field()` is the offending key path.
class ConfigError : public ParameterError {
public:
    ConfigError(std::string field, const std::string& what)
        : ParameterError(field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

struct TerminalConfig {
    EnsembleSpec ensemble;
    double lambda = 0.1;
    double sigma2 = 0.01;

    bool operator==(const TerminalConfig&) const = default;
};

struct FreeVariableConfig {
    std::string name;
    double lower = 0.0;
    double upper = 1.0;

    bool operator==(const FreeVariableConfig&) const = default;
};

struct SimulateConfig {
    int n = 256;
    int trials = 10;
    int max_iter = 5000;
    double tol = 1e-10;

    bool operator==(const SimulateConfig&) const = default;
};

struct SweepConfig {
    std::vector<double> rho_1;
    std::vector<double> rho_2;
    double threshold = std::numeric_limits<double>::infinity();
    // Per grid point, first tune per-terminal l1 (free lambda.1, lambda.2),
    // then tune the configured spec starting from those lambdas.
    bool baseline_l1 = false;
    double baseline_lower = 1e-3;
    double baseline_upper = 10.0;

    bool operator==(const SweepConfig&) const = default;
};

struct TuneConfig {
    std::vector<FreeVariableConfig> free;
    std::vector<double> init;
    double rel_tol = 1e-3;
    int max_sweeps = 8;
    std::vector<double> snr_db; // tune mode: sigma2 = power / 10^(snr/10)
    double power = 0.0;         // 0: mean signal power E[x_j^2] of the prior

    bool operator==(const TuneConfig&) const = default;
};

struct SpectrumConfig {
    int n = 512;
    int points = 101;

    bool operator==(const SpectrumConfig&) const = default;
};

struct OutputConfig {
    std::string path;
    OutputFormat format = OutputFormat::csv;

    bool operator==(const OutputConfig&) const = default;
};

struct ExperimentConfig {
    Mode mode = Mode::predict;
    JointSparsityPrior prior;
    RegularizerSpec spec;
    std::vector<TerminalConfig> terminals;
    DistortionKind distortion = DistortionKind::mse;
    RsOptions solver;
    bool scan = false; // predict: report every distinct fixed point
    std::uint64_t seed = 1;
    SimulateConfig simulate;
    SweepConfig sweep;
    TuneConfig tune;
    SpectrumConfig spectrum;
    OutputConfig output;

    int size() const noexcept { return static_cast<int>(terminals.size()); }
    /// Mode-specific checks; throws ConfigError naming the field.
    void validate() const;
    /// Warnings that do not stop a run (e.g. small N).
    std::vector<std::string> warnings() const;

    bool operator==(const ExperimentConfig&) const = default;
};

/// Flat `key = value` text, `#` comments, comma-separated lists.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig read_config(const std::string& path);

/// Canonical text: every key, fixed order, round-trippable doubles.
std::string format_config(const ExperimentConfig& cfg);
void write_config(const ExperimentConfig& cfg, const std::string& path);

/// FNV-1a 64 of the canonical text with the output section removed, as hex.
std::string config_hash(const ExperimentConfig& cfg);

RsProblem make_problem(const ExperimentConfig& cfg);
std::vector<FreeVariable> free_variables(const ExperimentConfig& cfg);

std::string to_string(Mode m);
Mode parse_mode(const std::string& s);

} // namespace replica_cs::harness
