#pragma once

#include <string>
#include <vector>

#include "replica_cs/replica_rs.hpp"

namespace replica_cs {

/// A tunable scalar of an RsProblem: "lambda" (all terminals), "lambda.J"
/// (1-based terminal), "weight", "phi", "alpha" or "B".
struct FreeVariable {
    std::string name;
    double lower = 0.0;
    double upper = 1.0;
    bool log_scale = false; // search in log(value); requires lower > 0

    /// Log scale for positive scale parameters, linear otherwise.
    static FreeVariable make(std::string name, double lower, double upper);
};

/// Writes `value` into the problem field named by `name`.
void apply_parameter(RsProblem& problem, const std::string& name, double value);
double read_parameter(const RsProblem& problem, const std::string& name);

struct TuneOptions {
    RsOptions solver;
    double rel_tol = 1e-3;
    int max_sweeps = 8;
    std::vector<double> init; // optional start, one value per free variable
};

struct TuneResult {
    std::vector<double> values;
    double distortion = 0.0;
    RsSolution solution;
    int evaluations = 0;
    int failures = 0;
};

/// Minimizes the RS distortion over one or two free variables: golden-section
/// search for one, cyclic coordinate descent of golden-section searches for
/// two. Non-converged or out-of-domain solves count as +inf. Every inner solve
/// starts from the default init, so the objective is a pure function of the
/// free values.
TuneResult tune_regularizer(const RsProblem& problem, const std::vector<FreeVariable>& free,
                            const TuneOptions& options = {});

} // namespace replica_cs
