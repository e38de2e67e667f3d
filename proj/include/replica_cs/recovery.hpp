#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "replica_cs/errors.hpp"
#include "replica_cs/regularizers.hpp"
#include "replica_cs/signal_model.hpp"

namespace replica_cs {

struct TerminalData {
    Eigen::MatrixXd a; // M_j x N
    Eigen::VectorXd y; // M_j
    double lambda = 1.0;
};

/// One RLS problem: argmin_V sum_j |y_j - A_j v_j|^2 / (2 lambda_j) + sum_n u(v_n).
struct Instance {
    std::vector<TerminalData> terminals;
    RegularizerSpec spec;
    std::optional<Eigen::MatrixXd> x_true; // J x N, for scoring

    int size() const noexcept { return static_cast<int>(terminals.size()); }
    int columns() const;
    void validate() const;
};

enum class StepPolicy { backtracking, fixed };

struct RecoveryOptions {
    int max_iter = 5000;
    double tol = 1e-10;
    StepPolicy step_policy = StepPolicy::backtracking;
    double step = 0.0;                       // fixed policy only; 0 means 1/L
    std::optional<bool> accelerate;          // default: only for convex specs
    std::optional<Eigen::MatrixXd> init;     // default: zeros
};

struct SolveReport {
    Eigen::MatrixXd xhat;
    std::vector<double> objective_trace; // objective at the start and after every iteration
    int iterations = 0;
    bool converged = false;
    double final_step = 0.0;
};

/// Raised when the objective stops being finite; carries the iterates so far.
class SolverDivergence : public NumericalError {
public:
    SolverDivergence(const std::string& what, SolveReport partial)
        : NumericalError(what), partial_(std::move(partial)) {}
    const SolveReport& partial() const noexcept { return partial_; }

private:
    SolveReport partial_;
};

double objective(const Instance& inst, const Eigen::MatrixXd& v);

/// Largest squared singular value by power iteration on A^T A.
double operator_norm_squared(const Eigen::MatrixXd& a, int max_steps = 50, double tol = 1e-10);

/// Proximal gradient with optional FISTA momentum (restarted whenever the
/// objective would increase) and backtracking.
SolveReport rls_solve(const Instance& inst, const RecoveryOptions& options = {});

double score(const Instance& inst, const SolveReport& report, DistortionKind kind);

} // namespace replica_cs
