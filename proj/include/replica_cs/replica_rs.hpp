#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "replica_cs/errors.hpp"
#include "replica_cs/regularizers.hpp"
#include "replica_cs/signal_model.hpp"
#include "replica_cs/spectra.hpp"

namespace replica_cs {

/// Per-terminal measurement model seen by the fixed-point equations.
struct TerminalModel {
    SpectralLaw law = SpectralLaw::identity();
    double lambda = 1.0; // postulated noise variance (regularizer)
    double sigma2 = 0.0; // true noise variance
};

struct RsProblem {
    JointSparsityPrior prior;
    RegularizerSpec spec;
    std::vector<TerminalModel> terminals;
    DistortionKind distortion = DistortionKind::mse;

    int size() const noexcept { return static_cast<int>(terminals.size()); }
    void validate() const;
};

/// Replica-symmetric order parameters (q_j, chi_j).
struct RsState {
    std::vector<double> q;
    std::vector<double> chi;
};

/// Effective estimator weights tau_j and decoupled noise variances xi_j^2.
struct DecoupledSystem {
    std::vector<double> tau;
    std::vector<double> xi2;
};

struct RsExpectations {
    std::vector<double> q;   // E[(xhat_j - x_j)^2]
    std::vector<double> chi; // (tau_j / xi_j^2) E[(xhat_j - x_j) z_j]
    double distortion = 0.0; // E[Delta(xhat; x)]
};

struct MonteCarloExpectations {
    RsExpectations mean;
    std::vector<double> q_stderr;
    std::vector<double> chi_stderr;
    double distortion_stderr = 0.0;
    long draws = 0;
};

/// J <= 2 uses deterministic quadrature. Affine estimators (ridge, zero on
/// the reals) get a Gauss-Hermite rule, which is exact for them. All others
/// are integrated on Gauss-Legendre panels split at the points where the
/// estimate changes its sign/clipping pattern. The two-dimensional LASSO on
/// the reals is piecewise affine on polygons and is integrated in closed form.
struct ExpectationOptions {
    int quadrature_order = 61;   // Gauss-Hermite points per dimension
    int panel_order = 8;         // Gauss-Legendre points per panel
    double panel_width = 0.5;    // in standard deviations
    double truncation = 8.0;     // integration range in standard deviations
    bool exact_two_dim_lasso = true; // closed-form polygon moments when applicable
    long mc_draws = 1'000'000;   // J > 2
    std::uint64_t mc_seed = 0x2545F4914F6CDD1DULL;

    bool operator==(const ExpectationOptions&) const = default;
};

struct RsOptions {
    double damping = 0.5;
    double tol = 1e-9;
    int max_iter = 500;
    ExpectationOptions expectation;

    bool operator==(const RsOptions&) const = default;
};

struct RsSolution {
    RsState state;
    DecoupledSystem system;
    double distortion = 0.0;
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
};

/// Domain violation during the fixed-point iteration, with the state that
/// caused it.
class RsDomainError : public DomainError {
public:
    RsDomainError(const std::string& what, RsState state) : DomainError(what), state_(std::move(state)) {}
    const RsState& state() const noexcept { return state_; }

private:
    RsState state_;
};

/// tau_j = lambda_j / R_j(-chi_j/lambda_j) and
/// xi_j^2 = R^-2 d/dchi [(sigma_j^2 chi_j - lambda_j q_j) R_j(-chi_j/lambda_j)]
/// with q_j held fixed under the derivative.
DecoupledSystem decouple(const RsState& state, const RsProblem& problem);

/// Expectations of the decoupled scalar channel y_j = x_j + z_j,
/// z_j ~ N(0, xi_j^2): exact prior-mixture enumeration with quadrature for
/// J <= 2, Monte Carlo otherwise. Separable penalties reduce to one-dimensional
/// integrals per terminal.
RsExpectations rs_expectations(const DecoupledSystem& system, const RsProblem& problem,
                               const ExpectationOptions& options = {});

/// Plain Monte Carlo estimate of the same expectations with standard errors.
MonteCarloExpectations rs_expectations_monte_carlo(const DecoupledSystem& system, const RsProblem& problem,
                                                   long draws, std::uint64_t seed);

/// q_j = E[x_j^2], chi_j = lambda_j.
RsState default_init(const RsProblem& problem);

/// Damped fixed-point iteration. The reported state is the one whose
/// decoupled system and distortion are returned; `residual` is the relative
/// size of the step taken from it.
RsSolution rs_solve(const RsProblem& problem, const std::optional<RsState>& init = std::nullopt,
                    const RsOptions& options = {});

/// Solutions reached from the default start and from eight log-spaced
/// rescalings of it, deduplicated by distortion and state.
std::vector<RsSolution> rs_solve_scan(const RsProblem& problem, const RsOptions& options = {});

} // namespace replica_cs
