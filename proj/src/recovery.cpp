#include "replica_cs/recovery.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "replica_cs/rng.hpp"

namespace replica_cs {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kStepTol = 1e-9; // accelerated stop: max |prox step| relative to max |v|

double penalty(const RegularizerSpec& spec, const MatrixXd& v) {
    double acc = 0.0;
    std::vector<double> col(static_cast<std::size_t>(v.rows()));
    for (Eigen::Index n = 0; n < v.cols(); ++n) {
        for (Eigen::Index j = 0; j < v.rows(); ++j) {
            col[static_cast<std::size_t>(j)] = v(j, n);
        }
        acc += reg_value(spec, col);
    }
    return acc;
}

// Per-terminal products A_j v_j, stored as columns of a ragged list.
using Products = std::vector<VectorXd>;

Products apply(const Instance& inst, const MatrixXd& v) {
    Products out(inst.terminals.size());
    for (std::size_t j = 0; j < inst.terminals.size(); ++j) {
        out[j].noalias() = inst.terminals[j].a * v.row(static_cast<Eigen::Index>(j)).transpose();
    }
    return out;
}

double smooth(const Instance& inst, const Products& av) {
    double acc = 0.0;
    for (std::size_t j = 0; j < inst.terminals.size(); ++j) {
        const auto& t = inst.terminals[j];
        acc += (t.y - av[j]).squaredNorm() / (2.0 * t.lambda);
    }
    return acc;
}

MatrixXd gradient(const Instance& inst, const Products& av) {
    const int n = inst.columns();
    MatrixXd g(inst.size(), n);
    for (std::size_t j = 0; j < inst.terminals.size(); ++j) {
        const auto& t = inst.terminals[j];
        g.row(static_cast<Eigen::Index>(j)).noalias() = (t.a.transpose() * (av[j] - t.y)).transpose() / t.lambda;
    }
    return g;
}

void combine(Products& out, const Products& a, const Products& b, double beta) {
    for (std::size_t j = 0; j < out.size(); ++j) {
        out[j] = a[j] + beta * (a[j] - b[j]);
    }
}

} // namespace

int Instance::columns() const {
    if (terminals.empty()) {
        throw ShapeError("instance: no terminals");
    }
    return static_cast<int>(terminals.front().a.cols());
}

void Instance::validate() const {
    const int n = columns();
    if (n < 1) {
        throw ShapeError("instance: N must be at least 1");
    }
    for (std::size_t j = 0; j < terminals.size(); ++j) {
        const auto& t = terminals[j];
        if (t.a.cols() != n) {
            throw ShapeError("instance: terminal " + std::to_string(j) + " has a different N");
        }
        if (t.a.rows() != t.y.size()) {
            throw ShapeError("instance: terminal " + std::to_string(j) + " has rows(A) != size(y)");
        }
        if (!(t.lambda > 0.0) || !std::isfinite(t.lambda)) {
            throw ParameterError("instance: lambda must be positive");
        }
    }
    if (x_true && (x_true->rows() != size() || x_true->cols() != n)) {
        throw ShapeError("instance: x_true must be J x N");
    }
    spec.validate(size());
}

double objective(const Instance& inst, const MatrixXd& v) {
    inst.validate();
    if (v.rows() != inst.size() || v.cols() != inst.columns()) {
        throw ShapeError("objective: V must be J x N");
    }
    return smooth(inst, apply(inst, v)) + penalty(inst.spec, v);
}

double operator_norm_squared(const MatrixXd& a, int max_steps, double tol) {
    if (a.size() == 0) {
        return 0.0;
    }
    Rng rng = make_rng(0x0B5E55EDULL, {static_cast<std::uint64_t>(a.rows()), static_cast<std::uint64_t>(a.cols())});
    VectorXd v(a.cols());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        v(i) = standard_normal(rng);
    }
    v.normalize();
    double est = 0.0;
    for (int k = 0; k < max_steps; ++k) {
        VectorXd w = a.transpose() * (a * v);
        const double next = v.dot(w);
        const double norm = w.norm();
        if (norm == 0.0) {
            return 0.0;
        }
        v = w / norm;
        const bool done = k > 0 && std::abs(next - est) <= tol * std::abs(next);
        est = next;
        if (done) {
            break;
        }
    }
    return est;
}

SolveReport rls_solve(const Instance& inst, const RecoveryOptions& options) {
    inst.validate();
    const int jn = inst.size();
    const int n = inst.columns();
    if (options.max_iter < 1 || !(options.tol >= 0.0)) {
        throw ParameterError("rls_solve: need max_iter >= 1 and tol >= 0");
    }
    const bool accelerate = options.accelerate.value_or(inst.spec.is_convex());

    double lipschitz = 0.0;
    for (const auto& t : inst.terminals) {
        lipschitz = std::max(lipschitz, operator_norm_squared(t.a) / t.lambda);
    }
    double eta = 1.0;
    if (options.step_policy == StepPolicy::fixed && options.step > 0.0) {
        eta = options.step;
    } else if (lipschitz > 0.0) {
        eta = 1.0 / lipschitz;
    }

    SolveReport rep;
    MatrixXd x = MatrixXd::Zero(jn, n);
    if (options.init) {
        if (options.init->rows() != jn || options.init->cols() != n) {
            throw ShapeError("rls_solve: init must be J x N");
        }
        x = *options.init;
        if (inst.spec.domain == FeasibleSet::box) {
            // the penalty does not see the box, so an infeasible start could look optimal
            x = x.cwiseMax(-inst.spec.box).cwiseMin(inst.spec.box);
        }
    }
    Products ax = apply(inst, x);
    double fx = smooth(inst, ax) + penalty(inst.spec, x);
    rep.objective_trace.push_back(fx);
    if (!std::isfinite(fx)) {
        rep.xhat = x;
        throw SolverDivergence("rls_solve: objective is not finite at the start", rep);
    }

    MatrixXd yk = x;
    Products ay = ax;
    double t = 1.0;
    bool fresh = true; // yk == x
    int small_steps = 0;
    std::vector<double> tau_eta(static_cast<std::size_t>(jn));

    for (int it = 1; it <= options.max_iter; ++it) {
        rep.iterations = it;
        const double fy = smooth(inst, ay);
        const MatrixXd g = gradient(inst, ay);

        MatrixXd z;
        Products az;
        double fz = 0.0;
        while (true) {
            std::fill(tau_eta.begin(), tau_eta.end(), eta);
            z = prox_block(yk - eta * g, tau_eta, inst.spec);
            az = apply(inst, z);
            fz = smooth(inst, az);
            if (options.step_policy == StepPolicy::fixed) {
                break;
            }
            const MatrixXd diff = z - yk;
            const double model = fy + (g.array() * diff.array()).sum() + diff.squaredNorm() / (2.0 * eta);
            if (fz <= model + 1e-12 * std::abs(fy) || eta < 1e-300) {
                break;
            }
            eta *= 0.5;
        }
        const double Fz = fz + penalty(inst.spec, z);
        const double z_step = (z - yk).cwiseAbs().maxCoeff();
        if (!std::isfinite(Fz)) {
            rep.xhat = x;
            rep.final_step = eta;
            throw SolverDivergence("rls_solve: objective became non-finite at iteration " + std::to_string(it), rep);
        }

        if (Fz <= fx) {
            const double rel = (fx - Fz) / std::max(std::abs(fx), std::numeric_limits<double>::min());
            if (accelerate) {
                const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
                const double beta = (t - 1.0) / t_next;
                yk = z + beta * (z - x);
                combine(ay, az, ax, beta);
                t = t_next;
                fresh = beta == 0.0;
            } else {
                yk = z;
                ay = az;
                fresh = true;
            }
            x = std::move(z);
            ax = std::move(az);
            fx = Fz;
            rep.objective_trace.push_back(fx);
            // FISTA can stall in objective while the iterate still drifts, so
            // the accelerated path also asks for a small proximal-gradient step
            const bool settled =
                !accelerate || (z_step <= kStepTol * std::max(1.0, x.cwiseAbs().maxCoeff()));
            small_steps = rel < options.tol && settled ? small_steps + 1 : 0;
            if (small_steps >= 2 || (small_steps >= 1 && !accelerate)) {
                rep.converged = true;
                break;
            }
        } else {
            rep.objective_trace.push_back(fx);
            if (fresh) {
                // a plain proximal step from x cannot improve: stationary to rounding
                rep.converged = true;
                break;
            }
            yk = x;
            ay = ax;
            t = 1.0;
            fresh = true;
        }
    }
    rep.xhat = std::move(x);
    rep.final_step = eta;
    return rep;
}

double score(const Instance& inst, const SolveReport& report, DistortionKind kind) {
    if (!inst.x_true) {
        throw ParameterError("score: instance has no x_true");
    }
    return distortion(report.xhat, *inst.x_true, kind);
}

} // namespace replica_cs
