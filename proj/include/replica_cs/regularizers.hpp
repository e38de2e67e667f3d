#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace replica_cs {

enum class RegularizerKind {
    l1,            // sum_j |v_j|
    lpq,           // (sum_j |v_j|^p)^(q/p)
    group_l21,     // ||v||_2
    two_dim_lasso, // |v_1| + |v_2| + phi |v_1 + alpha v_2|
    ridge,         // ||v||^2 / 2
    zero,          // 0
    l0             // number of nonzeros (experimental, grid path only)
};

enum class FeasibleSet { reals, box };

/// Separable penalty u(v^J) scaled by `weight`, with the per-index feasible set.
struct RegularizerSpec {
    RegularizerKind kind = RegularizerKind::l1;
    double weight = 1.0;
    double p = 1.0;
    double q = 1.0;
    double phi = 0.0;
    double alpha = 0.0;
    FeasibleSet domain = FeasibleSet::reals;
    double box = 1.0; // half-width B of [-B, B]^J

    static RegularizerSpec l1(double weight = 1.0);
    static RegularizerSpec lpq(double p, double q, double weight = 1.0);
    static RegularizerSpec group_l21(double weight = 1.0);
    static RegularizerSpec two_dim_lasso(double phi, double alpha, double weight = 1.0);
    static RegularizerSpec ridge(double weight = 1.0);
    static RegularizerSpec zero();
    static RegularizerSpec l0(double weight = 1.0);

    RegularizerSpec with_box(double b) const;

    /// Throws ParameterError if the spec is invalid for J terminals.
    void validate(int terminals) const;
    /// Convex penalty and convex feasible set.
    bool is_convex() const;

    bool operator==(const RegularizerSpec&) const = default;
};

/// Decoupled observations y and positive weights tau of the J-dimensional
/// scalar channel argmin_v sum_j (y_j - v_j)^2 / (2 tau_j) + u(v).
struct ScalarChannelIn {
    std::vector<double> y;
    std::vector<double> tau;
};

/// weight * u(v). Box membership is not required.
double reg_value(const RegularizerSpec& spec, std::span<const double> v);

/// sum_j (y_j - v_j)^2 / (2 tau_j) + weight * u(v).
double scalar_objective(std::span<const double> y, std::span<const double> tau, const RegularizerSpec& spec,
                        std::span<const double> v);

/// Global minimizer of `scalar_objective` over the feasible set, written to
/// `out`. Ties go to the smaller Euclidean norm, then lexicographically.
void scalar_estimate(std::span<const double> y, std::span<const double> tau, const RegularizerSpec& spec,
                     std::span<double> out);

std::vector<double> scalar_estimate(const ScalarChannelIn& in, const RegularizerSpec& spec);

/// Column-wise scalar_estimate of a J x N matrix.
Eigen::MatrixXd prox_block(const Eigen::MatrixXd& v, std::span<const double> tau, const RegularizerSpec& spec);

} // namespace replica_cs
