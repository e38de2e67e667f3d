#pragma once

#include <vector>

namespace replica_cs {

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Gauss-Hermite rule for expectations under the standard normal law:
/// E[f(Z)] ~ sum_i weights[i] * f(nodes[i]); weights sum to one.
QuadratureRule gauss_hermite_normal(int order);

/// Gauss-Legendre rule on [lo, hi].
QuadratureRule gauss_legendre(int order, double lo, double hi);

} // namespace replica_cs
