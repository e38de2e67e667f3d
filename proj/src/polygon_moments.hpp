#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "replica_cs/regularizers.hpp"

namespace replica_cs::detail {

using Polygon = std::vector<Eigen::Vector2d>;

/// Keeps the part of `poly` with n . t <= c.
Polygon clip(const Polygon& poly, const Eigen::Vector2d& n, double c);

/// Counter-clockwise square [-r, r]^2.
Polygon square(double r);

/// Integrals of {1, t1, t2, t1^2, t1 t2, t2^2} times the standard bivariate
/// normal density over a simple polygon.
std::array<double, 6> gaussian_moments(const Polygon& poly);

/// Piece of the 2-D LASSO estimate: on the polygon {A y <= b} the estimate
/// is v = K y + k.
struct AffinePiece {
    Eigen::Matrix2d k_mat;
    Eigen::Vector2d k_vec;
    std::vector<Eigen::Vector2d> normals; // rows of A
    std::vector<double> offsets;          // b
    std::vector<Eigen::Vector2d> vertices; // set instead of half-planes for the zero zonotope
    std::array<int, 2> sign{0, 0};
};

/// Partition of y-space into pieces on which the two_dim_lasso estimate
/// (reals domain, alpha != 0) is affine. Empty when the spec is outside that
/// family.
std::vector<AffinePiece> two_dim_lasso_pieces(const RegularizerSpec& spec, std::span<const double> tau);

} // namespace replica_cs::detail
