#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace replica_cs {

enum class EnsembleKind { iid_gaussian, row_orthogonal, custom_spectrum };

struct SpectralAtom {
    double eigenvalue = 0.0;
    double mass = 0.0;

    bool operator==(const SpectralAtom&) const = default;
};

/// Sensing-matrix ensemble for one terminal. `rho` is the compression ratio M/N.
struct EnsembleSpec {
    EnsembleKind kind = EnsembleKind::iid_gaussian;
    double rho = 1.0;
    std::vector<SpectralAtom> atoms; // custom_spectrum only
    bool allow_oversampling = false; // admit rho > 1

    static EnsembleSpec iid_gaussian(double rho);
    static EnsembleSpec row_orthogonal(double rho);
    static EnsembleSpec custom(std::vector<SpectralAtom> atoms, double rho);
    /// A^T A = I: custom spectrum with a single unit atom at rho = 1.
    static EnsembleSpec identity();

    /// Throws ParameterError when an invariant is violated.
    void validate() const;

    bool operator==(const EnsembleSpec&) const = default;
};

/// Asymptotic eigenvalue law of a Gramian A^T A together with the means to
/// evaluate its Stieltjes and R transforms on the real axis.
///
/// Two evaluators exist: the Marchenko-Pastur law of an i.i.d. Gaussian
/// matrix with entry variance 1/N (closed-form G and R), and finite atom sums
/// (row-orthogonal, custom and empirical spectra) whose R transform is found
/// by a bracketed root search.
class SpectralLaw {
public:
    enum class Evaluator { marchenko_pastur, atoms };

    static SpectralLaw marchenko_pastur(double rho);
    static SpectralLaw from_atoms(std::vector<SpectralAtom> atoms);
    static SpectralLaw identity();
    static SpectralLaw from_ensemble(const EnsembleSpec& spec);

    Evaluator evaluator() const noexcept { return evaluator_; }
    double rho() const noexcept { return rho_; }
    const std::vector<SpectralAtom>& atoms() const noexcept { return atoms_; }

    double support_min() const noexcept { return support_min_; }
    double support_max() const noexcept { return support_max_; }
    double mean_eigenvalue() const noexcept { return mean_; }
    double second_moment() const noexcept { return second_moment_; }

private:
    SpectralLaw() = default;

    Evaluator evaluator_ = Evaluator::atoms;
    double rho_ = 1.0;
    std::vector<SpectralAtom> atoms_;
    double support_min_ = 0.0;
    double support_max_ = 0.0;
    double mean_ = 0.0;
    double second_moment_ = 0.0;
};

/// G(s) = int dF(lambda) / (lambda - s) for real s outside the support.
/// Below the support G is positive and increasing; above it G is negative and
/// increasing. Throws DomainError for s inside [support_min, support_max].
double stieltjes(const SpectralLaw& law, double s);

/// dG/ds at the same points where `stieltjes` is defined.
double stieltjes_derivative(const SpectralLaw& law, double s);

/// Open interval (lower, upper) of omega for which G^{-1}(-omega) exists on the
/// real axis outside the support; always contains 0 through the continuous
/// extension. Negative omega correspond to s below the support, which is the
/// branch the decoupled scalar channel uses (arguments -chi/lambda).
struct OmegaDomain {
    double lower = 0.0;
    double upper = 0.0;

    bool contains(double omega) const noexcept { return omega > lower && omega < upper; }
};

OmegaDomain r_transform_domain(const SpectralLaw& law);

/// s with G(s) = -omega, omega != 0. Throws DomainError outside the domain.
double stieltjes_inverse(const SpectralLaw& law, double omega);

/// R(omega) = G^{-1}(-omega) - 1/omega with R(0) = mean eigenvalue.
double r_transform(const SpectralLaw& law, double omega);

/// dR/domega.
double r_transform_derivative(const SpectralLaw& law, double omega);

/// Independent evaluation of R through bisection on s against G, tolerance
/// 1e-12 on |G(s) + omega|. Used to cross-check the closed forms.
double r_transform_by_inversion(const SpectralLaw& law, double omega);

/// Sigma Diag{R(lambda_i)} Sigma^T for symmetric S = Sigma Diag{lambda_i} Sigma^T.
Eigen::MatrixXd matrix_r_transform(const SpectralLaw& law, const Eigen::MatrixXd& S);

/// CDF of the law at x.
double law_cdf(const SpectralLaw& law, double x);

/// Draw an M x N sensing matrix, M = round(rho N). Deterministic given seed.
Eigen::MatrixXd sample_matrix(const EnsembleSpec& spec, int n, std::uint64_t seed);

/// Sorted eigenvalues of A^T A.
struct EmpiricalDos {
    std::vector<double> eigenvalues;
    int n = 0;

    double cdf(double x) const;
    double mean() const;
    double second_moment() const;
    /// Atom law with mass 1/N on every eigenvalue.
    SpectralLaw as_law() const;
};

EmpiricalDos empirical_dos(const Eigen::MatrixXd& a);

/// sup_x |F_N(x) - F(x)| over the jump points of the empirical CDF. Eigenvalues
/// within 1e-9 (relative) of each other or of an atom of the law count as one jump.
double kolmogorov_distance(const EmpiricalDos& dos, const SpectralLaw& law);

} // namespace replica_cs
