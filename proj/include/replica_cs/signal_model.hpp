#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace replica_cs {

/// Law of a nonzero amplitude. None of the kinds places mass on zero.
struct ValueDist {
    enum class Kind { gaussian, point_mass, binary };

    Kind kind = Kind::gaussian;
    double mean = 0.0;     // gaussian
    double variance = 1.0; // gaussian
    double value = 1.0;    // point_mass: value; binary: +-value with probability 1/2

    static ValueDist gaussian(double mean = 0.0, double variance = 1.0);
    static ValueDist point_mass(double value);
    static ValueDist binary(double magnitude);

    void validate() const;
    double first_moment() const;
    double second_moment() const;

    bool operator==(const ValueDist&) const = default;
};

/// x_{jn} = c_n w_{0n} + s_{0n} w_{jn} + s_{jn} u_{jn} with
/// c ~ Bern(mu_c), s_0 ~ Bern(mu_0), s_j ~ Bern(mu_j).
struct JointSparsityPrior {
    int terminals = 1;
    double mu_c = 0.0;
    double mu_0 = 0.0;
    std::vector<double> mu_j{0.1};
    ValueDist w0;
    ValueDist wj;
    ValueDist uj;

    static JointSparsityPrior bernoulli_gaussian(double mu);

    void validate() const;
    /// E[x_j^2].
    double second_moment(int j) const;
    /// P(x_j != 0) = 1 - (1 - mu_c)(1 - mu_0)(1 - mu_j).
    double nonzero_probability(int j) const;

    bool operator==(const JointSparsityPrior&) const = default;
};

enum class SparsityCase { classical_cs, mmv_common_support, dcs_common_innovation };

/// Surviving sparsity parameters for one of the named special cases. Fields
/// left empty are set to zero by the case; supplying a nonzero value for a
/// parameter the case removes is rejected.
struct SpecialCaseParams {
    int terminals = 1;
    std::optional<double> mu_c;
    std::optional<double> mu_0;
    std::vector<double> mu_j;
    ValueDist w0;
    ValueDist wj;
    ValueDist uj;
};

JointSparsityPrior special_case(SparsityCase kind, const SpecialCaseParams& params);

struct SampleBlock {
    Eigen::MatrixXd x;                  // J x N
    std::vector<std::uint8_t> common;   // c_n
    std::vector<std::uint8_t> shared;   // s_{0n}
    std::vector<std::uint8_t> innovation; // s_{jn}, index j + J n
    Eigen::VectorXd w0;                 // w_{0n}
    Eigen::MatrixXd w;                  // w_{jn}
    Eigen::MatrixXd u;                  // u_{jn}

    /// Column n rebuilt from latents and amplitudes.
    Eigen::VectorXd reconstruct(int n) const;
};

SampleBlock sample_joint(const JointSparsityPrior& prior, int n, std::uint64_t seed);

/// Jointly Gaussian piece of a conditional law (covariance may be singular;
/// point masses have zero covariance).
struct GaussianAtom {
    double weight = 1.0;
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

/// One joint indicator configuration (c, s_0, s_1..s_J) and the conditional
/// law of x^J it induces.
struct MixtureComponent {
    double probability = 0.0;
    bool common = false;
    bool shared = false;
    std::vector<bool> innovation;

    /// Conditional law of x^J as a finite mixture of Gaussians.
    std::vector<GaussianAtom> gaussian_atoms(const JointSparsityPrior& prior) const;
};

/// Enumerates indicator configurations with nonzero probability. J <= 4.
std::vector<MixtureComponent> prior_mixture(const JointSparsityPrior& prior);

enum class DistortionKind { mse, support_error };

/// (1/N) sum_n Delta(xhat_n; x_n).
double distortion(const Eigen::MatrixXd& xhat, const Eigen::MatrixXd& x, DistortionKind kind);

} // namespace replica_cs
