#include "replica_cs/signal_model.hpp"

#include <cmath>
#include <string>

#include "replica_cs/errors.hpp"
#include "replica_cs/rng.hpp"

namespace replica_cs {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) {
        throw ParameterError(what);
    }
}

bool is_probability(double p) {
    return std::isfinite(p) && p >= 0.0 && p <= 1.0;
}

double draw(const ValueDist& d, Rng& rng) {
    switch (d.kind) {
    case ValueDist::Kind::gaussian:
        return d.mean + std::sqrt(d.variance) * standard_normal(rng);
    case ValueDist::Kind::point_mass:
        return d.value;
    case ValueDist::Kind::binary:
        return uniform01(rng) < 0.5 ? -d.value : d.value;
    }
    return 0.0;
}

// Adds the amplitude `d` to the coordinates selected by `mask` (all
// coordinates share one draw), splitting atoms for discrete laws.
void add_term(std::vector<GaussianAtom>& atoms, const ValueDist& d, const Eigen::VectorXd& mask) {
    switch (d.kind) {
    case ValueDist::Kind::gaussian:
        for (auto& a : atoms) {
            a.mean += d.mean * mask;
            a.cov += d.variance * mask * mask.transpose();
        }
        break;
    case ValueDist::Kind::point_mass:
        for (auto& a : atoms) {
            a.mean += d.value * mask;
        }
        break;
    case ValueDist::Kind::binary: {
        std::vector<GaussianAtom> out;
        out.reserve(2 * atoms.size());
        for (const auto& a : atoms) {
            for (double sign : {-1.0, 1.0}) {
                GaussianAtom b = a;
                b.weight *= 0.5;
                b.mean += sign * d.value * mask;
                out.push_back(std::move(b));
            }
        }
        atoms = std::move(out);
        break;
    }
    }
}

} // namespace

ValueDist ValueDist::gaussian(double mean, double variance) {
    ValueDist d;
    d.kind = Kind::gaussian;
    d.mean = mean;
    d.variance = variance;
    return d;
}

ValueDist ValueDist::point_mass(double value) {
    ValueDist d;
    d.kind = Kind::point_mass;
    d.value = value;
    return d;
}

ValueDist ValueDist::binary(double magnitude) {
    ValueDist d;
    d.kind = Kind::binary;
    d.value = magnitude;
    return d;
}

void ValueDist::validate() const {
    switch (kind) {
    case Kind::gaussian:
        require(std::isfinite(mean) && std::isfinite(variance) && variance > 0.0,
                "value distribution: gaussian variance must be positive");
        break;
    case Kind::point_mass:
        require(std::isfinite(value) && value != 0.0, "value distribution: point_mass(0) is not allowed");
        break;
    case Kind::binary:
        require(std::isfinite(value) && value != 0.0, "value distribution: binary(0) is not allowed");
        break;
    }
}

double ValueDist::first_moment() const {
    switch (kind) {
    case Kind::gaussian:
        return mean;
    case Kind::point_mass:
        return value;
    case Kind::binary:
        return 0.0;
    }
    return 0.0;
}

double ValueDist::second_moment() const {
    switch (kind) {
    case Kind::gaussian:
        return variance + mean * mean;
    case Kind::point_mass:
    case Kind::binary:
        return value * value;
    }
    return 0.0;
}

JointSparsityPrior JointSparsityPrior::bernoulli_gaussian(double mu) {
    JointSparsityPrior p;
    p.terminals = 1;
    p.mu_j = {mu};
    return p;
}

void JointSparsityPrior::validate() const {
    require(terminals >= 1, "prior: terminals must be at least 1");
    require(is_probability(mu_c) && is_probability(mu_0), "prior: mu_c and mu_0 must lie in [0, 1]");
    require(static_cast<int>(mu_j.size()) == terminals, "prior: mu_j must have one entry per terminal");
    for (double m : mu_j) {
        require(is_probability(m), "prior: mu_j must lie in [0, 1]");
    }
    w0.validate();
    wj.validate();
    uj.validate();
}

double JointSparsityPrior::second_moment(int j) const {
    const double e1 = mu_c * w0.first_moment();
    const double e2 = mu_0 * wj.first_moment();
    const double e3 = mu_j.at(static_cast<std::size_t>(j)) * uj.first_moment();
    const double s1 = mu_c * w0.second_moment();
    const double s2 = mu_0 * wj.second_moment();
    const double s3 = mu_j.at(static_cast<std::size_t>(j)) * uj.second_moment();
    return s1 + s2 + s3 + 2.0 * (e1 * e2 + e1 * e3 + e2 * e3);
}

double JointSparsityPrior::nonzero_probability(int j) const {
    return 1.0 - (1.0 - mu_c) * (1.0 - mu_0) * (1.0 - mu_j.at(static_cast<std::size_t>(j)));
}

JointSparsityPrior special_case(SparsityCase kind, const SpecialCaseParams& params) {
    const auto nonzero = [](const std::optional<double>& v) { return v.has_value() && *v != 0.0; };
    const auto any_nonzero = [](const std::vector<double>& v) {
        for (double x : v) {
            if (x != 0.0) {
                return true;
            }
        }
        return false;
    };

    JointSparsityPrior prior;
    prior.w0 = params.w0;
    prior.wj = params.wj;
    prior.uj = params.uj;
    prior.terminals = params.terminals;

    switch (kind) {
    case SparsityCase::classical_cs:
        require(params.terminals == 1, "classical_cs: exactly one terminal");
        require(!nonzero(params.mu_c) && !nonzero(params.mu_0), "classical_cs: sets c_n = s_0n = 0");
        require(params.mu_j.size() == 1, "classical_cs: requires mu_j for the single terminal");
        prior.mu_c = 0.0;
        prior.mu_0 = 0.0;
        prior.mu_j = params.mu_j;
        break;
    case SparsityCase::mmv_common_support:
        require(!nonzero(params.mu_c) && !any_nonzero(params.mu_j), "mmv_common_support: sets s_jn = c_n = 0");
        require(params.mu_0.has_value(), "mmv_common_support: requires mu_0");
        prior.mu_c = 0.0;
        prior.mu_0 = *params.mu_0;
        prior.mu_j.assign(static_cast<std::size_t>(params.terminals), 0.0);
        break;
    case SparsityCase::dcs_common_innovation:
        require(!any_nonzero(params.mu_j), "dcs_common_innovation: sets s_jn = 0");
        require(params.mu_c.has_value() && params.mu_0.has_value(), "dcs_common_innovation: requires mu_c and mu_0");
        prior.mu_c = *params.mu_c;
        prior.mu_0 = *params.mu_0;
        prior.mu_j.assign(static_cast<std::size_t>(params.terminals), 0.0);
        break;
    }
    prior.validate();
    return prior;
}

Eigen::VectorXd SampleBlock::reconstruct(int n) const {
    const auto jn = static_cast<int>(x.rows());
    Eigen::VectorXd col(jn);
    for (int j = 0; j < jn; ++j) {
        col(j) = common[static_cast<std::size_t>(n)] * w0(n) + shared[static_cast<std::size_t>(n)] * w(j, n) +
                 innovation[static_cast<std::size_t>(j + jn * n)] * u(j, n);
    }
    return col;
}

SampleBlock sample_joint(const JointSparsityPrior& prior, int n, std::uint64_t seed) {
    prior.validate();
    require(n >= 1, "sample_joint: N must be at least 1");
    const int jn = prior.terminals;
    SampleBlock b;
    b.x.resize(jn, n);
    b.w0.resize(n);
    b.w.resize(jn, n);
    b.u.resize(jn, n);
    b.common.resize(static_cast<std::size_t>(n));
    b.shared.resize(static_cast<std::size_t>(n));
    b.innovation.resize(static_cast<std::size_t>(jn) * static_cast<std::size_t>(n));

    Rng rng = make_rng(seed, {0x5167});
    for (int col = 0; col < n; ++col) {
        const auto c = static_cast<std::uint8_t>(uniform01(rng) < prior.mu_c);
        const auto s0 = static_cast<std::uint8_t>(uniform01(rng) < prior.mu_0);
        b.common[static_cast<std::size_t>(col)] = c;
        b.shared[static_cast<std::size_t>(col)] = s0;
        b.w0(col) = draw(prior.w0, rng);
        for (int j = 0; j < jn; ++j) {
            const auto sj = static_cast<std::uint8_t>(uniform01(rng) < prior.mu_j[static_cast<std::size_t>(j)]);
            b.innovation[static_cast<std::size_t>(j + jn * col)] = sj;
            b.w(j, col) = draw(prior.wj, rng);
            b.u(j, col) = draw(prior.uj, rng);
        }
        b.x.col(col) = b.reconstruct(col);
    }
    return b;
}

std::vector<GaussianAtom> MixtureComponent::gaussian_atoms(const JointSparsityPrior& prior) const {
    const int jn = prior.terminals;
    std::vector<GaussianAtom> atoms(1);
    atoms[0].weight = 1.0;
    atoms[0].mean = Eigen::VectorXd::Zero(jn);
    atoms[0].cov = Eigen::MatrixXd::Zero(jn, jn);
    if (common) {
        add_term(atoms, prior.w0, Eigen::VectorXd::Ones(jn));
    }
    for (int j = 0; j < jn; ++j) {
        const Eigen::VectorXd e = Eigen::VectorXd::Unit(jn, j);
        if (shared) {
            add_term(atoms, prior.wj, e);
        }
        if (innovation[static_cast<std::size_t>(j)]) {
            add_term(atoms, prior.uj, e);
        }
    }
    return atoms;
}

std::vector<MixtureComponent> prior_mixture(const JointSparsityPrior& prior) {
    prior.validate();
    const int jn = prior.terminals;
    if (jn > 4) {
        throw ParameterError("prior_mixture: exact enumeration supports at most 4 terminals (" +
                             std::to_string(1 << (jn + 2)) + " configurations requested)");
    }
    std::vector<MixtureComponent> out;
    const unsigned configs = 1u << (jn + 2);
    for (unsigned mask = 0; mask < configs; ++mask) {
        MixtureComponent comp;
        comp.common = (mask >> (jn + 1)) & 1u;
        comp.shared = (mask >> jn) & 1u;
        double p = (comp.common ? prior.mu_c : 1.0 - prior.mu_c) * (comp.shared ? prior.mu_0 : 1.0 - prior.mu_0);
        comp.innovation.resize(static_cast<std::size_t>(jn));
        for (int j = 0; j < jn; ++j) {
            const bool s = (mask >> (jn - 1 - j)) & 1u;
            comp.innovation[static_cast<std::size_t>(j)] = s;
            const double m = prior.mu_j[static_cast<std::size_t>(j)];
            p *= s ? m : 1.0 - m;
        }
        if (p > 0.0) {
            comp.probability = p;
            out.push_back(std::move(comp));
        }
    }
    return out;
}

double distortion(const Eigen::MatrixXd& xhat, const Eigen::MatrixXd& x, DistortionKind kind) {
    if (xhat.rows() != x.rows() || xhat.cols() != x.cols()) {
        throw ShapeError("distortion: shapes differ");
    }
    if (x.cols() == 0) {
        throw ShapeError("distortion: no samples");
    }
    double acc = 0.0;
    switch (kind) {
    case DistortionKind::mse:
        acc = (xhat - x).squaredNorm();
        break;
    case DistortionKind::support_error:
        for (Eigen::Index n = 0; n < x.cols(); ++n) {
            for (Eigen::Index j = 0; j < x.rows(); ++j) {
                acc += ((xhat(j, n) != 0.0) != (x(j, n) != 0.0)) ? 1.0 : 0.0;
            }
        }
        break;
    }
    return acc / static_cast<double>(x.cols());
}

} // namespace replica_cs
