#include "replica_cs/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "replica_cs/errors.hpp"
#include "replica_cs/quadrature.hpp"
#include "replica_cs/rng.hpp"

namespace replica_cs {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require(bool ok, const std::string& what) {
    if (!ok) {
        throw ParameterError(what);
    }
}

void validate_atoms(const std::vector<SpectralAtom>& atoms) {
    require(!atoms.empty(), "spectral atoms: at least one atom required");
    double total = 0.0;
    for (const auto& a : atoms) {
        require(std::isfinite(a.eigenvalue) && a.eigenvalue >= 0.0,
                "spectral atoms: eigenvalues must be finite and nonnegative");
        require(std::isfinite(a.mass) && a.mass >= 0.0, "spectral atoms: masses must be nonnegative");
        total += a.mass;
    }
    require(std::abs(total - 1.0) <= 1e-12, "spectral atoms: masses must sum to one");
}

double mp_lower_edge(double rho) {
    const double r = std::sqrt(rho);
    return (1.0 - r) * (1.0 - r);
}

double mp_upper_edge(double rho) {
    const double r = std::sqrt(rho);
    return (1.0 + r) * (1.0 + r);
}

// Roots of s g^2 + (s - rho + 1) g + 1 = 0, the functional inverse of
// s(g) = rho / (1 + g) - 1 / g, picking the branch that vanishes at infinity.
double mp_stieltjes(double rho, double s) {
    const double a = s - rho + 1.0;
    const double disc = std::sqrt(std::max(0.0, a * a - 4.0 * s));
    if (s < 0.0 || (rho > 1.0 && s < mp_lower_edge(rho))) {
        return 2.0 / (-a + disc);
    }
    return -2.0 / (a + disc);
}

bool inside_support(const SpectralLaw& law, double s) {
    return s >= law.support_min() && s <= law.support_max();
}

double atoms_r_transform(const SpectralLaw& law, double omega) {
    if (omega == 0.0) {
        return law.mean_eigenvalue();
    }
    const auto& atoms = law.atoms();
    // R solves phi(R) = sum_i m_i (l_i - R) / (1 - omega (l_i - R)) = 0, the
    // stationarity form of G(R + 1/omega) = -omega. phi is strictly
    // decreasing in R wherever every denominator is positive.
    const auto phi = [&](double r) {
        double acc = 0.0;
        for (const auto& a : atoms) {
            const double d = a.eigenvalue - r;
            acc += a.mass * d / (1.0 - omega * d);
        }
        return acc;
    };
    const double lmin = law.support_min();
    const double lmax = law.support_max();
    double lo = 0.0;
    double hi = 0.0;
    if (omega < 0.0) {
        lo = lmin;
        hi = std::min(lmax, lmin - 1.0 / omega);
    } else {
        lo = std::max(lmin, lmax - 1.0 / omega);
        hi = lmax;
    }
    if (!(hi > lo)) {
        return lo;
    }
    for (int it = 0; it < 400; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) {
            break;
        }
        const double f = phi(mid);
        if (f > 0.0) {
            lo = mid;
        } else if (f < 0.0) {
            hi = mid;
        } else {
            return mid;
        }
    }
    return 0.5 * (lo + hi);
}

double atom_mass_at(const SpectralLaw& law, double x) {
    if (law.evaluator() == SpectralLaw::Evaluator::marchenko_pastur) {
        return (x == 0.0 && law.rho() < 1.0) ? 1.0 - law.rho() : 0.0;
    }
    double m = 0.0;
    for (const auto& a : law.atoms()) {
        if (a.eigenvalue == x) {
            m += a.mass;
        }
    }
    return m;
}

// Haar-distributed N x M matrix with orthonormal columns.
Eigen::MatrixXd haar_columns(int n, int m, Rng& rng) {
    Eigen::MatrixXd g(n, m);
    for (int j = 0; j < m; ++j) {
        for (int i = 0; i < n; ++i) {
            g(i, j) = standard_normal(rng);
        }
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, m);
    const auto& r = qr.matrixQR();
    for (int j = 0; j < m; ++j) {
        if (r(j, j) < 0.0) {
            q.col(j) = -q.col(j);
        }
    }
    return q;
}

} // namespace

// ---------------------------------------------------------------------------
// EnsembleSpec

EnsembleSpec EnsembleSpec::iid_gaussian(double rho) {
    return EnsembleSpec{EnsembleKind::iid_gaussian, rho, {}, false};
}

EnsembleSpec EnsembleSpec::row_orthogonal(double rho) {
    return EnsembleSpec{EnsembleKind::row_orthogonal, rho, {}, false};
}

EnsembleSpec EnsembleSpec::custom(std::vector<SpectralAtom> atoms, double rho) {
    return EnsembleSpec{EnsembleKind::custom_spectrum, rho, std::move(atoms), false};
}

EnsembleSpec EnsembleSpec::identity() {
    return custom({{1.0, 1.0}}, 1.0);
}

void EnsembleSpec::validate() const {
    require(std::isfinite(rho) && rho > 0.0, "ensemble: rho must be positive");
    require(rho <= 1.0 || allow_oversampling, "ensemble: rho > 1 requires allow_oversampling");
    if (kind == EnsembleKind::row_orthogonal) {
        require(rho <= 1.0, "ensemble: row_orthogonal requires rho <= 1");
    }
    if (kind == EnsembleKind::custom_spectrum) {
        validate_atoms(atoms);
    }
}

// ---------------------------------------------------------------------------
// SpectralLaw

SpectralLaw SpectralLaw::marchenko_pastur(double rho) {
    require(std::isfinite(rho) && rho > 0.0, "marchenko_pastur: rho must be positive");
    SpectralLaw law;
    law.evaluator_ = Evaluator::marchenko_pastur;
    law.rho_ = rho;
    law.support_min_ = rho >= 1.0 ? mp_lower_edge(rho) : 0.0;
    law.support_max_ = mp_upper_edge(rho);
    law.mean_ = rho;
    law.second_moment_ = rho + rho * rho;
    return law;
}

SpectralLaw SpectralLaw::from_atoms(std::vector<SpectralAtom> atoms) {
    validate_atoms(atoms);
    std::erase_if(atoms, [](const SpectralAtom& a) { return a.mass == 0.0; });
    std::sort(atoms.begin(), atoms.end(),
              [](const SpectralAtom& a, const SpectralAtom& b) { return a.eigenvalue < b.eigenvalue; });
    SpectralLaw law;
    law.evaluator_ = Evaluator::atoms;
    law.support_min_ = atoms.front().eigenvalue;
    law.support_max_ = atoms.back().eigenvalue;
    double m1 = 0.0;
    double m2 = 0.0;
    double zero_mass = 0.0;
    for (const auto& a : atoms) {
        m1 += a.mass * a.eigenvalue;
        m2 += a.mass * a.eigenvalue * a.eigenvalue;
        if (a.eigenvalue == 0.0) {
            zero_mass += a.mass;
        }
    }
    law.mean_ = m1;
    law.second_moment_ = m2;
    law.rho_ = 1.0 - zero_mass;
    law.atoms_ = std::move(atoms);
    return law;
}

SpectralLaw SpectralLaw::identity() {
    return from_atoms({{1.0, 1.0}});
}

SpectralLaw SpectralLaw::from_ensemble(const EnsembleSpec& spec) {
    spec.validate();
    switch (spec.kind) {
    case EnsembleKind::iid_gaussian:
        return marchenko_pastur(spec.rho);
    case EnsembleKind::row_orthogonal:
        if (spec.rho >= 1.0) {
            return from_atoms({{1.0, 1.0}});
        }
        return from_atoms({{0.0, 1.0 - spec.rho}, {1.0, spec.rho}});
    case EnsembleKind::custom_spectrum:
        return from_atoms(spec.atoms);
    }
    throw ParameterError("ensemble: unknown kind");
}

// ---------------------------------------------------------------------------
// Transforms

double stieltjes(const SpectralLaw& law, double s) {
    if (!std::isfinite(s) || inside_support(law, s)) {
        throw DomainError("stieltjes: s = " + std::to_string(s) + " lies inside the spectral support");
    }
    if (law.evaluator() == SpectralLaw::Evaluator::marchenko_pastur) {
        return mp_stieltjes(law.rho(), s);
    }
    double g = 0.0;
    for (const auto& a : law.atoms()) {
        g += a.mass / (a.eigenvalue - s);
    }
    return g;
}

double stieltjes_derivative(const SpectralLaw& law, double s) {
    if (!std::isfinite(s) || inside_support(law, s)) {
        throw DomainError("stieltjes_derivative: s lies inside the spectral support");
    }
    if (law.evaluator() == SpectralLaw::Evaluator::marchenko_pastur) {
        const double g = mp_stieltjes(law.rho(), s);
        return -(g * g + g) / (2.0 * s * g + s - law.rho() + 1.0);
    }
    double d = 0.0;
    for (const auto& a : law.atoms()) {
        const double t = a.eigenvalue - s;
        d += a.mass / (t * t);
    }
    return d;
}

OmegaDomain r_transform_domain(const SpectralLaw& law) {
    if (law.evaluator() == SpectralLaw::Evaluator::marchenko_pastur) {
        const double r = std::sqrt(law.rho());
        return {law.rho() <= 1.0 ? -kInf : 1.0 / (1.0 - r), 1.0 / (1.0 + r)};
    }
    // The extreme atoms make G unbounded at both support edges.
    return {-kInf, kInf};
}

double r_transform(const SpectralLaw& law, double omega) {
    if (!std::isfinite(omega) || !r_transform_domain(law).contains(omega)) {
        throw DomainError("r_transform: omega = " + std::to_string(omega) + " outside the R-transform domain");
    }
    if (law.evaluator() == SpectralLaw::Evaluator::marchenko_pastur) {
        return law.rho() / (1.0 - omega);
    }
    return atoms_r_transform(law, omega);
}

double r_transform_derivative(const SpectralLaw& law, double omega) {
    if (!std::isfinite(omega) || !r_transform_domain(law).contains(omega)) {
        throw DomainError("r_transform_derivative: omega outside the R-transform domain");
    }
    if (law.evaluator() == SpectralLaw::Evaluator::marchenko_pastur) {
        return law.rho() / ((1.0 - omega) * (1.0 - omega));
    }
    // Implicit differentiation of phi(R(omega), omega) = 0.
    const double r = atoms_r_transform(law, omega);
    double num = 0.0;
    double den = 0.0;
    for (const auto& a : law.atoms()) {
        const double d = a.eigenvalue - r;
        const double q = 1.0 - omega * d;
        num += a.mass * d * d / (q * q);
        den += a.mass / (q * q);
    }
    return num / den;
}

double stieltjes_inverse(const SpectralLaw& law, double omega) {
    if (omega == 0.0) {
        throw DomainError("stieltjes_inverse: omega = 0 maps to s at infinity");
    }
    return r_transform(law, omega) + 1.0 / omega;
}

double r_transform_by_inversion(const SpectralLaw& law, double omega) {
    if (omega == 0.0) {
        return law.mean_eigenvalue();
    }
    if (!std::isfinite(omega) || !r_transform_domain(law).contains(omega)) {
        throw DomainError("r_transform_by_inversion: omega outside the R-transform domain");
    }
    const double target = -omega;
    double lo = 0.0;
    double hi = 0.0;
    if (omega < 0.0) {
        lo = -1e9;
        hi = law.support_min() - 1e-12;
    } else {
        lo = law.support_max() + 1e-12;
        hi = 1e9;
    }
    if (stieltjes(law, lo) > target || stieltjes(law, hi) < target) {
        throw DomainError("r_transform_by_inversion: -omega outside the range of G on the search interval");
    }
    for (int it = 0; it < 400; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) {
            break;
        }
        const double g = stieltjes(law, mid);
        if (g < target) {
            lo = mid;
        } else if (g > target) {
            hi = mid;
        } else {
            lo = hi = mid;
            break;
        }
    }
    return 0.5 * (lo + hi) - 1.0 / omega;
}

Eigen::MatrixXd matrix_r_transform(const SpectralLaw& law, const Eigen::MatrixXd& s) {
    if (s.rows() != s.cols()) {
        throw ShapeError("matrix_r_transform: argument must be square");
    }
    const double scale = 1.0 + s.cwiseAbs().maxCoeff();
    if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw ParameterError("matrix_r_transform: argument must be symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (s + s.transpose()));
    if (eig.info() != Eigen::Success) {
        throw NumericalError("matrix_r_transform: eigendecomposition failed");
    }
    Eigen::VectorXd r(s.rows());
    for (Eigen::Index i = 0; i < r.size(); ++i) {
        r(i) = r_transform(law, eig.eigenvalues()(i));
    }
    const Eigen::MatrixXd& v = eig.eigenvectors();
    Eigen::MatrixXd out = v * r.asDiagonal() * v.transpose();
    return 0.5 * (out + out.transpose());
}

double law_cdf(const SpectralLaw& law, double x) {
    if (law.evaluator() == SpectralLaw::Evaluator::atoms) {
        double f = 0.0;
        for (const auto& a : law.atoms()) {
            if (a.eigenvalue <= x) {
                f += a.mass;
            }
        }
        return std::min(f, 1.0);
    }
    if (x < 0.0) {
        return 0.0;
    }
    const double rho = law.rho();
    const double atom = rho < 1.0 ? 1.0 - rho : 0.0;
    const double a = mp_lower_edge(rho);
    const double b = mp_upper_edge(rho);
    if (x <= a) {
        return atom;
    }
    if (x >= b) {
        return 1.0;
    }
    // t = c - h cos(theta) turns sqrt((b - t)(t - a)) into h sin(theta) and
    // leaves a smooth integrand on [0, theta(x)].
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const double theta = std::acos(std::clamp((c - x) / h, -1.0, 1.0));
    const auto rule = gauss_legendre(64, 0.0, theta);
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        const double th = rule.nodes[i];
        const double t = c - h * std::cos(th);
        const double sn = std::sin(th);
        acc += rule.weights[i] * h * h * sn * sn / (2.0 * std::numbers::pi * t);
    }
    return std::min(1.0, atom + acc);
}

// ---------------------------------------------------------------------------
// Sampling

Eigen::MatrixXd sample_matrix(const EnsembleSpec& spec, int n, std::uint64_t seed) {
    spec.validate();
    require(n >= 2, "sample_matrix: N must be at least 2");
    const long m = std::lround(spec.rho * n);
    require(m >= 1, "sample_matrix: round(rho N) must be at least 1");
    const int rows = static_cast<int>(m);

    switch (spec.kind) {
    case EnsembleKind::iid_gaussian: {
        Rng rng = make_rng(seed, {1});
        const double scale = 1.0 / std::sqrt(static_cast<double>(n));
        Eigen::MatrixXd a(rows, n);
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < rows; ++i) {
                a(i, j) = scale * standard_normal(rng);
            }
        }
        return a;
    }
    case EnsembleKind::row_orthogonal: {
        Rng rng = make_rng(seed, {2});
        return haar_columns(n, rows, rng).transpose();
    }
    case EnsembleKind::custom_spectrum: {
        // Largest-remainder allocation of the N eigenvalues over the atoms.
        const auto& atoms = spec.atoms;
        std::vector<long> counts(atoms.size());
        std::vector<std::pair<double, std::size_t>> rem;
        long assigned = 0;
        for (std::size_t k = 0; k < atoms.size(); ++k) {
            const double exact = atoms[k].mass * n;
            counts[k] = static_cast<long>(std::floor(exact));
            assigned += counts[k];
            rem.emplace_back(exact - std::floor(exact), k);
        }
        std::stable_sort(rem.begin(), rem.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
        for (std::size_t k = 0; assigned < n; ++k, ++assigned) {
            ++counts[rem[k % rem.size()].second];
        }
        std::vector<double> eig;
        eig.reserve(n);
        for (std::size_t k = 0; k < atoms.size(); ++k) {
            eig.insert(eig.end(), static_cast<std::size_t>(counts[k]), atoms[k].eigenvalue);
        }
        std::sort(eig.begin(), eig.end(), std::greater<>());
        const auto nonzero = std::count_if(eig.begin(), eig.end(), [](double v) { return v > 0.0; });
        require(nonzero <= m, "sample_matrix: custom spectrum has more nonzero eigenvalues than rows");
        if (atoms.size() == 1 && rows == n) {
            // c I is Haar invariant; skip the rotation and its round-off
            return std::sqrt(atoms[0].eigenvalue) * Eigen::MatrixXd::Identity(n, n);
        }
        Rng rng = make_rng(seed, {3});
        Eigen::MatrixXd a = haar_columns(n, rows, rng).transpose();
        for (int i = 0; i < rows; ++i) {
            a.row(i) *= std::sqrt(eig[static_cast<std::size_t>(i)]);
        }
        return a;
    }
    }
    throw ParameterError("sample_matrix: unknown ensemble kind");
}

// ---------------------------------------------------------------------------
// Empirical density of states

double EmpiricalDos::cdf(double x) const {
    const auto it = std::upper_bound(eigenvalues.begin(), eigenvalues.end(), x);
    return static_cast<double>(it - eigenvalues.begin()) / static_cast<double>(n);
}

double EmpiricalDos::mean() const {
    return std::accumulate(eigenvalues.begin(), eigenvalues.end(), 0.0) / n;
}

double EmpiricalDos::second_moment() const {
    double acc = 0.0;
    for (double v : eigenvalues) {
        acc += v * v;
    }
    return acc / n;
}

SpectralLaw EmpiricalDos::as_law() const {
    std::vector<SpectralAtom> atoms;
    atoms.reserve(eigenvalues.size());
    const double mass = 1.0 / static_cast<double>(n);
    for (double v : eigenvalues) {
        atoms.push_back({v, mass});
    }
    // Absorb the rounding of N * (1/N) into the last atom.
    double total = mass * static_cast<double>(n);
    atoms.back().mass += 1.0 - total;
    return SpectralLaw::from_atoms(std::move(atoms));
}

EmpiricalDos empirical_dos(const Eigen::MatrixXd& a) {
    const Eigen::Index m = a.rows();
    const Eigen::Index n = a.cols();
    EmpiricalDos dos;
    dos.n = static_cast<int>(n);
    // A^T A and A A^T share their nonzero spectrum; use the smaller Gramian.
    const bool wide = m < n;
    Eigen::MatrixXd gram = wide ? Eigen::MatrixXd(a * a.transpose()) : Eigen::MatrixXd(a.transpose() * a);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) {
        throw NumericalError("empirical_dos: eigensolver failed");
    }
    dos.eigenvalues.assign(static_cast<std::size_t>(n), 0.0);
    const auto& ev = eig.eigenvalues();
    const Eigen::Index offset = wide ? n - m : 0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        // Gramians are PSD; clamp round-off negatives.
        dos.eigenvalues[static_cast<std::size_t>(offset + i)] = std::max(0.0, ev(i));
    }
    std::sort(dos.eigenvalues.begin(), dos.eigenvalues.end());
    return dos;
}

double kolmogorov_distance(const EmpiricalDos& dos, const SpectralLaw& law) {
    const auto& ev = dos.eigenvalues;
    const double n = static_cast<double>(dos.n);
    // Eigensolver round-off splits what should be one jump (e.g. the unit
    // eigenvalues of a row-orthogonal Gramian); merge near-equal values and
    // snap them onto a nearby atom of the law.
    const auto close = [](double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a)); };
    double dist = 0.0;
    std::size_t i = 0;
    while (i < ev.size()) {
        std::size_t j = i;
        while (j < ev.size() && close(ev[i], ev[j])) {
            ++j;
        }
        double x = ev[i];
        if (law.evaluator() == SpectralLaw::Evaluator::atoms) {
            for (const auto& a : law.atoms()) {
                if (close(a.eigenvalue, ev[i]) || close(a.eigenvalue, ev[j - 1])) {
                    x = a.eigenvalue;
                }
            }
        }
        const double f_right = law_cdf(law, x);
        const double f_left = f_right - atom_mass_at(law, x);
        dist = std::max(dist, std::abs(f_left - static_cast<double>(i) / n));
        dist = std::max(dist, std::abs(f_right - static_cast<double>(j) / n));
        i = j;
    }
    return dist;
}

} // namespace replica_cs
