#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "replica_cs/errors.hpp"
#include "replica_cs/spectra.hpp"

using namespace replica_cs;

namespace {

// Nonzero Gramian spectrum from the smaller A A^T, padded with zeros.
std::vector<double> gram_eigenvalues(const Eigen::MatrixXd& a) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a * a.transpose(), Eigen::EigenvaluesOnly);
    std::vector<double> ev(static_cast<std::size_t>(a.cols()), 0.0);
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        ev[static_cast<std::size_t>(i)] = std::max(0.0, es.eigenvalues()(i));
    }
    std::sort(ev.begin(), ev.end());
    return ev;
}

double empirical_g(const std::vector<double>& ev, double s) {
    double acc = 0.0;
    for (double l : ev) {
        acc += 1.0 / (l - s);
    }
    return acc / static_cast<double>(ev.size());
}

// Marchenko-Pastur CDF (unit-variance entries scaled by 1/N, ratio rho)
// by composite Simpson integration of the density after sqrt substitution.
double mp_cdf(double rho, double x) {
    const double a = (1.0 - std::sqrt(rho)) * (1.0 - std::sqrt(rho));
    const double b = (1.0 + std::sqrt(rho)) * (1.0 + std::sqrt(rho));
    const double atom = rho < 1.0 ? 1.0 - rho : 0.0;
    if (x < a) {
        return x >= 0.0 ? atom : 0.0;
    }
    const double hi = std::min(x, b);
    // lambda = a + (b - a) sin^2(theta) removes the edge singularities
    const double th_hi = std::asin(std::sqrt((hi - a) / (b - a)));
    const int n = 4000;
    const double h = th_hi / n;
    double acc = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double th = i * h;
        const double lam = a + (b - a) * std::sin(th) * std::sin(th);
        const double dl = 2.0 * (b - a) * std::sin(th) * std::cos(th);
        const double dens = std::sqrt(std::max(0.0, (b - lam) * (lam - a))) / (2.0 * M_PI * lam);
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        acc += w * dens * dl;
    }
    return atom + acc * h / 3.0;
}

} // namespace

TEST_CASE("stieltjes of point laws") {
    CHECK(stieltjes(SpectralLaw::identity(), -1.0) == doctest::Approx(0.5).epsilon(1e-15));
    const auto zero = SpectralLaw::from_atoms({{0.0, 1.0}});
    CHECK(stieltjes(zero, -2.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK_THROWS_AS(stieltjes(SpectralLaw::identity(), 1.0), DomainError);
    CHECK_THROWS_AS(stieltjes(zero, 0.0), DomainError);
}

TEST_CASE("stieltjes of Marchenko-Pastur against a sampled Gramian") {
    const auto law = SpectralLaw::marchenko_pastur(0.5);
    const auto a = sample_matrix(EnsembleSpec::iid_gaussian(0.5), 2048, 11);
    const auto ev = gram_eigenvalues(a);
    const double oracle = empirical_g(ev, -1.0);
    CHECK(std::abs(stieltjes(law, -1.0) - oracle) <= 0.02 * oracle);

    SUBCASE("R(0.5) from bisection on the empirical transform") {
        // G(s) = -0.5 lies above the support; G is increasing there
        double lo = ev.back() + 1e-9;
        double hi = ev.back() + 100.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (empirical_g(ev, mid) < -0.5 ? lo : hi) = mid;
        }
        const double r_emp = 0.5 * (lo + hi) - 1.0 / 0.5;
        CHECK(r_transform(law, 0.5) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::abs(r_transform(law, 0.5) - r_emp) <= 0.02 * std::abs(r_emp));
    }
}

TEST_CASE("stieltjes is increasing below the support") {
    for (const auto& law : {SpectralLaw::marchenko_pastur(0.3), SpectralLaw::from_ensemble(EnsembleSpec::row_orthogonal(0.5)),
                            SpectralLaw::from_atoms({{0.5, 0.25}, {2.0, 0.75}})}) {
        double prev = -1.0;
        for (double s = -50.0; s < law.support_min() - 1e-3; s += 0.37) {
            const double g = stieltjes(law, s);
            CHECK(g > 0.0);
            CHECK(g > prev);
            prev = g;
        }
    }
}

TEST_CASE("r_transform examples") {
    const auto id = SpectralLaw::identity();
    for (double w : {-3.0, -0.5, 0.0, 0.3}) {
        CHECK(r_transform(id, w) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(r_transform_derivative(id, w) == doctest::Approx(0.0).epsilon(1e-12));
    }
    const auto mp = SpectralLaw::marchenko_pastur(0.5);
    CHECK(r_transform(mp, 0.0) == doctest::Approx(0.5).epsilon(1e-14));
    // finite differences of the numeric inversion at +-1e-4
    const double fd = (r_transform_by_inversion(mp, 1e-4) - r_transform_by_inversion(mp, -1e-4)) / 2e-4;
    CHECK(r_transform_derivative(mp, 0.0) == doctest::Approx(0.5).epsilon(1e-4));
    CHECK(fd == doctest::Approx(0.5).epsilon(1e-4));

    const auto two = SpectralLaw::from_atoms({{0.0, 0.5}, {1.0, 0.5}});
    const double h = 1e-5;
    const double fd2 = (r_transform(two, h) - r_transform(two, -h)) / (2.0 * h);
    CHECK(std::abs(r_transform_derivative(two, 0.0) - fd2) <= 1e-6);
}

TEST_CASE("r_transform mean over sampled Gramians") {
    for (const auto& spec : {EnsembleSpec::iid_gaussian(0.5), EnsembleSpec::row_orthogonal(0.5)}) {
        const auto law = SpectralLaw::from_ensemble(spec);
        double mean = 0.0;
        for (int s = 0; s < 20; ++s) {
            const auto a = sample_matrix(spec, 1024, 100 + static_cast<std::uint64_t>(s));
            mean += a.squaredNorm() / 1024.0 / 20.0;
        }
        CHECK(std::abs(r_transform(law, 0.0) - mean) <= 1e-2);
    }
}

TEST_CASE("closed forms agree with numeric inversion") {
    for (const auto& law : {SpectralLaw::marchenko_pastur(0.5), SpectralLaw::marchenko_pastur(0.8),
                            SpectralLaw::from_ensemble(EnsembleSpec::row_orthogonal(0.3))}) {
        const auto dom = r_transform_domain(law);
        for (int k = 1; k < 50; ++k) {
            const double lo = std::max(dom.lower, -20.0);
            const double hi = std::min(dom.upper, 20.0);
            const double w = lo + (hi - lo) * k / 50.0;
            if (std::abs(w) < 1e-9) {
                continue;
            }
            CHECK(r_transform(law, w) == doctest::Approx(r_transform_by_inversion(law, w)).epsilon(1e-8));
            CHECK(std::abs(stieltjes(law, stieltjes_inverse(law, w)) + w) <= 1e-8);
        }
    }
}

TEST_CASE("r_transform outside the domain") {
    const auto mp = SpectralLaw::marchenko_pastur(0.5);
    const auto dom = r_transform_domain(mp);
    CHECK(dom.contains(0.0));
    CHECK_THROWS_AS(r_transform(mp, dom.upper + 1.0), DomainError);
}

TEST_CASE("matrix_r_transform") {
    const auto id = SpectralLaw::identity();
    CHECK((matrix_r_transform(id, Eigen::MatrixXd::Identity(2, 2)) - Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-12);

    const auto mp = SpectralLaw::marchenko_pastur(0.5);
    CHECK((matrix_r_transform(mp, Eigen::MatrixXd::Zero(2, 2)) - 0.5 * Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-12);

    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(2, 2);
    d(1, 1) = -0.7;
    const auto rd = matrix_r_transform(mp, d);
    CHECK(rd(0, 0) == doctest::Approx(r_transform(mp, 0.0)));
    CHECK(rd(1, 1) == doctest::Approx(r_transform(mp, -0.7)));
    CHECK(std::abs(rd(0, 1)) < 1e-12);

    // orthogonal conjugation
    Eigen::MatrixXd s(3, 3);
    s << -0.5, 0.1, 0.05, 0.1, -0.2, 0.0, 0.05, 0.0, -1.1;
    const double c = std::cos(0.4);
    const double sn = std::sin(0.4);
    Eigen::MatrixXd q(3, 3);
    q << c, -sn, 0, sn, c, 0, 0, 0, 1;
    const auto lhs = matrix_r_transform(mp, q * s * q.transpose());
    const Eigen::MatrixXd rhs = q * matrix_r_transform(mp, s) * q.transpose();
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((lhs - lhs.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("sample_matrix") {
    const auto a = sample_matrix(EnsembleSpec::row_orthogonal(0.5), 8, 3);
    REQUIRE(a.rows() == 4);
    CHECK((a * a.transpose() - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-10);

    const auto g = sample_matrix(EnsembleSpec::iid_gaussian(0.5), 1024, 4);
    CHECK(g.rows() == 512);
    const double tr = g.squaredNorm() / 1024.0;
    CHECK(tr >= 0.45);
    CHECK(tr <= 0.55);

    const auto g2 = sample_matrix(EnsembleSpec::iid_gaussian(0.5), 1024, 4);
    CHECK(g == g2);
    CHECK(g != sample_matrix(EnsembleSpec::iid_gaussian(0.5), 1024, 5));

    const auto cs = EnsembleSpec::custom({{0.0, 0.5}, {2.0, 0.5}}, 0.5);
    const auto ac = sample_matrix(cs, 16, 9);
    const auto ev = gram_eigenvalues(ac);
    CHECK(ev[7] == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(ev[8] == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("ensemble validation") {
    CHECK_THROWS_AS(EnsembleSpec::iid_gaussian(0.0).validate(), ParameterError);
    CHECK_THROWS_AS(EnsembleSpec::iid_gaussian(1.5).validate(), ParameterError);
    auto over = EnsembleSpec::iid_gaussian(1.5);
    over.allow_oversampling = true;
    CHECK_NOTHROW(over.validate());
    CHECK_THROWS_AS(EnsembleSpec::custom({{1.0, 0.6}, {0.0, 0.3}}, 1.0).validate(), ParameterError);
    CHECK_THROWS_AS(EnsembleSpec::custom({{-1.0, 1.0}}, 1.0).validate(), ParameterError);
}

TEST_CASE("empirical_dos") {
    const auto dos = empirical_dos(Eigen::MatrixXd::Identity(5, 5));
    CHECK(dos.n == 5);
    for (double v : dos.eigenvalues) {
        CHECK(v == doctest::Approx(1.0));
    }
    CHECK(dos.cdf(0.999) == 0.0);
    CHECK(dos.cdf(1.001) == 1.0);

    const auto ro = empirical_dos(sample_matrix(EnsembleSpec::row_orthogonal(0.5), 8, 1));
    for (int i = 0; i < 4; ++i) {
        CHECK(std::abs(ro.eigenvalues[static_cast<std::size_t>(i)]) < 1e-10);
        CHECK(ro.eigenvalues[static_cast<std::size_t>(i + 4)] == doctest::Approx(1.0).epsilon(1e-10));
    }
    CHECK(std::is_sorted(ro.eigenvalues.begin(), ro.eigenvalues.end()));
}

TEST_CASE("Marchenko-Pastur fit at N = 512") {
    const auto law = SpectralLaw::marchenko_pastur(0.5);
    const auto dos = empirical_dos(sample_matrix(EnsembleSpec::iid_gaussian(0.5), 512, 21));
    // Kolmogorov distance against the independently integrated CDF
    // the zero eigenvalues come out as +-1e-15 round-off: count them as one jump at the atom
    std::size_t zeros = 0;
    while (zeros < dos.eigenvalues.size() && std::abs(dos.eigenvalues[zeros]) < 1e-9) {
        ++zeros;
    }
    CHECK(zeros == 256);
    double ks = std::abs(static_cast<double>(zeros) / 512.0 - mp_cdf(0.5, 0.0));
    for (std::size_t i = zeros; i < dos.eigenvalues.size(); ++i) {
        const double x = dos.eigenvalues[i];
        const double f = mp_cdf(0.5, x);
        ks = std::max({ks, std::abs(static_cast<double>(i + 1) / 512.0 - f), std::abs(static_cast<double>(i) / 512.0 - f)});
    }
    CHECK(ks < 0.05);
    CHECK(kolmogorov_distance(dos, law) == doctest::Approx(ks).epsilon(1e-3));
    for (double x : {0.1, 0.5, 1.0, 2.0}) {
        CHECK(law_cdf(law, x) == doctest::Approx(mp_cdf(0.5, x)).epsilon(1e-6));
    }
}

TEST_CASE("law moments") {
    const auto ro = SpectralLaw::from_ensemble(EnsembleSpec::row_orthogonal(0.5));
    CHECK(ro.mean_eigenvalue() == doctest::Approx(0.5));
    CHECK(ro.second_moment() == doctest::Approx(0.5));
    CHECK(ro.support_min() == 0.0);
    const auto mp = SpectralLaw::marchenko_pastur(0.5);
    CHECK(mp.mean_eigenvalue() == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(mp.second_moment() == doctest::Approx(0.5 * 1.5).epsilon(1e-10));
}
