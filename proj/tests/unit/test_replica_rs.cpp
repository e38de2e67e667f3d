#include <doctest.h>

#include <cmath>

#include "replica_cs/errors.hpp"
#include "replica_cs/replica_rs.hpp"

using namespace replica_cs;

namespace {

RsProblem single(const SpectralLaw& law, const JointSparsityPrior& prior, const RegularizerSpec& spec, double lambda,
                 double sigma2) {
    RsProblem p;
    p.prior = prior;
    p.spec = spec;
    p.terminals.push_back({law, lambda, sigma2});
    return p;
}

JointSparsityPrior gaussian_prior() {
    return JointSparsityPrior::bernoulli_gaussian(1.0);
}

double q_tail(double a) {
    return 0.5 * std::erfc(a / std::sqrt(2.0));
}

double phi(double a) {
    return std::exp(-0.5 * a * a) / std::sqrt(2.0 * M_PI);
}

// E[(soft(x + z, theta) - x)^2] for x ~ N(0, 1) w.p. mu (else 0) and
// z ~ N(0, s2), from truncated Gaussian moments.
double soft_threshold_mse(double mu, double s2, double theta) {
    // pure noise: 2 int_theta^inf (z - theta)^2 dN(0, s2)
    const double s = std::sqrt(s2);
    const double a = theta / s;
    const double noise = 2.0 * ((s2 + theta * theta) * q_tail(a) - theta * s * phi(a));
    // signal: y ~ N(0, 1 + s2), x | y ~ N(c y, v)
    const double sy2 = 1.0 + s2;
    const double sy = std::sqrt(sy2);
    const double c = 1.0 / sy2;
    const double v = s2 / sy2;
    const double b = theta / sy;
    const double m0 = q_tail(b);
    const double m1 = sy * phi(b);
    const double m2 = sy2 * (b * phi(b) + q_tail(b));
    const double inner = c * c * sy2 * (1.0 - 2.0 * q_tail(b) - 2.0 * b * phi(b));
    const double outer = 2.0 * ((1.0 - c) * (1.0 - c) * m2 - 2.0 * (1.0 - c) * theta * m1 + theta * theta * m0);
    const double signal = inner + outer + v;
    return mu * signal + (1.0 - mu) * noise;
}

} // namespace

TEST_CASE("decouple on the identity ensemble") {
    auto p = single(SpectralLaw::identity(), gaussian_prior(), RegularizerSpec::l1(), 0.3, 0.02);
    for (double q : {0.0, 0.1, 2.0}) {
        for (double chi : {0.05, 1.0}) {
            const auto d = decouple(RsState{{q}, {chi}}, p);
            CHECK(d.tau[0] == doctest::Approx(0.3).epsilon(1e-14));
            CHECK(d.xi2[0] == doctest::Approx(0.02).epsilon(1e-14));
        }
    }
}

TEST_CASE("decouple on Marchenko-Pastur") {
    const double rho = 0.5;
    auto p = single(SpectralLaw::marchenko_pastur(rho), gaussian_prior(), RegularizerSpec::l1(), 1.0, 0.1);
    const double lam = 1.0;
    const double q = 0.05;
    const double chi = 1.0;
    const auto d = decouple(RsState{{q}, {chi}}, p);
    CHECK(d.tau[0] == doctest::Approx((lam + chi) / rho).epsilon(1e-8));

    // R(-chi/lambda) = rho / (1 + chi/lambda) written out by hand
    const auto r = [&](double c) { return rho / (1.0 + c / lam); };
    const auto f = [&](double c) { return (0.1 * c - lam * q) * r(c); };
    const double h = 1e-5;
    const double fd = (f(chi + h) - f(chi - h)) / (2.0 * h) / (r(chi) * r(chi));
    CHECK(std::abs(d.xi2[0] - fd) <= 1e-6);

    for (double lam2 : {0.01, 0.3, 2.0}) {
        p.terminals[0].lambda = lam2;
        for (double c : {0.001, 0.2, 5.0}) {
            CHECK(decouple(RsState{{0.1}, {c}}, p).tau[0] == doctest::Approx((lam2 + c) / rho).epsilon(1e-8));
        }
    }
}

TEST_CASE("rs_expectations for ridge on a Gaussian prior") {
    for (double w : {0.5, 2.0}) {
        for (double tau : {0.3, 1.0}) {
            for (double xi2 : {0.0, 0.1, 0.7}) {
                auto p = single(SpectralLaw::identity(), gaussian_prior(), RegularizerSpec::ridge(w), tau, xi2);
                const auto e = rs_expectations(DecoupledSystem{{tau}, {xi2}}, p);
                const double wt = w * tau;
                CHECK(e.q[0] == doctest::Approx((wt * wt + xi2) / ((1 + wt) * (1 + wt))).epsilon(1e-10));
                CHECK(e.chi[0] == doctest::Approx(tau / (1 + wt)).epsilon(1e-10));
                CHECK(e.distortion == doctest::Approx(e.q[0]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("rs_expectations without signal or noise") {
    JointSparsityPrior none = JointSparsityPrior::bernoulli_gaussian(0.0);
    auto p = single(SpectralLaw::identity(), none, RegularizerSpec::l1(), 0.5, 0.0);
    const auto e = rs_expectations(DecoupledSystem{{0.5}, {0.0}}, p);
    CHECK(e.q[0] == 0.0);
    CHECK(e.distortion == 0.0);

    // noise only: closed form of E[soft(z)^2]
    const auto e2 = rs_expectations(DecoupledSystem{{0.5}, {0.2}}, p);
    CHECK(e2.q[0] == doctest::Approx(soft_threshold_mse(0.0, 0.2, 0.5)).epsilon(1e-10));
}

TEST_CASE("rs_expectations options are validated") {
    auto p = single(SpectralLaw::identity(), gaussian_prior(), RegularizerSpec::l1(), 0.5, 0.1);
    ExpectationOptions o;
    o.quadrature_order = 2;
    CHECK_THROWS_AS(rs_expectations(DecoupledSystem{{0.5}, {0.1}}, p, o), ParameterError);
    CHECK_THROWS(rs_expectations(DecoupledSystem{{0.5}, {-0.1}}, p));
}

TEST_CASE("quadrature agrees with Monte Carlo") {
    auto p = single(SpectralLaw::identity(), JointSparsityPrior::bernoulli_gaussian(0.1), RegularizerSpec::l1(), 0.3,
                    0.05);
    const DecoupledSystem sys{{0.3}, {0.05}};
    const auto e = rs_expectations(sys, p);
    const auto mc = rs_expectations_monte_carlo(sys, p, 10'000'000, 17);
    CHECK(std::abs(e.q[0] - mc.mean.q[0]) <= 3.0 * mc.q_stderr[0]);
    CHECK(std::abs(e.chi[0] - mc.mean.chi[0]) <= 3.0 * mc.chi_stderr[0]);
    CHECK(std::abs(e.distortion - mc.mean.distortion) <= 3.0 * mc.distortion_stderr);
}

TEST_CASE("two-terminal quadrature agrees with Monte Carlo") {
    RsProblem p;
    p.prior.terminals = 2;
    p.prior.mu_c = 0.3;
    p.prior.mu_0 = 0.1;
    p.prior.mu_j = {0.0, 0.0};
    p.spec = RegularizerSpec::two_dim_lasso(0.8, -1.0, 0.9);
    p.terminals = {{SpectralLaw::identity(), 0.2, 0.05}, {SpectralLaw::identity(), 0.2, 0.05}};
    const DecoupledSystem sys{{0.2, 0.25}, {0.05, 0.07}};
    const auto exact = rs_expectations(sys, p);
    ExpectationOptions panels;
    panels.exact_two_dim_lasso = false;
    panels.panel_order = 16;
    panels.panel_width = 0.25;
    panels.truncation = 9.0;
    const auto pe = rs_expectations(sys, p, panels);
    for (int j = 0; j < 2; ++j) {
        CHECK(exact.q[j] == doctest::Approx(pe.q[j]).epsilon(1e-7));
        CHECK(exact.chi[j] == doctest::Approx(pe.chi[j]).epsilon(1e-7));
    }
    CHECK(exact.distortion == doctest::Approx(pe.distortion).epsilon(1e-7));

    const auto mc = rs_expectations_monte_carlo(sys, p, 2'000'000, 5);
    for (int j = 0; j < 2; ++j) {
        CHECK(std::abs(exact.q[j] - mc.mean.q[j]) <= 3.0 * mc.q_stderr[j]);
        CHECK(std::abs(exact.chi[j] - mc.mean.chi[j]) <= 3.0 * mc.chi_stderr[j]);
    }
    CHECK(std::abs(exact.distortion - mc.mean.distortion) <= 3.0 * mc.distortion_stderr);

    // phi = 0 collapses to per-terminal LASSO
    p.spec = RegularizerSpec::two_dim_lasso(0.0, -1.0, 0.9);
    const auto joint = rs_expectations(sys, p);
    p.spec = RegularizerSpec::l1(0.9);
    const auto indiv = rs_expectations(sys, p);
    CHECK(joint.distortion == indiv.distortion);
    CHECK(joint.q == indiv.q);
}

TEST_CASE("more than two terminals use Monte Carlo") {
    RsProblem p;
    p.prior.terminals = 3;
    p.prior.mu_c = 0.2;
    p.prior.mu_j = {0.1, 0.1, 0.1};
    p.spec = RegularizerSpec::group_l21(0.5);
    for (int j = 0; j < 3; ++j) {
        p.terminals.push_back({SpectralLaw::identity(), 0.2, 0.05});
    }
    ExpectationOptions o;
    o.mc_draws = 20000;
    const auto a = rs_expectations(DecoupledSystem{{0.2, 0.2, 0.2}, {0.05, 0.05, 0.05}}, p, o);
    const auto b = rs_expectations(DecoupledSystem{{0.2, 0.2, 0.2}, {0.05, 0.05, 0.05}}, p, o);
    CHECK(a.distortion == b.distortion);
    CHECK(a.distortion > 0.0);
}

TEST_CASE("rs_solve matches closed forms on the identity ensemble") {
    const double w = 1.5;
    const double lam = 0.4;
    const double s2 = 0.05;
    const auto p = single(SpectralLaw::identity(), gaussian_prior(), RegularizerSpec::ridge(w), lam, s2);
    const auto sol = rs_solve(p);
    REQUIRE(sol.converged);
    const double q = ((w * lam) * (w * lam) + s2) / ((1 + w * lam) * (1 + w * lam));
    CHECK(sol.state.q[0] == doctest::Approx(q).epsilon(1e-8));
    CHECK(sol.distortion == doctest::Approx(q).epsilon(1e-8));

    // l1 + Bernoulli-Gaussian against the truncated-moment oracle
    const auto pl = single(SpectralLaw::identity(), JointSparsityPrior::bernoulli_gaussian(0.1), RegularizerSpec::l1(),
                           0.2, 0.03);
    const auto sl = rs_solve(pl);
    REQUIRE(sl.converged);
    CHECK(std::abs(sl.distortion - soft_threshold_mse(0.1, 0.03, 0.2)) <= 1e-8);
}

TEST_CASE("rs_solve without signal or noise") {
    const auto p = single(SpectralLaw::marchenko_pastur(0.5), JointSparsityPrior::bernoulli_gaussian(0.0),
                          RegularizerSpec::l1(), 0.1, 0.0);
    RsOptions o;
    o.damping = 1.0;
    const auto sol = rs_solve(p, std::nullopt, o);
    CHECK(sol.converged);
    CHECK(sol.iterations <= 3);
    CHECK(sol.state.q[0] == 0.0);
    CHECK(sol.distortion == 0.0);
}

TEST_CASE("fixed-point residual and damping invariance") {
    const auto p = single(SpectralLaw::marchenko_pastur(0.5), JointSparsityPrior::bernoulli_gaussian(0.1),
                          RegularizerSpec::l1(), 0.1, 0.01);
    RsOptions o;
    const auto sol = rs_solve(p, std::nullopt, o);
    REQUIRE(sol.converged);
    const auto e = rs_expectations(decouple(sol.state, p), p, o.expectation);
    const double step = std::abs(e.q[0] - sol.state.q[0]) + std::abs(e.chi[0] - sol.state.chi[0]);
    CHECK(step / std::max(1.0, sol.state.q[0] + sol.state.chi[0]) < 10 * o.tol);

    for (double g : {0.3, 1.0}) {
        RsOptions og = o;
        og.damping = g;
        const auto s = rs_solve(p, std::nullopt, og);
        if (s.converged) {
            CHECK(std::abs(s.state.q[0] - sol.state.q[0]) < 10 * o.tol);
            CHECK(std::abs(s.state.chi[0] - sol.state.chi[0]) < 10 * o.tol);
        }
    }
}

TEST_CASE("distortion is nondecreasing in the noise level") {
    double prev = 0.0;
    for (double s2 : {0.001, 0.01, 0.1}) {
        const auto sol = rs_solve(single(SpectralLaw::marchenko_pastur(0.5), JointSparsityPrior::bernoulli_gaussian(0.1),
                                         RegularizerSpec::l1(), 0.1, s2));
        REQUIRE(sol.converged);
        CHECK(sol.distortion >= prev);
        prev = sol.distortion;
    }
}

TEST_CASE("non-convergence is reported, not thrown") {
    const auto p = single(SpectralLaw::marchenko_pastur(0.5), JointSparsityPrior::bernoulli_gaussian(0.1),
                          RegularizerSpec::l1(), 0.1, 0.01);
    RsOptions o;
    o.max_iter = 2;
    const auto sol = rs_solve(p, std::nullopt, o);
    CHECK_FALSE(sol.converged);
    CHECK(sol.residual > 0.0);
}

TEST_CASE("rs_solve_scan") {
    const auto p = single(SpectralLaw::marchenko_pastur(0.5), JointSparsityPrior::bernoulli_gaussian(0.1),
                          RegularizerSpec::l1(), 0.1, 0.01);
    const auto sols = rs_solve_scan(p);
    REQUIRE(!sols.empty());
    // the LASSO fixed point is unique
    CHECK(sols.size() == 1);
    CHECK(sols[0].distortion == doctest::Approx(rs_solve(p).distortion).epsilon(1e-6));
}

TEST_CASE("default_init and validation") {
    auto p = single(SpectralLaw::marchenko_pastur(0.5), JointSparsityPrior::bernoulli_gaussian(0.1),
                    RegularizerSpec::l1(), 0.25, 0.01);
    const auto s = default_init(p);
    CHECK(s.q[0] == doctest::Approx(0.1));
    CHECK(s.chi[0] == 0.25);
    p.terminals[0].lambda = 0.0;
    CHECK_THROWS_AS(p.validate(), ParameterError);
    CHECK_THROWS_AS(rs_solve(p), ParameterError);
}
