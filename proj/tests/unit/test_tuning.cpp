#include <doctest.h>

#include <cmath>

#include "replica_cs/errors.hpp"
#include "replica_cs/rng.hpp"
#include "replica_cs/tuning.hpp"

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

JointSparsityPrior binary_prior(double mu) {
    JointSparsityPrior p;
    p.terminals = 1;
    p.mu_j = {mu};
    p.uj = ValueDist::binary(1.0);
    return p;
}

double rs_distortion(RsProblem p, const std::string& name, double value) {
    apply_parameter(p, name, value);
    const auto s = rs_solve(p);
    REQUIRE(s.converged);
    return s.distortion;
}

} // namespace

TEST_CASE("ridge on the identity channel tunes to the noise variance") {
    for (double s2 : {0.05, 0.2, 0.8}) {
        const auto p = single(SpectralLaw::identity(), JointSparsityPrior::bernoulli_gaussian(1.0),
                              RegularizerSpec::ridge(1.0), 1.0, s2);
        TuneOptions opt;
        opt.rel_tol = 1e-6;
        const auto r = tune_regularizer(p, {FreeVariable::make("weight", 1e-3, 10.0)}, opt);
        CHECK(r.values[0] == doctest::Approx(s2).epsilon(1e-2));
        // Wiener error
        CHECK(r.distortion == doctest::Approx(s2 / (1.0 + s2)).epsilon(1e-6));
        CHECK(r.failures == 0);
    }
}

TEST_CASE("tuned distortion beats random probes") {
    auto prior = JointSparsityPrior::bernoulli_gaussian(0.1);
    const auto p = single(SpectralLaw::marchenko_pastur(0.5), prior, RegularizerSpec::l1(1.0), 0.1, 0.01);
    const auto r = tune_regularizer(p, {FreeVariable::make("lambda", 1e-3, 10.0)});
    Rng rng = make_rng(1, {});
    for (int t = 0; t < 20; ++t) {
        const double lam = std::exp(std::log(1e-3) + uniform01(rng) * std::log(1e4));
        CHECK(r.distortion <= rs_distortion(p, "lambda", lam) * (1.0 + 1e-4));
    }
    // neighbours of the optimum
    CHECK(r.distortion <= rs_distortion(p, "lambda", 2.0 * r.values[0]));
    CHECK(r.distortion <= rs_distortion(p, "lambda", 0.5 * r.values[0]));
}

TEST_CASE("two free variables") {
    JointSparsityPrior prior;
    prior.terminals = 2;
    prior.mu_c = 0.2;
    prior.mu_j = {0.05, 0.05};
    RsProblem p;
    p.prior = prior;
    p.spec = RegularizerSpec::two_dim_lasso(0.0, -1.0, 1.0);
    p.terminals = {{SpectralLaw::marchenko_pastur(0.6), 0.1, 0.01}, {SpectralLaw::marchenko_pastur(0.6), 0.1, 0.01}};
    TuneOptions opt;
    opt.init = {1.0, 0.0};
    const auto r = tune_regularizer(p, {FreeVariable::make("weight", 0.1, 10.0), FreeVariable::make("phi", 0.0, 3.0)},
                                    opt);
    REQUIRE(r.values.size() == 2);
    // keep-best descent never ends above its start
    CHECK(r.distortion <= rs_distortion(p, "weight", 1.0));
    CHECK(r.values[1] >= 0.0);
    CHECK(r.values[1] <= 3.0);
}

TEST_CASE("box constraint helps on a binary prior") {
    const auto prior = binary_prior(0.125);
    const double s2 = prior.second_moment(0) / 100.0; // 20 dB
    const auto l1 = single(SpectralLaw::marchenko_pastur(0.5), prior, RegularizerSpec::l1(1.0), 0.1, s2);
    auto box = l1;
    box.spec = RegularizerSpec::l1(1.0).with_box(1.0);
    const std::vector<FreeVariable> free{FreeVariable::make("lambda", 1e-4, 10.0)};
    const auto a = tune_regularizer(l1, free);
    const auto b = tune_regularizer(box, free);
    CHECK(b.distortion <= a.distortion);
}

TEST_CASE("tuning errors") {
    const auto p = single(SpectralLaw::identity(), JointSparsityPrior::bernoulli_gaussian(0.2), RegularizerSpec::l1(),
                          0.1, 0.01);
    CHECK_THROWS_AS(tune_regularizer(p, {}), ParameterError);
    const auto v = FreeVariable::make("lambda", 0.01, 1.0);
    CHECK_THROWS_AS(tune_regularizer(p, {v, v, v}), ParameterError);
    CHECK_THROWS_AS(tune_regularizer(p, {FreeVariable::make("nope", 0.0, 1.0)}), ParameterError);
    CHECK_THROWS_AS(tune_regularizer(p, {FreeVariable::make("lambda", 1.0, 0.1)}), ParameterError);

    // every inner solve fails
    TuneOptions opt;
    opt.solver.max_iter = 1;
    auto hard = single(SpectralLaw::marchenko_pastur(0.5), JointSparsityPrior::bernoulli_gaussian(0.2),
                       RegularizerSpec::l1(), 0.1, 0.01);
    CHECK_THROWS_AS(tune_regularizer(hard, {v}, opt), NumericalError);
}

TEST_CASE("parameter plumbing") {
    RsProblem p;
    p.prior = JointSparsityPrior::bernoulli_gaussian(0.2);
    p.prior.terminals = 2;
    p.prior.mu_j = {0.0, 0.0};
    p.spec = RegularizerSpec::two_dim_lasso(0.5, 1.0);
    p.terminals = {{SpectralLaw::identity(), 0.1, 0.0}, {SpectralLaw::identity(), 0.2, 0.0}};
    apply_parameter(p, "lambda.2", 0.7);
    CHECK(p.terminals[1].lambda == 0.7);
    CHECK(read_parameter(p, "lambda.1") == 0.1);
    apply_parameter(p, "phi", 1.5);
    CHECK(read_parameter(p, "phi") == 1.5);
    apply_parameter(p, "lambda", 0.3);
    CHECK(p.terminals[0].lambda == 0.3);
    CHECK(p.terminals[1].lambda == 0.3);
    CHECK_THROWS_AS(apply_parameter(p, "lambda.3", 1.0), ParameterError);
    CHECK(FreeVariable::make("lambda", 0.1, 1.0).log_scale);
    CHECK_FALSE(FreeVariable::make("phi", 0.0, 1.0).log_scale);
}
