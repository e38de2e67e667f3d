#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "replica_cs/errors.hpp"
#include "replica_cs/harness/config.hpp"
#include "replica_cs/harness/records.hpp"
#include "replica_cs/harness/runs.hpp"

using namespace replica_cs;
using namespace replica_cs::harness;

namespace {

const char* kBase = R"(
# comment line
mode = predict
terminals = 1
seed = 7
prior.mu_j = 1
regularizer.kind = ridge
regularizer.weight = 2
terminal.1.ensemble = identity
terminal.1.lambda = 0.3
terminal.1.sigma2 = 0.05
)";

ExperimentConfig parse(const std::string& extra, const std::string& base = kBase) {
    return parse_config(base + extra);
}

std::string replace(std::string s, const std::string& from, const std::string& to) {
    const auto at = s.find(from);
    REQUIRE(at != std::string::npos);
    return s.replace(at, from.size(), to);
}

ExperimentConfig simulate_cfg(int n, int trials, std::uint64_t seed) {
    std::string text = R"(
mode = simulate
terminals = 1
prior.mu_j = 0.2
regularizer.kind = l1
regularizer.weight = 1
terminal.1.ensemble = iid_gaussian
terminal.1.rho = 0.5
terminal.1.lambda = 0.1
terminal.1.sigma2 = 0.01
)";
    text += "simulate.n = " + std::to_string(n) + "\nsimulate.trials = " + std::to_string(trials) +
            "\nseed = " + std::to_string(seed) + "\n";
    return parse_config(text);
}

std::string field_of(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "<none>";
}

double num(const ResultRecord& r, const std::string& key) {
    const auto v = r.number(key);
    REQUIRE(v.has_value());
    return *v;
}

} // namespace

TEST_CASE("config round trip and hash") {
    const auto cfg = parse("");
    const auto again = parse_config(format_config(cfg));
    CHECK(again == cfg);
    CHECK(format_config(again) == format_config(cfg));
    CHECK(config_hash(again) == config_hash(cfg));
    CHECK(cfg.spec.kind == RegularizerKind::ridge);
    CHECK(cfg.terminals[0].lambda == 0.3);

    auto moved = cfg;
    moved.output.path = "/tmp/elsewhere.csv";
    CHECK(config_hash(moved) == config_hash(cfg));
    auto other = cfg;
    other.seed = 8;
    CHECK(config_hash(other) != config_hash(cfg));

    const auto hex = parse_config(replace(kBase, "seed = 7", "seed = 0x10"));
    CHECK(hex.seed == 16);
}

TEST_CASE("config errors name the field") {
    CHECK(field_of(std::string(kBase) + "terminal.1.bogus = 3\n") == "terminal.1.bogus");
    CHECK(field_of(replace(kBase, "mode = predict\n", "")) == "mode");
    CHECK(field_of(replace(kBase, "identity", "iid_gaussian")) == "terminal.1.rho");
    CHECK(field_of(std::string(kBase) + "seed = 9\n") == "seed");
    CHECK(field_of(replace(kBase, "regularizer.weight = 2", "regularizer.weight = abc")) == "regularizer.weight");
    CHECK(field_of(replace(kBase, "terminals = 1", "terminals = 5")) == "terminals");

    // mode-specific requirements
    const auto sim = replace(kBase, "mode = predict", "mode = simulate");
    CHECK(field_of(sim) == "simulate.n");
    const auto tune = replace(kBase, "mode = predict", "mode = tune");
    CHECK(field_of(tune) == "tune.free");
    CHECK(field_of(tune + "tune.free = lambda\n") == "tune.lambda.lower");
    CHECK_THROWS_AS(parse_config(sim + "simulate.n = 32\nsimulate.trials = 2\n"), ConfigError);
}

TEST_CASE("small simulate.n warns") {
    CHECK(simulate_cfg(64, 1, 1).warnings().size() == 1);
    CHECK(simulate_cfg(256, 1, 1).warnings().empty());
}

TEST_CASE("record header layout") {
    const auto cfg = parse("");
    const auto h = record_header(cfg);
    REQUIRE(h.size() > 8);
    CHECK(h[0] == "mode");
    CHECK(h[1] == "point");
    CHECK(h[2] == "status");
    CHECK(std::find(h.begin(), h.end(), "D_rs") != h.end());
    CHECK(std::find(h.begin(), h.end(), "rho_1") != h.end());
    CHECK(h.back() == "header_version");
    CHECK(h[h.size() - 4] == "seed");

    const auto r = run(cfg);
    const auto csv = format_csv(r.records, r.header);
    std::istringstream in(csv);
    std::string first;
    std::getline(in, first);
    std::string joined;
    for (std::size_t i = 0; i < h.size(); ++i) {
        joined += (i ? "," : "") + h[i];
    }
    CHECK(first == joined);
}

TEST_CASE("predict reproduces the ridge closed form") {
    const auto cfg = parse("");
    const auto r = run(cfg);
    REQUIRE(r.records.size() == 1);
    // identity channel: tau = lambda, xi^2 = sigma^2, xhat = y / (1 + w tau)
    const double s = 2.0 * 0.3;
    const double expect = (s * s + 0.05) / ((1.0 + s) * (1.0 + s));
    CHECK(std::abs(num(r.records[0], "D_rs") - expect) <= 1e-8);
    CHECK(r.records[0].text("status") == "ok");
    CHECK(r.records[0].number("tau_1") == doctest::Approx(0.3));
    CHECK(exit_code(r, false) == 0);
}

TEST_CASE("nonconverged predict point") {
    auto text = replace(kBase, "identity", "iid_gaussian\nterminal.1.rho = 0.5");
    text = replace(text, "ridge", "l1");
    text = replace(text, "prior.mu_j = 1", "prior.mu_j = 0.1");
    const auto cfg = parse_config(text + "solver.max_iter = 1\n");
    const auto r = run(cfg);
    REQUIRE(r.records.size() == 1);
    CHECK(r.records[0].text("status") == "nonconverged");
    CHECK_FALSE(r.records[0].has("D_rs"));
    CHECK(r.failed == 1);
    CHECK(exit_code(r, false) == 3);
}

TEST_CASE("distributed compressed sensing prior parses") {
    const auto cfg = parse_config(R"(
mode = predict
terminals = 2
prior.mu_c = 0.3
prior.mu_0 = 0.1
prior.mu_j = 0
prior.w0.kind = gaussian
prior.wj.kind = binary
prior.wj.value = 1.5
regularizer.kind = two_dim_lasso
regularizer.phi = 0.5
regularizer.alpha = -1
terminal.1.ensemble = iid_gaussian
terminal.1.rho = 0.6
terminal.2.ensemble = row_orthogonal
terminal.2.rho = 0.7
)");
    CHECK(cfg.prior.mu_c == 0.3);
    CHECK(cfg.prior.mu_0 == 0.1);
    CHECK(cfg.prior.mu_j == std::vector<double>{0.0, 0.0});
    CHECK(cfg.prior.wj.kind == ValueDist::Kind::binary);
    CHECK(cfg.spec.alpha == -1.0);
    CHECK(cfg.terminals[1].ensemble.kind == EnsembleKind::row_orthogonal);
    CHECK(parse_config(format_config(cfg)) == cfg);
    const auto h = record_header(cfg);
    CHECK(std::find(h.begin(), h.end(), "xi2_2") != h.end());
}

TEST_CASE("noiseless square orthogonal sensing recovers exactly") {
    for (const char* ens : {"row_orthogonal\nterminal.1.rho = 1", "identity"}) {
        const auto cfg = parse_config(std::string(R"(
mode = simulate
terminals = 1
prior.mu_j = 0.3
regularizer.kind = zero
terminal.1.sigma2 = 0
simulate.n = 64
simulate.trials = 2
terminal.1.ensemble = )") + ens + "\n");
        const auto r = run(cfg);
        REQUIRE(r.records.size() == 1);
        CHECK(num(r.records[0], "D_mc") <= 1e-12);
    }
}

TEST_CASE("simulate is deterministic and thread independent") {
    const auto cfg = simulate_cfg(64, 6, 3);
    const auto a = run(cfg, {1});
    const auto b = run(cfg, {3});
    CHECK(format_csv(a.records, a.header) == format_csv(b.records, b.header));
    const auto c = run(simulate_cfg(64, 6, 4));
    CHECK(num(c.records[0], "D_mc") != num(a.records[0], "D_mc"));

    // trial-level instance reproducibility
    const auto i1 = make_instance(cfg, 2);
    const auto i2 = make_instance(cfg, 2);
    CHECK(i1.terminals[0].a == i2.terminals[0].a);
    CHECK(*i1.x_true == *i2.x_true);
    CHECK(make_instance(cfg, 3).terminals[0].a != i1.terminals[0].a);
}

TEST_CASE("standard error shrinks like one over root trials") {
    const auto few = run(simulate_cfg(64, 10, 11));
    const auto many = run(simulate_cfg(64, 40, 11));
    const double ratio = num(few.records[0], "D_mc_se") / num(many.records[0], "D_mc_se");
    CHECK(ratio > 1.0);
    CHECK(ratio < 4.0);
    CHECK(num(many.records[0], "trials") == 40);
}

TEST_CASE("sweep region") {
    const std::string text = R"(
mode = sweep_region
terminals = 2
prior.mu_c = 0.1
prior.mu_j = 0.05
regularizer.kind = l1
terminal.1.ensemble = iid_gaussian
terminal.1.rho = 0.5
terminal.2.ensemble = iid_gaussian
terminal.2.rho = 0.5
sweep.rho_1 = 0.3, 0.6, 0.9
sweep.rho_2 = 0.3, 0.6, 0.9
tune.free = lambda
tune.lambda.lower = 0.001
tune.lambda.upper = 10
)";
    const auto all = run(parse_config(text));
    REQUIRE(all.records.size() == 9);
    for (const auto& r : all.records) {
        CHECK(r.flag("in_region") == true);
    }

    // pick a threshold between the extreme corners
    double lo = INFINITY;
    double hi = 0.0;
    for (const auto& r : all.records) {
        lo = std::min(lo, num(r, "D_min"));
        hi = std::max(hi, num(r, "D_min"));
    }
    const auto cut = run(parse_config(text + "sweep.threshold = " + format_double(0.5 * (lo + hi)) + "\n"));
    std::map<std::pair<double, double>, bool> in;
    for (const auto& r : cut.records) {
        in[{num(r, "rho_1"), num(r, "rho_2")}] = *r.flag("in_region");
    }
    for (const auto& [k, v] : in) {
        if (!v) {
            continue;
        }
        for (const auto& [k2, v2] : in) {
            if (k2.first >= k.first && k2.second >= k.second) {
                CHECK(v2);
            }
        }
    }
    CHECK(in[{0.9, 0.9}]);
    CHECK_FALSE(in[{0.3, 0.3}]);
}

TEST_CASE("tune matches a dense grid") {
    const auto cfg = parse_config(R"(
mode = tune
terminals = 1
prior.mu_j = 0.1
regularizer.kind = l1
terminal.1.ensemble = iid_gaussian
terminal.1.rho = 0.5
tune.free = lambda
tune.lambda.lower = 0.001
tune.lambda.upper = 10
tune.snr_db = 20
)");
    const auto r = run(cfg);
    REQUIRE(r.records.size() == 1);
    const double d_star = num(r.records[0], "D_star");
    const double lam = num(r.records[0], "tuned_lambda");
    CHECK(num(r.records[0], "sigma2_1") == doctest::Approx(0.1 / 100.0).epsilon(1e-12));

    auto p = make_problem(cfg);
    p.terminals[0].sigma2 = 0.1 / 100.0;
    double best = INFINITY;
    for (int k = 0; k <= 200; ++k) {
        p.terminals[0].lambda = std::pow(10.0, -3.0 + 4.0 * k / 200.0);
        const auto s = rs_solve(p);
        if (s.converged) {
            best = std::min(best, s.distortion);
        }
    }
    CHECK(d_star <= best * (1.0 + 1e-2));
    for (double f : {0.5, 2.0}) {
        p.terminals[0].lambda = f * lam;
        CHECK(d_star <= rs_solve(p).distortion);
    }
}

TEST_CASE("spectrum mode") {
    const std::string base = R"(
mode = spectrum
terminals = 1
spectrum.n = 256
spectrum.points = 41
)";
    const auto id = run(parse_config(base + "terminal.1.ensemble = identity\n"));
    for (const auto& r : id.records) {
        const double x = num(r, "x");
        CHECK(num(r, "cdf_empirical") == (x >= 1.0 ? 1.0 : 0.0));
        CHECK(num(r, "cdf_law") == (x >= 1.0 ? 1.0 : 0.0));
    }
    const auto ro = run(parse_config(base + "terminal.1.ensemble = row_orthogonal\nterminal.1.rho = 0.5\n"));
    CHECK(num(ro.records[0], "mean_empirical") == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(num(ro.records[0], "second_moment_empirical") == doctest::Approx(0.5).epsilon(1e-12));
    const auto mp = run(parse("spectrum.n = 512\nterminal.1.ensemble = iid_gaussian\nterminal.1.rho = 0.5\n",
                                     replace(base, "spectrum.n = 256\n", "")));
    CHECK(num(mp.records[0], "kolmogorov") < 0.05);
    CHECK(num(mp.records[0], "mean_law") == doctest::Approx(0.5));
}

TEST_CASE("exit codes") {
    RunResult r;
    r.points = 4;
    CHECK(exit_code(r, false) == 0);
    r.degraded = 1;
    CHECK(exit_code(r, false) == 4);
    CHECK(exit_code(r, true) == 3);
    r.degraded = 0;
    r.failed = 4;
    CHECK(exit_code(r, false) == 3);
}

TEST_CASE("output writing") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "replica_cs_test_out";
    fs::remove_all(dir);
    const std::string path = (dir / "nested" / "out.csv").string();
    write_file_atomic(path, "a,b\n1,2\n");
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == "a,b\n1,2\n");
    int files = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir / "nested")) {
        ++files;
    }
    CHECK(files == 1);

    ResultRecord rec;
    rec.set("a", 1.5);
    rec.set("b", std::numeric_limits<double>::infinity());
    const std::vector<std::string> header{"a", "b", "c"};
    CHECK(format_csv({rec}, header) == "a,b,c\n1.5,inf,\n");
    CHECK(format_json_lines({rec}, header) == "{\"a\":1.5,\"b\":\"inf\"}\n");

    rec.set("zzz", std::int64_t{1});
    CHECK_THROWS_AS(write_records({rec}, header, OutputConfig{path, OutputFormat::csv}), ParameterError);
    fs::remove_all(dir);
}

TEST_CASE("parallel_for rethrows the first failure") {
    std::vector<int> hit(20, 0);
    parallel_for(20, 4, [&](int i) { hit[static_cast<std::size_t>(i)] = 1; });
    CHECK(std::count(hit.begin(), hit.end(), 1) == 20);
    CHECK_THROWS_WITH(parallel_for(10, 3,
                                   [](int i) {
                                       if (i == 4 || i == 7) {
                                           throw std::runtime_error("at " + std::to_string(i));
                                       }
                                   }),
                      "at 4");
}
