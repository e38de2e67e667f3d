#include "replica_cs/harness/runs.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "replica_cs/rng.hpp"

namespace replica_cs::harness {

namespace {

const char* reg_name(RegularizerKind k) {
    switch (k) {
    case RegularizerKind::l1: return "l1";
    case RegularizerKind::lpq: return "lpq";
    case RegularizerKind::group_l21: return "group_l21";
    case RegularizerKind::two_dim_lasso: return "two_dim_lasso";
    case RegularizerKind::ridge: return "ridge";
    case RegularizerKind::zero: return "zero";
    case RegularizerKind::l0: return "l0";
    }
    return "?";
}

std::string jkey(const char* stem, int j) {
    return std::string(stem) + "_" + std::to_string(j + 1);
}

// Inputs and provenance shared by every mode; `cfg` carries the point's
// effective parameters.
ResultRecord base_record(const ExperimentConfig& cfg, int point, const std::string& hash) {
    ResultRecord r;
    r.set("mode", to_string(cfg.mode));
    r.set("point", std::int64_t{point});
    r.set("J", std::int64_t{cfg.size()});
    for (int j = 0; j < cfg.size(); ++j) {
        const auto& t = cfg.terminals[static_cast<std::size_t>(j)];
        r.set(jkey("rho", j), t.ensemble.rho);
        r.set(jkey("lambda", j), t.lambda);
        r.set(jkey("sigma2", j), t.sigma2);
        r.set(jkey("mu", j), cfg.prior.mu_j[static_cast<std::size_t>(j)]);
    }
    r.set("mu_c", cfg.prior.mu_c);
    r.set("mu_0", cfg.prior.mu_0);
    r.set("reg_kind", std::string(reg_name(cfg.spec.kind)));
    r.set("reg_weight", cfg.spec.weight);
    r.set("reg_p", cfg.spec.p);
    r.set("reg_q", cfg.spec.q);
    r.set("reg_phi", cfg.spec.phi);
    r.set("reg_alpha", cfg.spec.alpha);
    r.set("reg_domain", std::string(cfg.spec.domain == FeasibleSet::reals ? "reals" : "box"));
    r.set("reg_B", cfg.spec.box);
    r.set("distortion", std::string(cfg.distortion == DistortionKind::mse ? "mse" : "support_error"));
    r.set("seed", std::to_string(cfg.seed));
    r.set("config_hash", hash);
    r.set("version", std::string(kVersion));
    r.set("header_version", std::int64_t{kHeaderVersion});
    return r;
}

void set_failed(ResultRecord& r, const std::string& reason) {
    r.set("status", std::string("failed"));
    r.set("reason", reason);
}

void set_system(ResultRecord& r, const DecoupledSystem& s) {
    for (std::size_t j = 0; j < s.tau.size(); ++j) {
        r.set(jkey("tau", static_cast<int>(j)), s.tau[j]);
        r.set(jkey("xi2", static_cast<int>(j)), s.xi2[j]);
    }
}

TuneOptions tune_options(const ExperimentConfig& cfg) {
    TuneOptions o;
    o.solver = cfg.solver;
    o.rel_tol = cfg.tune.rel_tol;
    o.max_sweeps = cfg.tune.max_sweeps;
    o.init = cfg.tune.init;
    return o;
}

ExperimentConfig apply_to_config(ExperimentConfig cfg, const std::vector<FreeVariableConfig>& free,
                                 const std::vector<double>& values) {
    RsProblem p = make_problem(cfg);
    for (std::size_t i = 0; i < free.size(); ++i) {
        apply_parameter(p, free[i].name, values[i]);
    }
    cfg.spec = p.spec;
    for (std::size_t j = 0; j < cfg.terminals.size(); ++j) {
        cfg.terminals[j].lambda = p.terminals[j].lambda;
    }
    return cfg;
}

void finish(RunResult& r, const ExperimentConfig& cfg) {
    r.header = record_header(cfg);
    r.points = static_cast<int>(r.records.size());
    r.failed = static_cast<int>(std::count_if(r.records.begin(), r.records.end(), [](const ResultRecord& rec) {
        return rec.text("status").value_or("") != "ok";
    }));
    r.warnings = cfg.warnings();
}

} // namespace

void parallel_for(int count, int threads, const std::function<void(int)>& body) {
    if (count <= 0) {
        return;
    }
    const int workers = std::clamp(threads, 1, count);
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
    std::atomic<int> next{0};
    const auto work = [&] {
        for (int i = next++; i < count; i = next++) {
            try {
                body(i);
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = std::current_exception();
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back(work);
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

RunResult run_predict(const ExperimentConfig& cfg, const RunContext&) {
    cfg.validate();
    const std::string hash = config_hash(cfg);
    RunResult out;
    std::vector<RsSolution> sols;
    std::string error;
    try {
        const RsProblem problem = make_problem(cfg);
        if (cfg.scan) {
            sols = rs_solve_scan(problem, cfg.solver);
        } else {
            sols.push_back(rs_solve(problem, std::nullopt, cfg.solver));
        }
    } catch (const std::exception& ex) {
        error = ex.what();
    }
    if (!error.empty()) {
        ResultRecord r = base_record(cfg, 0, hash);
        set_failed(r, error);
        out.records.push_back(std::move(r));
    }
    for (std::size_t i = 0; i < sols.size(); ++i) {
        const auto& s = sols[i];
        ResultRecord r = base_record(cfg, static_cast<int>(i), hash);
        r.set("status", std::string(s.converged ? "ok" : "nonconverged"));
        if (s.converged) {
            r.set("D_rs", s.distortion);
        } else {
            r.set("reason", std::string("fixed-point iteration did not converge"));
        }
        r.set("converged", s.converged);
        r.set("iterations", std::int64_t{s.iterations});
        r.set("residual", s.residual);
        for (std::size_t j = 0; j < s.state.q.size(); ++j) {
            r.set(jkey("q", static_cast<int>(j)), s.state.q[j]);
            r.set(jkey("chi", static_cast<int>(j)), s.state.chi[j]);
        }
        set_system(r, s.system);
        out.records.push_back(std::move(r));
    }
    finish(out, cfg);
    return out;
}

Instance make_instance(const ExperimentConfig& cfg, int trial) {
    const int n = cfg.simulate.n;
    const auto t = static_cast<std::uint64_t>(trial);
    Instance inst;
    inst.spec = cfg.spec;
    const SampleBlock block = sample_joint(cfg.prior, n, derive_seed(cfg.seed, {0x5167, t}));
    for (int j = 0; j < cfg.size(); ++j) {
        const auto ju = static_cast<std::uint64_t>(j);
        const auto& tc = cfg.terminals[static_cast<std::size_t>(j)];
        TerminalData d;
        d.a = sample_matrix(tc.ensemble, n, derive_seed(cfg.seed, {0xA11, t, ju}));
        d.y = d.a * block.x.row(j).transpose();
        Rng rng = make_rng(cfg.seed, {0x2015E, t, ju});
        const double sd = std::sqrt(tc.sigma2);
        for (Eigen::Index i = 0; i < d.y.size(); ++i) {
            d.y(i) += sd * standard_normal(rng);
        }
        d.lambda = tc.lambda;
        inst.terminals.push_back(std::move(d));
    }
    inst.x_true = block.x;
    return inst;
}

TrialOutcome run_trial(const ExperimentConfig& cfg, int trial) {
    TrialOutcome o;
    try {
        const Instance inst = make_instance(cfg, trial);
        RecoveryOptions opts;
        opts.max_iter = cfg.simulate.max_iter;
        opts.tol = cfg.simulate.tol;
        const SolveReport rep = rls_solve(inst, opts);
        o.distortion = score(inst, rep, cfg.distortion);
        o.converged = rep.converged;
        o.iterations = rep.iterations;
        if (!std::isfinite(o.distortion)) {
            o.failed = true;
            o.reason = "non-finite distortion";
        }
    } catch (const std::exception& ex) {
        o.failed = true;
        o.reason = ex.what();
    }
    return o;
}

RunResult run_simulate(const ExperimentConfig& cfg, const RunContext& ctx) {
    cfg.validate();
    const std::string hash = config_hash(cfg);
    const int trials = cfg.simulate.trials;
    std::vector<TrialOutcome> outcomes(static_cast<std::size_t>(trials));
    parallel_for(trials, ctx.threads, [&](int t) { outcomes[static_cast<std::size_t>(t)] = run_trial(cfg, t); });

    // Aggregate in trial order so the result does not depend on scheduling.
    int ok = 0;
    int unconverged = 0;
    double sum = 0.0;
    std::string first_reason;
    for (const auto& o : outcomes) {
        if (o.failed) {
            if (first_reason.empty()) {
                first_reason = o.reason;
            }
            continue;
        }
        ++ok;
        sum += o.distortion;
        unconverged += o.converged ? 0 : 1;
    }

    RunResult out;
    ResultRecord r = base_record(cfg, 0, hash);
    r.set("N", std::int64_t{cfg.simulate.n});
    r.set("trials", std::int64_t{trials});
    r.set("trials_failed", std::int64_t{trials - ok});
    r.set("trials_unconverged", std::int64_t{unconverged});
    if (ok == 0) {
        set_failed(r, "all trials failed: " + first_reason);
    } else {
        const double mean = sum / ok;
        double ss = 0.0;
        for (const auto& o : outcomes) {
            if (!o.failed) {
                ss += (o.distortion - mean) * (o.distortion - mean);
            }
        }
        r.set("status", std::string("ok"));
        if (ok < trials) {
            r.set("reason", std::to_string(trials - ok) + " trial(s) failed: " + first_reason);
            out.degraded = 1;
        }
        r.set("D_mc", mean);
        if (ok > 1) {
            r.set("D_mc_se", std::sqrt(ss / (ok - 1) / ok));
        }
        try {
            const RsSolution s = rs_solve(make_problem(cfg), std::nullopt, cfg.solver);
            r.set("rs_converged", s.converged);
            if (s.converged) {
                r.set("D_rs", s.distortion);
                if (mean > 0.0) {
                    r.set("rel_gap", (s.distortion - mean) / mean);
                }
            }
        } catch (const std::exception&) {
            r.set("rs_converged", false);
        }
    }
    out.records.push_back(std::move(r));
    finish(out, cfg);
    return out;
}

RunResult run_sweep_region(const ExperimentConfig& cfg, const RunContext& ctx) {
    cfg.validate();
    const std::string hash = config_hash(cfg);
    std::vector<double> r1 = cfg.sweep.rho_1;
    std::vector<double> r2 = cfg.sweep.rho_2;
    std::sort(r1.begin(), r1.end());
    std::sort(r2.begin(), r2.end());
    const int n1 = static_cast<int>(r1.size());
    const int n2 = static_cast<int>(r2.size());
    const double threshold = cfg.sweep.threshold;
    const auto free = free_variables(cfg);

    struct Point {
        ResultRecord rec;
        bool in = false;
        bool in_individual = false;
    };
    std::vector<Point> pts(static_cast<std::size_t>(n1 * n2));

    parallel_for(n1 * n2, ctx.threads, [&](int idx) {
        ExperimentConfig pc = cfg;
        pc.terminals[0].ensemble.rho = r1[static_cast<std::size_t>(idx / n2)];
        pc.terminals[1].ensemble.rho = r2[static_cast<std::size_t>(idx % n2)];
        Point& pt = pts[static_cast<std::size_t>(idx)];
        try {
            if (cfg.sweep.baseline_l1) {
                ExperimentConfig bc = pc;
                bc.spec = RegularizerSpec::l1(1.0);
                const std::vector<FreeVariableConfig> lam{
                    {"lambda.1", cfg.sweep.baseline_lower, cfg.sweep.baseline_upper},
                    {"lambda.2", cfg.sweep.baseline_lower, cfg.sweep.baseline_upper}};
                std::vector<FreeVariable> bfree;
                for (const auto& f : lam) {
                    bfree.push_back(FreeVariable::make(f.name, f.lower, f.upper));
                }
                TuneOptions bo = tune_options(cfg);
                bo.init.clear();
                const TuneResult base = tune_regularizer(make_problem(bc), bfree, bo);
                for (std::size_t j = 0; j < 2; ++j) {
                    pc.terminals[j].lambda = base.values[j];
                }
                pt.in_individual = base.distortion <= threshold;
                pt.rec.set("D_individual", base.distortion);
                pt.rec.set("in_region_individual", pt.in_individual);
                for (int j = 0; j < 2; ++j) {
                    pt.rec.set(jkey("individual_lambda", j), base.values[static_cast<std::size_t>(j)]);
                }
            }
            const TuneResult res = tune_regularizer(make_problem(pc), free, tune_options(cfg));
            const ExperimentConfig tuned = apply_to_config(pc, cfg.tune.free, res.values);
            ResultRecord rec = base_record(tuned, idx, hash);
            rec.fields.merge(pt.rec.fields);
            pt.rec = std::move(rec);
            pt.in = res.distortion <= threshold;
            pt.rec.set("status", std::string("ok"));
            pt.rec.set("D_min", res.distortion);
            for (std::size_t i = 0; i < free.size(); ++i) {
                pt.rec.set("tuned_" + free[i].name, res.values[i]);
            }
            pt.rec.set("evaluations", std::int64_t{res.evaluations});
            pt.rec.set("failures", std::int64_t{res.failures});
            set_system(pt.rec, res.solution.system);
        } catch (const std::exception& ex) {
            ResultRecord rec = base_record(pc, idx, hash);
            rec.fields.merge(pt.rec.fields);
            pt.rec = std::move(rec);
            set_failed(pt.rec, ex.what());
            pt.in = false;
        }
        pt.rec.set("threshold", threshold);
        pt.rec.set("in_region", pt.in);
    });

    // Frontier: in-region points with an out-of-region lower neighbour.
    const auto at = [&](int i, int k) -> Point& { return pts[static_cast<std::size_t>(i * n2 + k)]; };
    for (int i = 0; i < n1; ++i) {
        for (int k = 0; k < n2; ++k) {
            Point& p = at(i, k);
            const bool f = p.in && ((i > 0 && !at(i - 1, k).in) || (k > 0 && !at(i, k - 1).in));
            p.rec.set("on_frontier", f);
            if (cfg.sweep.baseline_l1) {
                const bool fi = p.in_individual && ((i > 0 && !at(i - 1, k).in_individual) ||
                                                    (k > 0 && !at(i, k - 1).in_individual));
                p.rec.set("on_frontier_individual", fi);
            }
        }
    }

    RunResult out;
    for (auto& p : pts) {
        out.records.push_back(std::move(p.rec));
    }
    finish(out, cfg);
    return out;
}

RunResult run_tune(const ExperimentConfig& cfg, const RunContext& ctx) {
    cfg.validate();
    const std::string hash = config_hash(cfg);
    double power = cfg.tune.power;
    if (!(power > 0.0)) {
        power = 0.0;
        for (int j = 0; j < cfg.size(); ++j) {
            power += cfg.prior.second_moment(j) / cfg.size();
        }
    }
    const auto free = free_variables(cfg);
    const int count = cfg.tune.snr_db.empty() ? 1 : static_cast<int>(cfg.tune.snr_db.size());
    std::vector<ResultRecord> recs(static_cast<std::size_t>(count));

    parallel_for(count, ctx.threads, [&](int i) {
        ExperimentConfig pc = cfg;
        std::optional<double> snr;
        if (!cfg.tune.snr_db.empty()) {
            snr = cfg.tune.snr_db[static_cast<std::size_t>(i)];
            for (auto& t : pc.terminals) {
                t.sigma2 = power / std::pow(10.0, *snr / 10.0);
            }
        }
        ResultRecord r;
        try {
            const TuneResult res = tune_regularizer(make_problem(pc), free, tune_options(cfg));
            r = base_record(apply_to_config(pc, cfg.tune.free, res.values), i, hash);
            r.set("status", std::string("ok"));
            r.set("D_star", res.distortion);
            for (std::size_t k = 0; k < free.size(); ++k) {
                r.set("tuned_" + free[k].name, res.values[k]);
            }
            r.set("evaluations", std::int64_t{res.evaluations});
            r.set("failures", std::int64_t{res.failures});
            set_system(r, res.solution.system);
        } catch (const std::exception& ex) {
            r = base_record(pc, i, hash);
            set_failed(r, ex.what());
        }
        if (snr) {
            r.set("snr_db", *snr);
        }
        r.set("power", power);
        recs[static_cast<std::size_t>(i)] = std::move(r);
    });

    RunResult out;
    out.records = std::move(recs);
    finish(out, cfg);
    return out;
}

RunResult run_spectrum(const ExperimentConfig& cfg, const RunContext& ctx) {
    cfg.validate();
    const std::string hash = config_hash(cfg);
    const int jn = cfg.size();
    const int points = cfg.spectrum.points;
    std::vector<std::vector<ResultRecord>> per(static_cast<std::size_t>(jn));

    parallel_for(jn, ctx.threads, [&](int j) {
        const auto& ens = cfg.terminals[static_cast<std::size_t>(j)].ensemble;
        const auto a = sample_matrix(ens, cfg.spectrum.n, derive_seed(cfg.seed, {0x5EC7, static_cast<std::uint64_t>(j)}));
        const EmpiricalDos dos = empirical_dos(a);
        const SpectralLaw law = SpectralLaw::from_ensemble(ens);
        const double ks = kolmogorov_distance(dos, law);
        double lo = std::min(dos.eigenvalues.front(), law.support_min());
        double hi = std::max(dos.eigenvalues.back(), law.support_max());
        const double pad = hi - lo > 1e-9 * std::max(1.0, std::abs(hi)) ? 0.05 * (hi - lo) : 0.5;
        lo -= pad;
        hi += pad;
        auto& out = per[static_cast<std::size_t>(j)];
        for (int k = 0; k < points; ++k) {
            const double x = lo + (hi - lo) * k / (points - 1);
            ResultRecord r = base_record(cfg, j * points + k, hash);
            r.set("status", std::string("ok"));
            r.set("terminal", std::int64_t{j + 1});
            r.set("x", x);
            r.set("cdf_empirical", dos.cdf(x));
            r.set("cdf_law", law_cdf(law, x));
            r.set("mean_empirical", dos.mean());
            r.set("second_moment_empirical", dos.second_moment());
            r.set("mean_law", law.mean_eigenvalue());
            r.set("second_moment_law", law.second_moment());
            r.set("kolmogorov", ks);
            out.push_back(std::move(r));
        }
    });

    RunResult out;
    for (auto& v : per) {
        for (auto& r : v) {
            out.records.push_back(std::move(r));
        }
    }
    finish(out, cfg);
    return out;
}

RunResult run(const ExperimentConfig& cfg, const RunContext& ctx) {
    switch (cfg.mode) {
    case Mode::predict: return run_predict(cfg, ctx);
    case Mode::simulate: return run_simulate(cfg, ctx);
    case Mode::sweep_region: return run_sweep_region(cfg, ctx);
    case Mode::tune: return run_tune(cfg, ctx);
    case Mode::spectrum: return run_spectrum(cfg, ctx);
    }
    throw ParameterError("unknown mode");
}

int exit_code(const RunResult& r, bool strict) {
    if (r.points > 0 && r.failed == r.points) {
        return 3;
    }
    if (r.failed > 0 || r.degraded > 0) {
        return strict ? 3 : 4;
    }
    return 0;
}

} // namespace replica_cs::harness
