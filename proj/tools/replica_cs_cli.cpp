// replica-cs: RS predictions, finite-N simulations, region sweeps, tuning
// curves and spectra from flat key = value configs.

#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "replica_cs/harness/config.hpp"
#include "replica_cs/harness/records.hpp"
#include "replica_cs/harness/runs.hpp"

namespace rh = replica_cs::harness;

namespace {

struct Flags {
    std::string config;
    std::string out;
    std::string format;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    bool strict = false;
};

int execute(rh::Mode mode, const Flags& f) {
    rh::ExperimentConfig cfg;
    try {
        cfg = rh::read_config(f.config);
        if (cfg.mode != mode) {
            throw rh::ConfigError("mode", "config is for '" + rh::to_string(cfg.mode) + "' but the subcommand is '" +
                                              rh::to_string(mode) + "'");
        }
        if (f.seed) {
            cfg.seed = *f.seed;
        }
        if (!f.out.empty()) {
            cfg.output.path = f.out;
        }
        if (!f.format.empty()) {
            cfg.output.format = f.format == "json" ? rh::OutputFormat::json : rh::OutputFormat::csv;
        }
        cfg.validate();
    } catch (const std::exception& ex) {
        std::fprintf(stderr, "config error: %s\n", ex.what());
        return 2;
    }
    for (const auto& w : cfg.warnings()) {
        std::fprintf(stderr, "warning: %s\n", w.c_str());
    }

    rh::RunResult res;
    try {
        res = rh::run(cfg, rh::RunContext{f.threads});
        rh::write_records(res.records, res.header, cfg.output);
    } catch (const std::exception& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return 3;
    }
    std::fprintf(stderr, "%d point(s), %d failed, config %s\n", res.points, res.failed,
                 rh::config_hash(cfg).c_str());
    return rh::exit_code(res, f.strict);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Replica-symmetric performance analysis of RLS-based joint sparse recovery"};
    app.require_subcommand(1);

    Flags flags;
    const std::pair<const char*, rh::Mode> commands[] = {
        {"predict", rh::Mode::predict},
        {"simulate", rh::Mode::simulate},
        {"sweep-region", rh::Mode::sweep_region},
        {"tune", rh::Mode::tune},
        {"spectrum", rh::Mode::spectrum},
    };
    std::optional<rh::Mode> chosen;
    for (const auto& [name, mode] : commands) {
        auto* sub = app.add_subcommand(name, std::string("mode ") + rh::to_string(mode));
        sub->add_option("--config", flags.config, "experiment config (key = value)")->required()->check(
            CLI::ExistingFile);
        sub->add_option("--out", flags.out, "output path; '-' or empty for stdout");
        sub->add_option("--format", flags.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
        sub->add_option("--seed", flags.seed, "master seed, overrides the config");
        sub->add_option("--threads", flags.threads, "worker threads (wall time only)")->check(CLI::PositiveNumber);
        sub->add_flag("--strict", flags.strict, "treat partial failures as total failure");
        sub->callback([&chosen, mode = mode] { chosen = mode; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    return execute(*chosen, flags);
}
