#include "replica_cs/harness/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "replica_cs/harness/records.hpp"

namespace replica_cs::harness {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    if (trim(s).empty()) {
        return out;
    }
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(trim(item));
    }
    return out;
}

double to_double(const std::string& key, const std::string& s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') {
        ++first;
    }
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || first == last) {
        throw ConfigError(key, "expected a number, got '" + s + "'");
    }
    return v;
}

long long to_int(const std::string& key, const std::string& s) {
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
        throw ConfigError(key, "expected an integer, got '" + s + "'");
    }
    return v;
}

int to_int32(const std::string& key, const std::string& s) {
    const long long v = to_int(key, s);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
        throw ConfigError(key, "integer out of range");
    }
    return static_cast<int>(v);
}

std::uint64_t to_u64(const std::string& key, const std::string& s) {
    std::uint64_t v = 0;
    int base = 10;
    std::size_t start = 0;
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
        base = 16;
        start = 2;
    }
    const auto [ptr, ec] = std::from_chars(s.data() + start, s.data() + s.size(), v, base);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.size() == start) {
        throw ConfigError(key, "expected an unsigned 64-bit integer, got '" + s + "'");
    }
    return v;
}

bool to_bool(const std::string& key, const std::string& s) {
    if (s == "true" || s == "1") {
        return true;
    }
    if (s == "false" || s == "0") {
        return false;
    }
    throw ConfigError(key, "expected true or false, got '" + s + "'");
}

std::vector<double> to_doubles(const std::string& key, const std::string& s) {
    std::vector<double> out;
    for (const auto& item : split_list(s)) {
        out.push_back(to_double(key, item));
    }
    return out;
}

// key -> value with consumption tracking, so leftovers can be reported.
class Entries {
public:
    void add(const std::string& key, const std::string& value, int line) {
        if (!map_.emplace(key, value).second) {
            throw ConfigError(key, "duplicate key (line " + std::to_string(line) + ")");
        }
    }

    std::optional<std::string> take(const std::string& key) {
        const auto it = map_.find(key);
        if (it == map_.end()) {
            return std::nullopt;
        }
        std::string v = it->second;
        map_.erase(it);
        return v;
    }

    std::string require(const std::string& key, const std::string& why) {
        auto v = take(key);
        if (!v) {
            throw ConfigError(key, "required " + why);
        }
        return *v;
    }

    void read(const std::string& key, double& out) {
        if (auto v = take(key)) {
            out = to_double(key, *v);
        }
    }
    void read(const std::string& key, int& out) {
        if (auto v = take(key)) {
            out = to_int32(key, *v);
        }
    }
    void read(const std::string& key, long& out) {
        if (auto v = take(key)) {
            out = static_cast<long>(to_int(key, *v));
        }
    }
    void read(const std::string& key, bool& out) {
        if (auto v = take(key)) {
            out = to_bool(key, *v);
        }
    }
    void read(const std::string& key, std::uint64_t& out) {
        if (auto v = take(key)) {
            out = to_u64(key, *v);
        }
    }
    void read(const std::string& key, std::vector<double>& out) {
        if (auto v = take(key)) {
            out = to_doubles(key, *v);
        }
    }

    bool has(const std::string& key) const { return map_.count(key) != 0; }

    void reject_leftovers() const {
        if (!map_.empty()) {
            throw ConfigError(map_.begin()->first, "unknown key");
        }
    }

private:
    std::map<std::string, std::string> map_;
};

template <typename E>
struct Names {
    E value;
    const char* name;
};

constexpr Names<RegularizerKind> kRegNames[] = {
    {RegularizerKind::l1, "l1"},       {RegularizerKind::lpq, "lpq"},     {RegularizerKind::group_l21, "group_l21"},
    {RegularizerKind::two_dim_lasso, "two_dim_lasso"}, {RegularizerKind::ridge, "ridge"}, {RegularizerKind::zero, "zero"},
    {RegularizerKind::l0, "l0"}};
constexpr Names<EnsembleKind> kEnsembleNames[] = {
    {EnsembleKind::iid_gaussian, "iid_gaussian"}, {EnsembleKind::row_orthogonal, "row_orthogonal"},
    {EnsembleKind::custom_spectrum, "custom"}};
constexpr Names<ValueDist::Kind> kDistNames[] = {
    {ValueDist::Kind::gaussian, "gaussian"}, {ValueDist::Kind::point_mass, "point_mass"}, {ValueDist::Kind::binary, "binary"}};
constexpr Names<Mode> kModeNames[] = {{Mode::predict, "predict"}, {Mode::simulate, "simulate"},
                                      {Mode::sweep_region, "sweep_region"}, {Mode::tune, "tune"},
                                      {Mode::spectrum, "spectrum"}};

template <typename E, std::size_t K>
const char* name_of(const Names<E> (&table)[K], E v) {
    for (const auto& n : table) {
        if (n.value == v) {
            return n.name;
        }
    }
    return "?";
}

template <typename E, std::size_t K>
E value_of(const Names<E> (&table)[K], const std::string& key, const std::string& s) {
    for (const auto& n : table) {
        if (s == n.name) {
            return n.value;
        }
    }
    std::string allowed;
    for (const auto& n : table) {
        allowed += allowed.empty() ? "" : "|";
        allowed += n.name;
    }
    throw ConfigError(key, "expected one of " + allowed + ", got '" + s + "'");
}

void read_dist(Entries& e, const std::string& prefix, ValueDist& d) {
    if (auto v = e.take(prefix + ".kind")) {
        d.kind = value_of(kDistNames, prefix + ".kind", *v);
    }
    e.read(prefix + ".mean", d.mean);
    e.read(prefix + ".variance", d.variance);
    e.read(prefix + ".value", d.value);
}

std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        s += (i ? ", " : "") + format_double(v[i]);
    }
    return s;
}

std::string terminal_key(int j, const char* field) {
    return "terminal." + std::to_string(j + 1) + "." + field;
}

void check(bool ok, const std::string& field, const std::string& what) {
    if (!ok) {
        throw ConfigError(field, what);
    }
}

// Re-throws model validation errors with the section they came from.
template <typename F>
void within(const std::string& field, F&& f) {
    try {
        f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& ex) {
        throw ConfigError(field, ex.what());
    }
}

} // namespace

std::string to_string(Mode m) {
    return name_of(kModeNames, m);
}

Mode parse_mode(const std::string& s) {
    return value_of(kModeNames, "mode", s);
}

ExperimentConfig parse_config(const std::string& text) {
    Entries e;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno), "expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) {
            throw ConfigError("line " + std::to_string(lineno), "empty key");
        }
        e.add(key, trim(line.substr(eq + 1)), lineno);
    }

    ExperimentConfig cfg;
    cfg.mode = parse_mode(e.require("mode", "in every config"));
    const int jn = to_int32("terminals", e.require("terminals", "in every config"));
    check(jn >= 1 && jn <= 4, "terminals", "must be between 1 and 4");

    if (auto v = e.take("distortion")) {
        cfg.distortion = *v == "mse" ? DistortionKind::mse
                         : *v == "support_error"
                             ? DistortionKind::support_error
                             : throw ConfigError("distortion", "expected mse|support_error, got '" + *v + "'");
    }
    e.read("seed", cfg.seed);
    e.read("scan", cfg.scan);

    auto& pr = cfg.prior;
    pr.terminals = jn;
    pr.mu_j.assign(static_cast<std::size_t>(jn), 0.0);
    e.read("prior.mu_c", pr.mu_c);
    e.read("prior.mu_0", pr.mu_0);
    if (auto v = e.take("prior.mu_j")) {
        auto mu = to_doubles("prior.mu_j", *v);
        if (mu.size() == 1) {
            mu.assign(static_cast<std::size_t>(jn), mu.front());
        }
        check(static_cast<int>(mu.size()) == jn, "prior.mu_j", "needs one value or one per terminal");
        pr.mu_j = std::move(mu);
    }
    read_dist(e, "prior.w0", pr.w0);
    read_dist(e, "prior.wj", pr.wj);
    read_dist(e, "prior.uj", pr.uj);

    auto& sp = cfg.spec;
    if (auto v = e.take("regularizer.kind")) {
        sp.kind = value_of(kRegNames, "regularizer.kind", *v);
    }
    e.read("regularizer.weight", sp.weight);
    e.read("regularizer.p", sp.p);
    e.read("regularizer.q", sp.q);
    e.read("regularizer.phi", sp.phi);
    e.read("regularizer.alpha", sp.alpha);
    if (auto v = e.take("regularizer.domain")) {
        sp.domain = *v == "reals" ? FeasibleSet::reals
                    : *v == "box" ? FeasibleSet::box
                                  : throw ConfigError("regularizer.domain", "expected reals|box, got '" + *v + "'");
    }
    e.read("regularizer.box", sp.box);

    cfg.terminals.resize(static_cast<std::size_t>(jn));
    for (int j = 0; j < jn; ++j) {
        auto& t = cfg.terminals[static_cast<std::size_t>(j)];
        const std::string kind = e.require(terminal_key(j, "ensemble"), "for every terminal");
        if (kind == "identity") {
            t.ensemble = EnsembleSpec::identity();
        } else {
            t.ensemble.kind = value_of(kEnsembleNames, terminal_key(j, "ensemble"), kind);
            t.ensemble.rho = to_double(terminal_key(j, "rho"), e.require(terminal_key(j, "rho"), "for this ensemble"));
        }
        if (kind == "custom") {
            const auto ev = to_doubles(terminal_key(j, "eigenvalues"),
                                       e.require(terminal_key(j, "eigenvalues"), "for a custom spectrum"));
            const auto mass =
                to_doubles(terminal_key(j, "masses"), e.require(terminal_key(j, "masses"), "for a custom spectrum"));
            check(ev.size() == mass.size(), terminal_key(j, "masses"), "needs one mass per eigenvalue");
            for (std::size_t k = 0; k < ev.size(); ++k) {
                t.ensemble.atoms.push_back({ev[k], mass[k]});
            }
        }
        e.read(terminal_key(j, "oversampling"), t.ensemble.allow_oversampling);
        e.read(terminal_key(j, "lambda"), t.lambda);
        e.read(terminal_key(j, "sigma2"), t.sigma2);
    }

    auto& so = cfg.solver;
    e.read("solver.damping", so.damping);
    e.read("solver.tol", so.tol);
    e.read("solver.max_iter", so.max_iter);
    e.read("solver.quadrature_order", so.expectation.quadrature_order);
    e.read("solver.panel_order", so.expectation.panel_order);
    e.read("solver.panel_width", so.expectation.panel_width);
    e.read("solver.truncation", so.expectation.truncation);
    e.read("solver.exact_two_dim_lasso", so.expectation.exact_two_dim_lasso);
    e.read("solver.mc_draws", so.expectation.mc_draws);
    e.read("solver.mc_seed", so.expectation.mc_seed);

    if (cfg.mode == Mode::simulate) {
        cfg.simulate.n = to_int32("simulate.n", e.require("simulate.n", "for mode simulate"));
        cfg.simulate.trials = to_int32("simulate.trials", e.require("simulate.trials", "for mode simulate"));
    }
    e.read("simulate.n", cfg.simulate.n);
    e.read("simulate.trials", cfg.simulate.trials);
    e.read("simulate.max_iter", cfg.simulate.max_iter);
    e.read("simulate.tol", cfg.simulate.tol);

    if (cfg.mode == Mode::sweep_region) {
        for (const char* k : {"sweep.rho_1", "sweep.rho_2", "tune.free"}) {
            check(e.has(k), k, "required for mode sweep_region");
        }
    }
    e.read("sweep.rho_1", cfg.sweep.rho_1);
    e.read("sweep.rho_2", cfg.sweep.rho_2);
    e.read("sweep.threshold", cfg.sweep.threshold);
    e.read("sweep.baseline_l1", cfg.sweep.baseline_l1);
    e.read("sweep.baseline_lower", cfg.sweep.baseline_lower);
    e.read("sweep.baseline_upper", cfg.sweep.baseline_upper);

    if (cfg.mode == Mode::tune) {
        check(e.has("tune.free"), "tune.free", "required for mode tune");
    }
    if (auto v = e.take("tune.free")) {
        for (const auto& name : split_list(*v)) {
            FreeVariableConfig f;
            f.name = name;
            const std::string base = "tune." + name;
            f.lower = to_double(base + ".lower", e.require(base + ".lower", "for every free variable"));
            f.upper = to_double(base + ".upper", e.require(base + ".upper", "for every free variable"));
            cfg.tune.free.push_back(f);
        }
    }
    e.read("tune.init", cfg.tune.init);
    e.read("tune.rel_tol", cfg.tune.rel_tol);
    e.read("tune.max_sweeps", cfg.tune.max_sweeps);
    e.read("tune.snr_db", cfg.tune.snr_db);
    e.read("tune.power", cfg.tune.power);

    if (cfg.mode == Mode::spectrum) {
        cfg.spectrum.n = to_int32("spectrum.n", e.require("spectrum.n", "for mode spectrum"));
    }
    e.read("spectrum.n", cfg.spectrum.n);
    e.read("spectrum.points", cfg.spectrum.points);

    if (auto v = e.take("output.path")) {
        cfg.output.path = *v;
    }
    if (auto v = e.take("output.format")) {
        cfg.output.format = *v == "csv"    ? OutputFormat::csv
                            : *v == "json" ? OutputFormat::json
                                           : throw ConfigError("output.format", "expected csv|json, got '" + *v + "'");
    }

    e.reject_leftovers();
    cfg.validate();
    return cfg;
}

ExperimentConfig read_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(path, "cannot open config file");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void ExperimentConfig::validate() const {
    const int jn = size();
    check(jn >= 1 && jn <= 4, "terminals", "must be between 1 and 4");
    check(prior.terminals == jn, "prior", "terminal count differs from 'terminals'");
    within("prior", [&] { prior.validate(); });
    within("regularizer", [&] { spec.validate(jn); });
    for (int j = 0; j < jn; ++j) {
        const auto& t = terminals[static_cast<std::size_t>(j)];
        within(terminal_key(j, "ensemble"), [&] { t.ensemble.validate(); });
        check(t.lambda > 0.0 && std::isfinite(t.lambda), terminal_key(j, "lambda"), "must be positive");
        check(t.sigma2 >= 0.0 && std::isfinite(t.sigma2), terminal_key(j, "sigma2"), "must be nonnegative");
    }
    check(solver.damping > 0.0 && solver.damping <= 1.0, "solver.damping", "must be in (0, 1]");
    check(solver.tol > 0.0, "solver.tol", "must be positive");
    check(solver.max_iter >= 1, "solver.max_iter", "must be at least 1");
    check(solver.expectation.quadrature_order >= 3, "solver.quadrature_order", "must be at least 3");
    check(solver.expectation.panel_order >= 2, "solver.panel_order", "must be at least 2");
    check(solver.expectation.panel_width > 0.0, "solver.panel_width", "must be positive");
    check(solver.expectation.truncation > 0.0, "solver.truncation", "must be positive");
    check(solver.expectation.mc_draws >= 1, "solver.mc_draws", "must be positive");

    switch (mode) {
    case Mode::simulate:
        check(simulate.n >= 64, "simulate.n", "must be at least 64");
        check(simulate.trials >= 1, "simulate.trials", "must be at least 1");
        check(simulate.max_iter >= 1, "simulate.max_iter", "must be at least 1");
        check(simulate.tol >= 0.0, "simulate.tol", "must be nonnegative");
        break;
    case Mode::sweep_region:
        check(jn == 2, "terminals", "mode sweep_region needs 2 terminals");
        check(!sweep.rho_1.empty(), "sweep.rho_1", "must not be empty");
        check(!sweep.rho_2.empty(), "sweep.rho_2", "must not be empty");
        for (const auto* grid : {&sweep.rho_1, &sweep.rho_2}) {
            for (double r : *grid) {
                check(r > 0.0 && std::isfinite(r), grid == &sweep.rho_1 ? "sweep.rho_1" : "sweep.rho_2",
                      "compression ratios must be positive");
            }
        }
        check(!std::isnan(sweep.threshold), "sweep.threshold", "must be a number");
        if (sweep.baseline_l1) {
            check(sweep.baseline_lower > 0.0 && sweep.baseline_lower < sweep.baseline_upper &&
                      std::isfinite(sweep.baseline_upper),
                  "sweep.baseline_lower", "needs 0 < lower < upper < inf");
        }
        [[fallthrough]];
    case Mode::tune:
        check(!tune.free.empty() && tune.free.size() <= 2, "tune.free", "needs one or two free variables");
        check(tune.init.empty() || tune.init.size() == tune.free.size(), "tune.init",
              "needs one value per free variable");
        check(tune.rel_tol > 0.0, "tune.rel_tol", "must be positive");
        check(tune.max_sweeps >= 1, "tune.max_sweeps", "must be at least 1");
        check(tune.power >= 0.0 && std::isfinite(tune.power), "tune.power", "must be nonnegative");
        for (const auto& f : tune.free) {
            const std::string base = "tune." + f.name;
            check(std::isfinite(f.lower) && std::isfinite(f.upper) && f.lower < f.upper, base + ".lower",
                  "bounds must be finite with lower < upper");
            RsProblem probe;
            probe.prior = prior;
            probe.spec = spec;
            probe.terminals.resize(static_cast<std::size_t>(jn));
            within("tune.free", [&] { apply_parameter(probe, f.name, f.lower); });
        }
        break;
    case Mode::spectrum:
        check(spectrum.n >= 2, "spectrum.n", "must be at least 2");
        check(spectrum.points >= 2, "spectrum.points", "must be at least 2");
        break;
    case Mode::predict:
        break;
    }
}

std::vector<std::string> ExperimentConfig::warnings() const {
    std::vector<std::string> w;
    if (mode == Mode::simulate && simulate.n < 256) {
        w.push_back("simulate.n = " + std::to_string(simulate.n) + " is below 256; finite-N effects may dominate");
    }
    return w;
}

std::string format_config(const ExperimentConfig& cfg) {
    std::ostringstream os;
    const auto kv = [&](const std::string& k, const std::string& v) { os << k << " = " << v << '\n'; };
    const auto num = [&](const std::string& k, double v) { kv(k, format_double(v)); };
    const auto flag = [&](const std::string& k, bool v) { kv(k, v ? "true" : "false"); };
    const auto dist = [&](const std::string& p, const ValueDist& d) {
        kv(p + ".kind", name_of(kDistNames, d.kind));
        num(p + ".mean", d.mean);
        num(p + ".variance", d.variance);
        num(p + ".value", d.value);
    };

    kv("mode", to_string(cfg.mode));
    kv("terminals", std::to_string(cfg.size()));
    kv("distortion", cfg.distortion == DistortionKind::mse ? "mse" : "support_error");
    kv("seed", std::to_string(cfg.seed));
    flag("scan", cfg.scan);

    num("prior.mu_c", cfg.prior.mu_c);
    num("prior.mu_0", cfg.prior.mu_0);
    kv("prior.mu_j", join(cfg.prior.mu_j));
    dist("prior.w0", cfg.prior.w0);
    dist("prior.wj", cfg.prior.wj);
    dist("prior.uj", cfg.prior.uj);

    kv("regularizer.kind", name_of(kRegNames, cfg.spec.kind));
    num("regularizer.weight", cfg.spec.weight);
    num("regularizer.p", cfg.spec.p);
    num("regularizer.q", cfg.spec.q);
    num("regularizer.phi", cfg.spec.phi);
    num("regularizer.alpha", cfg.spec.alpha);
    kv("regularizer.domain", cfg.spec.domain == FeasibleSet::reals ? "reals" : "box");
    num("regularizer.box", cfg.spec.box);

    for (int j = 0; j < cfg.size(); ++j) {
        const auto& t = cfg.terminals[static_cast<std::size_t>(j)];
        kv(terminal_key(j, "ensemble"), name_of(kEnsembleNames, t.ensemble.kind));
        num(terminal_key(j, "rho"), t.ensemble.rho);
        if (t.ensemble.kind == EnsembleKind::custom_spectrum) {
            std::vector<double> ev;
            std::vector<double> mass;
            for (const auto& a : t.ensemble.atoms) {
                ev.push_back(a.eigenvalue);
                mass.push_back(a.mass);
            }
            kv(terminal_key(j, "eigenvalues"), join(ev));
            kv(terminal_key(j, "masses"), join(mass));
        }
        flag(terminal_key(j, "oversampling"), t.ensemble.allow_oversampling);
        num(terminal_key(j, "lambda"), t.lambda);
        num(terminal_key(j, "sigma2"), t.sigma2);
    }

    const auto& so = cfg.solver;
    num("solver.damping", so.damping);
    num("solver.tol", so.tol);
    kv("solver.max_iter", std::to_string(so.max_iter));
    kv("solver.quadrature_order", std::to_string(so.expectation.quadrature_order));
    kv("solver.panel_order", std::to_string(so.expectation.panel_order));
    num("solver.panel_width", so.expectation.panel_width);
    num("solver.truncation", so.expectation.truncation);
    flag("solver.exact_two_dim_lasso", so.expectation.exact_two_dim_lasso);
    kv("solver.mc_draws", std::to_string(so.expectation.mc_draws));
    kv("solver.mc_seed", std::to_string(so.expectation.mc_seed));

    kv("simulate.n", std::to_string(cfg.simulate.n));
    kv("simulate.trials", std::to_string(cfg.simulate.trials));
    kv("simulate.max_iter", std::to_string(cfg.simulate.max_iter));
    num("simulate.tol", cfg.simulate.tol);

    kv("sweep.rho_1", join(cfg.sweep.rho_1));
    kv("sweep.rho_2", join(cfg.sweep.rho_2));
    num("sweep.threshold", cfg.sweep.threshold);
    flag("sweep.baseline_l1", cfg.sweep.baseline_l1);
    num("sweep.baseline_lower", cfg.sweep.baseline_lower);
    num("sweep.baseline_upper", cfg.sweep.baseline_upper);

    if (!cfg.tune.free.empty()) {
        std::string names;
        for (const auto& f : cfg.tune.free) {
            names += (names.empty() ? "" : ", ") + f.name;
        }
        kv("tune.free", names);
        for (const auto& f : cfg.tune.free) {
            num("tune." + f.name + ".lower", f.lower);
            num("tune." + f.name + ".upper", f.upper);
        }
    }
    kv("tune.init", join(cfg.tune.init));
    num("tune.rel_tol", cfg.tune.rel_tol);
    kv("tune.max_sweeps", std::to_string(cfg.tune.max_sweeps));
    kv("tune.snr_db", join(cfg.tune.snr_db));
    num("tune.power", cfg.tune.power);

    kv("spectrum.n", std::to_string(cfg.spectrum.n));
    kv("spectrum.points", std::to_string(cfg.spectrum.points));

    kv("output.path", cfg.output.path);
    kv("output.format", cfg.output.format == OutputFormat::csv ? "csv" : "json");
    return os.str();
}

void write_config(const ExperimentConfig& cfg, const std::string& path) {
    write_file_atomic(path, format_config(cfg));
}

std::string config_hash(const ExperimentConfig& cfg) {
    ExperimentConfig c = cfg;
    c.output = OutputConfig{};
    const std::string text = format_config(c);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

RsProblem make_problem(const ExperimentConfig& cfg) {
    RsProblem p;
    p.prior = cfg.prior;
    p.spec = cfg.spec;
    p.distortion = cfg.distortion;
    for (const auto& t : cfg.terminals) {
        p.terminals.push_back({SpectralLaw::from_ensemble(t.ensemble), t.lambda, t.sigma2});
    }
    return p;
}

std::vector<FreeVariable> free_variables(const ExperimentConfig& cfg) {
    std::vector<FreeVariable> out;
    for (const auto& f : cfg.tune.free) {
        out.push_back(FreeVariable::make(f.name, f.lower, f.upper));
    }
    return out;
}

} // namespace replica_cs::harness
