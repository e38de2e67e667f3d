#include "replica_cs/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace replica_cs {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool is_scale_name(const std::string& name) {
    return name == "lambda" || name.rfind("lambda.", 0) == 0 || name == "weight" || name == "B";
}

int terminal_index(const RsProblem& problem, const std::string& name) {
    const std::string digits = name.substr(7);
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos) {
        throw ParameterError("free variable '" + name + "': expected lambda.<terminal>");
    }
    const int j = std::stoi(digits);
    if (j < 1 || j > problem.size()) {
        throw ParameterError("free variable '" + name + "': terminal out of range");
    }
    return j - 1;
}

class Objective {
public:
    Objective(const RsProblem& base, const std::vector<FreeVariable>& free, const RsOptions& opts)
        : base_(base), free_(free), opts_(opts) {}

    double operator()(const std::vector<double>& x) {
        if (auto it = cache_.find(x); it != cache_.end()) {
            return it->second;
        }
        RsProblem p = base_;
        for (std::size_t i = 0; i < free_.size(); ++i) {
            apply_parameter(p, free_[i].name, x[i]);
        }
        double d = kInf;
        ++evaluations;
        try {
            RsSolution s = rs_solve(p, std::nullopt, opts_);
            if (s.converged && std::isfinite(s.distortion)) {
                d = s.distortion;
                if (d < best_value) {
                    best_value = d;
                    best_point = x;
                    best_solution = std::move(s);
                }
            }
        } catch (const DomainError&) {
        } catch (const NumericalError&) {
        }
        if (!std::isfinite(d)) {
            ++failures;
        }
        cache_.emplace(x, d);
        return d;
    }

    int evaluations = 0;
    int failures = 0;
    double best_value = kInf;
    std::vector<double> best_point;
    RsSolution best_solution;

private:
    const RsProblem& base_;
    const std::vector<FreeVariable>& free_;
    RsOptions opts_;
    std::map<std::vector<double>, double> cache_;
};

double to_search(const FreeVariable& v, double x) {
    return v.log_scale ? std::log(x) : x;
}

double from_search(const FreeVariable& v, double t) {
    return v.log_scale ? std::exp(t) : t;
}

// Golden-section search on coordinate i with the others held at x. Returns
// the best value seen (including both bounds) and writes its coordinate.
double golden(Objective& f, const FreeVariable& v, std::vector<double>& x, std::size_t i, double rel_tol) {
    double a = to_search(v, v.lower);
    double b = to_search(v, v.upper);
    const double span = b - a;
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;

    const auto eval = [&](double t) {
        std::vector<double> p = x;
        p[i] = std::clamp(from_search(v, t), v.lower, v.upper);
        return f(p);
    };
    const auto done = [&](double lo, double hi) {
        if (v.log_scale) {
            return hi - lo <= std::log1p(rel_tol);
        }
        const double mid = 0.5 * (lo + hi);
        return hi - lo <= std::max(rel_tol * std::abs(mid), 1e-6 * span);
    };

    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = eval(c);
    double fd = eval(d);
    while (!done(a, b)) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d);
        }
    }

    double best_t = fc <= fd ? c : d;
    double best_f = std::min(fc, fd);
    for (double t : {to_search(v, v.lower), to_search(v, v.upper)}) {
        const double ft = eval(t);
        if (ft < best_f) {
            best_f = ft;
            best_t = t;
        }
    }
    x[i] = std::clamp(from_search(v, best_t), v.lower, v.upper);
    return best_f;
}

} // namespace

FreeVariable FreeVariable::make(std::string name, double lower, double upper) {
    FreeVariable v;
    v.log_scale = is_scale_name(name) && lower > 0.0;
    v.name = std::move(name);
    v.lower = lower;
    v.upper = upper;
    return v;
}

void apply_parameter(RsProblem& problem, const std::string& name, double value) {
    if (name == "lambda") {
        for (auto& t : problem.terminals) {
            t.lambda = value;
        }
    } else if (name.rfind("lambda.", 0) == 0) {
        problem.terminals[static_cast<std::size_t>(terminal_index(problem, name))].lambda = value;
    } else if (name == "weight") {
        problem.spec.weight = value;
    } else if (name == "phi") {
        problem.spec.phi = value;
    } else if (name == "alpha") {
        problem.spec.alpha = value;
    } else if (name == "B") {
        problem.spec.box = value;
    } else {
        throw ParameterError("unknown free variable '" + name + "'");
    }
}

double read_parameter(const RsProblem& problem, const std::string& name) {
    if (name == "lambda") {
        return problem.terminals.at(0).lambda;
    }
    if (name.rfind("lambda.", 0) == 0) {
        return problem.terminals[static_cast<std::size_t>(terminal_index(problem, name))].lambda;
    }
    if (name == "weight") {
        return problem.spec.weight;
    }
    if (name == "phi") {
        return problem.spec.phi;
    }
    if (name == "alpha") {
        return problem.spec.alpha;
    }
    if (name == "B") {
        return problem.spec.box;
    }
    throw ParameterError("unknown free variable '" + name + "'");
}

TuneResult tune_regularizer(const RsProblem& problem, const std::vector<FreeVariable>& free,
                            const TuneOptions& options) {
    if (free.empty() || free.size() > 2) {
        throw ParameterError("tune_regularizer: one or two free variables are supported");
    }
    for (const auto& v : free) {
        RsProblem probe = problem;
        apply_parameter(probe, v.name, v.lower);
        if (!std::isfinite(v.lower) || !std::isfinite(v.upper) || !(v.lower < v.upper)) {
            throw ParameterError("tune_regularizer: bounds of '" + v.name + "' must be finite with lower < upper");
        }
        if (v.log_scale && !(v.lower > 0.0)) {
            throw ParameterError("tune_regularizer: log-scale variable '" + v.name + "' needs a positive lower bound");
        }
    }
    if (free.size() == 2 && free[0].name == free[1].name) {
        throw ParameterError("tune_regularizer: free variables must be distinct");
    }
    if (!options.init.empty() && options.init.size() != free.size()) {
        throw ParameterError("tune_regularizer: init must give one value per free variable");
    }

    Objective f(problem, free, options.solver);
    std::vector<double> x(free.size());
    for (std::size_t i = 0; i < free.size(); ++i) {
        const auto& v = free[i];
        x[i] = options.init.empty() ? from_search(v, 0.5 * (to_search(v, v.lower) + to_search(v, v.upper)))
                                    : std::clamp(options.init[i], v.lower, v.upper);
    }

    double fx = f(x);
    if (free.size() == 1) {
        golden(f, free[0], x, 0, options.rel_tol);
    } else {
        for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
            bool moved = false;
            for (std::size_t i = 0; i < free.size(); ++i) {
                std::vector<double> trial = x;
                const double ft = golden(f, free[i], trial, i, options.rel_tol);
                if (ft < fx) {
                    const auto& v = free[i];
                    const double step = std::abs(to_search(v, trial[i]) - to_search(v, x[i]));
                    const double scale = v.log_scale ? 1.0 : std::max(std::abs(x[i]), 1e-3 * (v.upper - v.lower));
                    moved = moved || step > options.rel_tol * scale;
                    x = trial;
                    fx = ft;
                }
            }
            if (!moved) {
                break;
            }
        }
    }

    if (!std::isfinite(f.best_value)) {
        throw NumericalError("tune_regularizer: all inner solves failed");
    }
    TuneResult r;
    r.values = f.best_point;
    r.distortion = f.best_value;
    r.solution = std::move(f.best_solution);
    r.evaluations = f.evaluations;
    r.failures = f.failures;
    return r;
}

} // namespace replica_cs
