#include "replica_cs/regularizers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "replica_cs/errors.hpp"

namespace replica_cs {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require(bool ok, const std::string& what) {
    if (!ok) {
        throw ParameterError(what);
    }
}

double soft(double y, double t) {
    if (y > t) {
        return y - t;
    }
    if (y < -t) {
        return y + t;
    }
    return 0.0;
}

double sign_of(double x) {
    return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
}

bool is_l1(const RegularizerSpec& s) {
    return s.kind == RegularizerKind::l1 || (s.kind == RegularizerKind::lpq && s.p == 1.0 && s.q == 1.0);
}

bool is_group(const RegularizerSpec& s) {
    return s.kind == RegularizerKind::group_l21 || (s.kind == RegularizerKind::lpq && s.p == 2.0 && s.q == 1.0);
}

double clip(double v, const RegularizerSpec& spec) {
    return spec.domain == FeasibleSet::box ? std::clamp(v, -spec.box, spec.box) : v;
}

/// Keeps the best candidate under the documented tie rule.
class CandidateSet {
public:
    CandidateSet(std::span<const double> y, std::span<const double> tau, const RegularizerSpec& spec,
                 std::span<double> best)
        : y_(y), tau_(tau), spec_(spec), best_(best) {}

    void consider(std::span<const double> v) {
        const double f = scalar_objective(y_, tau_, spec_, v);
        if (!std::isfinite(f)) {
            return;
        }
        bool take = false;
        if (!have_) {
            take = true;
        } else {
            const double slack = 1e-14 * std::max(1.0, std::abs(best_f_));
            if (f < best_f_ - slack) {
                take = true;
            } else if (f <= best_f_ + slack) {
                double nv = 0.0;
                double nb = 0.0;
                for (std::size_t j = 0; j < v.size(); ++j) {
                    nv += v[j] * v[j];
                    nb += best_[j] * best_[j];
                }
                if (nv < nb) {
                    take = true;
                } else if (nv == nb) {
                    take = std::lexicographical_compare(v.begin(), v.end(), best_.begin(), best_.end());
                }
            }
        }
        if (take) {
            have_ = true;
            best_f_ = f;
            std::copy(v.begin(), v.end(), best_.begin());
        }
    }

private:
    std::span<const double> y_;
    std::span<const double> tau_;
    const RegularizerSpec& spec_;
    std::span<double> best_;
    bool have_ = false;
    double best_f_ = kInf;
};

// Root of sum_j y_j^2 / (r + w tau_j)^2 + c / r^2 = 1 on [lo, hi]; the left
// side is decreasing in r.
double group_radius(std::span<const double> y, std::span<const double> tau, const std::vector<int>& free_idx,
                    double w, double c, double lo, double hi) {
    const auto h = [&](double r) {
        double acc = c > 0.0 ? c / (r * r) : 0.0;
        for (int j : free_idx) {
            const double d = r + w * tau[static_cast<std::size_t>(j)];
            acc += y[static_cast<std::size_t>(j)] * y[static_cast<std::size_t>(j)] / (d * d);
        }
        return acc - 1.0;
    };
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) {
            break;
        }
        if (h(mid) > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

void group_estimate(std::span<const double> y, std::span<const double> tau, const RegularizerSpec& spec,
                    std::span<double> out) {
    const std::size_t jn = y.size();
    const double w = spec.weight;
    if (w == 0.0) {
        for (std::size_t j = 0; j < jn; ++j) {
            out[j] = clip(y[j], spec);
        }
        return;
    }
    if (spec.domain == FeasibleSet::reals) {
        const bool equal_tau = std::all_of(tau.begin(), tau.end(), [&](double t) { return t == tau[0]; });
        double norm2 = 0.0;
        double scaled = 0.0;
        for (std::size_t j = 0; j < jn; ++j) {
            norm2 += y[j] * y[j];
            const double s = y[j] / (w * tau[j]);
            scaled += s * s;
        }
        if (scaled <= 1.0) {
            std::fill(out.begin(), out.end(), 0.0);
            return;
        }
        if (equal_tau) {
            const double factor = 1.0 - w * tau[0] / std::sqrt(norm2);
            for (std::size_t j = 0; j < jn; ++j) {
                out[j] = factor * y[j];
            }
            return;
        }
        std::vector<int> idx(jn);
        for (std::size_t j = 0; j < jn; ++j) {
            idx[j] = static_cast<int>(j);
        }
        const double r = group_radius(y, tau, idx, w, 0.0, 0.0, std::sqrt(norm2));
        for (std::size_t j = 0; j < jn; ++j) {
            out[j] = y[j] * r / (r + w * tau[j]);
        }
        return;
    }

    // Box: enumerate coordinates pinned at +-B; the free block solves the
    // radial stationarity equation exactly.
    require(jn <= 8, "group_l21 with a box domain supports at most 8 terminals");
    CandidateSet cands(y, tau, spec, out);
    std::vector<double> v(jn, 0.0);
    cands.consider(v);
    std::size_t states = 1;
    for (std::size_t j = 0; j < jn; ++j) {
        states *= 3;
    }
    const double b = spec.box;
    for (std::size_t code = 0; code < states; ++code) {
        std::size_t c = code;
        std::vector<int> free_idx;
        int pinned = 0;
        double yfree2 = 0.0;
        for (std::size_t j = 0; j < jn; ++j) {
            const std::size_t st = c % 3;
            c /= 3;
            if (st == 0) {
                free_idx.push_back(static_cast<int>(j));
                yfree2 += y[j] * y[j];
            } else {
                v[j] = st == 1 ? b : -b;
                ++pinned;
            }
        }
        const double cst = pinned * b * b;
        double r = 0.0;
        if (cst == 0.0) {
            double scaled = 0.0;
            for (int j : free_idx) {
                const double s = y[static_cast<std::size_t>(j)] / (w * tau[static_cast<std::size_t>(j)]);
                scaled += s * s;
            }
            if (scaled <= 1.0) {
                continue;
            }
            r = group_radius(y, tau, free_idx, w, 0.0, 0.0, std::sqrt(yfree2));
        } else {
            r = group_radius(y, tau, free_idx, w, cst, std::sqrt(cst), std::sqrt(cst + yfree2));
        }
        for (int j : free_idx) {
            const auto k = static_cast<std::size_t>(j);
            v[k] = clip(y[k] * r / (r + w * tau[k]), spec);
        }
        cands.consider(v);
    }
}

// Piecewise-quadratic enumeration over the sign/zero/box state of v_1, v_2
// and the sign of v_1 + alpha v_2.
void two_dim_lasso_estimate(std::span<const double> y, std::span<const double> tau, const RegularizerSpec& spec,
                            std::span<double> out) {
    const double w = spec.weight;
    const double phi = spec.phi;
    const double al = spec.alpha;
    const bool box = spec.domain == FeasibleSet::box;
    const double b = spec.box;
    const int nstates = box ? 5 : 3;
    const std::array<double, 2> a{1.0, al};

    CandidateSet cands(y, tau, spec, out);
    std::array<double, 2> v{};
    for (int s0 = 0; s0 < nstates; ++s0) {
        for (int s1 = 0; s1 < nstates; ++s1) {
            for (int s3 = -1; s3 <= 1; ++s3) {
                std::array<bool, 2> free{};
                std::array<double, 2> sg{};
                const std::array<int, 2> st{s0, s1};
                for (int j = 0; j < 2; ++j) {
                    switch (st[static_cast<std::size_t>(j)]) {
                    case 0: free[j] = true; sg[j] = 1.0; break;
                    case 1: free[j] = true; sg[j] = -1.0; break;
                    case 2: v[j] = 0.0; break;
                    case 3: v[j] = b; break;
                    default: v[j] = -b; break;
                    }
                }
                if (s3 != 0) {
                    for (std::size_t j = 0; j < 2; ++j) {
                        if (free[j]) {
                            v[j] = y[j] - tau[j] * w * (sg[j] + phi * s3 * a[j]);
                        }
                    }
                } else if (free[0] && free[1]) {
                    const double denom = al * al / tau[0] + 1.0 / tau[1];
                    v[1] = (y[1] / tau[1] - al * y[0] / tau[0] - w * (sg[1] - al * sg[0])) / denom;
                    v[0] = -al * v[1];
                } else if (free[0]) {
                    v[0] = -al * v[1];
                } else if (free[1]) {
                    if (al == 0.0) {
                        continue;
                    }
                    v[1] = -v[0] / al;
                }
                v[0] = clip(v[0], spec);
                v[1] = clip(v[1], spec);
                cands.consider(v);
            }
        }
    }
}

double lpq_penalty_1d(const RegularizerSpec& spec, double mag) {
    if (spec.kind == RegularizerKind::l0) {
        return mag != 0.0 ? 1.0 : 0.0;
    }
    return std::pow(mag, spec.p);
}

// Minimizes (y - v)^2 / (2 tau) + weight g(|v|) over v between 0 and
// clip(y): dense grid of 2001 points plus golden refinement around the best
// grid point, with the kink candidates 0 and clip(y).
double grid_minimize_1d(double y, double tau, const RegularizerSpec& spec, double exponent_q) {
    const double sgn = sign_of(y);
    if (sgn == 0.0) {
        return 0.0;
    }
    double hi = std::abs(y);
    if (spec.domain == FeasibleSet::box) {
        hi = std::min(hi, spec.box);
    }
    const auto f = [&](double m) {
        const double d = std::abs(y) - m;
        double pen = lpq_penalty_1d(spec, m);
        if (spec.kind == RegularizerKind::lpq && exponent_q != spec.p) {
            pen = std::pow(pen, exponent_q / spec.p);
        }
        return d * d / (2.0 * tau) + spec.weight * pen;
    };
    constexpr int kPoints = 2001;
    int best_k = 0;
    double best_f = kInf;
    for (int k = 0; k < kPoints; ++k) {
        const double m = hi * k / (kPoints - 1);
        const double fk = f(m);
        if (fk < best_f) {
            best_f = fk;
            best_k = k;
        }
    }
    double lo = hi * std::max(0, best_k - 1) / (kPoints - 1);
    double up = hi * std::min(kPoints - 1, best_k + 1) / (kPoints - 1);
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = up - gr * (up - lo);
    double x2 = lo + gr * (up - lo);
    double f1 = f(x1);
    double f2 = f(x2);
    for (int it = 0; it < 100 && up - lo > 1e-15 * std::max(1.0, hi); ++it) {
        if (f1 <= f2) {
            up = x2;
            x2 = x1;
            f2 = f1;
            x1 = up - gr * (up - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (up - lo);
            f2 = f(x2);
        }
    }
    double best_m = hi * best_k / (kPoints - 1);
    for (double m : {0.5 * (lo + up), 0.0, hi}) {
        const double fm = f(m);
        if (fm < best_f || (fm == best_f && m < best_m)) {
            best_f = fm;
            best_m = m;
        }
    }
    return sgn * best_m;
}

// Non-separable lpq on two terminals: search the quadrant of y (the penalty
// is sign-symmetric and nondecreasing in each |v_j|) with a coarse grid,
// successive zooms around the best cells, and exact searches on both axes.
void grid_estimate_2d(std::span<const double> y, std::span<const double> tau, const RegularizerSpec& spec,
                      std::span<double> out) {
    std::array<double, 2> h{};
    std::array<double, 2> sg{};
    for (std::size_t j = 0; j < 2; ++j) {
        sg[j] = sign_of(y[j]);
        h[j] = std::abs(y[j]);
        if (spec.domain == FeasibleSet::box) {
            h[j] = std::min(h[j], spec.box);
        }
    }
    const auto f = [&](double m0, double m1) {
        const std::array<double, 2> v{sg[0] * m0, sg[1] * m1};
        return scalar_objective(y, tau, spec, v);
    };
    CandidateSet cands(y, tau, spec, out);

    constexpr int kCoarse = 201;
    struct Cell {
        double f;
        double m0;
        double m1;
    };
    std::vector<Cell> cells;
    cells.reserve(kCoarse * kCoarse);
    for (int i = 0; i < kCoarse; ++i) {
        for (int k = 0; k < kCoarse; ++k) {
            const double m0 = h[0] * i / (kCoarse - 1);
            const double m1 = h[1] * k / (kCoarse - 1);
            cells.push_back({f(m0, m1), m0, m1});
        }
    }
    const std::size_t keep = std::min<std::size_t>(4, cells.size());
    std::partial_sort(cells.begin(), cells.begin() + static_cast<std::ptrdiff_t>(keep), cells.end(),
                      [](const Cell& a, const Cell& b) { return a.f < b.f; });
    for (std::size_t c = 0; c < keep; ++c) {
        double c0 = cells[c].m0;
        double c1 = cells[c].m1;
        double step0 = h[0] / (kCoarse - 1);
        double step1 = h[1] / (kCoarse - 1);
        for (int level = 0; level < 14; ++level) {
            constexpr int kZoom = 21;
            const double lo0 = std::max(0.0, c0 - 2.0 * step0);
            const double hi0 = std::min(h[0], c0 + 2.0 * step0);
            const double lo1 = std::max(0.0, c1 - 2.0 * step1);
            const double hi1 = std::min(h[1], c1 + 2.0 * step1);
            double bf = f(c0, c1);
            for (int i = 0; i < kZoom; ++i) {
                for (int k = 0; k < kZoom; ++k) {
                    const double m0 = lo0 + (hi0 - lo0) * i / (kZoom - 1);
                    const double m1 = lo1 + (hi1 - lo1) * k / (kZoom - 1);
                    const double fv = f(m0, m1);
                    if (fv < bf) {
                        bf = fv;
                        c0 = m0;
                        c1 = m1;
                    }
                }
            }
            step0 = (hi0 - lo0) / (kZoom - 1);
            step1 = (hi1 - lo1) / (kZoom - 1);
        }
        const std::array<double, 2> v{sg[0] * c0, sg[1] * c1};
        cands.consider(v);
    }
    // Axes: one coordinate at zero reduces to a one-dimensional problem with
    // penalty weight |v|^q.
    RegularizerSpec axis = spec;
    axis.kind = RegularizerKind::lpq;
    axis.p = spec.kind == RegularizerKind::l0 ? 1.0 : spec.q;
    const double q_axis = axis.p;
    for (std::size_t j = 0; j < 2; ++j) {
        std::array<double, 2> v{};
        if (spec.kind == RegularizerKind::l0) {
            RegularizerSpec l0 = spec;
            v[j] = grid_minimize_1d(y[j], tau[j], l0, 1.0);
        } else {
            v[j] = grid_minimize_1d(y[j], tau[j], axis, q_axis);
        }
        cands.consider(v);
    }
    const std::array<double, 2> origin{};
    cands.consider(origin);
}

} // namespace

// ---------------------------------------------------------------------------

RegularizerSpec RegularizerSpec::l1(double weight) {
    RegularizerSpec s;
    s.kind = RegularizerKind::l1;
    s.weight = weight;
    return s;
}

RegularizerSpec RegularizerSpec::lpq(double p, double q, double weight) {
    RegularizerSpec s;
    s.kind = RegularizerKind::lpq;
    s.p = p;
    s.q = q;
    s.weight = weight;
    return s;
}

RegularizerSpec RegularizerSpec::group_l21(double weight) {
    RegularizerSpec s;
    s.kind = RegularizerKind::group_l21;
    s.p = 2.0;
    s.q = 1.0;
    s.weight = weight;
    return s;
}

RegularizerSpec RegularizerSpec::two_dim_lasso(double phi, double alpha, double weight) {
    RegularizerSpec s;
    s.kind = RegularizerKind::two_dim_lasso;
    s.phi = phi;
    s.alpha = alpha;
    s.weight = weight;
    return s;
}

RegularizerSpec RegularizerSpec::ridge(double weight) {
    RegularizerSpec s;
    s.kind = RegularizerKind::ridge;
    s.weight = weight;
    return s;
}

RegularizerSpec RegularizerSpec::zero() {
    RegularizerSpec s;
    s.kind = RegularizerKind::zero;
    s.weight = 0.0;
    return s;
}

RegularizerSpec RegularizerSpec::l0(double weight) {
    RegularizerSpec s;
    s.kind = RegularizerKind::l0;
    s.weight = weight;
    return s;
}

RegularizerSpec RegularizerSpec::with_box(double b) const {
    RegularizerSpec s = *this;
    s.domain = FeasibleSet::box;
    s.box = b;
    return s;
}

void RegularizerSpec::validate(int terminals) const {
    require(std::isfinite(weight) && weight >= 0.0, "regularizer: weight must be finite and nonnegative");
    require(terminals >= 1, "regularizer: at least one terminal");
    if (kind == RegularizerKind::lpq) {
        require(std::isfinite(p) && p > 0.0 && std::isfinite(q) && q > 0.0, "regularizer: lpq requires p, q > 0");
    }
    if (kind == RegularizerKind::two_dim_lasso) {
        require(terminals == 2, "regularizer: two_dim_lasso requires exactly two terminals");
        require(std::isfinite(phi) && phi >= 0.0 && std::isfinite(alpha),
                "regularizer: two_dim_lasso requires phi >= 0 and finite alpha");
    }
    if (domain == FeasibleSet::box) {
        require(std::isfinite(box) && box > 0.0, "regularizer: box half-width must be positive");
    }
}

bool RegularizerSpec::is_convex() const {
    switch (kind) {
    case RegularizerKind::l1:
    case RegularizerKind::group_l21:
    case RegularizerKind::ridge:
    case RegularizerKind::zero:
        return true;
    case RegularizerKind::two_dim_lasso:
        return phi >= 0.0;
    case RegularizerKind::lpq:
        return p >= 1.0 && q >= 1.0;
    case RegularizerKind::l0:
        return false;
    }
    return false;
}

double reg_value(const RegularizerSpec& spec, std::span<const double> v) {
    double u = 0.0;
    if (is_l1(spec)) {
        for (double x : v) {
            u += std::abs(x);
        }
    } else if (is_group(spec)) {
        double s = 0.0;
        for (double x : v) {
            s += x * x;
        }
        u = std::sqrt(s);
    } else {
        switch (spec.kind) {
        case RegularizerKind::lpq: {
            double s = 0.0;
            for (double x : v) {
                s += std::pow(std::abs(x), spec.p);
            }
            u = std::pow(s, spec.q / spec.p);
            break;
        }
        case RegularizerKind::two_dim_lasso:
            u = std::abs(v[0]) + std::abs(v[1]) + spec.phi * std::abs(v[0] + spec.alpha * v[1]);
            break;
        case RegularizerKind::ridge:
            for (double x : v) {
                u += 0.5 * x * x;
            }
            break;
        case RegularizerKind::l0:
            for (double x : v) {
                u += x != 0.0 ? 1.0 : 0.0;
            }
            break;
        case RegularizerKind::zero:
        default:
            return 0.0;
        }
    }
    return spec.weight * u;
}

double scalar_objective(std::span<const double> y, std::span<const double> tau, const RegularizerSpec& spec,
                        std::span<const double> v) {
    double f = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) {
        const double d = y[j] - v[j];
        f += d * d / (2.0 * tau[j]);
    }
    return f + reg_value(spec, v);
}

void scalar_estimate(std::span<const double> y, std::span<const double> tau, const RegularizerSpec& spec,
                     std::span<double> out) {
    const std::size_t jn = y.size();
    if (tau.size() != jn || out.size() != jn) {
        throw ShapeError("scalar_estimate: y, tau and output must have equal length");
    }
    for (std::size_t j = 0; j < jn; ++j) {
        if (!std::isfinite(y[j]) || !std::isfinite(tau[j])) {
            throw ParameterError("scalar_estimate: non-finite input");
        }
        if (!(tau[j] > 0.0)) {
            throw ParameterError("scalar_estimate: tau must be positive");
        }
    }

    if (spec.kind == RegularizerKind::zero) {
        for (std::size_t j = 0; j < jn; ++j) {
            out[j] = clip(y[j], spec);
        }
        return;
    }
    if (is_l1(spec) || (spec.kind == RegularizerKind::two_dim_lasso && spec.phi == 0.0)) {
        for (std::size_t j = 0; j < jn; ++j) {
            out[j] = clip(soft(y[j], spec.weight * tau[j]), spec);
        }
        return;
    }
    if (spec.kind == RegularizerKind::ridge) {
        for (std::size_t j = 0; j < jn; ++j) {
            out[j] = clip(y[j] / (1.0 + spec.weight * tau[j]), spec);
        }
        return;
    }
    if (is_group(spec)) {
        group_estimate(y, tau, spec, out);
        return;
    }
    if (spec.kind == RegularizerKind::two_dim_lasso) {
        if (jn != 2) {
            throw ShapeError("scalar_estimate: two_dim_lasso requires two terminals");
        }
        two_dim_lasso_estimate(y, tau, spec, out);
        return;
    }
    // lpq (general p, q) and l0: certified grid search.
    const bool separable = spec.kind == RegularizerKind::l0 || spec.p == spec.q;
    if (separable) {
        for (std::size_t j = 0; j < jn; ++j) {
            out[j] = grid_minimize_1d(y[j], tau[j], spec, spec.kind == RegularizerKind::l0 ? 1.0 : spec.q);
        }
        return;
    }
    if (jn == 1) {
        out[0] = grid_minimize_1d(y[0], tau[0], spec, spec.q);
        return;
    }
    if (jn == 2) {
        grid_estimate_2d(y, tau, spec, out);
        return;
    }
    throw ParameterError("scalar_estimate: non-separable lpq is supported for at most two terminals");
}

std::vector<double> scalar_estimate(const ScalarChannelIn& in, const RegularizerSpec& spec) {
    std::vector<double> out(in.y.size());
    scalar_estimate(in.y, in.tau, spec, out);
    return out;
}

Eigen::MatrixXd prox_block(const Eigen::MatrixXd& v, std::span<const double> tau, const RegularizerSpec& spec) {
    if (static_cast<std::size_t>(v.rows()) != tau.size()) {
        throw ShapeError("prox_block: tau length must equal the number of rows");
    }
    Eigen::MatrixXd out(v.rows(), v.cols());
    const auto jn = static_cast<std::size_t>(v.rows());
    for (Eigen::Index n = 0; n < v.cols(); ++n) {
        scalar_estimate(std::span<const double>(v.col(n).data(), jn), tau, spec,
                        std::span<double>(out.col(n).data(), jn));
    }
    return out;
}

} // namespace replica_cs
