#include "replica_cs/replica_rs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>

#include "polygon_moments.hpp"
#include "replica_cs/quadrature.hpp"
#include "replica_cs/rng.hpp"

namespace replica_cs {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// xi_j^2 at or below this is treated as a noiseless channel; chi then comes
// from E[d xhat_j / d y_j] instead of the Stein form.
double noiseless_threshold(const RsProblem& problem, int j) {
    return 1e-13 * problem.prior.second_moment(j);
}

struct PreparedAtom {
    double weight = 0.0;
    VectorXd mean;
    MatrixXd cov;
    std::vector<bool> zero; // x_j == 0 surely under this atom
};

std::vector<PreparedAtom> prepare_atoms(const JointSparsityPrior& prior) {
    std::vector<PreparedAtom> out;
    for (const auto& comp : prior_mixture(prior)) {
        for (auto& a : comp.gaussian_atoms(prior)) {
            PreparedAtom p;
            p.weight = comp.probability * a.weight;
            p.mean = std::move(a.mean);
            p.cov = std::move(a.cov);
            p.zero.resize(static_cast<std::size_t>(prior.terminals));
            for (int j = 0; j < prior.terminals; ++j) {
                p.zero[static_cast<std::size_t>(j)] = p.cov(j, j) == 0.0 && p.mean(j) == 0.0;
            }
            out.push_back(std::move(p));
        }
    }
    return out;
}

// Central difference of xhat_j in y_j.
double estimate_slope(std::vector<double>& y, std::span<const double> tau, const RegularizerSpec& spec, int j,
                      std::vector<double>& scratch) {
    const auto js = static_cast<std::size_t>(j);
    const double y0 = y[js];
    const double h = 1e-7 * std::max(1.0, std::abs(y0));
    y[js] = y0 + h;
    scalar_estimate(y, tau, spec, scratch);
    const double up = scratch[js];
    y[js] = y0 - h;
    scalar_estimate(y, tau, spec, scratch);
    const double down = scratch[js];
    y[js] = y0;
    return (up - down) / (2.0 * h);
}

struct Accumulator {
    std::vector<double> q, cross, slope;
    double distortion = 0.0;

    explicit Accumulator(int jn)
        : q(static_cast<std::size_t>(jn), 0.0), cross(static_cast<std::size_t>(jn), 0.0),
          slope(static_cast<std::size_t>(jn), 0.0) {}
};

RsExpectations finish(const Accumulator& acc, const DecoupledSystem& sys, const std::vector<bool>& noiseless) {
    RsExpectations out;
    const std::size_t jn = acc.q.size();
    out.q = acc.q;
    out.chi.resize(jn);
    for (std::size_t j = 0; j < jn; ++j) {
        out.chi[j] = noiseless[j] ? sys.tau[j] * acc.slope[j] : sys.tau[j] * acc.cross[j] / sys.xi2[j];
    }
    out.distortion = acc.distortion;
    return out;
}

void check_system(const DecoupledSystem& sys, int jn) {
    if (static_cast<int>(sys.tau.size()) != jn || static_cast<int>(sys.xi2.size()) != jn) {
        throw ShapeError("rs_expectations: system size does not match the number of terminals");
    }
    for (int j = 0; j < jn; ++j) {
        const auto js = static_cast<std::size_t>(j);
        if (!(sys.tau[js] > 0.0) || !std::isfinite(sys.tau[js]) || !(sys.xi2[js] >= 0.0) ||
            !std::isfinite(sys.xi2[js])) {
            throw DomainError("rs_expectations: need tau > 0 and xi^2 >= 0 at terminal " + std::to_string(j));
        }
    }
}

// Per-coordinate form of a separable penalty, or nullopt when the estimator
// couples coordinates.
std::optional<RegularizerSpec> coordinate_spec(const RegularizerSpec& spec, int jn) {
    if (jn == 1) {
        return spec;
    }
    switch (spec.kind) {
    case RegularizerKind::l1:
    case RegularizerKind::ridge:
    case RegularizerKind::zero:
    case RegularizerKind::l0:
        return spec;
    case RegularizerKind::lpq:
        if (spec.p == spec.q) {
            return spec;
        }
        return std::nullopt;
    case RegularizerKind::two_dim_lasso:
        if (spec.phi == 0.0) {
            RegularizerSpec s = RegularizerSpec::l1(spec.weight);
            s.domain = spec.domain;
            s.box = spec.box;
            return s;
        }
        return std::nullopt;
    case RegularizerKind::group_l21:
        return std::nullopt;
    }
    return std::nullopt;
}

bool is_affine(const RegularizerSpec& spec) {
    return spec.domain == FeasibleSet::reals &&
           (spec.kind == RegularizerKind::ridge || spec.kind == RegularizerKind::zero);
}

// One decoupled channel of dimension jn with Gaussian-mixture input.
struct Channel {
    int jn = 1;
    std::vector<double> tau;
    RegularizerSpec spec;
    DistortionKind distortion = DistortionKind::mse;
    std::vector<bool> noiseless;
    VectorXd xi2;
    std::vector<PreparedAtom> atoms;
};

class Integrator {
public:
    Integrator(const Channel& ch, const ExpectationOptions& opt)
        : ch_(ch), opt_(opt), acc_(ch.jn), y_(static_cast<std::size_t>(ch.jn)),
          xhat_(static_cast<std::size_t>(ch.jn)), scratch_(static_cast<std::size_t>(ch.jn)),
          gl_(gauss_legendre(opt.panel_order, -1.0, 1.0)),
          break_tol_(ch.spec.is_convex() ? 1e-7 : 1e-12) {
        if (ch.jn == 2 && opt.exact_two_dim_lasso) {
            pieces_ = detail::two_dim_lasso_pieces(ch.spec, ch.tau);
        }
    }

    Accumulator run() {
        const MatrixXd noise = ch_.xi2.asDiagonal();
        for (const auto& atom : ch_.atoms) {
            integrate_atom(atom, noise);
        }
        return acc_;
    }

private:
    void integrate_atom(const PreparedAtom& atom, const MatrixXd& noise) {
        const int jn = ch_.jn;
        const MatrixXd s = atom.cov + noise;
        std::vector<VectorXd> axes; // y = mean + sum_k t_k axes[k], t ~ N(0, I)
        MatrixXd pinv = MatrixXd::Zero(jn, jn);
        // For a regular S in two dimensions the inner direction is pinned to
        // a fixed generic angle in y-space, so inner lines cross the
        // estimator's region boundaries transversally and the frame varies
        // continuously with the state. Eigen-directions otherwise.
        Eigen::LLT<MatrixXd> llt(s);
        const double top = s.diagonal().maxCoeff();
        bool regular = top > 0.0 && llt.info() == Eigen::Success;
        if (regular) {
            const MatrixXd l = llt.matrixL();
            regular = l.diagonal().minCoeff() > 1e-7 * std::sqrt(top);
            if (regular) {
                pinv = llt.solve(MatrixXd::Identity(jn, jn));
                if (jn == 1) {
                    axes.push_back(l.col(0));
                } else {
                    const Eigen::Vector2d u(std::cos(0.3), std::sin(0.3));
                    const double c2 = 1.0 / u.dot(pinv * u);
                    const MatrixXd rest = s - c2 * u * u.transpose();
                    const int k = rest(0, 0) >= rest(1, 1) ? 0 : 1;
                    axes.push_back(rest.col(k) / std::sqrt(std::max(rest(k, k), 1e-300)));
                    axes.push_back(std::sqrt(c2) * u);
                }
            }
        }
        if (!regular) {
            Eigen::SelfAdjointEigenSolver<MatrixXd> eig(s);
            const VectorXd& ev = eig.eigenvalues();
            const double emax = std::max(0.0, ev.maxCoeff());
            for (int k = 0; k < jn; ++k) {
                if (ev(k) > 0.0 && ev(k) > 1e-14 * emax) {
                    axes.push_back(std::sqrt(ev(k)) * eig.eigenvectors().col(k));
                    pinv += eig.eigenvectors().col(k) * eig.eigenvectors().col(k).transpose() / ev(k);
                }
            }
        }
        // z | y and x | y are Gaussian under this atom.
        atom_ = &atom;
        gain_ = noise * pinv;
        post_ = atom.cov * pinv * noise;
        post_ = 0.5 * (post_ + post_.transpose());

        if (axes.empty()) {
            accumulate(atom.mean, atom.weight);
        } else if (is_affine(ch_.spec)) {
            hermite(axes, atom);
        } else if (axes.size() == 1) {
            line(atom.mean, axes[0], atom.weight);
        } else if (!pieces_.empty() && exact_pieces(atom, axes)) {
            return;
        } else {
            const VectorXd& outer = axes[0];
            const VectorXd& inner = axes[1];
            for_each_node([&](double t, double w) { line(atom.mean + t * outer, inner, atom.weight * w); });
        }
    }

    // Closed-form Gaussian moments over the polygons on which the estimate is
    // affine. Returns false (and accumulates nothing) if the pieces fail to
    // tile the integration square.
    bool exact_pieces(const PreparedAtom& atom, const std::vector<VectorXd>& axes) {
        constexpr double r = 10.0;
        Eigen::Matrix2d l;
        l.col(0) = axes[0];
        l.col(1) = axes[1];
        const Eigen::Vector2d m = atom.mean;
        const Eigen::Matrix2d linv = l.inverse();
        const Eigen::Matrix2d gl = gain_ * l;            // ez = gl t
        const Eigen::Matrix2d ml = l - gl;                // mtilde = m + ml t
        const detail::Polygon box = detail::square(r);

        Accumulator part(2);
        double mass = 0.0;
        for (const auto& pc : pieces_) {
            detail::Polygon poly;
            if (!pc.vertices.empty()) {
                for (const auto& v : pc.vertices) {
                    poly.push_back(linv * (v - m));
                }
                for (int k = 0; k < 4; ++k) {
                    const Eigen::Vector2d nrm = k < 2 ? Eigen::Vector2d(Eigen::Vector2d::Unit(k))
                                                       : Eigen::Vector2d(-Eigen::Vector2d::Unit(k - 2));
                    poly = detail::clip(poly, nrm, r);
                }
            } else {
                poly = box;
                for (std::size_t h = 0; h < pc.normals.size() && poly.size() >= 3; ++h) {
                    poly = detail::clip(poly, l.transpose() * pc.normals[h], pc.offsets[h] - pc.normals[h].dot(m));
                }
            }
            if (poly.size() < 3) {
                continue;
            }
            const auto mo = detail::gaussian_moments(poly);
            mass += mo[0];
            const Eigen::Vector2d m1(mo[1], mo[2]);
            Eigen::Matrix2d m2;
            m2 << mo[3], mo[4], mo[4], mo[5];
            // xhat = K (m + l t) + k
            const Eigen::Matrix2d kt = pc.k_mat * l;
            const Eigen::Vector2d k0 = pc.k_mat * m + pc.k_vec;
            double delta = 0.0;
            for (int j = 0; j < 2; ++j) {
                const auto js = static_cast<std::size_t>(j);
                const double alpha = k0(j) - m(j);
                const Eigen::Vector2d beta = (kt.row(j) - ml.row(j)).transpose();
                const Eigen::Vector2d gamma = gl.row(j).transpose();
                const double err = alpha * alpha * mo[0] + 2.0 * alpha * beta.dot(m1) + beta.dot(m2 * beta) +
                                   post_(j, j) * mo[0];
                part.q[js] += err;
                part.cross[js] += alpha * gamma.dot(m1) + beta.dot(m2 * gamma) + post_(j, j) * mo[0];
                part.slope[js] += pc.k_mat(j, j) * mo[0];
                if (ch_.distortion == DistortionKind::mse) {
                    delta += err;
                } else {
                    delta += ((pc.sign[js] != 0) == atom.zero[js]) ? mo[0] : 0.0;
                }
            }
            part.distortion += delta;
        }
        if (std::abs(mass - 1.0) > 1e-10) {
            return false;
        }
        for (std::size_t j = 0; j < 2; ++j) {
            acc_.q[j] += atom.weight * part.q[j];
            acc_.cross[j] += atom.weight * part.cross[j];
            if (ch_.noiseless[j]) {
                acc_.slope[j] += atom.weight * part.slope[j];
            }
        }
        acc_.distortion += atom.weight * part.distortion;
        return true;
    }

    // Gauss-Legendre panels on [-T, T] with density weights.
    template <typename F>
    void for_each_node(F&& f) const {
        const double t = opt_.truncation;
        const int panels = std::max(1, static_cast<int>(std::ceil(2.0 * t / opt_.panel_width)));
        const double h = 2.0 * t / panels;
        for (int p = 0; p < panels; ++p) {
            panel(-t + p * h, -t + (p + 1) * h, f);
        }
    }

    template <typename F>
    void panel(double a, double b, F&& f) const {
        const double half = 0.5 * (b - a);
        const double mid = 0.5 * (a + b);
        for (std::size_t i = 0; i < gl_.nodes.size(); ++i) {
            const double t = mid + half * gl_.nodes[i];
            f(t, gl_.weights[i] * half * std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI));
        }
    }

    void hermite(const std::vector<VectorXd>& axes, const PreparedAtom& atom) {
        const QuadratureRule rule = gauss_hermite_normal(opt_.quadrature_order);
        const std::size_t n = rule.nodes.size();
        if (axes.size() == 1) {
            for (std::size_t i = 0; i < n; ++i) {
                accumulate(atom.mean + rule.nodes[i] * axes[0], atom.weight * rule.weights[i]);
            }
            return;
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < n; ++k) {
                accumulate(atom.mean + rule.nodes[i] * axes[0] + rule.nodes[k] * axes[1],
                           atom.weight * rule.weights[i] * rule.weights[k]);
            }
        }
    }

    // Integral along y0 + t d, t ~ N(0, 1), split at the points where the
    // active pattern of the estimate changes.
    void line(const VectorXd& y0, const VectorXd& d, double weight) {
        const double t = opt_.truncation;
        const int panels = std::max(1, static_cast<int>(std::ceil(2.0 * t / opt_.panel_width)));
        const double h = 2.0 * t / panels;
        cuts_.clear();
        std::uint64_t prev = pattern_at(y0, d, -t);
        cuts_.push_back(-t);
        for (int p = 1; p <= panels; ++p) {
            const double b = -t + p * h;
            const double a = b - h;
            const std::uint64_t cur = pattern_at(y0, d, b);
            if (cur != prev) {
                bisect(y0, d, a, prev, b, cur);
            }
            cuts_.push_back(b);
            prev = cur;
        }
        for (std::size_t i = 0; i + 1 < cuts_.size(); ++i) {
            if (cuts_[i + 1] > cuts_[i]) {
                panel(cuts_[i], cuts_[i + 1], [&](double s, double w) { accumulate(y0 + s * d, weight * w); });
            }
        }
    }

    void bisect(const VectorXd& y0, const VectorXd& d, double a, std::uint64_t pa, double b, std::uint64_t pb) {
        if (b - a <= break_tol_) {
            cuts_.push_back(0.5 * (a + b));
            return;
        }
        const double m = 0.5 * (a + b);
        const std::uint64_t pm = pattern_at(y0, d, m);
        if (pm != pa) {
            bisect(y0, d, a, pa, m, pm);
        }
        if (pm != pb) {
            bisect(y0, d, m, pm, b, pb);
        }
    }

    std::uint64_t pattern_at(const VectorXd& y0, const VectorXd& d, double t) {
        for (int j = 0; j < ch_.jn; ++j) {
            y_[static_cast<std::size_t>(j)] = y0(j) + t * d(j);
        }
        scalar_estimate(y_, ch_.tau, ch_.spec, xhat_);
        return pattern();
    }

    // Sign and box-pinning of each coordinate, plus the coupling term's sign.
    std::uint64_t pattern() const {
        std::uint64_t code = 0;
        const bool box = ch_.spec.domain == FeasibleSet::box;
        for (double v : xhat_) {
            const std::uint64_t s = v > 0.0 ? 2 : (v < 0.0 ? 1 : 0);
            const std::uint64_t pin = box && std::abs(v) >= ch_.spec.box ? 1 : 0;
            code = code * 8 + s * 2 + pin;
        }
        if (ch_.spec.kind == RegularizerKind::two_dim_lasso && ch_.jn == 2) {
            const double c = xhat_[0] + ch_.spec.alpha * xhat_[1];
            const double scale = std::abs(xhat_[0]) + std::abs(ch_.spec.alpha * xhat_[1]);
            code = code * 4 + (std::abs(c) <= 1e-12 * scale ? 0 : (c > 0.0 ? 2 : 1));
        }
        return code;
    }

    void accumulate(const VectorXd& yv, double w) {
        const int jn = ch_.jn;
        for (int j = 0; j < jn; ++j) {
            y_[static_cast<std::size_t>(j)] = yv(j);
        }
        scalar_estimate(y_, ch_.tau, ch_.spec, xhat_);
        const VectorXd ez = gain_ * (yv - atom_->mean);
        double delta = 0.0;
        for (int j = 0; j < jn; ++j) {
            const auto js = static_cast<std::size_t>(j);
            const double d = xhat_[js] - (yv(j) - ez(j));
            const double err = d * d + post_(j, j);
            acc_.q[js] += w * err;
            acc_.cross[js] += w * (d * ez(j) + post_(j, j));
            if (ch_.noiseless[js]) {
                acc_.slope[js] += w * estimate_slope(y_, ch_.tau, ch_.spec, j, scratch_);
            }
            if (ch_.distortion == DistortionKind::mse) {
                delta += err;
            } else {
                delta += ((xhat_[js] != 0.0) == atom_->zero[js]) ? 1.0 : 0.0;
            }
        }
        acc_.distortion += w * delta;
    }

    const Channel& ch_;
    const ExpectationOptions& opt_;
    Accumulator acc_;
    std::vector<double> y_, xhat_, scratch_;
    QuadratureRule gl_;
    double break_tol_;
    std::vector<double> cuts_;
    std::vector<detail::AffinePiece> pieces_;
    const PreparedAtom* atom_ = nullptr;
    MatrixXd gain_, post_;
};

// Marginal atoms of coordinate j, merged when identical.
std::vector<PreparedAtom> marginal_atoms(const std::vector<PreparedAtom>& atoms, int j) {
    std::vector<PreparedAtom> out;
    for (const auto& a : atoms) {
        const double m = a.mean(j);
        const double c = a.cov(j, j);
        auto it = std::find_if(out.begin(), out.end(),
                               [&](const PreparedAtom& b) { return b.mean(0) == m && b.cov(0, 0) == c; });
        if (it != out.end()) {
            it->weight += a.weight;
            continue;
        }
        PreparedAtom p;
        p.weight = a.weight;
        p.mean = VectorXd::Constant(1, m);
        p.cov = MatrixXd::Constant(1, 1, c);
        p.zero = {a.zero[static_cast<std::size_t>(j)]};
        out.push_back(std::move(p));
    }
    return out;
}

RsExpectations panel_expectations(const DecoupledSystem& sys, const RsProblem& problem,
                                  const ExpectationOptions& options) {
    const int jn = problem.size();
    const auto jz = static_cast<std::size_t>(jn);
    const auto atoms = prepare_atoms(problem.prior);

    std::vector<bool> noiseless(jz);
    VectorXd xi2(jn);
    for (int j = 0; j < jn; ++j) {
        const auto js = static_cast<std::size_t>(j);
        noiseless[js] = sys.xi2[js] <= noiseless_threshold(problem, j);
        xi2(j) = noiseless[js] ? 0.0 : sys.xi2[js];
    }

    Accumulator total(jn);
    if (const auto coord = coordinate_spec(problem.spec, jn); coord && jn > 1) {
        for (int j = 0; j < jn; ++j) {
            const auto js = static_cast<std::size_t>(j);
            Channel ch;
            ch.jn = 1;
            ch.tau = {sys.tau[js]};
            ch.spec = *coord;
            ch.distortion = problem.distortion;
            ch.noiseless = {noiseless[js]};
            ch.xi2 = VectorXd::Constant(1, xi2(j));
            ch.atoms = marginal_atoms(atoms, j);
            const Accumulator a = Integrator(ch, options).run();
            total.q[js] = a.q[0];
            total.cross[js] = a.cross[0];
            total.slope[js] = a.slope[0];
            total.distortion += a.distortion;
        }
    } else {
        Channel ch;
        ch.jn = jn;
        ch.tau = sys.tau;
        ch.spec = problem.spec;
        ch.distortion = problem.distortion;
        ch.noiseless = noiseless;
        ch.xi2 = xi2;
        ch.atoms = atoms;
        total = Integrator(ch, options).run();
    }
    return finish(total, sys, noiseless);
}

} // namespace

void RsProblem::validate() const {
    prior.validate();
    if (terminals.empty() || static_cast<int>(terminals.size()) != prior.terminals) {
        throw ParameterError("rs problem: one terminal model per prior terminal is required");
    }
    spec.validate(prior.terminals);
    for (const auto& t : terminals) {
        if (!(t.lambda > 0.0) || !std::isfinite(t.lambda)) {
            throw ParameterError("rs problem: lambda must be positive");
        }
        if (!(t.sigma2 >= 0.0) || !std::isfinite(t.sigma2)) {
            throw ParameterError("rs problem: sigma2 must be non-negative");
        }
    }
}

DecoupledSystem decouple(const RsState& state, const RsProblem& problem) {
    const int jn = problem.size();
    if (static_cast<int>(state.q.size()) != jn || static_cast<int>(state.chi.size()) != jn) {
        throw ShapeError("decouple: state size does not match the number of terminals");
    }
    DecoupledSystem sys;
    sys.tau.resize(static_cast<std::size_t>(jn));
    sys.xi2.resize(static_cast<std::size_t>(jn));
    for (int j = 0; j < jn; ++j) {
        const auto js = static_cast<std::size_t>(j);
        const auto& t = problem.terminals[js];
        const double q = state.q[js];
        const double chi = state.chi[js];
        if (!(q >= 0.0) || !(chi >= 0.0) || !std::isfinite(q) || !std::isfinite(chi)) {
            throw RsDomainError("decouple: need q >= 0 and chi >= 0 at terminal " + std::to_string(j) + " (q=" +
                                    num(q) + ", chi=" + num(chi) + ")",
                                state);
        }
        const double omega = -chi / t.lambda;
        double r = 0.0;
        double dr = 0.0;
        try {
            r = r_transform(t.law, omega);
            dr = r_transform_derivative(t.law, omega);
        } catch (const DomainError& e) {
            throw RsDomainError(std::string("decouple: terminal ") + std::to_string(j) + ": " + e.what(), state);
        }
        if (!(r > 0.0)) {
            throw RsDomainError("decouple: R-transform is not positive at terminal " + std::to_string(j), state);
        }
        sys.tau[js] = t.lambda / r;
        // d/dchi R(-chi/lambda) = -R'/lambda
        double xi2 = (t.sigma2 * r - (t.sigma2 * chi - t.lambda * q) * dr / t.lambda) / (r * r);
        if (xi2 < 0.0) {
            const double scale = (t.sigma2 * r + std::abs(t.sigma2 * chi - t.lambda * q) * dr / t.lambda) / (r * r);
            if (xi2 < -1e-12 * scale) {
                throw RsDomainError("decouple: negative noise variance at terminal " + std::to_string(j), state);
            }
            xi2 = 0.0;
        }
        sys.xi2[js] = xi2;
    }
    return sys;
}

RsExpectations rs_expectations(const DecoupledSystem& system, const RsProblem& problem,
                               const ExpectationOptions& options) {
    const int jn = problem.size();
    check_system(system, jn);
    if (jn <= 2) {
        if (options.quadrature_order < 3) {
            throw ParameterError("rs_expectations: quadrature order must be at least 3");
        }
        if (options.panel_order < 2 || !(options.panel_width > 0.0) || !(options.truncation > 0.0)) {
            throw ParameterError("rs_expectations: invalid panel settings");
        }
        return panel_expectations(system, problem, options);
    }
    return rs_expectations_monte_carlo(system, problem, options.mc_draws, options.mc_seed).mean;
}

MonteCarloExpectations rs_expectations_monte_carlo(const DecoupledSystem& system, const RsProblem& problem,
                                                   long draws, std::uint64_t seed) {
    const int jn = problem.size();
    const auto jz = static_cast<std::size_t>(jn);
    check_system(system, jn);
    if (draws < 2) {
        throw ParameterError("rs_expectations_monte_carlo: need at least 2 draws");
    }

    std::vector<bool> noiseless(jz);
    for (int j = 0; j < jn; ++j) {
        noiseless[static_cast<std::size_t>(j)] =
            system.xi2[static_cast<std::size_t>(j)] <= noiseless_threshold(problem, j);
    }

    // Running sums of each per-draw quantity and of its square.
    std::vector<double> sq(jz, 0.0), sq2(jz, 0.0), sc(jz, 0.0), sc2(jz, 0.0);
    double sd = 0.0;
    double sd2 = 0.0;
    std::vector<double> y(jz), xhat(jz), scratch(jz), z(jz);

    constexpr long block = 65536;
    Rng noise_rng = make_rng(seed, {0x4E01});
    for (long start = 0, b = 0; start < draws; start += block, ++b) {
        const long count = std::min(block, draws - start);
        const SampleBlock sample = sample_joint(problem.prior, static_cast<int>(count),
                                                derive_seed(seed, {0x5A11, static_cast<std::uint64_t>(b)}));
        for (long n = 0; n < count; ++n) {
            for (std::size_t j = 0; j < jz; ++j) {
                z[j] = noiseless[j] ? 0.0 : std::sqrt(system.xi2[j]) * standard_normal(noise_rng);
                y[j] = sample.x(static_cast<Eigen::Index>(j), n) + z[j];
            }
            scalar_estimate(y, system.tau, problem.spec, xhat);
            double delta = 0.0;
            for (std::size_t j = 0; j < jz; ++j) {
                const double x = sample.x(static_cast<Eigen::Index>(j), n);
                const double e = xhat[j] - x;
                sq[j] += e * e;
                sq2[j] += e * e * e * e;
                const double c = noiseless[j] ? system.tau[j] *
                                                    estimate_slope(y, system.tau, problem.spec, static_cast<int>(j), scratch)
                                              : system.tau[j] * e * z[j] / system.xi2[j];
                sc[j] += c;
                sc2[j] += c * c;
                if (problem.distortion == DistortionKind::mse) {
                    delta += e * e;
                } else {
                    delta += ((xhat[j] != 0.0) != (x != 0.0)) ? 1.0 : 0.0;
                }
            }
            sd += delta;
            sd2 += delta * delta;
        }
    }

    const auto nd = static_cast<double>(draws);
    const auto stderr_of = [nd](double s, double s2) {
        const double mean = s / nd;
        const double var = std::max(0.0, (s2 / nd - mean * mean) * nd / (nd - 1.0));
        return std::sqrt(var / nd);
    };
    MonteCarloExpectations out;
    out.draws = draws;
    out.mean.q.resize(jz);
    out.mean.chi.resize(jz);
    out.q_stderr.resize(jz);
    out.chi_stderr.resize(jz);
    for (std::size_t j = 0; j < jz; ++j) {
        out.mean.q[j] = sq[j] / nd;
        out.mean.chi[j] = sc[j] / nd;
        out.q_stderr[j] = stderr_of(sq[j], sq2[j]);
        out.chi_stderr[j] = stderr_of(sc[j], sc2[j]);
    }
    out.mean.distortion = sd / nd;
    out.distortion_stderr = stderr_of(sd, sd2);
    return out;
}

RsState default_init(const RsProblem& problem) {
    RsState s;
    for (int j = 0; j < problem.size(); ++j) {
        s.q.push_back(problem.prior.second_moment(j));
        s.chi.push_back(problem.terminals[static_cast<std::size_t>(j)].lambda);
    }
    return s;
}

RsSolution rs_solve(const RsProblem& problem, const std::optional<RsState>& init, const RsOptions& options) {
    problem.validate();
    if (!(options.damping > 0.0 && options.damping <= 1.0)) {
        throw ParameterError("rs_solve: damping must lie in (0, 1]");
    }
    if (!(options.tol > 0.0) || options.max_iter < 1) {
        throw ParameterError("rs_solve: need tol > 0 and max_iter >= 1");
    }
    const int jn = problem.size();
    RsState state = init ? *init : default_init(problem);
    if (static_cast<int>(state.q.size()) != jn || static_cast<int>(state.chi.size()) != jn) {
        throw ShapeError("rs_solve: initial state size does not match the number of terminals");
    }

    RsSolution sol;
    const double g = options.damping;
    for (int it = 1; it <= options.max_iter; ++it) {
        DecoupledSystem sys = decouple(state, problem);
        RsExpectations ex = rs_expectations(sys, problem, options.expectation);

        RsState next = state;
        double residual = 0.0;
        bool finite = std::isfinite(ex.distortion);
        for (std::size_t j = 0; j < static_cast<std::size_t>(jn); ++j) {
            next.q[j] = (1.0 - g) * state.q[j] + g * ex.q[j];
            next.chi[j] = (1.0 - g) * state.chi[j] + g * ex.chi[j];
            finite = finite && std::isfinite(next.q[j]) && std::isfinite(next.chi[j]);
            const double step = std::abs(next.q[j] - state.q[j]) + std::abs(next.chi[j] - state.chi[j]);
            residual = std::max(residual, step / std::max(1.0, std::abs(state.q[j]) + std::abs(state.chi[j])));
        }

        sol.state = state;
        sol.system = std::move(sys);
        sol.distortion = ex.distortion;
        sol.iterations = it;
        sol.residual = finite ? residual : std::numeric_limits<double>::infinity();
        if (!finite) {
            sol.converged = false;
            return sol;
        }
        if (residual < options.tol) {
            sol.converged = true;
            return sol;
        }
        state = std::move(next);
    }
    sol.converged = false;
    return sol;
}

std::vector<RsSolution> rs_solve_scan(const RsProblem& problem, const RsOptions& options) {
    const RsState base = default_init(problem);
    std::vector<RsState> starts{base};
    for (int i = 0; i < 8; ++i) {
        const double f = std::pow(10.0, -3.0 + 6.0 * i / 7.0);
        RsState s = base;
        for (std::size_t j = 0; j < s.q.size(); ++j) {
            s.q[j] = std::max(s.q[j], 1e-12) * f;
            s.chi[j] *= f;
        }
        starts.push_back(std::move(s));
    }

    std::vector<RsSolution> found;
    for (const auto& s : starts) {
        RsSolution sol;
        try {
            sol = rs_solve(problem, s, options);
        } catch (const DomainError&) {
            continue;
        }
        if (!sol.converged) {
            continue;
        }
        const bool seen = std::any_of(found.begin(), found.end(), [&](const RsSolution& f) {
            if (std::abs(f.distortion - sol.distortion) > 1e-6 * std::max(1.0, std::abs(sol.distortion))) {
                return false;
            }
            for (std::size_t j = 0; j < s.q.size(); ++j) {
                const double scale = std::max(1.0, std::abs(sol.state.q[j]) + std::abs(sol.state.chi[j]));
                if (std::abs(f.state.q[j] - sol.state.q[j]) + std::abs(f.state.chi[j] - sol.state.chi[j]) >
                    1e-5 * scale) {
                    return false;
                }
            }
            return true;
        });
        if (!seen) {
            found.push_back(std::move(sol));
        }
    }
    return found;
}

} // namespace replica_cs
