#include "polygon_moments.hpp"

#include <algorithm>
#include <cmath>

#include "replica_cs/quadrature.hpp"

namespace replica_cs::detail {

namespace {

using Eigen::Vector2d;

constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;

double cross(const Vector2d& a, const Vector2d& b) {
    return a.x() * b.y() - a.y() * b.x();
}

double signed_area(const Polygon& p) {
    double a = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        a += cross(p[i], p[(i + 1) % p.size()]);
    }
    return 0.5 * a;
}

Polygon convex_hull(std::vector<Vector2d> pts) {
    std::sort(pts.begin(), pts.end(), [](const Vector2d& a, const Vector2d& b) {
        return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
    });
    Polygon h(2 * pts.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        while (k >= 2 && cross(h[k - 1] - h[k - 2], pts[i] - h[k - 2]) <= 0.0) {
            --k;
        }
        h[k++] = pts[i];
    }
    for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
        while (k >= t && cross(h[k - 1] - h[k - 2], pts[i - 1] - h[k - 2]) <= 0.0) {
            --k;
        }
        h[k++] = pts[i - 1];
    }
    h.resize(k > 0 ? k - 1 : 0);
    return h;
}

} // namespace

Polygon clip(const Polygon& poly, const Vector2d& n, double c) {
    Polygon out;
    const std::size_t m = poly.size();
    for (std::size_t i = 0; i < m; ++i) {
        const Vector2d& p = poly[i];
        const Vector2d& q = poly[(i + 1) % m];
        const double fp = n.dot(p) - c;
        const double fq = n.dot(q) - c;
        if (fp <= 0.0) {
            out.push_back(p);
        }
        if ((fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0)) {
            out.push_back(p + (fp / (fp - fq)) * (q - p));
        }
    }
    return out;
}

Polygon square(double r) {
    return {Vector2d(-r, -r), Vector2d(r, -r), Vector2d(r, r), Vector2d(-r, r)};
}

// Green's theorem: the integral of f over P equals the boundary integral of
// F dt2 with dF/dt1 = f, where the t1-antiderivatives of t1^k phi(t1) are
// closed-form in Phi and phi.
std::array<double, 6> gaussian_moments(const Polygon& poly) {
    static const QuadratureRule gl = gauss_legendre(10, 0.0, 1.0);
    std::array<double, 6> m{};
    if (poly.size() < 3) {
        return m;
    }
    const double orient = signed_area(poly) < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const Vector2d p = poly[i];
        const Vector2d d = poly[(i + 1) % poly.size()] - p;
        if (d.y() == 0.0) {
            continue;
        }
        const int panels = std::max(1, static_cast<int>(std::ceil(d.norm())));
        for (int k = 0; k < panels; ++k) {
            const double s0 = static_cast<double>(k) / panels;
            const double s1 = static_cast<double>(k + 1) / panels;
            const double a2 = p.y() + s0 * d.y();
            const double b2 = p.y() + s1 * d.y();
            if ((a2 > 9.5 && b2 > 9.5) || (a2 < -9.5 && b2 < -9.5)) {
                continue;
            }
            for (std::size_t g = 0; g < gl.nodes.size(); ++g) {
                const double s = s0 + (s1 - s0) * gl.nodes[g];
                const double w = (s1 - s0) * gl.weights[g] * d.y();
                const double t1 = p.x() + s * d.x();
                const double t2 = p.y() + s * d.y();
                const double cdf1 = 0.5 * std::erfc(-t1 / std::sqrt(2.0));
                const double pdf1 = kInvSqrt2Pi * std::exp(-0.5 * t1 * t1);
                const double pdf2 = kInvSqrt2Pi * std::exp(-0.5 * t2 * t2) * w;
                m[0] += pdf2 * cdf1;
                m[1] -= pdf2 * pdf1;
                m[2] += pdf2 * t2 * cdf1;
                m[3] += pdf2 * (cdf1 - t1 * pdf1);
                m[4] -= pdf2 * t2 * pdf1;
                m[5] += pdf2 * t2 * t2 * cdf1;
            }
        }
    }
    for (double& v : m) {
        v *= orient;
    }
    return m;
}

std::vector<AffinePiece> two_dim_lasso_pieces(const RegularizerSpec& spec, std::span<const double> tau) {
    std::vector<AffinePiece> out;
    if (spec.kind != RegularizerKind::two_dim_lasso || spec.domain != FeasibleSet::reals || spec.alpha == 0.0 ||
        !(spec.phi > 0.0) || !(spec.weight > 0.0) || tau.size() != 2) {
        return out;
    }
    const double w = spec.weight;
    const double phi = spec.phi;
    const std::array<double, 2> a{1.0, spec.alpha};

    // Zero estimate on the zonotope w tau (box + phi a [-1, 1]).
    {
        std::vector<Vector2d> pts;
        for (double g1 : {-1.0, 1.0}) {
            for (double g2 : {-1.0, 1.0}) {
                for (double h : {-1.0, 1.0}) {
                    pts.emplace_back(w * tau[0] * (g1 + phi * a[0] * h), w * tau[1] * (g2 + phi * a[1] * h));
                }
            }
        }
        AffinePiece z;
        z.k_mat.setZero();
        z.k_vec.setZero();
        z.vertices = convex_hull(std::move(pts));
        out.push_back(std::move(z));
    }

    // Unknowns (v1, v2, g1, g2, h): stationarity plus one equation per
    // pattern entry; the solution is affine in y.
    using Mat5 = Eigen::Matrix<double, 5, 5>;
    using Mat52 = Eigen::Matrix<double, 5, 2>;
    using Vec5 = Eigen::Matrix<double, 5, 1>;
    for (int s1 = -1; s1 <= 1; ++s1) {
        for (int s2 = -1; s2 <= 1; ++s2) {
            if (s1 == 0 && s2 == 0) {
                continue;
            }
            for (int s3 = -1; s3 <= 1; ++s3) {
                // v1 + alpha v2 = 0 with a zero coordinate forces v = 0 (the
                // zonotope); fused nonzero coordinates need matching signs.
                if (s3 == 0 && (s1 == 0 || s2 == 0 || s1 != -(spec.alpha > 0.0 ? 1 : -1) * s2)) {
                    continue;
                }
                Mat5 m = Mat5::Zero();
                Mat52 n = Mat52::Zero();
                Vec5 c = Vec5::Zero();
                for (int j = 0; j < 2; ++j) {
                    m(j, j) = 1.0 / tau[static_cast<std::size_t>(j)];
                    m(j, 2 + j) = w;
                    m(j, 4) = w * phi * a[static_cast<std::size_t>(j)];
                    n(j, j) = 1.0 / tau[static_cast<std::size_t>(j)];
                    const int s = j == 0 ? s1 : s2;
                    if (s != 0) {
                        m(2 + j, 2 + j) = 1.0;
                        c(2 + j) = s;
                    } else {
                        m(2 + j, j) = 1.0;
                    }
                }
                if (s3 != 0) {
                    m(4, 4) = 1.0;
                    c(4) = s3;
                } else {
                    m(4, 0) = 1.0;
                    m(4, 1) = spec.alpha;
                }
                Eigen::FullPivLU<Mat5> lu(m);
                if (!lu.isInvertible()) {
                    continue;
                }
                const Mat52 zy = lu.solve(n);
                const Vec5 z0 = lu.solve(c);

                AffinePiece piece;
                piece.k_mat = zy.topRows<2>();
                piece.k_vec = z0.head<2>();
                piece.sign = {s1, s2};
                const auto add = [&](const Eigen::RowVector2d& row, double off, double sgn) {
                    // sgn * (row . y + off) <= 0
                    piece.normals.emplace_back(sgn * row.transpose());
                    piece.offsets.push_back(-sgn * off);
                };
                const auto bound = [&](int r) {
                    add(zy.row(r), z0(r) - 1.0, 1.0);
                    add(zy.row(r), z0(r) + 1.0, -1.0);
                };
                for (int j = 0; j < 2; ++j) {
                    const int s = j == 0 ? s1 : s2;
                    if (s != 0) {
                        add(zy.row(j), z0(j), -static_cast<double>(s));
                    } else {
                        bound(2 + j);
                    }
                }
                if (s3 != 0) {
                    add(zy.row(0) + spec.alpha * zy.row(1), z0(0) + spec.alpha * z0(1), -static_cast<double>(s3));
                } else {
                    bound(4);
                }
                out.push_back(std::move(piece));
            }
        }
    }
    return out;
}

} // namespace replica_cs::detail
