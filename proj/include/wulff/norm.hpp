#pragma once

// Norms H0 on R^N, their duals H, and the Lagrangian V = H^2 / 2.
//
// A Norm is an immutable value (shared state, cheap to copy). Closed-form
// families evaluate exactly; disc-hull gauges evaluate by ray bisection
// against an exact membership test; `numeric_dual_of` evaluates the dual of
// another norm by maximizing x . xi over the unit sphere of the inner norm.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "wulff/errors.hpp"

namespace wulff {

using Vec = Eigen::VectorXd;
using Vec2 = Eigen::Vector2d;
using Mat = Eigen::MatrixXd;

/// Seed shared by every sampling-based check.
inline constexpr std::uint64_t kDefaultSeed = 0x5EED;

/// Corner coordinate of the unit ball of the flower dual, 2(sqrt 2 - 1).
inline const double kFlowerCorner = 2.0 * (std::numbers::sqrt2 - 1.0);

enum class NormFamily {
    euclidean,
    p_norm,
    quadratic,
    disc_hull_gauge,
    disc_hull_support,
    numeric_dual_of,
};

inline std::string to_string(NormFamily f) {
    switch (f) {
        case NormFamily::euclidean: return "euclidean";
        case NormFamily::p_norm: return "p_norm";
        case NormFamily::quadratic: return "quadratic";
        case NormFamily::disc_hull_gauge: return "disc_hull_gauge";
        case NormFamily::disc_hull_support: return "disc_hull_support";
        case NormFamily::numeric_dual_of: return "numeric_dual_of";
    }
    return "unknown";
}

class Norm;

/// Result of maximizing x . xi over {H0(x) = 1}.
struct DualMaximizer {
    double value = 0.0;
    Vec argmax;                   ///< maximizer, H0(argmax) = 1
    std::vector<Vec> face_ends;   ///< extreme maximizers when the maximizing face is not a point
};

namespace detail {

inline double golden_max(const auto& f, double a, double b, double width, double* best_x) {
    constexpr double kInvPhi = 0.6180339887498949;
    double c = b - kInvPhi * (b - a);
    double d = a + kInvPhi * (b - a);
    double fc = f(c);
    double fd = f(d);
    while (b - a > width) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - kInvPhi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + kInvPhi * (b - a);
            fd = f(d);
        }
    }
    double x = 0.5 * (a + b);
    double fx = f(x);
    if (fc > fx) { x = c; fx = fc; }
    if (fd > fx) { x = d; fx = fd; }
    *best_x = x;
    return fx;
}

inline Vec unit2(double theta) {
    Vec u(2);
    u << std::cos(theta), std::sin(theta);
    return u;
}

// Andrew's monotone chain; counter-clockwise, no collinear points.
inline std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
    std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
        return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
    });
    if (pts.size() < 3) return pts;
    auto cross = [](const Vec2& o, const Vec2& a, const Vec2& b) {
        return (a - o).x() * (b - o).y() - (a - o).y() * (b - o).x();
    };
    std::vector<Vec2> hull(2 * pts.size());
    std::size_t k = 0;
    for (const auto& p : pts) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
        hull[k++] = p;
    }
    for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
        while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

struct NormData {
    NormFamily family = NormFamily::euclidean;
    int dim = 2;
    double p = 2.0;
    Mat A;
    Mat A_inv;
    std::vector<Vec2> centers;
    std::vector<double> radii;
    std::vector<Vec2> center_hull;
    double outer_radius = 0.0;
    std::shared_ptr<const NormData> inner;
};

}  // namespace detail

class Norm {
public:
    static Norm euclidean(int dim = 2) {
        if (dim < 1) throw ConfigurationError("norm dimension must be >= 1");
        auto d = std::make_shared<detail::NormData>();
        d->family = NormFamily::euclidean;
        d->dim = dim;
        return Norm(std::move(d));
    }

    /// p in [1, inf]; p = 1 and p = inf are evaluation-only.
    static Norm p_norm(double p, int dim = 2) {
        if (dim < 1) throw ConfigurationError("norm dimension must be >= 1");
        if (!(p >= 1.0)) throw ConfigurationError("p-norm requires p >= 1, got " + std::to_string(p));
        auto d = std::make_shared<detail::NormData>();
        d->family = NormFamily::p_norm;
        d->dim = dim;
        d->p = p;
        return Norm(std::move(d));
    }

    /// H0(x) = sqrt(x^T A x) with A symmetric positive definite.
    static Norm quadratic(const Mat& A) {
        if (A.rows() != A.cols() || A.rows() < 1)
            throw ConfigurationError("quadratic norm requires a square matrix");
        if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, A.cwiseAbs().maxCoeff()))
            throw ConfigurationError("quadratic norm requires a symmetric matrix");
        Eigen::LLT<Mat> llt(A);
        if (llt.info() != Eigen::Success)
            throw ConfigurationError("quadratic norm requires a positive-definite matrix");
        auto d = std::make_shared<detail::NormData>();
        d->family = NormFamily::quadratic;
        d->dim = static_cast<int>(A.rows());
        d->A = A;
        d->A_inv = llt.solve(Mat::Identity(A.rows(), A.cols()));
        d->A_inv = 0.5 * (d->A_inv + d->A_inv.transpose()).eval();
        return Norm(std::move(d));
    }

    /// Minkowski functional of the convex hull of the given discs.
    static Norm disc_hull_gauge(std::vector<Vec2> centers, std::vector<double> radii) {
        return Norm(make_disc_data(NormFamily::disc_hull_gauge, std::move(centers), std::move(radii)));
    }

    /// Support function of the convex hull of the given discs: max_k (c_k . xi + r_k |xi|).
    static Norm disc_hull_support(std::vector<Vec2> centers, std::vector<double> radii) {
        return Norm(make_disc_data(NormFamily::disc_hull_support, std::move(centers), std::move(radii)));
    }

    /// Gauge of the convex envelope of the four discs of radius 1/2 centred at (±1/2, 0), (0, ±1/2).
    static Norm flower() { return disc_hull_gauge(flower_centers(), {0.5, 0.5, 0.5, 0.5}); }

    static std::vector<Vec2> flower_centers() {
        return {Vec2(0.5, 0.0), Vec2(-0.5, 0.0), Vec2(0.0, 0.5), Vec2(0.0, -0.5)};
    }

    static Norm numeric_dual_of(const Norm& inner) {
        auto d = std::make_shared<detail::NormData>();
        d->family = NormFamily::numeric_dual_of;
        d->dim = inner.dim();
        d->inner = inner.d_;
        return Norm(std::move(d));
    }

    NormFamily family() const { return d_->family; }
    int dim() const { return d_->dim; }
    double p() const { return d_->p; }
    const Mat& matrix() const { return d_->A; }
    const std::vector<Vec2>& centers() const { return d_->centers; }
    const std::vector<double>& radii() const { return d_->radii; }
    Norm inner() const {
        if (!d_->inner) throw CapabilityError("norm has no inner norm");
        return Norm(d_->inner);
    }

    /// True when the gradient exists and is continuous away from the origin.
    bool differentiable() const {
        switch (d_->family) {
            case NormFamily::p_norm: return d_->p > 1.0 && std::isfinite(d_->p);
            case NormFamily::disc_hull_support: return false;
            case NormFamily::numeric_dual_of: return inner().has_strictly_convex_ball();
            default: return true;
        }
    }

    /// True when the unit ball has no flat faces. Equivalent to differentiability of the dual.
    bool has_strictly_convex_ball() const {
        switch (d_->family) {
            case NormFamily::p_norm: return d_->p > 1.0 && std::isfinite(d_->p);
            case NormFamily::disc_hull_gauge: return d_->centers.size() <= 1;
            case NormFamily::disc_hull_support: return true;
            case NormFamily::numeric_dual_of: return inner().differentiable();
            default: return true;
        }
    }

    bool has_analytic_gradient() const {
        return d_->family == NormFamily::euclidean || d_->family == NormFamily::p_norm ||
               d_->family == NormFamily::quadratic || d_->family == NormFamily::disc_hull_support;
    }

    double operator()(const Vec& x) const { return eval(x); }

    double eval(const Vec& x) const {
        check_dim(x);
        switch (d_->family) {
            case NormFamily::euclidean: return x.norm();
            case NormFamily::p_norm: return eval_p(x);
            case NormFamily::quadratic: return std::sqrt(std::max(0.0, x.dot(d_->A * x)));
            case NormFamily::disc_hull_gauge: return eval_gauge(x);
            case NormFamily::disc_hull_support: return eval_support(x);
            case NormFamily::numeric_dual_of: return maximize_pairing(inner(), x).value;
        }
        return 0.0;
    }

    Vec gradient(const Vec& x) const;

    /// Hessian of V = eval^2 / 2 at xi. Analytic for euclidean, quadratic and
    /// p-norms (identity-like model at xi = 0, where it is undefined for p != 2);
    /// central differences of the gradient of V otherwise.
    Mat half_square_hessian(const Vec& xi) const;

    /// Closed-form dual when one is known.
    std::optional<Norm> closed_form_dual() const {
        switch (d_->family) {
            case NormFamily::euclidean: return euclidean(d_->dim);
            case NormFamily::p_norm: {
                const double p = d_->p;
                if (p == 1.0) return p_norm(std::numeric_limits<double>::infinity(), d_->dim);
                if (std::isinf(p)) return p_norm(1.0, d_->dim);
                return p_norm(p / (p - 1.0), d_->dim);
            }
            case NormFamily::quadratic: return quadratic(d_->A_inv);
            case NormFamily::disc_hull_gauge: return disc_hull_support(d_->centers, d_->radii);
            case NormFamily::disc_hull_support: return disc_hull_gauge(d_->centers, d_->radii);
            case NormFamily::numeric_dual_of: return inner();
        }
        return std::nullopt;
    }

    /// Maximize x . xi over the unit sphere of `primal`. In 2D: 256-point angular
    /// grid, golden-section polish of every grid-local maximum to 1e-12 angular width,
    /// then a scan of the maximizing face. In N >= 3: 64 seeded restarts of projected
    /// gradient ascent. The returned value is a lower bound of the dual norm.
    static DualMaximizer maximize_pairing(const Norm& primal, const Vec& xi);

    /// Outer radius of a disc hull, max_k (|c_k| + r_k).
    double outer_radius() const { return d_->outer_radius; }

    /// Exact membership of a point in the convex hull of the discs (disc-hull families).
    bool disc_hull_contains(const Vec2& x) const;

private:
    explicit Norm(std::shared_ptr<const detail::NormData> d) : d_(std::move(d)) {}

    static std::shared_ptr<detail::NormData> make_disc_data(NormFamily family, std::vector<Vec2> centers,
                                                            std::vector<double> radii) {
        if (centers.empty() || centers.size() != radii.size())
            throw ConfigurationError("disc hull requires matching, non-empty centers and radii");
        for (double r : radii)
            if (!(r > 0.0)) throw ConfigurationError("disc radii must be positive");
        auto d = std::make_shared<detail::NormData>();
        d->family = family;
        d->dim = 2;
        d->centers = std::move(centers);
        d->radii = std::move(radii);
        d->center_hull = detail::convex_hull(d->centers);
        for (std::size_t k = 0; k < d->centers.size(); ++k)
            d->outer_radius = std::max(d->outer_radius, d->centers[k].norm() + d->radii[k]);
        // The hull must contain a neighbourhood of the origin and be symmetric.
        Norm probe{std::shared_ptr<const detail::NormData>(d)};
        for (int k = 0; k < 64; ++k) {
            const double t = 2.0 * std::numbers::pi * k / 64.0;
            const double s0 = probe.support(Vec2(std::cos(t), std::sin(t)));
            const double s1 = probe.support(Vec2(-std::cos(t), -std::sin(t)));
            if (!(s0 > 0.0)) throw ConfigurationError("disc hull does not contain a neighbourhood of the origin");
            if (std::abs(s0 - s1) > 1e-12 * std::max(1.0, s0))
                throw ConfigurationError("disc hull is not symmetric with respect to the origin");
        }
        return d;
    }

    void check_dim(const Vec& x) const {
        if (x.size() != d_->dim)
            throw ConfigurationError("vector of dimension " + std::to_string(x.size()) + " given to a norm on R^" +
                                     std::to_string(d_->dim));
    }

    double eval_p(const Vec& x) const {
        const double p = d_->p;
        const double m = x.cwiseAbs().maxCoeff();
        if (m == 0.0 || std::isinf(p)) return m;
        if (p == 1.0) return x.cwiseAbs().sum();
        double s = 0.0;
        for (Eigen::Index i = 0; i < x.size(); ++i) s += std::pow(std::abs(x[i]) / m, p);
        return m * std::pow(s, 1.0 / p);
    }

    double support(const Vec2& xi) const {
        double best = -std::numeric_limits<double>::infinity();
        const double len = xi.norm();
        for (std::size_t k = 0; k < d_->centers.size(); ++k)
            best = std::max(best, d_->centers[k].dot(xi) + d_->radii[k] * len);
        return best;
    }

    double eval_support(const Vec& x) const { return x.isZero(0.0) ? 0.0 : support(Vec2(x[0], x[1])); }

    double eval_gauge(const Vec& x) const {
        const double len = x.norm();
        if (len == 0.0) return 0.0;
        const Vec2 u(x[0] / len, x[1] / len);
        // Boundary radius along u: largest t with t*u in the hull, by bisection to
        // double-precision collapse of the bracket.
        double lo = 0.0;
        double hi = d_->outer_radius * (1.0 + 1e-12);
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (mid <= lo || mid >= hi) break;
            if (disc_hull_contains(mid * u))
                lo = mid;
            else
                hi = mid;
        }
        return len / (0.5 * (lo + hi));
    }

    Vec gradient_fd(const Vec& x) const {
        const double h = std::cbrt(std::numeric_limits<double>::epsilon()) * std::max(1.0, x.norm());
        Vec g(x.size());
        Vec xp = x;
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            xp[i] = x[i] + h;
            const double fp = eval(xp);
            xp[i] = x[i] - h;
            const double fm = eval(xp);
            xp[i] = x[i];
            g[i] = (fp - fm) / (2.0 * h);
        }
        return g;
    }

    std::shared_ptr<const detail::NormData> d_;
};

inline bool Norm::disc_hull_contains(const Vec2& x) const {
    const auto& c = d_->centers;
    const auto& r = d_->radii;
    for (std::size_t k = 0; k < c.size(); ++k)
        if ((x - c[k]).norm() <= r[k]) return true;
    // Convex hull of two discs: min over tau in [0, |d|] of |x - c1 - tau e| - r1 - tau k <= 0.
    for (std::size_t i = 0; i < c.size(); ++i) {
        for (std::size_t j = i + 1; j < c.size(); ++j) {
            const Vec2 d = c[j] - c[i];
            const double a = d.norm();
            if (a == 0.0) continue;
            const Vec2 e = d / a;
            const Vec2 w = x - c[i];
            const double proj = w.dot(e);
            const double perp = std::abs(w.x() * e.y() - w.y() * e.x());
            const double slope = (r[j] - r[i]) / a;
            auto f = [&](double tau) { return std::hypot(tau - proj, perp) - r[i] - tau * slope; };
            double best = std::min(f(0.0), f(a));
            if (std::abs(slope) < 1.0) {
                const double tau = std::clamp(proj + slope * perp / std::sqrt(1.0 - slope * slope), 0.0, a);
                best = std::min(best, f(tau));
            }
            if (best <= 0.0) return true;
        }
    }
    const auto& hull = d_->center_hull;
    if (hull.size() >= 3) {
        for (std::size_t k = 0; k < hull.size(); ++k) {
            const Vec2& p0 = hull[k];
            const Vec2& p1 = hull[(k + 1) % hull.size()];
            const double cr = (p1 - p0).x() * (x - p0).y() - (p1 - p0).y() * (x - p0).x();
            if (cr < 0.0) return false;
        }
        return true;
    }
    return false;
}

inline DualMaximizer Norm::maximize_pairing(const Norm& primal, const Vec& xi) {
    DualMaximizer out;
    const int n = primal.dim();
    if (xi.size() != n) throw ConfigurationError("dimension mismatch in dual evaluation");
    if (xi.isZero(0.0)) {
        out.argmax = Vec::Zero(n);
        out.argmax[0] = 1.0 / primal.eval(Vec::Unit(n, 0));
        return out;
    }

    if (n == 1) {
        const Vec e = Vec::Constant(1, xi[0] >= 0.0 ? 1.0 : -1.0);
        const double h = primal.eval(e);
        out.value = std::abs(xi[0]) / h;
        out.argmax = e / h;
        return out;
    }

    if (n == 2) {
        auto g = [&](double t) {
            const Vec u = detail::unit2(t);
            return u.dot(xi) / primal.eval(u);
        };
        constexpr int kGrid = 256;
        const double step = 2.0 * std::numbers::pi / kGrid;
        std::array<double, kGrid> vals{};
        for (int k = 0; k < kGrid; ++k) vals[k] = g(k * step);
        double best_val = -std::numeric_limits<double>::infinity();
        double best_t = 0.0;
        for (int k = 0; k < kGrid; ++k) {
            const double prev = vals[(k + kGrid - 1) % kGrid];
            const double next = vals[(k + 1) % kGrid];
            if (vals[k] < prev || vals[k] < next || vals[k] <= 0.0) continue;
            double t = 0.0;
            const double v = detail::golden_max(g, (k - 1) * step, (k + 1) * step, 1e-12, &t);
            if (v > best_val) {
                best_val = v;
                best_t = t;
            }
        }
        out.value = best_val;
        const Vec u = detail::unit2(best_t);
        out.argmax = u / primal.eval(u);

        // Extent of the maximizing face: walk outwards while the pairing stays at the maximum.
        const double level = best_val * (1.0 - 1e-12);
        auto edge = [&](double dir) {
            double inside = 0.0;
            double outside = step / 16.0;
            while (g(best_t + dir * outside) >= level && outside < std::numbers::pi / 2.0) {
                inside = outside;
                outside *= 2.0;
            }
            for (int it = 0; it < 60; ++it) {
                const double mid = 0.5 * (inside + outside);
                if (g(best_t + dir * mid) >= level)
                    inside = mid;
                else
                    outside = mid;
            }
            return inside;
        };
        const double left = edge(-1.0);
        const double right = edge(1.0);
        if (left + right > 1e-2) {
            const Vec ul = detail::unit2(best_t - left);
            const Vec ur = detail::unit2(best_t + right);
            out.face_ends = {ul / primal.eval(ul), ur / primal.eval(ur)};
        }
        return out;
    }

    // N >= 3: projected gradient ascent on the sphere with backtracking, 64 restarts.
    std::mt19937_64 rng(kDefaultSeed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto g = [&](const Vec& x) { return x.dot(xi) / primal.eval(x); };
    auto grad_g = [&](const Vec& x) {
        const double h = std::cbrt(std::numeric_limits<double>::epsilon());
        Vec gr(n);
        Vec xp = x;
        for (int i = 0; i < n; ++i) {
            xp[i] = x[i] + h;
            const double fp = g(xp);
            xp[i] = x[i] - h;
            const double fm = g(xp);
            xp[i] = x[i];
            gr[i] = (fp - fm) / (2.0 * h);
        }
        return Vec(gr - gr.dot(x) * x);
    };
    std::vector<std::pair<double, Vec>> maxima;
    for (int start = 0; start < 64; ++start) {
        Vec x(n);
        if (start == 0) {
            x = xi.normalized();
        } else {
            for (int i = 0; i < n; ++i) x[i] = normal(rng);
            x.normalize();
        }
        double fx = g(x);
        double s = 1.0;
        for (int it = 0; it < 500; ++it) {
            const Vec gr = grad_g(x);
            if (gr.norm() < 1e-13 * std::max(1.0, std::abs(fx))) break;
            bool improved = false;
            for (int bt = 0; bt < 60; ++bt) {
                Vec y = (x + s * gr).normalized();
                const double fy = g(y);
                if (fy > fx) {
                    x = std::move(y);
                    fx = fy;
                    improved = true;
                    s *= 2.0;
                    break;
                }
                s *= 0.5;
            }
            if (!improved) break;
        }
        maxima.emplace_back(fx, x);
    }
    auto best = std::max_element(maxima.begin(), maxima.end(),
                                 [](const auto& a, const auto& b) { return a.first < b.first; });
    out.value = best->first;
    out.argmax = best->second / primal.eval(best->second);
    const double level = out.value * (1.0 - 1e-9);
    for (const auto& [v, x] : maxima) {
        if (v < level) continue;
        const Vec y = x / primal.eval(x);
        if ((y - out.argmax).norm() > 1e-3 * out.argmax.norm()) {
            out.face_ends = {out.argmax, y};
            break;
        }
    }
    return out;
}

inline Vec Norm::gradient(const Vec& x) const {
    check_dim(x);
    if (x.isZero(0.0)) throw DomainError("norm gradient is undefined at the origin");
    switch (d_->family) {
        case NormFamily::euclidean: return x / x.norm();
        case NormFamily::p_norm: {
            const double p = d_->p;
            if (p == 1.0 || std::isinf(p))
                throw CapabilityError("p-norm with p = 1 or p = inf is evaluation-only (not differentiable)");
            const double nrm = eval_p(x);
            Vec g(x.size());
            for (Eigen::Index i = 0; i < x.size(); ++i) {
                const double a = std::abs(x[i]) / nrm;
                g[i] = (x[i] < 0.0 ? -1.0 : (x[i] > 0.0 ? 1.0 : 0.0)) * std::pow(a, p - 1.0);
            }
            return g;
        }
        case NormFamily::quadratic: return d_->A * x / eval(x);
        case NormFamily::disc_hull_gauge: return gradient_fd(x);
        case NormFamily::disc_hull_support: {
            const Vec2 xi(x[0], x[1]);
            const double len = xi.norm();
            std::vector<double> terms(d_->centers.size());
            for (std::size_t k = 0; k < terms.size(); ++k) terms[k] = d_->centers[k].dot(xi) + d_->radii[k] * len;
            const double top = *std::max_element(terms.begin(), terms.end());
            std::vector<Vec> active;
            for (std::size_t k = 0; k < terms.size(); ++k) {
                if (terms[k] < top - 1e-12 * std::max(1.0, std::abs(top))) continue;
                const Vec2 g2 = d_->centers[k] + d_->radii[k] * xi / len;
                Vec g(2);
                g << g2.x(), g2.y();
                bool dup = false;
                for (const auto& a : active) dup = dup || (a - g).norm() <= 1e-12;
                if (!dup) active.push_back(g);
            }
            if (active.size() > 1)
                throw NonDifferentiableError("support function has a corner at this point", std::move(active));
            return active.front();
        }
        case NormFamily::numeric_dual_of: {
            DualMaximizer m = maximize_pairing(inner(), x);
            if (!m.face_ends.empty())
                throw NonDifferentiableError("numeric dual has a corner at this point (maximizing face)",
                                             std::move(m.face_ends));
            return m.argmax;
        }
    }
    return Vec::Zero(x.size());
}

inline Mat Norm::half_square_hessian(const Vec& xi) const {
    check_dim(xi);
    const auto n = xi.size();
    switch (d_->family) {
        case NormFamily::euclidean: return Mat::Identity(n, n);
        case NormFamily::quadratic: return d_->A;
        case NormFamily::p_norm: {
            const double p = d_->p;
            if (p == 1.0 || std::isinf(p)) throw CapabilityError("p = 1 / p = inf norms have no Hessian");
            if (xi.isZero(0.0)) return Mat::Identity(n, n);
            const double nrm = eval_p(xi);
            const Vec g = gradient(xi);
            Mat hess = (2.0 - p) * g * g.transpose();
            for (Eigen::Index i = 0; i < n; ++i) {
                const double a = std::max(std::abs(xi[i]) / nrm, 1e-8);
                hess(i, i) += (p - 1.0) * std::pow(a, p - 2.0);
            }
            return hess;
        }
        default: break;
    }
    if (xi.isZero(0.0)) return Mat::Identity(n, n);
    auto dv = [&](const Vec& y) -> Vec {
        if (y.isZero(0.0)) return Vec::Zero(n);
        return eval(y) * gradient(y);
    };
    const double h = std::cbrt(std::numeric_limits<double>::epsilon()) * std::max(1.0, xi.norm());
    Mat hess(n, n);
    Vec y = xi;
    for (Eigen::Index j = 0; j < n; ++j) {
        y[j] = xi[j] + h;
        const Vec fp = dv(y);
        y[j] = xi[j] - h;
        const Vec fm = dv(y);
        y[j] = xi[j];
        hess.col(j) = (fp - fm) / (2.0 * h);
    }
    return 0.5 * (hess + hess.transpose());
}

/// A norm H0 together with its dual H (closed form when known).
struct DualPair {
    Norm primal;
    Norm dual;

    static DualPair of(const Norm& primal) {
        if (auto d = primal.closed_form_dual()) return {primal, *d};
        return {primal, Norm::numeric_dual_of(primal)};
    }

    /// Pair whose dual is always computed numerically.
    static DualPair numeric(const Norm& primal) { return {primal, Norm::numeric_dual_of(primal)}; }
};

// ---------------------------------------------------------------------------
// Free-function surface.

inline double eval_norm(const Norm& norm, const Vec& x) { return norm.eval(x); }

inline Vec grad_norm(const Norm& norm, const Vec& x) { return norm.gradient(x); }

inline double dual_eval(const DualPair& pair, const Vec& xi) { return pair.dual.eval(xi); }

inline Vec dual_grad(const DualPair& pair, const Vec& xi) { return pair.dual.gradient(xi); }

/// V(xi) = H(xi)^2 / 2.
inline double lagrangian_V(const DualPair& pair, const Vec& xi) {
    const double h = pair.dual.eval(xi);
    return 0.5 * h * h;
}

/// DV(xi) = H(xi) DH(xi), and DV(0) = 0.
inline Vec lagrangian_DV(const DualPair& pair, const Vec& xi) {
    if (xi.isZero(0.0)) return Vec::Zero(xi.size());
    return pair.dual.eval(xi) * pair.dual.gradient(xi);
}

/// Point of the boundary of the flower-dual unit ball seen at polar angle theta in (-pi/4, pi/4).
inline Vec2 flower_dual_boundary(double theta) {
    if (!(theta > -std::numbers::pi / 4.0 && theta < std::numbers::pi / 4.0))
        throw DomainError("flower dual boundary parameter must lie in (-pi/4, pi/4)");
    const double c = std::cos(theta);
    return {2.0 * c / (1.0 + c), 2.0 * std::sin(theta) / (1.0 + c)};
}

// ---------------------------------------------------------------------------
// Sampling checks.

struct NormAxiomReport {
    std::size_t samples = 0;
    double zero_violation = 0.0;         ///< |H0(0)| plus count of non-positive values at x != 0
    std::size_t nonpositive_count = 0;
    double homogeneity_violation = 0.0;  ///< max |H0(tx) - |t| H0(x)| / max(1, |t| H0(x))
    double triangle_violation = 0.0;     ///< max (H0(x+y) - H0(x) - H0(y))^+
    double sigma = 0.0;                  ///< min of H0 on sampled Euclidean unit vectors
    double gamma = 0.0;                  ///< max of H0 on sampled Euclidean unit vectors
};

inline Vec random_gaussian(std::mt19937_64& rng, int n) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec x(n);
    for (int i = 0; i < n; ++i) x[i] = normal(rng);
    return x;
}

inline NormAxiomReport check_norm_axioms(const Norm& norm, std::size_t sample_count,
                                         std::uint64_t seed = kDefaultSeed) {
    if (sample_count < 1) throw ConfigurationError("sample_count must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> scalar(-3.0, 3.0);
    const int n = norm.dim();
    NormAxiomReport rep;
    rep.samples = sample_count;
    rep.zero_violation = std::abs(norm.eval(Vec::Zero(n)));
    rep.sigma = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < sample_count; ++s) {
        const Vec x = random_gaussian(rng, n);
        const Vec y = random_gaussian(rng, n);
        const double t = scalar(rng);
        const double hx = norm.eval(x);
        const double hy = norm.eval(y);
        if (!(hx > 0.0)) ++rep.nonpositive_count;
        const double scaled = std::abs(t) * hx;
        rep.homogeneity_violation =
            std::max(rep.homogeneity_violation, std::abs(norm.eval(t * x) - scaled) / std::max(1.0, scaled));
        rep.triangle_violation = std::max(rep.triangle_violation, norm.eval(x + y) - hx - hy);
        const double hu = norm.eval(x / x.norm());
        rep.sigma = std::min(rep.sigma, hu);
        rep.gamma = std::max(rep.gamma, hu);
    }
    return rep;
}

struct ConvexityReport {
    double min_random_margin = std::numeric_limits<double>::infinity();  ///< over random chords
    double min_sphere_margin = std::numeric_limits<double>::infinity();  ///< over short chords of the unit sphere
    bool flat_chord_found = false;
    Vec flat_chord_a;
    Vec flat_chord_b;
};

/// Strict-convexity probe of V = H0^2 / 2 in 2D. Random chords report the
/// relative midpoint margin (chord average - V(mid)) / |a - b|^2; short chords
/// between neighbouring unit-sphere points detect flat faces of the unit ball.
inline ConvexityReport check_strict_convexity(const Norm& norm, std::size_t random_chords,
                                              std::uint64_t seed = kDefaultSeed) {
    if (norm.dim() != 2) throw ConfigurationError("convexity probe is implemented in 2D");
    auto V = [&](const Vec& x) {
        const double h = norm.eval(x);
        return 0.5 * h * h;
    };
    ConvexityReport rep;
    std::mt19937_64 rng(seed);
    for (std::size_t s = 0; s < random_chords; ++s) {
        const Vec a = random_gaussian(rng, 2);
        const Vec b = random_gaussian(rng, 2);
        const double margin = (0.5 * (V(a) + V(b)) - V(0.5 * (a + b))) / (a - b).squaredNorm();
        rep.min_random_margin = std::min(rep.min_random_margin, margin);
    }
    constexpr int kChords = 360;
    for (int k = 0; k < kChords; ++k) {
        const Vec ua = detail::unit2(2.0 * std::numbers::pi * k / kChords);
        const Vec ub = detail::unit2(2.0 * std::numbers::pi * (k + 1) / kChords);
        const Vec a = ua / norm.eval(ua);
        const Vec b = ub / norm.eval(ub);
        const double margin = (0.5 - V(0.5 * (a + b))) / (a - b).squaredNorm();
        if (margin < rep.min_sphere_margin) {
            rep.min_sphere_margin = margin;
            rep.flat_chord_a = a;
            rep.flat_chord_b = b;
        }
    }
    rep.flat_chord_found = rep.min_sphere_margin <= 1e-10;
    return rep;
}

}  // namespace wulff
