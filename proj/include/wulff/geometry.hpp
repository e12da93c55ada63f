#pragma once

// Cones, star-shaped test domains and their tagged boundaries.
//
// Every domain is star-shaped with respect to the origin O and described by a
// radial function r(phi); the boundary of Omega ∩ Sigma splits into the arc
// Gamma0 (Dirichlet) and, for sectors, the two rays Gamma1 (Neumann).

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "wulff/errors.hpp"
#include "wulff/norm.hpp"

namespace wulff {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

enum class BoundaryTag { gamma0, gamma1 };

inline std::string to_string(BoundaryTag t) { return t == BoundaryTag::gamma0 ? "gamma0" : "gamma1"; }

/// Full plane or planar sector {angle in [start, end]}.
struct Cone {
    enum class Kind { full_plane, sector };
    Kind kind = Kind::full_plane;
    double start = 0.0;
    double end = kTwoPi;

    static Cone full_plane() { return {}; }

    static Cone sector(double start, double end) {
        const double width = end - start;
        if (!(width > 0.0) || width > kTwoPi)
            throw ConfigurationError("sector width must lie in (0, 2pi], got " + std::to_string(width));
        return {Kind::sector, start, end};
    }

    bool is_full() const { return kind == Kind::full_plane; }
    double width() const { return is_full() ? kTwoPi : end - start; }

    /// Angle of `phi` measured from `start`, in [0, 2pi).
    double relative_angle(double phi) const {
        double a = std::fmod(phi - start, kTwoPi);
        if (a < 0.0) a += kTwoPi;
        return a;
    }

    bool contains_angle(double phi, double slack = 0.0) const {
        if (is_full()) return true;
        const double a = relative_angle(phi);
        return a <= width() + slack || a >= kTwoPi - slack;
    }

    bool contains(const Vec2& x) const {
        if (is_full() || x.isZero(0.0)) return true;
        return contains_angle(std::atan2(x.y(), x.x()));
    }

    Vec2 ray_direction(bool at_start) const {
        const double a = at_start ? start : end;
        return {std::cos(a), std::sin(a)};
    }
};

/// Bounded star-shaped domain Omega containing O, intersected with a cone.
struct Domain {
    enum class Kind { wulff, ellipse, perturbed_wulff };
    Kind kind = Kind::wulff;
    std::optional<Norm> norm;
    double R = 1.0;
    double a = 1.0;
    double b = 1.0;
    double amplitude = 0.0;
    int mode = 0;
    Cone cone;

    /// Wulff shape B_R(O, H0).
    static Domain wulff(const Norm& norm, double R, const Cone& cone = Cone::full_plane()) {
        if (norm.dim() != 2) throw ConfigurationError("domains are two-dimensional");
        if (!(R > 0.0)) throw ConfigurationError("Wulff radius must be positive");
        Domain d;
        d.kind = Kind::wulff;
        d.norm = norm;
        d.R = R;
        d.cone = cone;
        return d;
    }

    /// Ellipse x^2/a^2 + y^2/b^2 < 1.
    static Domain ellipse(double a, double b, const Cone& cone = Cone::full_plane()) {
        if (!(a > 0.0) || !(b > 0.0)) throw ConfigurationError("ellipse semi-axes must be positive");
        Domain d;
        d.kind = Kind::ellipse;
        d.a = a;
        d.b = b;
        d.cone = cone;
        return d;
    }

    /// Radial profile r(phi) = R (1 + eps cos(m phi)) / H0(u(phi)).
    static Domain perturbed_wulff(const Norm& norm, double R, double amplitude, int mode,
                                  const Cone& cone = Cone::full_plane()) {
        if (norm.dim() != 2) throw ConfigurationError("domains are two-dimensional");
        if (!(R > 0.0)) throw ConfigurationError("Wulff radius must be positive");
        if (!(std::abs(amplitude) < 1.0)) throw ConfigurationError("perturbation amplitude must satisfy |eps| < 1");
        Domain d;
        d.kind = Kind::perturbed_wulff;
        d.norm = norm;
        d.R = R;
        d.amplitude = amplitude;
        d.mode = mode;
        d.cone = cone;
        return d;
    }

    /// Distance from O to the boundary of Omega along the direction phi.
    double radius(double phi) const {
        const Vec u = detail::unit2(phi);
        switch (kind) {
            case Kind::wulff: return R / norm->eval(u);
            case Kind::ellipse: {
                const double c = u[0] / a;
                const double s = u[1] / b;
                return 1.0 / std::sqrt(c * c + s * s);
            }
            case Kind::perturbed_wulff:
                return R * (1.0 + amplitude * std::cos(mode * phi)) / norm->eval(u);
        }
        return 0.0;
    }

    Vec2 boundary_point(double phi) const {
        const double r = radius(phi);
        return {r * std::cos(phi), r * std::sin(phi)};
    }

    /// Open membership in Omega ∩ Sigma.
    bool contains(const Vec2& x) const {
        if (!cone.contains(x)) return false;
        const double len = x.norm();
        if (len == 0.0) return true;
        return len < radius(std::atan2(x.y(), x.x()));
    }

    /// Parameter range of Gamma0 (polar angle).
    double gamma0_begin() const { return cone.is_full() ? 0.0 : cone.start; }
    double gamma0_end() const { return cone.is_full() ? kTwoPi : cone.end; }

    /// Area of Omega ∩ Sigma by quadrature of r(phi)^2 / 2.
    double area(int samples = 20000) const {
        const double a0 = gamma0_begin();
        const double w = gamma0_end() - a0;
        double s = 0.0;
        for (int k = 0; k < samples; ++k) {
            const double r = radius(a0 + (k + 0.5) * w / samples);
            s += 0.5 * r * r;
        }
        return s * w / samples;
    }

    std::string describe() const {
        switch (kind) {
            case Kind::wulff: return "wulff(" + to_string(norm->family()) + ", R=" + std::to_string(R) + ")";
            case Kind::ellipse: return "ellipse(" + std::to_string(a) + ", " + std::to_string(b) + ")";
            case Kind::perturbed_wulff:
                return "perturbed_wulff(" + to_string(norm->family()) + ", R=" + std::to_string(R) +
                       ", eps=" + std::to_string(amplitude) + ", m=" + std::to_string(mode) + ")";
        }
        return "domain";
    }
};

/// Points z_k = R u(phi_k) / H0(u(phi_k)) on the Wulff boundary spanning the cone aperture
/// (n equispaced angles on [0, 2pi) for the full plane, both sector ends included otherwise).
inline std::vector<Vec2> wulff_boundary_points(const Norm& norm, double R, int n, const Cone& cone) {
    if (n < 4) throw ConfigurationError("wulff_boundary_points needs n >= 4");
    const Domain d = Domain::wulff(norm, R, cone);
    std::vector<Vec2> pts;
    pts.reserve(n);
    for (int k = 0; k < n; ++k) {
        const double phi = cone.is_full() ? kTwoPi * k / n : cone.start + cone.width() * k / (n - 1);
        pts.push_back(d.boundary_point(phi));
    }
    return pts;
}

/// A smooth piece of the boundary of Omega ∩ Sigma, parametrized on [t0, t1].
/// Arcs use the polar angle; rays use a linear parameter in [0, 1] from `from` to `to`.
struct BoundaryCurve {
    BoundaryTag tag = BoundaryTag::gamma0;
    double t0 = 0.0;
    double t1 = 1.0;
    bool closed = false;
    std::function<Vec2(double)> at;
};

inline BoundaryCurve make_arc(const Domain& d, double phi0, double phi1, bool closed) {
    BoundaryCurve c;
    c.tag = BoundaryTag::gamma0;
    c.t0 = phi0;
    c.t1 = phi1;
    c.closed = closed;
    c.at = [d](double phi) { return d.boundary_point(phi); };
    return c;
}

inline BoundaryCurve make_segment(const Vec2& from, const Vec2& to, BoundaryTag tag) {
    BoundaryCurve c;
    c.tag = tag;
    c.t0 = 0.0;
    c.t1 = 1.0;
    c.at = [from, to](double t) -> Vec2 {
        if (t <= 0.0) return from;
        if (t >= 1.0) return to;
        return from + t * (to - from);
    };
    return c;
}

/// Boundary pieces of Omega ∩ Sigma in counter-clockwise order.
inline std::vector<BoundaryCurve> boundary_curves(const Domain& d) {
    if (d.cone.is_full()) return {make_arc(d, 0.0, kTwoPi, true)};
    const Vec2 o = Vec2::Zero();
    return {make_segment(o, d.boundary_point(d.cone.start), BoundaryTag::gamma1),
            make_arc(d, d.cone.start, d.cone.end, false),
            make_segment(d.boundary_point(d.cone.end), o, BoundaryTag::gamma1)};
}

/// Boundary polyline with one tag per edge.
struct TaggedPolyline {
    std::vector<Vec2> points;
    std::vector<BoundaryTag> edge_tags;  ///< edge k joins points[k] and points[(k + 1) % size]
    bool closed = true;

    std::size_t count(BoundaryTag t) const {
        std::size_t n = 0;
        for (auto e : edge_tags) n += (e == t);
        return n;
    }
};

/// Tagged boundary of Omega ∩ Sigma: Gamma0 = Sigma ∩ ∂Omega, Gamma1 = the two rays of a
/// sector (empty for the full plane). Each curve is sampled with `samples` edges (rays: 1 edge).
inline TaggedPolyline classify_boundary(const Domain& d, int samples = 256) {
    if (!d.cone.is_full() && !(d.cone.width() > 0.0)) throw ConfigurationError("degenerate sector");
    if (samples < 1) throw ConfigurationError("classify_boundary needs at least one sample per curve");
    TaggedPolyline poly;
    for (const auto& c : boundary_curves(d)) {
        const int n = c.tag == BoundaryTag::gamma1 ? 1 : samples;
        for (int k = 0; k < n; ++k) {
            poly.points.push_back(c.at(c.t0 + (c.t1 - c.t0) * k / n));
            poly.edge_tags.push_back(c.tag);
        }
    }
    return poly;
}

}  // namespace wulff
