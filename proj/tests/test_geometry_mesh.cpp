#include <cmath>
#include <numbers>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "wulff/geometry.hpp"
#include "wulff/mesh.hpp"

using namespace wulff;

namespace {

constexpr double kPi = std::numbers::pi;

Vec v2(const Vec2& x) {
    Vec v(2);
    v << x.x(), x.y();
    return v;
}

void expect_valid_mesh(const Mesh& m, const Domain& d) {
    ASSERT_GT(m.num_triangles(), 0u);
    for (std::size_t t = 0; t < m.num_triangles(); ++t) EXPECT_GT(m.signed_area(t), 0.0) << "triangle " << t;
    EXPECT_GE(m.min_angle_degrees(), 20.0);

    std::set<std::pair<long long, long long>> seen;
    const double q = 1e-12;
    for (const auto& v : m.vertices)
        EXPECT_TRUE(seen.insert({std::llround(v.x() / q), std::llround(v.y() / q)}).second);

    // Boundary edges are exactly the edges used by a single triangle.
    std::map<std::pair<int, int>, int> use;
    for (const auto& t : m.triangles)
        for (int i = 0; i < 3; ++i) {
            const int a = t[i], b = t[(i + 1) % 3];
            ++use[{std::min(a, b), std::max(a, b)}];
        }
    std::size_t single = 0;
    for (const auto& [e, c] : use) {
        EXPECT_LE(c, 2);
        single += (c == 1);
    }
    EXPECT_EQ(single, m.boundary.size());
    for (const auto& be : m.boundary) EXPECT_EQ((use[{std::min(be.v[0], be.v[1]), std::max(be.v[0], be.v[1])}]), 1);

    // Gamma0 vertices lie on the outer boundary, Gamma1 edges on the rays.
    for (const auto& be : m.boundary) {
        for (int v : be.v) {
            const Vec2& x = m.vertices[v];
            if (be.tag == BoundaryTag::gamma0) {
                const double r = d.radius(std::atan2(x.y(), x.x()));
                EXPECT_NEAR(x.norm(), r, 1e-9);
            } else {
                const double cs = std::abs(x.x() * std::sin(d.cone.start) - x.y() * std::cos(d.cone.start));
                const double ce = std::abs(x.x() * std::sin(d.cone.end) - x.y() * std::cos(d.cone.end));
                EXPECT_LE(std::min(cs, ce), 1e-12);
            }
        }
    }
    if (d.cone.is_full()) {
        EXPECT_EQ(m.count_boundary(BoundaryTag::gamma1), 0u);
    }
}

double max_edge(const Mesh& m) {
    double e = 0.0;
    for (const auto& t : m.triangles)
        for (int i = 0; i < 3; ++i) e = std::max(e, (m.vertices[t[i]] - m.vertices[t[(i + 1) % 3]]).norm());
    return e;
}

std::size_t edge_count(const Mesh& m) {
    std::set<std::pair<int, int>> edges;
    for (const auto& t : m.triangles)
        for (int i = 0; i < 3; ++i) edges.insert({std::min(t[i], t[(i + 1) % 3]), std::max(t[i], t[(i + 1) % 3])});
    return edges.size();
}

}  // namespace

TEST(Cone, SectorValidation) {
    EXPECT_THROW(Cone::sector(1.0, 1.0), ConfigurationError);
    EXPECT_THROW(Cone::sector(1.0, 0.5), ConfigurationError);
    EXPECT_THROW(Cone::sector(0.0, 7.0), ConfigurationError);
    const Cone c = Cone::sector(0.0, kPi / 2);
    EXPECT_TRUE(c.contains(Vec2(1.0, 1.0)));
    EXPECT_FALSE(c.contains(Vec2(-1.0, 0.5)));
    EXPECT_TRUE(c.contains(Vec2::Zero()));
    EXPECT_TRUE(Cone::full_plane().contains(Vec2(-3.0, -1.0)));
}

TEST(Domain, InvalidParameters) {
    EXPECT_THROW(Domain::wulff(Norm::euclidean(2), 0.0), ConfigurationError);
    EXPECT_THROW(Domain::wulff(Norm::euclidean(3), 1.0), ConfigurationError);
    EXPECT_THROW(Domain::ellipse(1.0, -1.0), ConfigurationError);
    EXPECT_THROW(Domain::perturbed_wulff(Norm::euclidean(2), 1.0, 1.0, 3), ConfigurationError);
}

TEST(Domain, AreaMatchesClosedForms) {
    EXPECT_NEAR(Domain::wulff(Norm::euclidean(2), 1.0).area(), kPi, 1e-10);
    EXPECT_NEAR(Domain::ellipse(1.5, 1.0).area(), 1.5 * kPi, 1e-10);
    // The unit ball of the 1-norm is a square of area 2.
    EXPECT_NEAR(Domain::wulff(Norm::p_norm(1.0), 1.0).area(200000), 2.0, 1e-6);
    EXPECT_NEAR(Domain::wulff(Norm::euclidean(2), 2.0, Cone::sector(0.0, kPi / 2)).area(), kPi, 1e-10);
}

TEST(WulffBoundaryPoints, FourNormQuarterSector) {
    const Norm n = Norm::p_norm(4.0);
    const auto pts = wulff_boundary_points(n, 1.0, 4, Cone::sector(0.0, kPi / 2));
    ASSERT_EQ(pts.size(), 4u);
    EXPECT_NEAR(pts[0].x(), 1.0, 1e-14);
    EXPECT_NEAR(pts[0].y(), 0.0, 1e-14);
    EXPECT_NEAR(pts[3].x(), 0.0, 1e-14);
    EXPECT_NEAR(pts[3].y(), 1.0, 1e-14);
    for (const auto& z : pts) EXPECT_NEAR(n.eval(v2(z)), 1.0, 1e-10);
    // At 45 degrees the 4-norm boundary point is 2^(-1/4)(1, 1).
    const auto mid = wulff_boundary_points(n, 1.0, 5, Cone::sector(0.0, kPi / 2));
    EXPECT_NEAR(mid[2].x(), std::pow(2.0, -0.25), 1e-12);
    EXPECT_NEAR(mid[2].y(), std::pow(2.0, -0.25), 1e-12);
}

TEST(WulffBoundaryPoints, FlowerAndRadius) {
    const Norm f = Norm::flower();
    const auto pts = wulff_boundary_points(f, 1.0, 64, Cone::full_plane());
    EXPECT_NEAR(pts[0].x(), 1.0, 1e-12);
    EXPECT_NEAR(pts[0].y(), 0.0, 1e-12);
    for (const auto& z : pts) EXPECT_NEAR(f.eval(v2(z)), 1.0, 1e-10);
    for (const auto& z : wulff_boundary_points(Norm::p_norm(3.0), 2.5, 33, Cone::full_plane()))
        EXPECT_NEAR(Norm::p_norm(3.0).eval(v2(z)), 2.5, 1e-10);
    EXPECT_THROW(wulff_boundary_points(f, 1.0, 3, Cone::full_plane()), ConfigurationError);
}

TEST(ClassifyBoundary, FullPlaneHasNoGamma1) {
    const auto poly = classify_boundary(Domain::wulff(Norm::euclidean(2), 1.0), 64);
    EXPECT_EQ(poly.count(BoundaryTag::gamma0), 64u);
    EXPECT_EQ(poly.count(BoundaryTag::gamma1), 0u);
}

TEST(ClassifyBoundary, SectorRaysAreGamma1) {
    const Domain d = Domain::wulff(Norm::euclidean(2), 1.0, Cone::sector(0.0, kPi / 2));
    const auto poly = classify_boundary(d, 16);
    EXPECT_EQ(poly.count(BoundaryTag::gamma0), 16u);
    EXPECT_EQ(poly.count(BoundaryTag::gamma1), 2u);
    EXPECT_NEAR(poly.points.front().norm(), 0.0, 0.0);
    for (std::size_t k = 0; k < poly.points.size(); ++k) {
        const Vec2 a = poly.points[k];
        const Vec2 b = poly.points[(k + 1) % poly.points.size()];
        const Vec2 mid = 0.5 * (a + b);
        if (poly.edge_tags[k] == BoundaryTag::gamma1) {
            EXPECT_LT(std::min(std::abs(mid.x()), std::abs(mid.y())), 1e-14);
        } else {
            EXPECT_NEAR(a.norm(), 1.0, 1e-14);
            EXPECT_NEAR(b.norm(), 1.0, 1e-14);
        }
    }
}

TEST(ClassifyBoundary, DegenerateSectorRejected) {
    EXPECT_THROW(Domain::wulff(Norm::euclidean(2), 1.0, Cone::sector(0.3, 0.3)), ConfigurationError);
}

TEST(Triangulate, RejectsBadRequests) {
    const Domain d = Domain::wulff(Norm::euclidean(2), 1.0);
    EXPECT_THROW(triangulate(d, 0.0), ConfigurationError);
    EXPECT_THROW(triangulate(d, 1.5), ConfigurationError);
    EXPECT_THROW(triangulate(Domain::wulff(Norm::euclidean(2), 1.0, Cone::sector(0.0, kTwoPi)), 0.1), MeshingError);
}

TEST(Triangulate, FullDiscInvariants) {
    const Domain d = Domain::wulff(Norm::euclidean(2), 1.0);
    const Mesh m = triangulate(d, 0.1);
    expect_valid_mesh(m, d);
    EXPECT_NEAR(m.total_area(), kPi, 0.05);
    EXPECT_EQ(m.count_boundary(BoundaryTag::gamma0), m.boundary.size());
    EXPECT_GE(m.nearest_vertex(Vec2::Zero()), 0);
    EXPECT_NEAR(m.vertices[m.nearest_vertex(Vec2::Zero())].norm(), 0.0, 0.0);
}

TEST(Triangulate, QuarterDiscAreaAndRefinement) {
    const Domain d = Domain::wulff(Norm::euclidean(2), 1.0, Cone::sector(0.0, kPi / 2));
    std::size_t prev_edges = 0;
    for (double h : {0.1, 0.05, 0.025}) {
        const Mesh m = triangulate(d, h);
        expect_valid_mesh(m, d);
        EXPECT_LE(std::abs(m.total_area() - kPi / 4), 3.0 * h * h) << "h = " << h;
        EXPECT_GT(m.count_boundary(BoundaryTag::gamma1), 0u);
        EXPECT_LE(max_edge(m), 2.0 * h);
        const std::size_t edges = edge_count(m);
        if (prev_edges > 0) {
            const double ratio = static_cast<double>(edges) / static_cast<double>(prev_edges);
            EXPECT_GE(ratio, 2.0);
            EXPECT_LE(ratio, 6.0);
        }
        prev_edges = edges;
    }
}

TEST(Triangulate, QuarterDiscCoarse) {
    const Domain d = Domain::wulff(Norm::euclidean(2), 1.0, Cone::sector(0.0, kPi / 2));
    const Mesh m = triangulate(d, 0.1);
    expect_valid_mesh(m, d);
    EXPECT_GE(m.num_triangles(), 100u);
    EXPECT_LE(m.num_triangles(), 1000u);
}

TEST(Triangulate, CoarseFullDiscIsAllGamma0) {
    const Mesh m = triangulate(Domain::wulff(Norm::euclidean(2), 1.0), 0.2);
    EXPECT_GT(m.boundary.size(), 0u);
    for (const auto& be : m.boundary) EXPECT_EQ(be.tag, BoundaryTag::gamma0);
}

TEST(ClassifyBoundary, HalfEllipse) {
    const Domain d = Domain::ellipse(1.5, 1.0, Cone::sector(0.0, kPi));
    const auto poly = classify_boundary(d, 32);
    EXPECT_EQ(poly.count(BoundaryTag::gamma1), 2u);
    for (std::size_t k = 0; k < poly.points.size(); ++k) {
        const Vec2 a = poly.points[k];
        if (poly.edge_tags[k] == BoundaryTag::gamma1) {
            EXPECT_NEAR(a.y(), 0.0, 1e-14);
        } else {
            EXPECT_NEAR(a.x() * a.x() / 2.25 + a.y() * a.y(), 1.0, 1e-12);
            EXPECT_GE(a.y(), -1e-14);
        }
    }
    const Mesh m = triangulate(d, 0.1);
    expect_valid_mesh(m, d);
    EXPECT_NEAR(m.total_area(), 0.75 * kPi, 0.03);
}

TEST(Triangulate, NonEuclideanAndPerturbedDomains) {
    for (const Domain& d : {Domain::wulff(Norm::p_norm(4.0 / 3.0), 1.0, Cone::sector(0.0, kPi / 2)),
                            Domain::wulff(Norm::flower(), 1.0), Domain::ellipse(1.5, 1.0),
                            Domain::perturbed_wulff(Norm::euclidean(2), 1.0, 0.1, 3),
                            Domain::wulff(Norm::p_norm(3.0), 1.0, Cone::sector(0.2, 2.0))}) {
        const Mesh m = triangulate(d, 0.08);
        expect_valid_mesh(m, d);
        EXPECT_NEAR(m.total_area(), d.area(), 0.02 * d.area()) << d.describe();
    }
}

TEST(Triangulate, Gamma0VerticesOnWulffLevelSet) {
    const Norm n = Norm::p_norm(4.0);
    const double h = 0.05;
    const Mesh m = triangulate(Domain::wulff(n, 1.0, Cone::sector(0.0, kPi / 2)), h);
    const auto g0 = m.gamma0_vertices();
    for (std::size_t v = 0; v < m.num_vertices(); ++v)
        if (g0[v]) {
            EXPECT_LE(std::abs(n.eval(v2(m.vertices[v])) - 1.0), 2.0 * h * h);
        }
}

TEST(TriangulateNested, InnerIsSubmesh) {
    const Domain outer = Domain::wulff(Norm::euclidean(2), 1.0);
    const Domain inner = Domain::ellipse(0.8, 0.5);
    const auto [big, small] = triangulate_nested(outer, inner, 0.08);
    expect_valid_mesh(big, outer);
    expect_valid_mesh(small, inner);
    ASSERT_EQ(small.parent_vertex.size(), small.num_vertices());
    for (std::size_t v = 0; v < small.num_vertices(); ++v) {
        const int p = small.parent_vertex[v];
        ASSERT_GE(p, 0);
        ASSERT_LT(static_cast<std::size_t>(p), big.num_vertices());
        EXPECT_EQ(small.vertices[v], big.vertices[p]);
    }
    EXPECT_LT(small.total_area(), big.total_area());
}

TEST(TriangulateNested, SectorAndErrors) {
    const Cone c = Cone::sector(0.0, kPi / 2);
    const Domain outer = Domain::wulff(Norm::euclidean(2), 1.0, c);
    const Domain inner = Domain::wulff(Norm::euclidean(2), 0.7, c);
    const auto [big, small] = triangulate_nested(outer, inner, 0.06);
    expect_valid_mesh(big, outer);
    expect_valid_mesh(small, inner);
    EXPECT_GT(small.count_boundary(BoundaryTag::gamma1), 0u);
    EXPECT_THROW(triangulate_nested(inner, outer, 0.06), ConfigurationError);
    EXPECT_THROW(triangulate_nested(Domain::wulff(Norm::euclidean(2), 1.0), inner, 0.06), ConfigurationError);
}

TEST(TriangleLocator, FindsContainingTriangle) {
    const Mesh m = triangulate(Domain::ellipse(1.5, 1.0), 0.1);
    const TriangleLocator loc(m);
    for (std::size_t t = 0; t < m.num_triangles(); t += 7) {
        const Vec2 c = m.centroid(t);
        const auto hit = loc.locate(c);
        ASSERT_EQ(hit.triangle, static_cast<int>(t));
        for (double b : hit.bary) EXPECT_NEAR(b, 1.0 / 3.0, 1e-9);
    }
    EXPECT_EQ(loc.locate(Vec2(2.0, 0.0)).triangle, -1);
}
