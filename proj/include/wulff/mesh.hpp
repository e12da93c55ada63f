#pragma once

// P1 triangulations of Omega ∩ Sigma.
//
// Delaunay refinement in the style of Ruppert: boundary curves are sampled at
// the target size, segments that are encroached (or missing) are split at
// their parametric midpoint, which snaps new boundary vertices onto the exact
// curve, and triangles that are too large or have an angle below ~20.7 degrees
// are removed by inserting their circumcentre. Near the vertex of a sector
// the target size is halved on each of three rings around O.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "wulff/errors.hpp"
#include "wulff/geometry.hpp"

namespace wulff {

struct BoundaryEdge {
    std::array<int, 2> v{};
    BoundaryTag tag = BoundaryTag::gamma0;
    double param = 0.0;  ///< polar angle of the midpoint (Gamma0) or its distance to O (Gamma1)
};

struct Mesh {
    std::vector<Vec2> vertices;
    std::vector<std::array<int, 3>> triangles;  ///< counter-clockwise
    std::vector<BoundaryEdge> boundary;
    double h = 0.0;
    std::vector<int> parent_vertex;  ///< for submeshes: vertex index in the parent mesh

    std::size_t num_vertices() const { return vertices.size(); }
    std::size_t num_triangles() const { return triangles.size(); }

    double signed_area(std::size_t t) const {
        const auto& tri = triangles[t];
        const Vec2 e1 = vertices[tri[1]] - vertices[tri[0]];
        const Vec2 e2 = vertices[tri[2]] - vertices[tri[0]];
        return 0.5 * (e1.x() * e2.y() - e1.y() * e2.x());
    }

    double area(std::size_t t) const { return std::abs(signed_area(t)); }

    double total_area() const {
        double s = 0.0;
        for (std::size_t t = 0; t < triangles.size(); ++t) s += area(t);
        return s;
    }

    Vec2 centroid(std::size_t t) const {
        const auto& tri = triangles[t];
        return (vertices[tri[0]] + vertices[tri[1]] + vertices[tri[2]]) / 3.0;
    }

    /// Gradients of the three barycentric basis functions on triangle t.
    std::array<Vec2, 3> basis_gradients(std::size_t t) const {
        const auto& tri = triangles[t];
        const double two_a = 2.0 * signed_area(t);
        std::array<Vec2, 3> g;
        for (int i = 0; i < 3; ++i) {
            const Vec2& p = vertices[tri[(i + 1) % 3]];
            const Vec2& q = vertices[tri[(i + 2) % 3]];
            g[i] = Vec2(p.y() - q.y(), q.x() - p.x()) / two_a;
        }
        return g;
    }

    double min_angle_degrees() const {
        double worst = 180.0;
        for (const auto& tri : triangles) {
            for (int i = 0; i < 3; ++i) {
                const Vec2 a = vertices[tri[(i + 1) % 3]] - vertices[tri[i]];
                const Vec2 b = vertices[tri[(i + 2) % 3]] - vertices[tri[i]];
                const double ang = std::atan2(std::abs(a.x() * b.y() - a.y() * b.x()), a.dot(b));
                worst = std::min(worst, ang * 180.0 / std::numbers::pi);
            }
        }
        return worst;
    }

    /// Flags of vertices lying on a Gamma0 edge (Dirichlet nodes).
    std::vector<bool> gamma0_vertices() const {
        std::vector<bool> flag(vertices.size(), false);
        for (const auto& e : boundary)
            if (e.tag == BoundaryTag::gamma0) flag[e.v[0]] = flag[e.v[1]] = true;
        return flag;
    }

    std::size_t count_boundary(BoundaryTag t) const {
        std::size_t n = 0;
        for (const auto& e : boundary) n += (e.tag == t);
        return n;
    }

    /// Index of the triangle adjacent to each boundary edge.
    std::vector<int> boundary_edge_triangles() const {
        std::unordered_map<std::uint64_t, int> owner;
        auto key = [](int a, int b) {
            if (a > b) std::swap(a, b);
            return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
        };
        for (std::size_t t = 0; t < triangles.size(); ++t)
            for (int i = 0; i < 3; ++i) owner[key(triangles[t][i], triangles[t][(i + 1) % 3])] = static_cast<int>(t);
        std::vector<int> out;
        out.reserve(boundary.size());
        for (const auto& e : boundary) {
            auto it = owner.find(key(e.v[0], e.v[1]));
            out.push_back(it == owner.end() ? -1 : it->second);
        }
        return out;
    }

    /// Index of the vertex nearest to x.
    int nearest_vertex(const Vec2& x) const {
        int best = -1;
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t v = 0; v < vertices.size(); ++v) {
            const double d = (vertices[v] - x).squaredNorm();
            if (d < bd) {
                bd = d;
                best = static_cast<int>(v);
            }
        }
        return best;
    }
};

/// Target element size at x: h, halved on each of three rings around the vertex of a sector.
inline double graded_size(const Vec2& x, double h, bool graded) {
    if (!graded) return h;
    const double r = x.norm();
    double s = h;
    for (double ring : {2.0 * h, h, 0.5 * h})
        if (r < ring) s *= 0.5;
    return s;
}

namespace detail {

// Incremental Delaunay triangulation with protected segments and circumcentre refinement.
class Refiner {
public:
    struct Curve {
        BoundaryCurve geom;
        int region_hint = 0;
    };

    struct Seg {
        int a = -1, b = -1;
        int curve = -1;
        double ta = 0.0, tb = 0.0;
        bool alive = true;
    };

    struct Tri {
        std::array<int, 3> v{};
        std::array<int, 3> nb{-1, -1, -1};  // nb[i] is across the edge opposite v[i]
        bool alive = true;
        int region = -1;
    };

    Refiner(std::function<double(const Vec2&)> size, std::function<int(const Vec2&)> region_of)
        : size_(std::move(size)), region_of_(std::move(region_of)) {}

    void build(const std::vector<BoundaryCurve>& curves, const std::vector<Vec2>& extra_points) {
        // Sample curves; junction points are shared through exact coordinate matching.
        std::vector<std::vector<std::pair<double, Vec2>>> samples;
        Vec2 lo(1e300, 1e300), hi(-1e300, -1e300);
        for (const auto& c : curves) {
            samples.push_back(sample_curve(c));
            for (const auto& [t, p] : samples.back()) {
                lo = lo.cwiseMin(p);
                hi = hi.cwiseMax(p);
            }
        }
        for (const auto& p : extra_points) {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        scale_ = std::max((hi - lo).maxCoeff(), 1e-12);
        const Vec2 mid = 0.5 * (lo + hi);
        const double big = 50.0 * scale_;
        pts_ = {mid + Vec2(-big, -big), mid + Vec2(big, -big), mid + Vec2(0.0, big)};
        vtri_ = {0, 0, 0};
        tris_.push_back(Tri{{0, 1, 2}, {-1, -1, -1}, true, -1});
        last_ = 0;

        for (std::size_t ci = 0; ci < curves.size(); ++ci) {
            curves_.push_back({curves[ci], 0});
            const auto& s = samples[ci];
            std::vector<int> ids;
            for (const auto& [t, p] : s) {
                ids.push_back(insert_or_find(p, false));
                if (ids.back() < 0) throw MeshingError("could not insert boundary sample");
            }
            for (std::size_t k = 0; k + 1 < ids.size(); ++k)
                add_segment(ids[k], ids[k + 1], static_cast<int>(ci), s[k].first, s[k + 1].first);
        }
        for (const auto& p : extra_points) insert_or_find(p, true);
    }

    /// Maximum distance allowed between a boundary segment and the curve at its parametric midpoint.
    void set_boundary_tolerance(double tol) { boundary_tol_ = tol; }

    void refine(int max_passes = 200) {
        constexpr double kMaxRatio = std::numbers::sqrt2;  // circumradius / shortest edge
        resolve_boundary();
        for (int pass = 0; pass < max_passes; ++pass) {
            fix_encroached();
            classify();
            std::vector<int> bad;
            for (std::size_t t = 0; t < tris_.size(); ++t)
                if (tris_[t].alive && tris_[t].region > 0 && is_bad(static_cast<int>(t), kMaxRatio))
                    bad.push_back(static_cast<int>(t));
            if (bad.empty()) return;
            for (int t : bad) {
                if (!tris_[t].alive || tris_[t].region <= 0 || !is_bad(t, kMaxRatio)) continue;
                const Vec2 c = circumcenter(t);
                std::vector<int> enc;
                for (std::size_t s = 0; s < segs_.size(); ++s)
                    if (segs_[s].alive && in_diametral(static_cast<int>(s), c)) enc.push_back(static_cast<int>(s));
                if (!enc.empty()) {
                    for (int s : enc)
                        if (segs_[s].alive) split_segment(s);
                    continue;
                }
                const int loc = locate(c);
                if (loc < 0 || tris_[loc].region != tris_[t].region) {
                    split_segment(nearest_segment(c));
                    continue;
                }
                insert_or_find(c, true);
            }
        }
        throw MeshingError("Delaunay refinement did not converge within " + std::to_string(max_passes) +
                           " passes (" + std::to_string(pts_.size()) + " vertices)");
    }

    /// Triangles of the requested regions, renumbered; boundary edges are the
    /// segments bounding the selected triangles.
    Mesh extract(const std::vector<int>& regions, double h) const {
        auto wanted = [&](int r) { return std::find(regions.begin(), regions.end(), r) != regions.end(); };
        Mesh m;
        m.h = h;
        std::vector<int> remap(pts_.size(), -1);
        std::unordered_map<std::uint64_t, int> edge_count;
        for (const auto& t : tris_) {
            if (!t.alive || !wanted(t.region)) continue;
            std::array<int, 3> tri{};
            for (int i = 0; i < 3; ++i) {
                if (remap[t.v[i]] < 0) {
                    remap[t.v[i]] = static_cast<int>(m.vertices.size());
                    m.vertices.push_back(pts_[t.v[i]]);
                    m.parent_vertex.push_back(t.v[i]);
                }
                tri[i] = remap[t.v[i]];
                ++edge_count[key(t.v[i], t.v[(i + 1) % 3])];
            }
            m.triangles.push_back(tri);
        }
        for (const auto& s : segs_) {
            if (!s.alive) continue;
            auto it = edge_count.find(key(s.a, s.b));
            if (it == edge_count.end() || it->second != 1) continue;
            BoundaryEdge e;
            e.v = {remap[s.a], remap[s.b]};
            e.tag = curves_[s.curve].geom.tag;
            const Vec2 mid = 0.5 * (pts_[s.a] + pts_[s.b]);
            if (e.tag == BoundaryTag::gamma0) {
                double phi = std::atan2(mid.y(), mid.x());
                const double t0 = std::min(s.ta, s.tb);
                while (phi < t0 - 1e-9) phi += kTwoPi;
                while (phi > t0 + kTwoPi) phi -= kTwoPi;
                e.param = phi;
            } else {
                e.param = mid.norm();
            }
            m.boundary.push_back(e);
        }
        std::sort(m.boundary.begin(), m.boundary.end(), [](const BoundaryEdge& x, const BoundaryEdge& y) {
            if (x.tag != y.tag) return x.tag < y.tag;
            return x.param < y.param;
        });
        return m;
    }

    const std::vector<Vec2>& points() const { return pts_; }

private:
    static std::uint64_t key(int a, int b) {
        if (a > b) std::swap(a, b);
        return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
    }

    static long double orient(const Vec2& a, const Vec2& b, const Vec2& c) {
        const long double abx = static_cast<long double>(b.x()) - a.x();
        const long double aby = static_cast<long double>(b.y()) - a.y();
        const long double acx = static_cast<long double>(c.x()) - a.x();
        const long double acy = static_cast<long double>(c.y()) - a.y();
        return abx * acy - aby * acx;
    }

    // > 0 when d lies inside the circumcircle of the counter-clockwise triangle abc.
    static long double incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
        const long double adx = static_cast<long double>(a.x()) - d.x();
        const long double ady = static_cast<long double>(a.y()) - d.y();
        const long double bdx = static_cast<long double>(b.x()) - d.x();
        const long double bdy = static_cast<long double>(b.y()) - d.y();
        const long double cdx = static_cast<long double>(c.x()) - d.x();
        const long double cdy = static_cast<long double>(c.y()) - d.y();
        const long double ad = adx * adx + ady * ady;
        const long double bd = bdx * bdx + bdy * bdy;
        const long double cd = cdx * cdx + cdy * cdy;
        return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
    }

    std::vector<std::pair<double, Vec2>> sample_curve(const BoundaryCurve& c) const {
        constexpr int kFine = 4000;
        std::vector<double> cum(kFine + 1, 0.0);
        Vec2 prev = c.at(c.t0);
        for (int k = 1; k <= kFine; ++k) {
            const double t = c.t0 + (c.t1 - c.t0) * k / kFine;
            const Vec2 p = c.at(t);
            cum[k] = cum[k - 1] + (p - prev).norm() / size_(0.5 * (p + prev));
            prev = p;
        }
        int n = std::max(1, static_cast<int>(std::ceil(cum.back() - 1e-9)));
        if (c.closed) n = std::max(n, 8);
        std::vector<std::pair<double, Vec2>> out;
        int j = 0;
        for (int k = 0; k <= n; ++k) {
            double t;
            if (k == 0) {
                t = c.t0;
            } else if (k == n) {
                t = c.t1;
            } else {
                const double target = cum.back() * k / n;
                while (j < kFine && cum[j + 1] < target) ++j;
                const double frac = (target - cum[j]) / std::max(cum[j + 1] - cum[j], 1e-300);
                t = c.t0 + (c.t1 - c.t0) * (j + frac) / kFine;
            }
            out.emplace_back(t, c.at(t));
        }
        if (c.closed) out.back().second = out.front().second;
        return out;
    }

    void add_segment(int a, int b, int curve, double ta, double tb) {
        if (a == b) return;
        segs_.push_back({a, b, curve, ta, tb, true});
        seg_of_[key(a, b)] = static_cast<int>(segs_.size()) - 1;
    }

    bool is_constrained(int a, int b) const { return seg_of_.count(key(a, b)) != 0; }

    int locate(const Vec2& p) {
        int t = (last_ >= 0 && last_ < static_cast<int>(tris_.size()) && tris_[last_].alive) ? last_ : -1;
        if (t < 0)
            for (std::size_t i = 0; i < tris_.size() && t < 0; ++i)
                if (tris_[i].alive) t = static_cast<int>(i);
        const std::size_t limit = 4 * tris_.size() + 16;
        unsigned rot = 0;
        for (std::size_t step = 0; step < limit; ++step) {
            const Tri& tr = tris_[t];
            bool moved = false;
            for (int k = 0; k < 3; ++k) {
                const int i = static_cast<int>((k + rot) % 3);
                const Vec2& a = pts_[tr.v[(i + 1) % 3]];
                const Vec2& b = pts_[tr.v[(i + 2) % 3]];
                if (orient(a, b, p) < 0) {
                    if (tr.nb[i] < 0) return -1;
                    t = tr.nb[i];
                    moved = true;
                    break;
                }
            }
            ++rot;
            if (!moved) return t;
        }
        for (std::size_t i = 0; i < tris_.size(); ++i) {
            if (!tris_[i].alive) continue;
            const auto& v = tris_[i].v;
            if (orient(pts_[v[0]], pts_[v[1]], p) >= 0 && orient(pts_[v[1]], pts_[v[2]], p) >= 0 &&
                orient(pts_[v[2]], pts_[v[0]], p) >= 0)
                return static_cast<int>(i);
        }
        return -1;
    }

    int insert_or_find(const Vec2& p, bool respect_segments) {
        const int t = locate(p);
        if (t < 0) throw MeshingError("point outside the triangulation bounding box");
        for (int v : tris_[t].v)
            if ((pts_[v] - p).norm() <= 1e-12 * scale_) return v;
        const int id = static_cast<int>(pts_.size());
        pts_.push_back(p);
        vtri_.push_back(-1);
        if (!cavity_insert(id, t, respect_segments)) {
            pts_.pop_back();
            vtri_.pop_back();
            return -1;
        }
        return id;
    }

    bool cavity_insert(int pid, int seed, bool respect_segments) {
        const Vec2& p = pts_[pid];
        std::vector<int> cavity{seed};
        std::vector<char> in(tris_.size(), 0);
        in[seed] = 1;
        auto crossable = [&](int t, int i) {
            const auto& tr = tris_[t];
            return !respect_segments || !is_constrained(tr.v[(i + 1) % 3], tr.v[(i + 2) % 3]);
        };
        for (std::size_t k = 0; k < cavity.size(); ++k) {
            const int t = cavity[k];
            for (int i = 0; i < 3; ++i) {
                const int n = tris_[t].nb[i];
                if (n < 0 || in[n] || !crossable(t, i)) continue;
                const auto& v = tris_[n].v;
                if (incircle(pts_[v[0]], pts_[v[1]], pts_[v[2]], p) > 0) {
                    in[n] = 1;
                    cavity.push_back(n);
                }
            }
        }
        // The cavity must be star-shaped from p.
        for (bool changed = true; changed;) {
            changed = false;
            for (std::size_t k = 0; k < cavity.size(); ++k) {
                const int t = cavity[k];
                for (int i = 0; i < 3; ++i) {
                    const int n = tris_[t].nb[i];
                    if (n >= 0 && in[n]) continue;
                    const Vec2& a = pts_[tris_[t].v[(i + 1) % 3]];
                    const Vec2& b = pts_[tris_[t].v[(i + 2) % 3]];
                    if (orient(a, b, p) > 0) continue;
                    if (n < 0 || !crossable(t, i)) return false;
                    in[n] = 1;
                    cavity.push_back(n);
                    changed = true;
                }
            }
        }
        struct Edge {
            int a, b, outer;
        };
        std::vector<Edge> rim;
        for (int t : cavity)
            for (int i = 0; i < 3; ++i) {
                const int n = tris_[t].nb[i];
                if (n >= 0 && in[n]) continue;
                rim.push_back({tris_[t].v[(i + 1) % 3], tris_[t].v[(i + 2) % 3], n});
            }
        const int region = tris_[seed].region;
        for (int t : cavity) {
            tris_[t].alive = false;
            free_.push_back(t);
        }
        std::unordered_map<int, int> starting_at;  // new triangle (a, b, p) indexed by a
        std::unordered_map<int, int> ending_at;    // ... and by b
        std::vector<int> created;
        for (const auto& e : rim) {
            int id;
            if (!free_.empty()) {
                id = free_.back();
                free_.pop_back();
            } else {
                id = static_cast<int>(tris_.size());
                tris_.emplace_back();
            }
            tris_[id] = Tri{{e.a, e.b, pid}, {-1, -1, e.outer}, true, region};
            if (e.outer >= 0)
                for (int j = 0; j < 3; ++j) {
                    const auto& ov = tris_[e.outer].v;
                    if ((ov[(j + 1) % 3] == e.b && ov[(j + 2) % 3] == e.a)) tris_[e.outer].nb[j] = id;
                }
            starting_at[e.a] = id;
            ending_at[e.b] = id;
            created.push_back(id);
        }
        for (int id : created) {
            auto& tr = tris_[id];
            tr.nb[0] = starting_at.at(tr.v[1]);  // edge (b, p)
            tr.nb[1] = ending_at.at(tr.v[0]);    // edge (p, a)
            vtri_[tr.v[0]] = id;
            vtri_[tr.v[1]] = id;
        }
        vtri_[pid] = created.front();
        last_ = created.front();
        return true;
    }

    // Triangle containing edge (a, b), and the vertex opposite to it, on both sides.
    std::vector<std::pair<int, int>> edge_triangles(int a, int b) const {
        std::vector<std::pair<int, int>> out;
        std::vector<int> stack{vtri_[a]};
        std::vector<int> seen;
        while (!stack.empty()) {
            const int t = stack.back();
            stack.pop_back();
            if (t < 0 || std::find(seen.begin(), seen.end(), t) != seen.end()) continue;
            const auto& tr = tris_[t];
            const auto it = std::find(tr.v.begin(), tr.v.end(), a);
            if (!tr.alive || it == tr.v.end()) continue;
            seen.push_back(t);
            const int ia = static_cast<int>(it - tr.v.begin());
            for (int j = 0; j < 3; ++j)
                if (tr.v[j] == b) out.emplace_back(t, tr.v[3 - ia - j]);
            stack.push_back(tr.nb[(ia + 1) % 3]);
            stack.push_back(tr.nb[(ia + 2) % 3]);
        }
        return out;
    }

    bool encroached(int s) const {
        const Seg& sg = segs_[s];
        const auto adj = edge_triangles(sg.a, sg.b);
        if (adj.empty()) return true;
        for (const auto& [t, c] : adj)
            if ((pts_[sg.a] - pts_[c]).dot(pts_[sg.b] - pts_[c]) < 0.0) return true;
        return false;
    }

    bool in_diametral(int s, const Vec2& p) const {
        const Seg& sg = segs_[s];
        return (pts_[sg.a] - p).dot(pts_[sg.b] - p) < 0.0;
    }

    int nearest_segment(const Vec2& p) const {
        int best = -1;
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < segs_.size(); ++s) {
            if (!segs_[s].alive) continue;
            const double d = (0.5 * (pts_[segs_[s].a] + pts_[segs_[s].b]) - p).norm();
            if (d < bd) {
                bd = d;
                best = static_cast<int>(s);
            }
        }
        return best;
    }

    void split_segment(int s) {
        if (s < 0 || !segs_[s].alive) return;
        const Seg sg = segs_[s];
        const Curve& c = curves_[sg.curve];
        const double tm = 0.5 * (sg.ta + sg.tb);
        const Vec2 q = c.geom.at(tm);
        segs_[s].alive = false;
        seg_of_.erase(key(sg.a, sg.b));
        const int id = insert_or_find(q, true);
        if (id < 0 || id == sg.a || id == sg.b) {
            throw MeshingError("segment split failed near (" + std::to_string(q.x()) + ", " + std::to_string(q.y()) +
                               "): boundary resolution below round-off");
        }
        add_segment(sg.a, id, sg.curve, sg.ta, tm);
        add_segment(id, sg.b, sg.curve, tm, sg.tb);
        ++splits_;
    }

    void resolve_boundary() {
        if (!std::isfinite(boundary_tol_)) return;
        for (bool any = true; any;) {
            any = false;
            for (std::size_t s = 0; s < segs_.size(); ++s) {
                const Seg& sg = segs_[s];
                if (!sg.alive) continue;
                const Vec2& a = pts_[sg.a];
                const Vec2& b = pts_[sg.b];
                const double len = (b - a).norm();
                if (len < 1e-9 * scale_) continue;
                const Vec2 q = curves_[sg.curve].geom.at(0.5 * (sg.ta + sg.tb));
                const double dev = std::abs((b - a).x() * (q - a).y() - (b - a).y() * (q - a).x()) / len;
                if (dev > boundary_tol_) {
                    split_segment(static_cast<int>(s));
                    any = true;
                }
            }
        }
    }

    void fix_encroached() {
        for (int round = 0; round < 10000; ++round) {
            bool any = false;
            const std::size_t n = segs_.size();
            for (std::size_t s = 0; s < n; ++s) {
                if (!segs_[s].alive || !encroached(static_cast<int>(s))) continue;
                split_segment(static_cast<int>(s));
                any = true;
            }
            if (!any) return;
        }
        throw MeshingError("segment recovery did not terminate");
    }

    // Regions: 0 outside (connected to the bounding triangle), otherwise the label
    // returned by region_of_ at the centroid of the component's largest triangle.
    void classify() {
        for (auto& t : tris_) t.region = -1;
        auto flood = [&](int seed) {
            std::vector<int> comp{seed};
            tris_[seed].region = -2;
            for (std::size_t k = 0; k < comp.size(); ++k) {
                const int t = comp[k];
                for (int i = 0; i < 3; ++i) {
                    const int n = tris_[t].nb[i];
                    if (n < 0 || tris_[n].region != -1) continue;
                    if (is_constrained(tris_[t].v[(i + 1) % 3], tris_[t].v[(i + 2) % 3])) continue;
                    tris_[n].region = -2;
                    comp.push_back(n);
                }
            }
            return comp;
        };
        for (std::size_t t = 0; t < tris_.size(); ++t) {
            if (!tris_[t].alive || tris_[t].region != -1) continue;
            const auto comp = flood(static_cast<int>(t));
            bool outer = false;
            int largest = comp.front();
            double largest_area = -1.0;
            for (int c : comp) {
                const auto& v = tris_[c].v;
                outer = outer || v[0] < 3 || v[1] < 3 || v[2] < 3;
                const double a = static_cast<double>(orient(pts_[v[0]], pts_[v[1]], pts_[v[2]]));
                if (a > largest_area) {
                    largest_area = a;
                    largest = c;
                }
            }
            int label = 0;
            if (!outer) {
                const auto& v = tris_[largest].v;
                label = region_of_((pts_[v[0]] + pts_[v[1]] + pts_[v[2]]) / 3.0);
            }
            for (int c : comp) tris_[c].region = label;
        }
    }

    Vec2 circumcenter(int t) const {
        const auto& v = tris_[t].v;
        const Vec2& a = pts_[v[0]];
        const Vec2 b = pts_[v[1]] - a;
        const Vec2 c = pts_[v[2]] - a;
        const double d = 2.0 * (b.x() * c.y() - b.y() * c.x());
        const double b2 = b.squaredNorm();
        const double c2 = c.squaredNorm();
        return a + Vec2((c.y() * b2 - b.y() * c2) / d, (b.x() * c2 - c.x() * b2) / d);
    }

    bool is_bad(int t, double max_ratio) const {
        const auto& v = tris_[t].v;
        const Vec2& a = pts_[v[0]];
        const Vec2& b = pts_[v[1]];
        const Vec2& c = pts_[v[2]];
        const double la = (b - c).norm(), lb = (c - a).norm(), lc = (a - b).norm();
        const double area2 = std::abs(static_cast<double>(orient(a, b, c)));
        if (area2 <= 0.0) return false;
        const double circ = la * lb * lc / (2.0 * area2);
        const double shortest = std::min({la, lb, lc});
        if (circ > max_ratio * shortest) return true;
        return circ > size_((a + b + c) / 3.0) / std::sqrt(3.0);
    }

    std::function<double(const Vec2&)> size_;
    std::function<int(const Vec2&)> region_of_;
    std::vector<Vec2> pts_;
    std::vector<int> vtri_;
    std::vector<Tri> tris_;
    std::vector<int> free_;
    std::vector<Seg> segs_;
    std::unordered_map<std::uint64_t, int> seg_of_;
    std::vector<Curve> curves_;
    int last_ = 0;
    double scale_ = 1.0;
    double boundary_tol_ = std::numeric_limits<double>::infinity();
    std::size_t splits_ = 0;
};

inline void validate_mesh_request(const Domain& d, double h) {
    if (!(h > 0.0)) throw ConfigurationError("mesh size h must be positive");
    if (!d.cone.is_full() && d.cone.width() >= kTwoPi - 1e-12)
        throw MeshingError("slit sectors (width 2pi) cannot be meshed");
    double rmin = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 64; ++k) rmin = std::min(rmin, d.radius(d.gamma0_begin() + (d.gamma0_end() - d.gamma0_begin()) * k / 63.0));
    if (h >= rmin) throw ConfigurationError("mesh size h must be smaller than the domain's inradius from O");
}

}  // namespace detail

/// Conforming Delaunay-refined triangulation of Omega ∩ Sigma with target size h.
inline Mesh triangulate(const Domain& domain, double h) {
    detail::validate_mesh_request(domain, h);
    const bool graded = !domain.cone.is_full();
    detail::Refiner ref([h, graded](const Vec2& x) { return graded_size(x, h, graded); },
                        [](const Vec2&) { return 1; });
    ref.build(boundary_curves(domain), domain.cone.is_full() ? std::vector<Vec2>{Vec2::Zero()} : std::vector<Vec2>{});
    ref.set_boundary_tolerance(h * h);
    ref.refine();
    return ref.extract({1}, h);
}

/// Meshes of nested domains inner ∩ Sigma ⊆ outer ∩ Sigma sharing their vertices:
/// the inner mesh is a submesh of the outer one (its parent_vertex maps into the outer mesh).
inline std::pair<Mesh, Mesh> triangulate_nested(const Domain& outer, const Domain& inner, double h) {
    detail::validate_mesh_request(outer, h);
    detail::validate_mesh_request(inner, h);
    if (outer.cone.kind != inner.cone.kind || outer.cone.start != inner.cone.start || outer.cone.end != inner.cone.end)
        throw ConfigurationError("nested domains must share the cone");
    for (int k = 0; k < 720; ++k) {
        const double phi = outer.gamma0_begin() + (outer.gamma0_end() - outer.gamma0_begin()) * k / 719.0;
        if (!(inner.radius(phi) < outer.radius(phi) - 0.5 * h))
            throw ConfigurationError("inner domain must lie inside the outer domain, at least h/2 from its boundary");
    }
    const bool graded = !outer.cone.is_full();
    std::vector<BoundaryCurve> curves;
    if (outer.cone.is_full()) {
        curves = {make_arc(outer, 0.0, kTwoPi, true), make_arc(inner, 0.0, kTwoPi, true)};
    } else {
        const Vec2 o = Vec2::Zero();
        const Vec2 is = inner.boundary_point(inner.cone.start);
        const Vec2 ie = inner.boundary_point(inner.cone.end);
        curves = {make_segment(o, is, BoundaryTag::gamma1),
                  make_segment(is, outer.boundary_point(outer.cone.start), BoundaryTag::gamma1),
                  make_arc(outer, outer.cone.start, outer.cone.end, false),
                  make_segment(outer.boundary_point(outer.cone.end), ie, BoundaryTag::gamma1),
                  make_segment(ie, o, BoundaryTag::gamma1),
                  make_arc(inner, inner.cone.start, inner.cone.end, false)};
    }
    detail::Refiner ref([h, graded](const Vec2& x) { return graded_size(x, h, graded); },
                        [inner](const Vec2& c) { return inner.contains(c) ? 1 : 2; });
    ref.build(curves, outer.cone.is_full() ? std::vector<Vec2>{Vec2::Zero()} : std::vector<Vec2>{});
    ref.set_boundary_tolerance(h * h);
    ref.refine();
    Mesh big = ref.extract({1, 2}, h);
    Mesh small = ref.extract({1}, h);
    // Re-express the submesh's parent indices in terms of the outer mesh's numbering.
    std::unordered_map<int, int> outer_index;
    for (std::size_t v = 0; v < big.parent_vertex.size(); ++v) outer_index[big.parent_vertex[v]] = static_cast<int>(v);
    for (auto& p : small.parent_vertex) p = outer_index.at(p);
    big.parent_vertex.clear();
    return {std::move(big), std::move(small)};
}


/// Uniform-grid bucket index for point location in a mesh.
class TriangleLocator {
public:
    struct Hit {
        int triangle = -1;
        std::array<double, 3> bary{};
    };

    explicit TriangleLocator(const Mesh& mesh) : mesh_(&mesh) {
        lo_ = Vec2(1e300, 1e300);
        Vec2 hi(-1e300, -1e300);
        for (const auto& v : mesh.vertices) {
            lo_ = lo_.cwiseMin(v);
            hi = hi.cwiseMax(v);
        }
        const double extent = std::max((hi - lo_).maxCoeff(), 1e-12);
        n_ = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(mesh.triangles.size())) / 2.0));
        cell_ = extent / n_ * (1.0 + 1e-9);
        buckets_.assign(static_cast<std::size_t>(n_) * n_, {});
        for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
            Vec2 a(1e300, 1e300), b(-1e300, -1e300);
            for (int v : mesh.triangles[t]) {
                a = a.cwiseMin(mesh.vertices[v]);
                b = b.cwiseMax(mesh.vertices[v]);
            }
            const auto [i0, j0] = cell_of(a);
            const auto [i1, j1] = cell_of(b);
            for (int i = i0; i <= i1; ++i)
                for (int j = j0; j <= j1; ++j) buckets_[static_cast<std::size_t>(i) * n_ + j].push_back(static_cast<int>(t));
        }
    }

    /// Triangle containing x (within a relative tolerance), or triangle == -1.
    Hit locate(const Vec2& x, double tol = 1e-12) const {
        Hit best;
        double best_min = -std::numeric_limits<double>::infinity();
        const auto [i, j] = cell_of(x);
        if (i < 0 || j < 0 || i >= n_ || j >= n_) return best;
        for (int t : buckets_[static_cast<std::size_t>(i) * n_ + j]) {
            const auto b = barycentric(t, x);
            const double m = std::min({b[0], b[1], b[2]});
            if (m > best_min) {
                best_min = m;
                best.triangle = t;
                best.bary = b;
            }
        }
        if (best_min < -tol) best.triangle = -1;
        return best;
    }

    std::array<double, 3> barycentric(int t, const Vec2& x) const {
        const auto& tri = mesh_->triangles[t];
        const Vec2& a = mesh_->vertices[tri[0]];
        const Vec2& b = mesh_->vertices[tri[1]];
        const Vec2& c = mesh_->vertices[tri[2]];
        const double det = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
        const double l1 = ((x.x() - a.x()) * (c.y() - a.y()) - (x.y() - a.y()) * (c.x() - a.x())) / det;
        const double l2 = ((b.x() - a.x()) * (x.y() - a.y()) - (b.y() - a.y()) * (x.x() - a.x())) / det;
        return {1.0 - l1 - l2, l1, l2};
    }

private:
    std::pair<int, int> cell_of(const Vec2& x) const {
        const int i = static_cast<int>(std::floor((x.x() - lo_.x()) / cell_));
        const int j = static_cast<int>(std::floor((x.y() - lo_.y()) / cell_));
        return {std::clamp(i, -1, n_), std::clamp(j, -1, n_)};
    }

    const Mesh* mesh_;
    Vec2 lo_;
    double cell_ = 1.0;
    int n_ = 1;
    std::vector<std::vector<int>> buckets_;
};

}  // namespace wulff
