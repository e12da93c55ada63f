// Acceptance run: one PASS/FAIL line per criterion. Exit status is the number of failed criteria.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>

#include "wulff/experiments.hpp"

using namespace wulff;

namespace {

constexpr double kPi = std::numbers::pi;

Vec v2(double x, double y) {
    Vec v(2);
    v << x, y;
    return v;
}

Norm quad41() {
    Mat A(2, 2);
    A << 4, 0, 0, 1;
    return Norm::quadratic(A);
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

/// Accumulates the checks of one criterion and a short summary of the measured values.
class Check {
public:
    void le(const std::string& what, double value, double tol) {
        if (!(value <= tol)) fail(what + " " + num(value) + " > " + num(tol));
    }
    void ge(const std::string& what, double value, double bound) {
        if (!(value >= bound)) fail(what + " " + num(value) + " < " + num(bound));
    }
    void truth(const std::string& what, bool ok) {
        if (!ok) fail(what);
    }
    void note(const std::string& s) { notes_ += (notes_.empty() ? "" : ", ") + s; }

    bool ok() const { return failures_.empty(); }
    std::string summary() const {
        std::string s = notes_;
        for (const auto& f : failures_) s += (s.empty() ? "" : "; ") + std::string("FAILED ") + f;
        return s;
    }

private:
    void fail(const std::string& s) { failures_.push_back(s); }
    std::vector<std::string> failures_;
    std::string notes_;
};

std::shared_ptr<const Mesh> mesh_of(const Domain& d, double h) { return std::make_shared<const Mesh>(triangulate(d, h)); }

double max_error(const ScalarField& u, const WulffSolution& exact) {
    double e = 0.0;
    for (std::size_t v = 0; v < u.mesh->num_vertices(); ++v)
        e = std::max(e, std::abs(u.values[v] - exact.u(u.mesh->vertices[v])));
    return e;
}

ExperimentSetup setup(const Domain& d, const DualPair& pair, double h) {
    return ExperimentSetup{d, pair, h, {}, Load::uniform(1.0), "acceptance"};
}

// ---------------------------------------------------------------------------

void norm_identities(Check& c) {
    const std::vector<Norm> norms = {Norm::euclidean(), Norm::p_norm(1.5), Norm::p_norm(2.0), Norm::p_norm(3.0),
                                     Norm::p_norm(4.0),  quad41(),          Norm::flower()};
    double euler_a = 0.0, euler_fd = 0.0, unit = 0.0, tri = 0.0;
    for (const Norm& n : norms) {
        const DualPair pair = DualPair::of(n);
        std::mt19937_64 rng(kDefaultSeed);
        for (int s = 0; s < 1000; ++s) {
            const Vec x = random_gaussian(rng, 2);
            const Vec g = grad_norm(n, x);
            const double h = n(x);
            const double e = std::abs(x.dot(g) - h) / h;
            (n.has_analytic_gradient() ? euler_a : euler_fd) = std::max(n.has_analytic_gradient() ? euler_a : euler_fd, e);
            unit = std::max(unit, std::abs(dual_eval(pair, g) - 1.0));
        }
        tri = std::max(tri, check_norm_axioms(n, 1000).triangle_violation);
    }
    c.le("euler (analytic)", euler_a, 1e-8);
    c.le("euler (finite differences)", euler_fd, 1e-5);
    c.le("unit dual gradient", unit, 1e-6);
    c.le("triangle", tri, 1e-10);
    c.note("euler " + num(euler_a) + " / " + num(euler_fd) + ", unit " + num(unit) + ", triangle " + num(tri));
}

void duality(Check& c) {
    std::mt19937_64 rng(kDefaultSeed);
    double worst = 0.0;
    for (double p : {1.5, 3.0, 4.0}) {
        const Norm numeric = Norm::numeric_dual_of(Norm::p_norm(p));
        const double q = p / (p - 1.0);
        for (int k = 0; k < 100; ++k) {
            const Vec xi = random_gaussian(rng, 2);
            const double oracle = std::pow(std::pow(std::abs(xi[0]), q) + std::pow(std::abs(xi[1]), q), 1.0 / q);
            worst = std::max(worst, std::abs(numeric(xi) - oracle) / oracle);
        }
    }
    c.le("numeric p/q dual", worst, 1e-6);

    double back_worst = 0.0;
    for (const Norm& n : {Norm::euclidean(), Norm::p_norm(1.5), Norm::p_norm(3.0), quad41(), Norm::flower()}) {
        const Norm back = Norm::numeric_dual_of(*n.closed_form_dual());
        for (int k = 0; k < 200; ++k) {
            const double t = 2.0 * kPi * (k + 0.37) / 200.0;
            const Vec x = v2(std::cos(t), std::sin(t));
            back_worst = std::max(back_worst, std::abs(back(x) - n(x)) / n(x));
        }
    }
    c.le("dual of dual", back_worst, 1e-4);
    c.note("p/q dual " + num(worst) + ", dual of dual " + num(back_worst));
}

void appendix_flower(Check& c) {
    const Norm numeric = Norm::numeric_dual_of(Norm::flower());
    auto boundary = [&](double t) {
        const Vec u = v2(std::cos(t), std::sin(t));
        return Vec(u / numeric(u));
    };
    double parabola = 0.0;
    for (int k = 0; k < 200; ++k) {
        const Vec xi = boundary(-kPi / 4 + (k + 0.5) * (kPi / 2) / 200.0);
        parabola = std::max(parabola, std::abs(xi[0] - (1.0 - 0.25 * xi[1] * xi[1])));
    }
    c.le("parabola", parabola, 1e-3);

    const Vec corner = boundary(kPi / 4);
    const double corner_err = std::max(std::abs(corner[0] - 0.828427), std::abs(corner[1] - 0.828427));
    c.le("corner location", corner_err, 1e-3);

    // One-sided tangent slopes d(xi1)/d(xi2) from boundary points on either side of the diagonal.
    const double d = 1e-3;
    const Vec a1 = boundary(kPi / 4 - 2 * d), a0 = boundary(kPi / 4 - d);
    const Vec b0 = boundary(kPi / 4 + d), b1 = boundary(kPi / 4 + 2 * d);
    const double below = (a0[0] - a1[0]) / (a0[1] - a1[1]);
    const double above = (b1[0] - b0[0]) / (b1[1] - b0[1]);
    c.truth("one-sided slopes differ", std::abs(below - above) > 0.5);
    bool flagged = false;
    try {
        dual_grad(DualPair::numeric(Norm::flower()), v2(kFlowerCorner, kFlowerCorner));
    } catch (const NonDifferentiableError&) {
        flagged = true;
    }
    c.truth("dual gradient flags the corner", flagged);
    c.note("parabola " + num(parabola) + ", corner " + num(corner[0]) + ", slopes " + num(below) + " / " + num(above));
}

void wulff_convergence(Check& c) {
    struct Case {
        std::string name;
        Norm primal;
        Cone cone;
        double flux_tol;
    };
    for (const Case& k : {Case{"euclidean disc", Norm::euclidean(2), Cone::full_plane(), 0.02},
                          Case{"4-norm quarter", Norm::p_norm(4.0 / 3.0), Cone::sector(0.0, kPi / 2), 0.05}}) {
        const DualPair pair = DualPair::of(k.primal);
        const WulffSolution exact = exact_wulff_solution(k.primal, 1.0, 2);
        const Domain d = Domain::wulff(k.primal, 1.0, k.cone);
        std::vector<double> errs;
        ScalarField last;
        for (double h : {0.1, 0.05, 0.025}) {
            last = solve_torsion(mesh_of(d, h), pair, Load::uniform(1.0));
            errs.push_back(max_error(last, exact));
        }
        const double f1 = errs[0] / errs[1], f2 = errs[1] / errs[2];
        c.ge(k.name + " factor 0.1->0.05", f1, 3.0);
        c.ge(k.name + " factor 0.05->0.025", f2, 3.0);
        const double uO = *FieldEvaluator(last).value(Vec2::Zero());
        c.le(k.name + " |u(O) - 0.25|", std::abs(uO - 0.25), 0.005);
        double flux = 0.0;
        for (const auto& s : boundary_flux(last, pair).gamma0) flux = std::max(flux, std::abs(s.flux - 0.5) / 0.5);
        c.le(k.name + " flux deviation", flux, k.flux_tol);
        c.note(k.name + ": factors " + num(f1) + ", " + num(f2) + ", u(O) " + num(uO) + ", flux " + num(100 * flux) + "%");
    }
}

void comparison_principles(Check& c) {
    int nonneg = 0;
    double min_u = 0.0;
    const Load bump = Load::function([](const Vec2& x) { return x.x() > 0.3 ? 1.0 : 0.0; });
    const Load ramp = Load::function([](const Vec2& x) { return x.y() * x.y(); });
    struct NonNeg {
        Domain d;
        Norm n;
        Load f;
    };
    for (const NonNeg& k : {NonNeg{Domain::perturbed_wulff(Norm::p_norm(3.0), 1.0, 0.2, 3, Cone::sector(0.0, 2.0)),
                                   Norm::p_norm(3.0), bump},
                            NonNeg{Domain::ellipse(1.5, 1.0), Norm::euclidean(2), Load::uniform(1.0)},
                            NonNeg{Domain::wulff(quad41(), 1.0, Cone::sector(0.0, kPi / 2)), quad41(), ramp}}) {
        const ScalarField u = solve_torsion(mesh_of(k.d, 0.05), DualPair::of(k.n), k.f);
        min_u = std::min(min_u, u.min_value());
        c.ge("min u", u.min_value(), -1e-10);
        ++nonneg;
    }

    struct Nested {
        Domain outer, inner;
        Norm primal;
    };
    const Cone q = Cone::sector(0.0, kPi / 2);
    double worst = -std::numeric_limits<double>::infinity();
    int nested = 0;
    for (const Nested& k : {Nested{Domain::wulff(Norm::euclidean(2), 1.0), Domain::ellipse(0.8, 0.5), Norm::euclidean(2)},
                            Nested{Domain::wulff(Norm::euclidean(2), 1.0, q), Domain::ellipse(0.9, 0.6, q), Norm::euclidean(2)},
                            Nested{Domain::wulff(Norm::p_norm(3.0), 1.0, q), Domain::wulff(Norm::p_norm(3.0), 0.7, q),
                                   Norm::p_norm(3.0)},
                            Nested{Domain::ellipse(1.5, 1.0), Domain::perturbed_wulff(Norm::p_norm(4.0 / 3.0), 0.7, 0.2, 2),
                                   Norm::p_norm(4.0 / 3.0)}}) {
        auto [big, small] = triangulate_nested(k.outer, k.inner, 0.05);
        const auto small_ptr = std::make_shared<const Mesh>(std::move(small));
        const DualPair pair = DualPair::of(k.primal);
        const ScalarField u2 = solve_torsion(std::make_shared<const Mesh>(std::move(big)), pair, Load::uniform(1.0));
        const ScalarField u1 = solve_torsion(small_ptr, pair, Load::uniform(1.0));
        for (std::size_t v = 0; v < small_ptr->num_vertices(); ++v)
            worst = std::max(worst, u1.values[v] - u2.values[small_ptr->parent_vertex[v]]);
        ++nested;
    }
    c.le("max u_inner - u_outer", worst, 1e-8);
    c.note(std::to_string(nonneg) + " nonnegativity configs, min u " + num(min_u) + "; " + std::to_string(nested) +
           " nested configs, max u_inner - u_outer " + num(worst));
}

void rigidity_discrimination(Check& c) {
    const Profile q = Profile::linear(0.5);
    const DualPair pair = DualPair::of(Norm::euclidean(2));
    for (const auto& [name, cone] : {std::pair<std::string, Cone>{"full", Cone::full_plane()},
                                     std::pair<std::string, Cone>{"quarter", Cone::sector(0.0, kPi / 2)}}) {
        const ExperimentReport w = overdetermined_check(setup(Domain::wulff(Norm::euclidean(2), 1.0, cone), pair, 0.025), q);
        const double theta = w.metric("theta_pass");
        c.truth(name + " Wulff disc passes", w.passed());
        c.le(name + " Wulff deviation", w.metric("max_deviation"), theta);
        const ExperimentReport p = overdetermined_check(
            setup(Domain::perturbed_wulff(Norm::euclidean(2), 1.0, 0.1, 3, cone), pair, 0.025), q, theta);
        c.truth(name + " perturbed fails", !p.passed());
        c.ge(name + " perturbed deviation / 3 theta", p.metric("max_deviation") / (3.0 * theta), 1.0);
        c.note(name + ": theta " + num(100 * theta) + "%, Wulff " + num(100 * w.metric("max_deviation")) + "%, perturbed " +
               num(100 * p.metric("max_deviation")) + "%");
    }
}

void claims(Check& c) {
    double radii = 0.0, res1 = -1e300, res2 = -1e300;
    int configs = 0;
    for (const Norm& n : {Norm::euclidean(2), Norm::p_norm(3.0), quad41(), Norm::p_norm(4.0 / 3.0)}) {
        for (const Cone& cone : {Cone::full_plane(), Cone::sector(0.0, kPi / 2)}) {
            for (double R : {1.0, 0.8}) {
                const Domain d = Domain::wulff(n, R, cone);
                const RadiiBounds rb = radii_bounds(d, n);
                radii = std::max({radii, std::abs(rb.R1 - R), std::abs(rb.R2 - R)});
                const ExperimentReport r = rigidity_claims(setup(d, DualPair::of(n), 0.05), Profile::linear(0.5));
                for (const char* v : {"claim1: H(Du(z1)) >= R1/N", "claim2: H(Du(z2)) <= R2/N"}) {
                    const Verdict& x = r.verdict(v);
                    c.truth(to_string(n.family()) + " " + v, x.passed);
                }
                res1 = std::max(res1, r.verdict("claim1: H(Du(z1)) >= R1/N").value / r.verdict("claim1: H(Du(z1)) >= R1/N").tolerance);
                res2 = std::max(res2, r.verdict("claim2: H(Du(z2)) <= R2/N").value / r.verdict("claim2: H(Du(z2)) <= R2/N").tolerance);
                ++configs;
            }
        }
    }
    c.le("radii", radii, 1e-8);
    c.note(std::to_string(configs) + " Wulff configs, max residual/tolerance " + num(res1) + " / " + num(res2) +
           ", radii error " + num(radii));
}

void flowline_law(Check& c) {
    const DualPair pair = DualPair::of(Norm::euclidean(2));
    const Flowline e = trace_flowline(flow_field(exact_wulff_solution(Norm::euclidean(2), 1.0), Cone::full_plane()), pair,
                                      Vec2(0.5, 0.0), Cone::full_plane());
    double path = 0.0;
    for (const auto& p : e.points) path = std::max(path, (p.x - Vec2(0.5 - p.t, 0.0)).norm());
    c.le("exact path", path, 1e-6);
    c.truth("exact u strictly increasing", e.strictly_increasing);

    const Domain d = Domain::ellipse(1.5, 1.0, Cone::sector(0.0, kPi / 2));
    const ScalarField u = solve_torsion(mesh_of(d, 0.0125), pair, Load::uniform(1.0));
    const FlowField ff = flow_field(u);
    FlowlineOptions opts;
    opts.dt = 0.01;
    double residual = 0.0;
    bool along = false;
    for (const Vec2& x0 : {Vec2(0.9, 0.02), Vec2(0.6, 0.6), Vec2(0.02, 0.8), Vec2(0.3, 0.5), Vec2(0.95, 0.1)}) {
        const Flowline f = trace_flowline(ff, pair, x0, d.cone, opts);
        c.truth("solved u strictly increasing", f.strictly_increasing);
        residual = std::max(residual, f.max_residual(0.05));
        if (x0 == Vec2(0.9, 0.02)) {
            bool stays = f.reached_gamma1 && f.gamma1_steps > 5;
            bool on = false;
            for (const auto& p : f.points) {
                if (p.on_gamma1) on = true;
                stays = stays && (!on || (p.on_gamma1 && std::abs(p.x.y()) <= 1e-12));
            }
            along = stays;
        }
    }
    c.le("solved residual", residual, 0.05);
    c.truth("curve near Gamma1 continues along the ray", along);
    c.note("exact path error " + num(path) + ", solved residual " + num(100 * residual) + "%, continues on ray " +
           (along ? "yes" : "no"));
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        double limit_s;
        std::function<void(Check&)> run;
    };
    const std::vector<Criterion> criteria = {
        {"norm identities", 5, norm_identities},
        {"duality", 10, duality},
        {"flower dual ball", 10, appendix_flower},
        {"Wulff-solution convergence", 120, wulff_convergence},
        {"comparison principles", 60, comparison_principles},
        {"rigidity discrimination", 120, rigidity_discrimination},
        {"claims 1-2 and radii", 120, claims},
        {"flowline law", 30, flowline_law},
    };
    int failed = 0;
    for (const auto& k : criteria) {
        Check c;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            k.run(c);
        } catch (const std::exception& e) {
            c.truth(std::string("exception: ") + e.what(), false);
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        c.le("runtime", secs, k.limit_s);
        failed += !c.ok();
        std::printf("%s  %-28s %6.2fs  %s\n", c.ok() ? "PASS" : "FAIL", k.name, secs, c.summary().c_str());
        std::fflush(stdout);
    }
    return failed;
}
