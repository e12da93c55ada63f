#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "wulff/norm.hpp"

using namespace wulff;

namespace {

Vec v2(double a, double b) {
    Vec x(2);
    x << a, b;
    return x;
}

Mat diag41() {
    Mat A = Mat::Zero(2, 2);
    A(0, 0) = 4.0;
    A(1, 1) = 1.0;
    return A;
}

std::vector<Norm> differentiable_norms() {
    return {Norm::euclidean(), Norm::p_norm(1.5), Norm::p_norm(2.0), Norm::p_norm(3.0),
            Norm::p_norm(4.0), Norm::quadratic(diag41()), Norm::flower()};
}

}  // namespace

TEST(EvalNorm, ClosedFormValues) {
    EXPECT_DOUBLE_EQ(eval_norm(Norm::euclidean(), v2(3, 4)), 5.0);
    EXPECT_DOUBLE_EQ(eval_norm(Norm::p_norm(1.0), v2(3, -4)), 7.0);
    EXPECT_DOUBLE_EQ(eval_norm(Norm::p_norm(std::numeric_limits<double>::infinity()), v2(3, -4)), 4.0);
    EXPECT_NEAR(eval_norm(Norm::quadratic(diag41()), v2(1, 0)), 2.0, 1e-15);
}

TEST(EvalNorm, FlowerGaugeOnAxis) {
    const Norm flower = Norm::flower();
    EXPECT_NEAR(flower(v2(1, 0)), 1.0, 1e-14);
    EXPECT_NEAR(flower(v2(2, 0)), 2.0, 1e-14);
    EXPECT_NEAR(flower(v2(0, -1)), 1.0, 1e-14);
    EXPECT_EQ(flower(v2(0, 0)), 0.0);
}

TEST(EvalNorm, FlowerGaugeOnTangentFace) {
    // The hull of the discs at (1/2,0) and (0,1/2) has the flat face
    // {x1 + x2 = 1/2 + sqrt(2)/2}, so along the diagonal H0(t,t) = 2t / (1/2 + sqrt(2)/2).
    const Norm flower = Norm::flower();
    const double face = 0.5 + std::numbers::sqrt2 / 2.0;
    EXPECT_NEAR(flower(v2(0.3, 0.3)), 0.6 / face, 1e-14);
}

TEST(EvalNorm, RejectsInvalidSpecs) {
    EXPECT_THROW(Norm::p_norm(0.5), ConfigurationError);
    Mat bad(2, 2);
    bad << 1.0, 0.0, 0.0, -1.0;
    EXPECT_THROW(Norm::quadratic(bad), ConfigurationError);
    Mat asym(2, 2);
    asym << 1.0, 0.5, 0.0, 1.0;
    EXPECT_THROW(Norm::quadratic(asym), ConfigurationError);
    EXPECT_THROW(Norm::disc_hull_gauge({Vec2(1.0, 0.0)}, {0.5}), ConfigurationError);
    EXPECT_THROW(Norm::euclidean().eval(Vec::Zero(3)), ConfigurationError);
}

TEST(DiscHull, MembershipMatchesSupportFunctionCriterion) {
    // Unequal radii: x is in the hull iff x . u <= h(u) for every unit u.
    const std::vector<Vec2> centers{Vec2(0.6, 0.1), Vec2(-0.6, -0.1), Vec2(0.0, 0.4), Vec2(0.0, -0.4)};
    const std::vector<double> radii{0.3, 0.3, 0.5, 0.5};
    const Norm gauge = Norm::disc_hull_gauge(centers, radii);
    const Norm support = Norm::disc_hull_support(centers, radii);
    std::mt19937_64 rng(kDefaultSeed);
    std::uniform_real_distribution<double> coord(-1.3, 1.3);
    int disagreements = 0;
    for (int s = 0; s < 2000; ++s) {
        const Vec2 x(coord(rng), coord(rng));
        double worst = -1e300;
        for (int k = 0; k < 4096; ++k) {
            const double t = 2.0 * std::numbers::pi * k / 4096.0;
            const Vec u = v2(std::cos(t), std::sin(t));
            worst = std::max(worst, x.x() * u[0] + x.y() * u[1] - support(u));
        }
        if (std::abs(worst) < 1e-4) continue;  // too close to the boundary for the sampled criterion
        if ((worst <= 0.0) != gauge.disc_hull_contains(x)) ++disagreements;
    }
    EXPECT_EQ(disagreements, 0);
}

TEST(GradNorm, Examples) {
    const Vec g = grad_norm(Norm::euclidean(), v2(3, 4));
    EXPECT_NEAR(g[0], 0.6, 1e-15);
    EXPECT_NEAR(g[1], 0.8, 1e-15);

    const Vec e = grad_norm(Norm::p_norm(4.0), v2(1, 0));
    EXPECT_NEAR(e[0], 1.0, 1e-15);
    EXPECT_NEAR(e[1], 0.0, 1e-15);

    const Norm quad = Norm::quadratic(diag41());
    EXPECT_NEAR(v2(1, 0).dot(grad_norm(quad, v2(1, 0))), 2.0, 1e-14);
}

TEST(GradNorm, Errors) {
    EXPECT_THROW(grad_norm(Norm::euclidean(), v2(0, 0)), DomainError);
    EXPECT_THROW(grad_norm(Norm::p_norm(1.0), v2(1, 2)), CapabilityError);
    EXPECT_THROW(grad_norm(Norm::p_norm(std::numeric_limits<double>::infinity()), v2(1, 2)), CapabilityError);
}

TEST(GradNorm, EulerIdentityAndUnitDual) {
    for (const Norm& norm : differentiable_norms()) {
        const DualPair pair = DualPair::of(norm);
        const double tol = norm.has_analytic_gradient() ? 1e-8 : 1e-5;
        std::mt19937_64 rng(kDefaultSeed);
        for (int s = 0; s < 1000; ++s) {
            const Vec x = random_gaussian(rng, 2);
            const Vec g = grad_norm(norm, x);
            const double h = norm(x);
            ASSERT_LE(std::abs(x.dot(g) - h), tol * h) << to_string(norm.family());
            ASSERT_LE(std::abs(dual_eval(pair, g) - 1.0), 1e-6) << to_string(norm.family());
        }
    }
}

TEST(GradNorm, SignRule) {
    for (const Norm& norm : differentiable_norms()) {
        if (!norm.has_analytic_gradient()) continue;
        std::mt19937_64 rng(kDefaultSeed);
        for (int s = 0; s < 200; ++s) {
            const Vec x = random_gaussian(rng, 2);
            const Vec g = grad_norm(norm, x);
            for (double t : {-2.0, -1.0, 0.5, 3.0}) {
                const Vec gt = grad_norm(norm, t * x);
                ASSERT_LE((gt - (t > 0 ? 1.0 : -1.0) * g).cwiseAbs().maxCoeff(), 1e-12);
            }
        }
    }
    // Finite-difference gradients obey the rule up to their own accuracy.
    const Norm flower = Norm::flower();
    const Vec x = v2(0.3, -0.7);
    EXPECT_LE((grad_norm(flower, -2.0 * x) + grad_norm(flower, x)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(GradNorm, AnalyticMatchesCentralDifferences) {
    for (const Norm& norm : differentiable_norms()) {
        if (!norm.has_analytic_gradient()) continue;
        std::mt19937_64 rng(kDefaultSeed);
        for (int s = 0; s < 100; ++s) {
            const Vec x = random_gaussian(rng, 2);
            const double h = 1e-6;
            Vec fd(2);
            for (int i = 0; i < 2; ++i) {
                Vec xp = x, xm = x;
                xp[i] += h;
                xm[i] -= h;
                fd[i] = (norm(xp) - norm(xm)) / (2.0 * h);
            }
            const Vec g = grad_norm(norm, x);
            ASSERT_LE((g - fd).norm(), 1e-6 * std::max(1.0, g.norm()));
        }
    }
}

TEST(GradNorm, WorksInHigherDimensions) {
    const Norm p3 = Norm::p_norm(3.0, 4);
    std::mt19937_64 rng(kDefaultSeed);
    const Vec x = random_gaussian(rng, 4);
    EXPECT_NEAR(x.dot(p3.gradient(x)), p3(x), 1e-12 * p3(x));
}

TEST(DualEval, Examples) {
    EXPECT_DOUBLE_EQ(dual_eval(DualPair::of(Norm::p_norm(1.0)), v2(3, -4)), 4.0);
    EXPECT_NEAR(dual_eval(DualPair::numeric(Norm::p_norm(1.0)), v2(3, -4)), 4.0, 1e-10);
    EXPECT_DOUBLE_EQ(dual_eval(DualPair::of(Norm::euclidean()), v2(3, 4)), 5.0);
    EXPECT_NEAR(dual_eval(DualPair::numeric(Norm::euclidean()), v2(3, 4)), 5.0, 1e-10);
    EXPECT_EQ(dual_eval(DualPair::numeric(Norm::flower()), v2(0, 0)), 0.0);
}

TEST(DualEval, QuadraticMatchesBruteForceEllipseSampling) {
    // Oracle: maximize x . xi over 1e5 points of the ellipse 4 x1^2 + x2^2 = 1.
    const Vec xi = v2(1, 0);
    double brute = -1e300;
    for (int k = 0; k < 100000; ++k) {
        const double t = 2.0 * std::numbers::pi * k / 100000.0;
        brute = std::max(brute, 0.5 * std::cos(t) * xi[0] + std::sin(t) * xi[1]);
    }
    EXPECT_NEAR(brute, 0.5, 1e-12);
    const Norm quad = Norm::quadratic(diag41());
    EXPECT_NEAR(dual_eval(DualPair::of(quad), xi), brute, 1e-12);
    EXPECT_NEAR(dual_eval(DualPair::numeric(quad), xi), brute, 1e-12);
}

TEST(DualEval, NumericDualIsALowerBoundAndMatchesQNorm) {
    for (double p : {1.5, 3.0, 4.0}) {
        const Norm numeric = Norm::numeric_dual_of(Norm::p_norm(p));
        const Norm q = Norm::p_norm(p / (p - 1.0));
        std::mt19937_64 rng(kDefaultSeed);
        for (int s = 0; s < 100; ++s) {
            const Vec xi = random_gaussian(rng, 2);
            const double num = numeric(xi);
            const double exact = q(xi);
            ASSERT_LE(num, exact * (1.0 + 1e-14));
            ASSERT_LE(std::abs(num - exact), 1e-6 * exact);
        }
    }
}

TEST(DualEval, NumericDualInThreeDimensions) {
    const Norm numeric = Norm::numeric_dual_of(Norm::p_norm(3.0, 3));
    const Norm q = Norm::p_norm(1.5, 3);
    std::mt19937_64 rng(kDefaultSeed);
    for (int s = 0; s < 5; ++s) {
        const Vec xi = random_gaussian(rng, 3);
        EXPECT_NEAR(numeric(xi), q(xi), 1e-6 * q(xi));
    }
}

TEST(DualEval, DualOfDualReproducesPrimal) {
    for (const Norm& norm : {Norm::euclidean(), Norm::p_norm(1.5), Norm::p_norm(3.0),
                             Norm::quadratic(diag41()), Norm::flower()}) {
        const Norm dual = *norm.closed_form_dual();
        const Norm back = Norm::numeric_dual_of(dual);
        for (int k = 0; k < 200; ++k) {
            const double t = 2.0 * std::numbers::pi * (k + 0.37) / 200.0;
            const Vec x = v2(std::cos(t), std::sin(t));
            ASSERT_LE(std::abs(back(x) - norm(x)), 1e-4 * norm(x)) << to_string(norm.family());
        }
    }
}

TEST(DualGrad, Examples) {
    const Vec g = dual_grad(DualPair::of(Norm::euclidean()), v2(0, 2));
    EXPECT_NEAR(g[0], 0.0, 1e-15);
    EXPECT_NEAR(g[1], 1.0, 1e-15);

    const DualPair p4 = DualPair::of(Norm::p_norm(4.0));
    const Vec x = v2(1, 1);
    const Vec back = p4.primal(x) * dual_grad(p4, grad_norm(p4.primal, x));
    EXPECT_NEAR(back[0], 1.0, 1e-12);
    EXPECT_NEAR(back[1], 1.0, 1e-12);

    EXPECT_THROW(dual_grad(p4, v2(0, 0)), DomainError);
}

TEST(DualGrad, FlowerCornerIsNonDifferentiable) {
    const DualPair flower = DualPair::of(Norm::flower());
    const Vec corner = v2(kFlowerCorner, kFlowerCorner);
    EXPECT_NEAR(flower.dual(corner), 1.0, 1e-14);
    try {
        dual_grad(flower, corner);
        FAIL() << "expected a corner";
    } catch (const NonDifferentiableError& err) {
        ASSERT_EQ(err.one_sided_limits().size(), 2u);
        // One-sided gradients are the normals of the parabolas xi1 = 1 - xi2^2/4 and xi2 = 1 - xi1^2/4.
        // Tangent slopes dxi1/dxi2 = -xi2/2 on the first, its reciprocal on the second.
        for (const Vec& g : err.one_sided_limits()) {
            const double slope = -g[1] / g[0];  // tangent direction (g1, -g0) expressed as dxi1/dxi2
            const bool first = std::abs(slope - (-kFlowerCorner / 2.0)) < 1e-12;
            const bool second = std::abs(slope - 1.0 / (-kFlowerCorner / 2.0)) < 1e-12;
            EXPECT_TRUE(first || second) << slope;
        }
    }

    // The numeric dual detects the same corner from the flat face of the flower ball.
    const DualPair numeric = DualPair::numeric(Norm::flower());
    EXPECT_THROW(dual_grad(numeric, corner), NonDifferentiableError);
    EXPECT_NO_THROW(dual_grad(numeric, v2(1.0, 0.3)));
}

TEST(DualGrad, RadialCompositeIdentity) {
    for (const Norm& norm : {Norm::euclidean(), Norm::p_norm(1.5), Norm::p_norm(3.0), Norm::p_norm(4.0),
                             Norm::quadratic(diag41())}) {
        const DualPair pair = DualPair::of(norm);
        std::mt19937_64 rng(kDefaultSeed);
        for (int s = 0; s < 200; ++s) {
            const Vec x = random_gaussian(rng, 2);
            const Vec back = norm(x) * dual_grad(pair, grad_norm(norm, x));
            ASSERT_LE((back - x).norm(), 1e-5 * x.norm());
        }
    }
    // Flower primal with the numeric dual: the composite holds away from the flat faces' normals.
    const DualPair numeric = DualPair::numeric(Norm::flower());
    for (double t : {0.1, 0.2, 1.5, 3.3}) {
        const Vec x = v2(std::cos(t), std::sin(t));
        const Vec back = numeric.primal(x) * dual_grad(numeric, grad_norm(numeric.primal, x));
        EXPECT_LE((back - x).norm(), 1e-5);
    }
}

TEST(Lagrangian, Examples) {
    const DualPair eu = DualPair::of(Norm::euclidean());
    EXPECT_DOUBLE_EQ(lagrangian_V(eu, v2(3, 4)), 12.5);
    const Vec dv = lagrangian_DV(eu, v2(3, 4));
    EXPECT_NEAR(dv[0], 3.0, 1e-14);
    EXPECT_NEAR(dv[1], 4.0, 1e-14);

    for (const DualPair& pair : {eu, DualPair::of(Norm::p_norm(3.0)), DualPair::of(Norm::flower())}) {
        EXPECT_EQ(lagrangian_V(pair, v2(0, 0)), 0.0);
        EXPECT_TRUE(lagrangian_DV(pair, v2(0, 0)).isZero(0.0));
    }
}

TEST(Lagrangian, EulerIdentityForVWithFiniteDifferenceOracle) {
    const DualPair pair = DualPair::of(Norm::quadratic(diag41()));
    const Vec xi = v2(1, 1);
    const Vec dv = lagrangian_DV(pair, xi);
    Vec fd(2);
    for (int i = 0; i < 2; ++i) {
        Vec p = xi, m = xi;
        p[i] += 1e-6;
        m[i] -= 1e-6;
        fd[i] = (lagrangian_V(pair, p) - lagrangian_V(pair, m)) / 2e-6;
    }
    EXPECT_LE((dv - fd).norm(), 1e-8);
    EXPECT_NEAR(xi.dot(dv), 2.0 * lagrangian_V(pair, xi), 1e-13);
}

TEST(Lagrangian, HessianMatchesDifferencesOfDV) {
    for (const Norm& h : {Norm::euclidean(), Norm::p_norm(4.0), Norm::p_norm(4.0 / 3.0), Norm::quadratic(diag41())}) {
        const DualPair pair{*h.closed_form_dual(), h};
        const Vec xi = v2(0.7, -0.4);
        const Mat hess = h.half_square_hessian(xi);
        for (int j = 0; j < 2; ++j) {
            Vec p = xi, m = xi;
            p[j] += 1e-6;
            m[j] -= 1e-6;
            const Vec col = (lagrangian_DV(pair, p) - lagrangian_DV(pair, m)) / 2e-6;
            EXPECT_LE((hess.col(j) - col).norm(), 1e-6 * std::max(1.0, col.norm()));
        }
    }
}

TEST(FlowerDualBoundary, Examples) {
    const Vec2 vertex = flower_dual_boundary(0.0);
    EXPECT_DOUBLE_EQ(vertex.x(), 1.0);
    EXPECT_DOUBLE_EQ(vertex.y(), 0.0);

    const Vec2 near_corner = flower_dual_boundary(std::numbers::pi / 4.0 - 1e-12);
    EXPECT_NEAR(near_corner.x(), 0.828427, 1e-6);
    EXPECT_NEAR(near_corner.y(), 0.828427, 1e-6);

    const double c = std::sqrt(3.0) / 2.0;
    const Vec2 p = flower_dual_boundary(std::numbers::pi / 6.0);
    EXPECT_NEAR(p.x(), 2.0 * c / (1.0 + c), 1e-15);
    EXPECT_NEAR(p.y(), 1.0 / (1.0 + c), 1e-15);
    EXPECT_NEAR(p.x(), 0.92820, 1e-5);
    EXPECT_NEAR(p.y(), 0.53590, 1e-5);
    EXPECT_NEAR(p.x(), 1.0 - 0.25 * p.y() * p.y(), 1e-15);

    EXPECT_THROW(flower_dual_boundary(std::numbers::pi / 4.0), DomainError);
    EXPECT_THROW(flower_dual_boundary(-1.0), DomainError);
}

TEST(FlowerDualBoundary, PointsHaveUnitNumericDual) {
    const DualPair numeric = DualPair::numeric(Norm::flower());
    const DualPair closed = DualPair::of(Norm::flower());
    for (int k = 1; k < 40; ++k) {
        const double t = -std::numbers::pi / 4.0 + k * (std::numbers::pi / 2.0) / 40.0;
        const Vec2 p = flower_dual_boundary(t);
        EXPECT_NEAR(dual_eval(numeric, v2(p.x(), p.y())), 1.0, 1e-9);
        EXPECT_NEAR(dual_eval(closed, v2(p.x(), p.y())), 1.0, 1e-14);
    }
}

TEST(NormAxioms, Reports) {
    const auto eu = check_norm_axioms(Norm::euclidean(), 1000);
    EXPECT_LE(eu.homogeneity_violation, 1e-12);
    EXPECT_LE(eu.triangle_violation, 1e-12);
    EXPECT_EQ(eu.zero_violation, 0.0);
    EXPECT_EQ(eu.nonpositive_count, 0u);
    EXPECT_NEAR(eu.sigma, 1.0, 1e-14);
    EXPECT_NEAR(eu.gamma, 1.0, 1e-14);

    const auto p3 = check_norm_axioms(Norm::p_norm(3.0), 1000);
    EXPECT_LE(p3.homogeneity_violation, 1e-12);
    EXPECT_LE(p3.sigma, p3.gamma);
    EXPECT_GE(p3.sigma, std::pow(2.0, 1.0 / 3.0 - 0.5) - 1e-9);  // min of |u|_3 on the circle

    const auto fl = check_norm_axioms(Norm::flower(), 1000);
    EXPECT_LE(fl.triangle_violation, 1e-10);
    EXPECT_LE(fl.homogeneity_violation, 1e-10);
    EXPECT_GE(fl.sigma, 1.0 - 1e-12);  // the flower ball lies inside the Euclidean unit disc

    EXPECT_THROW(check_norm_axioms(Norm::euclidean(), 0), ConfigurationError);
}

TEST(StrictConvexity, FamiliesAndFlower) {
    for (const Norm& norm : {Norm::euclidean(), Norm::p_norm(1.5), Norm::p_norm(3.0), Norm::p_norm(4.0),
                             Norm::quadratic(diag41())}) {
        const auto rep = check_strict_convexity(norm, 1000);
        EXPECT_GT(rep.min_random_margin, 0.0) << to_string(norm.family());
        EXPECT_FALSE(rep.flat_chord_found) << to_string(norm.family());
    }
    // V = H0^2/2 of the flower gauge is flat along the tangent faces of its ball,
    // while V = H^2/2 of its dual (the parabola ball) is strictly convex.
    const auto primal = check_strict_convexity(Norm::flower(), 1000);
    EXPECT_TRUE(primal.flat_chord_found);
    const auto dual = check_strict_convexity(*Norm::flower().closed_form_dual(), 1000);
    EXPECT_FALSE(dual.flat_chord_found);
    EXPECT_GT(dual.min_random_margin, 0.0);
}
