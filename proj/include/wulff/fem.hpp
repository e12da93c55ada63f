#pragma once

// P1 finite elements for the Finsler torsion problem
//
//   -div(DV(Du)) = f   in Omega ∩ Sigma,
//    u = 0             on Gamma0,
//    DV(Du) . nu = 0   on Gamma1 (natural),
//
// solved by minimizing F[u] = ∫ V(Du) - f u over P1 functions vanishing on Gamma0.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "wulff/errors.hpp"
#include "wulff/mesh.hpp"
#include "wulff/norm.hpp"

namespace wulff {

/// Right-hand side f of the torsion problem.
struct Load {
    std::function<double(const Vec2&)> f;
    double constant = 1.0;
    bool is_constant = true;

    static Load uniform(double c) { return {nullptr, c, true}; }
    static Load function(std::function<double(const Vec2&)> fn) { return {std::move(fn), 0.0, false}; }

    double operator()(const Vec2& x) const { return is_constant ? constant : f(x); }
};

struct SolverOptions {
    int max_iterations = 200;
    double gradient_tolerance = 1e-10;  ///< on the sup-norm of the energy gradient
    double armijo_c = 1e-4;
    double shrink = 0.5;
    int max_backtracks = 60;
    double hessian_regularization = 1e-10;
    int stall_iterations = 40;  ///< give up when the residual has not halved for this many iterations

    void validate() const {
        if (max_iterations < 1 || !(gradient_tolerance > 0.0) || !(armijo_c > 0.0 && armijo_c < 1.0) ||
            !(shrink > 0.0 && shrink < 1.0) || !(hessian_regularization >= 0.0) || max_backtracks < 1 ||
            stall_iterations < 1)
            throw ConfigurationError("invalid solver options");
    }
};

/// Piecewise-linear function on a mesh, with its elementwise gradient.
struct ScalarField {
    std::shared_ptr<const Mesh> mesh;
    Vec values;
    std::vector<Vec2> gradients;
    double energy = 0.0;
    double residual = 0.0;  ///< sup-norm of the energy gradient at `values`
    int iterations = 0;
    std::vector<double> residual_history;

    /// Field with the given nodal values and exact elementwise gradients.
    static ScalarField from_values(std::shared_ptr<const Mesh> mesh, Vec values) {
        if (static_cast<std::size_t>(values.size()) != mesh->num_vertices())
            throw ConsistencyError("nodal vector does not match the mesh");
        ScalarField f;
        f.mesh = std::move(mesh);
        f.values = std::move(values);
        f.gradients = element_gradients(*f.mesh, f.values);
        return f;
    }

    static std::vector<Vec2> element_gradients(const Mesh& mesh, const Vec& u) {
        std::vector<Vec2> g(mesh.num_triangles());
        for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
            const auto b = mesh.basis_gradients(t);
            const auto& tri = mesh.triangles[t];
            g[t] = u[tri[0]] * b[0] + u[tri[1]] * b[1] + u[tri[2]] * b[2];
        }
        return g;
    }

    /// Interpolate a function at the mesh vertices.
    static ScalarField interpolate(std::shared_ptr<const Mesh> mesh, const std::function<double(const Vec2&)>& fn) {
        Vec v(mesh->num_vertices());
        for (std::size_t i = 0; i < mesh->num_vertices(); ++i) v[i] = fn(mesh->vertices[i]);
        return from_values(std::move(mesh), std::move(v));
    }

    void check_consistent() const {
        if (!mesh) throw ConsistencyError("field has no mesh");
        if (static_cast<std::size_t>(values.size()) != mesh->num_vertices() ||
            gradients.size() != mesh->num_triangles())
            throw ConsistencyError("field does not conform to its mesh");
    }

    double min_value() const { return values.minCoeff(); }
    double max_value() const { return values.maxCoeff(); }
};

/// Discrete energy, gradient and Hessian for a (mesh, dual pair, load) triple.
class TorsionEnergy {
public:
    TorsionEnergy(std::shared_ptr<const Mesh> mesh, DualPair pair, Load load)
        : mesh_(std::move(mesh)), pair_(std::move(pair)), load_(std::move(load)) {
        const Mesh& m = *mesh_;
        const auto dirichlet = m.gamma0_vertices();
        dof_.assign(m.num_vertices(), -1);
        for (std::size_t v = 0; v < m.num_vertices(); ++v)
            if (!dirichlet[v]) {
                dof_[v] = static_cast<int>(free_.size());
                free_.push_back(static_cast<int>(v));
            }
        area_.resize(m.num_triangles());
        basis_.resize(m.num_triangles());
        load_vec_ = Vec::Zero(static_cast<Eigen::Index>(m.num_vertices()));
        for (std::size_t t = 0; t < m.num_triangles(); ++t) {
            area_[t] = m.area(t);
            basis_[t] = m.basis_gradients(t);
            const auto& tri = m.triangles[t];
            // Edge-midpoint rule: exact for quadratic integrands f * phi_i with f linear.
            for (int i = 0; i < 3; ++i) {
                const Vec2& xi = m.vertices[tri[i]];
                const Vec2 mj = 0.5 * (xi + m.vertices[tri[(i + 1) % 3]]);
                const Vec2 mk = 0.5 * (xi + m.vertices[tri[(i + 2) % 3]]);
                load_vec_[tri[i]] += area_[t] / 6.0 * (load_(mj) + load_(mk));
            }
        }
    }

    const Mesh& mesh() const { return *mesh_; }
    std::shared_ptr<const Mesh> mesh_ptr() const { return mesh_; }
    const DualPair& pair() const { return pair_; }
    const Vec& load_vector() const { return load_vec_; }
    const std::vector<int>& free_nodes() const { return free_; }
    bool is_free(int v) const { return dof_[v] >= 0; }

    void check(const Vec& u) const {
        if (static_cast<std::size_t>(u.size()) != mesh_->num_vertices())
            throw ConsistencyError("nodal vector does not match the mesh");
    }

    double value(const Vec& u) const {
        check(u);
        double s = 0.0;
        for (std::size_t t = 0; t < area_.size(); ++t) s += area_[t] * lagrangian_V(pair_, as_vec(grad_on(t, u)));
        return s - load_vec_.dot(u);
    }

    /// Full nodal gradient; entries at Gamma0 nodes are zero (those unknowns are eliminated).
    Vec gradient(const Vec& u) const {
        check(u);
        Vec g = -load_vec_;
        for (std::size_t t = 0; t < area_.size(); ++t) {
            const Vec dv = lagrangian_DV(pair_, as_vec(grad_on(t, u)));
            const Vec2 dv2(dv[0], dv[1]);
            const auto& tri = mesh_->triangles[t];
            for (int i = 0; i < 3; ++i) g[tri[i]] += area_[t] * dv2.dot(basis_[t][i]);
        }
        for (std::size_t v = 0; v < dof_.size(); ++v)
            if (dof_[v] < 0) g[v] = 0.0;
        return g;
    }

    double residual(const Vec& g) const {
        double r = 0.0;
        for (int v : free_) r = std::max(r, std::abs(g[v]));
        return r;
    }

    /// Hessian on the free unknowns, with delta * I added to D^2 V on every element.
    Eigen::SparseMatrix<double> hessian(const Vec& u, double delta) const {
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(area_.size() * 9);
        for (std::size_t t = 0; t < area_.size(); ++t) {
            const Mat hv = pair_.dual.half_square_hessian(as_vec(grad_on(t, u)));
            Eigen::Matrix2d k = hv.topLeftCorner<2, 2>();
            k(0, 0) += delta;
            k(1, 1) += delta;
            const auto& tri = mesh_->triangles[t];
            for (int i = 0; i < 3; ++i) {
                const int di = dof_[tri[i]];
                if (di < 0) continue;
                for (int j = 0; j < 3; ++j) {
                    const int dj = dof_[tri[j]];
                    if (dj < 0) continue;
                    trip.emplace_back(di, dj, area_[t] * basis_[t][i].dot(k * basis_[t][j]));
                }
            }
        }
        Eigen::SparseMatrix<double> hess(static_cast<Eigen::Index>(free_.size()),
                                         static_cast<Eigen::Index>(free_.size()));
        hess.setFromTriplets(trip.begin(), trip.end());
        return hess;
    }

    Vec2 grad_on(std::size_t t, const Vec& u) const {
        const auto& tri = mesh_->triangles[t];
        return u[tri[0]] * basis_[t][0] + u[tri[1]] * basis_[t][1] + u[tri[2]] * basis_[t][2];
    }

private:
    static Vec as_vec(const Vec2& x) {
        Vec v(2);
        v << x.x(), x.y();
        return v;
    }

    std::shared_ptr<const Mesh> mesh_;
    DualPair pair_;
    Load load_;
    std::vector<int> dof_;
    std::vector<int> free_;
    std::vector<double> area_;
    std::vector<std::array<Vec2, 3>> basis_;
    Vec load_vec_;
};

/// F[u] = sum_T |T| V(Du_T) - ∫ f u.
inline double energy(const ScalarField& field, const DualPair& pair, const Load& f) {
    field.check_consistent();
    return TorsionEnergy(field.mesh, pair, f).value(field.values);
}

/// Nodal gradient of F (zero at Gamma0 nodes).
inline Vec energy_gradient(const ScalarField& field, const DualPair& pair, const Load& f) {
    field.check_consistent();
    return TorsionEnergy(field.mesh, pair, f).gradient(field.values);
}

/// V must be strictly convex (the primal ball has no flat faces) and C^1 away from 0.
inline void require_solvable_pair(const DualPair& pair) {
    if (pair.dual.dim() != 2) throw ConfigurationError("the solver is two-dimensional");
    if (!pair.dual.differentiable())
        throw ConfigurationError("the dual norm H is not C^1 (its unit ball has corners); V = H^2/2 is not C^1");
    if (!pair.primal.differentiable())
        throw ConfigurationError("the primal norm H0 is not C^1, so V = H^2/2 is not strictly convex");
}

/// Minimize the discrete energy by damped Newton with backtracking; falls back to a
/// diagonally scaled gradient step when no damped Newton direction makes progress.
inline ScalarField solve_torsion(std::shared_ptr<const Mesh> mesh, const DualPair& pair, const Load& f,
                                 const SolverOptions& opts = {}, const Vec* initial = nullptr) {
    opts.validate();
    require_solvable_pair(pair);
    TorsionEnergy en(mesh, pair, f);
    const auto& free = en.free_nodes();
    Vec u = Vec::Zero(static_cast<Eigen::Index>(mesh->num_vertices()));
    if (initial) {
        en.check(*initial);
        for (int v : free) u[v] = (*initial)[v];
    }
    std::vector<double> history;
    double e = en.value(u);
    Vec g = en.gradient(u);
    // Levenberg-style damping on top of delta: grows when full steps fail, shrinks when they succeed.
    double mu = opts.hessian_regularization;
    const double mu_max = 1e8;
    double best = std::numeric_limits<double>::infinity();
    int since_best = 0;
    int it = 0;
    for (;; ++it) {
        const double r = en.residual(g);
        history.push_back(r);
        if (r <= opts.gradient_tolerance) break;
        if (r < 0.5 * best) {
            best = r;
            since_best = 0;
        } else if (++since_best >= opts.stall_iterations) {
            throw SolverError("energy minimization stalled at residual " + std::to_string(r) +
                                  " (floating-point floor; V may not be C^2 for this pair)",
                              history);
        }
        if (it >= opts.max_iterations)
            throw SolverError("energy minimization did not converge in " + std::to_string(opts.max_iterations) +
                                  " iterations (residual " + std::to_string(r) + ")",
                              history);
        Vec gf(static_cast<Eigen::Index>(free.size()));
        for (std::size_t k = 0; k < free.size(); ++k) gf[k] = g[free[k]];
        const double e_tol = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(e));

        // Armijo on the energy while its decrease is resolvable in floating point; below that,
        // sufficient decrease of the Euclidean gradient norm (a descent merit for Newton directions).
        const double g2 = gf.squaredNorm();
        auto free_norm2 = [&](const Vec& full) {
            double acc = 0.0;
            for (int v : free) acc += full[v] * full[v];
            return acc;
        };
        auto try_direction = [&](const Vec& dir, double* taken) {
            const double slope = gf.dot(dir);
            const bool resolvable = -slope > 1e3 * e_tol;
            double step = 1.0;
            for (int bt = 0; bt < opts.max_backtracks; ++bt) {
                Vec trial = u;
                for (std::size_t k = 0; k < free.size(); ++k) trial[free[k]] += step * dir[k];
                const double et = en.value(trial);
                if (resolvable) {
                    if (et <= e + opts.armijo_c * step * slope) {
                        u = std::move(trial);
                        e = et;
                        g = en.gradient(u);
                        *taken = step;
                        return true;
                    }
                } else if (et <= e + e_tol) {
                    Vec gt = en.gradient(trial);
                    if (free_norm2(gt) <= (1.0 - 2.0 * opts.armijo_c * step) * g2) {
                        u = std::move(trial);
                        e = et;
                        g = std::move(gt);
                        *taken = step;
                        return true;
                    }
                }
                step *= opts.shrink;
            }
            return false;
        };

        bool moved = false;
        Eigen::SparseMatrix<double> hess;
        while (!moved) {
            hess = en.hessian(u, mu);
            Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(hess);
            if (ldlt.info() == Eigen::Success) {
                const Vec d = ldlt.solve(-gf);
                double taken = 0.0;
                if (ldlt.info() == Eigen::Success && d.allFinite() && gf.dot(d) < 0.0 && try_direction(d, &taken)) {
                    moved = true;
                    if (taken == 1.0)
                        mu = std::max(opts.hessian_regularization, 0.1 * mu);
                    else if (taken < opts.shrink * opts.shrink)
                        mu = std::min(mu_max, 10.0 * mu);
                    break;
                }
            }
            if (mu >= mu_max) break;
            mu = std::min(mu_max, std::max(10.0 * mu, 1e-8));
        }
        if (!moved) {
            Vec diag = hess.diagonal();
            Vec sd(gf.size());
            for (Eigen::Index k = 0; k < gf.size(); ++k) sd[k] = -gf[k] / std::max(diag[k], 1e-300);
            double taken = 0.0;
            moved = try_direction(sd, &taken);
        }
        if (!moved) throw SolverError("line search failed at residual " + std::to_string(r), history);
    }
    ScalarField out = ScalarField::from_values(mesh, u);
    out.energy = e;
    out.residual = history.back();
    out.iterations = it;
    out.residual_history = std::move(history);
    return out;
}

/// Closed-form torsion solution in the Wulff shape B_R(O, H0):
/// u = (R^2 - H0^2)/(2N), Du = -H0 DH0 / N, H(Du) = H0/N, DV(Du) = -x/N.
struct WulffSolution {
    Norm primal;
    double R = 1.0;
    int N = 2;

    double u(const Vec& x) const {
        const double h = primal.eval(x);
        return (R * R - h * h) / (2.0 * N);
    }
    double u(const Vec2& x) const { return u(to_vec(x)); }

    Vec Du(const Vec& x) const {
        if (x.isZero(0.0)) return Vec::Zero(x.size());
        return -primal.eval(x) * primal.gradient(x) / N;
    }
    Vec2 Du(const Vec2& x) const {
        const Vec d = Du(to_vec(x));
        return {d[0], d[1]};
    }

    double H_of_Du(const Vec& x) const { return primal.eval(x) / N; }
    Vec DV_of_Du(const Vec& x) const { return -x / N; }

    static Vec to_vec(const Vec2& x) {
        Vec v(2);
        v << x.x(), x.y();
        return v;
    }
};

inline WulffSolution exact_wulff_solution(const Norm& norm, double R, int N = 2) {
    if (!(R > 0.0) || N < 1) throw ConfigurationError("exact Wulff solution needs R > 0 and N >= 1");
    if (N != norm.dim()) throw ConfigurationError("dimension N must match the norm");
    return {norm, R, N};
}

struct FluxSample {
    int edge = -1;
    int triangle = -1;
    double param = 0.0;  ///< polar angle of the edge midpoint
    Vec2 z;              ///< edge midpoint
    double H0_of_z = 0.0;
    double flux = 0.0;   ///< H(Du) on the adjacent triangle
};

struct NormalFluxSample {
    int edge = -1;
    double param = 0.0;
    Vec2 z;
    double normal_flux = 0.0;  ///< DV(Du) . nu on the adjacent triangle
    int triangle = -1;
    double H_Du = 0.0;
};

struct FluxReport {
    std::vector<FluxSample> gamma0;
    std::vector<NormalFluxSample> gamma1;

    double max_abs_normal_flux() const {
        double m = 0.0;
        for (const auto& s : gamma1) m = std::max(m, std::abs(s.normal_flux));
        return m;
    }
};

/// One-layer interior limit of H(Du) at every Gamma0 edge, plus DV(Du) . nu on Gamma1.
inline FluxReport boundary_flux(const ScalarField& field, const DualPair& pair) {
    field.check_consistent();
    const Mesh& m = *field.mesh;
    if (m.count_boundary(BoundaryTag::gamma0) == 0) throw DomainError("Gamma0 is empty");
    const auto owner = m.boundary_edge_triangles();
    FluxReport rep;
    for (std::size_t e = 0; e < m.boundary.size(); ++e) {
        const auto& be = m.boundary[e];
        const int t = owner[e];
        if (t < 0) throw ConsistencyError("boundary edge without adjacent triangle");
        const Vec2 a = m.vertices[be.v[0]];
        const Vec2 b = m.vertices[be.v[1]];
        const Vec2 z = 0.5 * (a + b);
        const Vec du = WulffSolution::to_vec(field.gradients[t]);
        if (be.tag == BoundaryTag::gamma0) {
            rep.gamma0.push_back({static_cast<int>(e), t, be.param, z, pair.primal.eval(WulffSolution::to_vec(z)),
                                  pair.dual.eval(du)});
        } else {
            // Outward normal: away from the triangle's opposite vertex.
            Vec2 nu(b.y() - a.y(), a.x() - b.x());
            nu.normalize();
            if (nu.dot(m.centroid(t) - z) > 0.0) nu = -nu;
            const Vec dv = lagrangian_DV(pair, du);
            rep.gamma1.push_back(
                {static_cast<int>(e), be.param, z, dv[0] * nu.x() + dv[1] * nu.y(), t, pair.dual.eval(du)});
        }
    }
    return rep;
}

/// Value of a P1 field at an arbitrary point (nullopt outside the mesh).
class FieldEvaluator {
public:
    explicit FieldEvaluator(const ScalarField& field) : field_(&field), locator_(*field.mesh) {}

    std::optional<double> value(const Vec2& x) const {
        const auto hit = locator_.locate(x, 1e-9);
        if (hit.triangle < 0) return std::nullopt;
        const auto& tri = field_->mesh->triangles[hit.triangle];
        return hit.bary[0] * field_->values[tri[0]] + hit.bary[1] * field_->values[tri[1]] +
               hit.bary[2] * field_->values[tri[2]];
    }

    const TriangleLocator& locator() const { return locator_; }

private:
    const ScalarField* field_;
    TriangleLocator locator_;
};

}  // namespace wulff
