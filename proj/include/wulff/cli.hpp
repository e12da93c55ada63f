#pragma once

// Command-line front end: norm checks, solves, experiments and parameter studies.
// Exit codes: 0 success, 1 failed verdict or solver failure, 2 configuration error.

#include <cstdlib>
#include <future>
#include <iostream>
#include <random>
#include <thread>

#include "CLI11.hpp"
#include "wulff/io.hpp"

namespace wulff::cli {

using io::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailed = 1;
inline constexpr int kExitConfig = 2;

/// Flags shared by all subcommands; each one set maps onto a configuration key.
struct Flags {
    std::string config;
    std::string out = "wulff_out";
    std::optional<std::string> norm, dual, cone, domain, profile;
    std::optional<double> h, f, tol, dt, theta;
    std::optional<int> max_iter, points, samples, max_steps;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> x0;
    bool exact = false;

    json to_json() const {
        json j = json::object();
        if (norm) j["norm"] = io::norm_flag(*norm);
        if (dual) j["dual"] = *dual;
        if (cone) j["cone"] = io::cone_flag(*cone);
        if (domain) j["domain"] = io::domain_flag(*domain);
        if (profile) j["profile"] = io::profile_flag(*profile);
        if (h) j["h"] = *h;
        if (f) j["f"] = *f;
        if (tol || max_iter) {
            json s = json::object();
            if (tol) s["gradient_tolerance"] = *tol;
            if (max_iter) s["max_iterations"] = *max_iter;
            j["solver"] = s;
        }
        if (dt) j["dt"] = *dt;
        if (theta) j["theta_pass"] = *theta;
        if (points) j["points"] = *points;
        if (samples) j["samples"] = *samples;
        if (max_steps) j["max_steps"] = *max_steps;
        if (seed) j["seed"] = *seed;
        if (!x0.empty()) {
            json pts = json::array();
            for (const auto& s : x0) {
                const Vec2 p = io::point_flag(s);
                pts.push_back({p.x(), p.y()});
            }
            j["x0"] = pts;
        }
        if (exact) j["exact_field"] = true;
        return j;
    }
};

/// Context of one command execution.
struct Job {
    std::string command;
    io::RunConfig cfg;
    std::ostream* out = &std::cout;
    std::ostream* err = &std::cerr;
};

namespace detail {

inline void print_report(std::ostream& os, const ExperimentReport& r) {
    os << r.experiment << ": " << (r.passed() ? "PASS" : "FAIL") << "\n";
    for (const auto& m : r.metrics) os << "  " << m.name << " = " << io::fmt_short(m.value) << "\n";
    for (const auto& v : r.verdicts)
        os << "  [" << (v.passed ? "pass" : "FAIL") << "] " << v.name << ": " << io::fmt_short(v.value)
           << " (tolerance " << io::fmt_short(v.tolerance) << ")" << (v.detail.empty() ? "" : "; " + v.detail) << "\n";
}

inline int int_or(const json& j, const char* key, int fallback, const io::Source& src) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number_integer() || j[key].get<long long>() < 1)
        src.fail(json::json_pointer("/" + std::string(key)), "expected a positive integer");
    return j[key].get<int>();
}

inline double real_or(const json& j, const char* key, double fallback, const io::Source& src) {
    return io::detail::real_key_or(j, key, json::json_pointer(), fallback, src);
}

inline std::shared_ptr<const Mesh> mesh_for(const io::RunConfig& c) {
    return std::make_shared<const Mesh>(triangulate(c.require_domain(), c.h));
}

inline void write_field(io::OutputDir& dir, const ScalarField& u, const io::RunConfig& c,
                        const std::optional<Profile>& q) {
    const auto [mesh_svg, mesh_csv] = io::mesh_plot(*u.mesh);
    dir.write("mesh.json", io::mesh_to_json(*u.mesh, c.h).dump(1) + "\n", "mesh");
    dir.write("mesh.svg", mesh_svg, "svg");
    dir.write("mesh_edges.csv", mesh_csv, "csv:mesh.svg");
    dir.write("solution.json", io::solution_to_json(u, c.hash(), c.h).dump(1) + "\n", "solution");
    dir.write("solution.csv", io::solution_csv(u), "csv:solution.svg");
    dir.write("solution.svg", io::solution_plot(u), "svg");
    const FluxReport flux = boundary_flux(u, c.pair());
    dir.write("flux.csv", io::flux_csv(flux, q), "csv:flux.svg");
    dir.write("flux.svg", io::flux_plot(flux, q), "svg");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands. Each returns true when every verdict passed.

inline bool cmd_norms_check(const Job& job, io::OutputDir& dir) {
    const auto& c = job.cfg;
    const DualPair pair = c.pair();
    const Norm& n = pair.primal;
    const int samples = detail::int_or(c.raw, "samples", 1000, c.source);
    const bool analytic = n.has_analytic_gradient();
    const bool gauge = n.family() == NormFamily::disc_hull_gauge || n.family() == NormFamily::numeric_dual_of;

    ExperimentReport rep;
    rep.experiment = "norms_check";
    rep.provenance.config_hash = c.hash();
    const NormAxiomReport ax = check_norm_axioms(n, static_cast<std::size_t>(samples), c.seed);
    rep.add("sigma", ax.sigma);
    rep.add("gamma", ax.gamma);
    rep.check_le("zero", ax.zero_violation + static_cast<double>(ax.nonpositive_count), 0.0);
    rep.check_le("homogeneity", ax.homogeneity_violation, gauge ? 1e-10 : 1e-12);
    rep.check_le("triangle", ax.triangle_violation, 1e-10);

    std::string csv = "x1,x2,H0,euler_rel_error,unit_dual_gradient_error\n";
    if (n.differentiable() && n.dim() == 2) {
        std::mt19937_64 rng(c.seed);
        double euler = 0.0, unit = 0.0;
        for (int s = 0; s < samples; ++s) {
            const Vec x = random_gaussian(rng, 2);
            const double hx = n.eval(x);
            const Vec g = n.gradient(x);
            const double e = std::abs(x.dot(g) - hx) / hx;
            double ue = std::numeric_limits<double>::quiet_NaN();
            try {
                ue = std::abs(pair.dual.eval(g) - 1.0);
                unit = std::max(unit, ue);
            } catch (const NonDifferentiableError&) {
            }
            euler = std::max(euler, e);
            csv += io::fmt(x[0]) + "," + io::fmt(x[1]) + "," + io::fmt(hx) + "," + io::fmt(e) + "," + io::fmt(ue) + "\n";
        }
        rep.check_le("euler identity", euler, analytic ? 1e-8 : 1e-5, analytic ? "analytic gradient" : "finite differences");
        rep.check_le("unit dual gradient", unit, 1e-6);
    } else {
        rep.add("gradient_checks_skipped", 1.0);
    }
    dir.write("norms_check.json", io::report_to_json(rep).dump(2) + "\n", "report");
    dir.write("norms_check.csv", csv, "csv");
    detail::print_report(*job.out, rep);
    return rep.passed();
}

inline bool cmd_norms_dual(const Job& job, io::OutputDir& dir) {
    const auto& c = job.cfg;
    if (!c.norm) throw ConfigurationError("norms-dual needs --norm");
    const Norm& n = *c.norm;
    if (n.dim() != 2) throw ConfigurationError("norms-dual samples planar norms");
    const int points = detail::int_or(c.raw, "points", 100, c.source);
    const Norm numeric = Norm::numeric_dual_of(n);
    const auto closed = n.closed_form_dual();
    std::mt19937_64 rng(c.seed);
    std::string csv = "xi1,xi2,numeric_dual,closed_form_dual,rel_error\n";
    double worst = 0.0;
    for (int k = 0; k < points; ++k) {
        const Vec xi = random_gaussian(rng, 2);
        const double a = numeric.eval(xi);
        std::string cf, rel;
        if (closed) {
            const double b = closed->eval(xi);
            const double r = std::abs(a - b) / b;
            worst = std::max(worst, r);
            cf = io::fmt(b);
            rel = io::fmt(r);
        }
        csv += io::fmt(xi[0]) + "," + io::fmt(xi[1]) + "," + io::fmt(a) + "," + cf + "," + rel + "\n";
    }
    dir.write("dual.csv", csv, "csv");

    // Unit ball of the numeric dual.
    std::string ball = "theta,xi1,xi2\n";
    std::vector<Vec2> pts;
    for (int k = 0; k <= 360; ++k) {
        const double t = 2.0 * std::numbers::pi * k / 360;
        const Vec u = wulff::detail::unit2(t);
        const Vec p = u / numeric.eval(u);
        pts.emplace_back(p[0], p[1]);
        ball += io::fmt(t) + "," + io::fmt(p[0]) + "," + io::fmt(p[1]) + "\n";
    }
    io::Svg svg = io::Svg::fit(pts);
    svg.polyline(pts, "#2471a3", 1.5);
    svg.text(12, 20, "unit ball of the numerically computed dual norm", 13);
    dir.write("dual_ball.csv", ball, "csv:dual_ball.svg");
    dir.write("dual_ball.svg", svg.str(), "svg");

    ExperimentReport rep;
    rep.experiment = "norms_dual";
    rep.provenance.config_hash = c.hash();
    rep.add("points", points);
    if (closed) rep.check_le("numeric vs closed-form dual", worst, 1e-6, "max relative error");
    dir.write("norms_dual.json", io::report_to_json(rep).dump(2) + "\n", "report");
    *job.out << "max relative error = " << io::fmt_short(worst) << (closed ? "" : " (no closed form)") << "\n";
    return rep.passed();
}

inline bool cmd_solve(const Job& job, io::OutputDir& dir) {
    const auto& c = job.cfg;
    const DualPair pair = c.pair();
    const ScalarField u = solve_torsion(detail::mesh_for(c), pair, Load::uniform(c.f), c.solver);
    detail::write_field(dir, u, c, c.profile);
    const auto o = io::value_at_origin(u);
    *job.out << "u(O) = " << (o ? io::fmt(*o) : std::string("undefined")) << "\n"
             << "vertices = " << u.mesh->num_vertices() << ", triangles = " << u.mesh->num_triangles()
             << ", newton iterations = " << u.iterations << ", residual = " << io::fmt_short(u.residual) << "\n";
    return true;
}

inline bool cmd_check_overdetermined(const Job& job, io::OutputDir& dir) {
    const auto& c = job.cfg;
    if (!c.profile) throw ConfigurationError("check-overdetermined needs a profile");
    std::optional<double> theta;
    if (c.raw.contains("theta_pass")) theta = detail::real_or(c.raw, "theta_pass", 0.0, c.source);
    ScalarField u;
    const ExperimentReport rep = overdetermined_check(c.setup(), *c.profile, theta, &u);
    detail::write_field(dir, u, c, c.profile);
    dir.write("report.json", io::report_to_json(rep).dump(2) + "\n", "report");
    detail::print_report(*job.out, rep);
    return rep.passed();
}

inline bool cmd_compare(const Job& job, io::OutputDir& dir) {
    const auto& c = job.cfg;
    ScalarField u;
    std::vector<ExperimentReport> reps{comparison_test(c.setup(), &u)};
    if (c.profile) reps.push_back(rigidity_claims(c.setup(), *c.profile));
    detail::write_field(dir, u, c, c.profile);

    const RadiiBounds rb = radii_bounds(c.require_domain(), c.norm.value());
    const WulffSolution w1 = exact_wulff_solution(*c.norm, rb.R1);
    const WulffSolution w2 = exact_wulff_solution(*c.norm, rb.R2);
    std::string csv = "x1,x2,u,u1,u2\n";
    for (std::size_t v = 0; v < u.mesh->num_vertices(); ++v) {
        const Vec2& x = u.mesh->vertices[v];
        const bool in1 = c.norm->eval(WulffSolution::to_vec(x)) < rb.R1;
        csv += io::fmt(x.x()) + "," + io::fmt(x.y()) + "," + io::fmt(u.values[v]) + "," +
               (in1 ? io::fmt(w1.u(x)) : std::string{}) + "," + io::fmt(w2.u(x)) + "\n";
    }
    dir.write("comparison.csv", csv, "csv");
    json arr = json::array();
    bool ok = true;
    for (const auto& r : reps) {
        arr.push_back(io::report_to_json(r));
        detail::print_report(*job.out, r);
        ok = ok && r.passed();
    }
    dir.write("report.json", arr.dump(2) + "\n", "report");
    return ok;
}

inline bool cmd_flow(const Job& job, io::OutputDir& dir) {
    const auto& c = job.cfg;
    const DualPair pair = c.pair();
    const Domain& d = c.require_domain();
    const bool exact = c.raw.value("exact_field", false);
    if (exact && d.kind != Domain::Kind::wulff) throw ConfigurationError("the exact field needs a Wulff domain");

    FlowlineOptions opts;
    opts.dt = detail::real_or(c.raw, "dt", 0.01, c.source);
    opts.max_steps = detail::int_or(c.raw, "max_steps", opts.max_steps, c.source);
    std::vector<Vec2> starts;
    if (c.raw.contains("x0")) {
        const json& xs = c.raw["x0"];
        if (!xs.is_array()) c.source.fail(json::json_pointer("/x0"), "expected [[x, y], ...]");
        for (std::size_t k = 0; k < xs.size(); ++k)
            starts.push_back(io::detail::vec2(xs[k], json::json_pointer("/x0") / k, c.source));
    } else {
        // Default: points at half the boundary radius across Gamma0.
        const int n = 5;
        for (int k = 0; k < n; ++k) {
            const double phi = d.gamma0_begin() + (d.gamma0_end() - d.gamma0_begin()) * (k + 0.5) / n;
            starts.push_back(0.5 * d.boundary_point(phi));
        }
    }

    auto mesh = detail::mesh_for(c);
    ScalarField u;
    FlowField field;
    if (exact) {
        field = flow_field(exact_wulff_solution(pair.primal, d.R), d.cone);
        u = ScalarField::interpolate(mesh, [&](const Vec2& x) { return exact_wulff_solution(pair.primal, d.R).u(x); });
    } else {
        u = solve_torsion(mesh, pair, Load::uniform(c.f), c.solver);
        field = flow_field(u);
    }

    ExperimentReport rep;
    rep.experiment = "flow";
    rep.provenance.config_hash = c.hash();
    rep.provenance.h = c.h;
    rep.provenance.solver_residual = u.residual;
    rep.provenance.solver_iterations = u.iterations;
    std::vector<Flowline> lines;
    for (std::size_t k = 0; k < starts.size(); ++k) {
        Flowline f;
        try {
            f = trace_flowline(field, pair, starts[k], d.cone, opts);
        } catch (const DomainError& e) {
            c.source.fail(json::json_pointer("/x0") / k, e.what());
        }
        const std::string tag = "curve " + std::to_string(k);
        rep.add(tag + " steps", static_cast<double>(f.points.size() - 1));
        rep.add(tag + " final u", f.points.back().u);
        rep.add(tag + " gamma1 steps", static_cast<double>(f.gamma1_steps));
        rep.verdicts.push_back({tag + " u strictly increasing", f.strictly_increasing, f.strictly_increasing ? 1.0 : 0.0,
                                1.0, "stop: " + to_string(f.stop)});
        rep.check_le(tag + " increase-law residual", f.max_residual(opts.residual_floor), 0.05,
                     "max |du/dt - H(Du)| / H(Du) where H(Du) >= " + io::fmt_short(opts.residual_floor));
        lines.push_back(std::move(f));
    }
    dir.write("flowlines.csv", io::flowlines_csv(lines), "csv:flowlines.svg");
    dir.write("flowlines.svg", io::flowlines_plot(*mesh, lines), "svg");
    dir.write("report.json", io::report_to_json(rep).dump(2) + "\n", "report");
    detail::print_report(*job.out, rep);
    return rep.passed();
}

inline bool dispatch(const Job& job, io::OutputDir& dir) {
    const std::string& c = job.command;
    if (c == "norms-check") return cmd_norms_check(job, dir);
    if (c == "norms-dual") return cmd_norms_dual(job, dir);
    if (c == "solve") return cmd_solve(job, dir);
    if (c == "check-overdetermined") return cmd_check_overdetermined(job, dir);
    if (c == "compare") return cmd_compare(job, dir);
    if (c == "flow") return cmd_flow(job, dir);
    throw ConfigurationError("unknown experiment '" + c + "'");
}

/// Independent jobs from {"jobs": [...]} merged over the remaining keys, run concurrently.
inline bool cmd_study(const Job& job, const std::filesystem::path& root) {
    const auto& c = job.cfg;
    const json& jobs = c.raw.contains("jobs") ? c.raw["jobs"] : json();
    if (!jobs.is_array() || jobs.empty()) c.source.fail(json::json_pointer("/jobs"), "expected a non-empty array");
    json base = c.raw;
    base.erase("jobs");

    struct Planned {
        std::string name;
        std::string command;
        io::RunConfig cfg;
    };
    std::vector<Planned> plan;
    std::set<std::string> names;
    for (std::size_t k = 0; k < jobs.size(); ++k) {
        const auto at = json::json_pointer("/jobs") / k;
        if (!jobs[k].is_object()) c.source.fail(at, "expected a job object");
        json merged = base;
        for (const auto& [key, v] : jobs[k].items()) merged[key] = v;
        const std::string cmd = merged.value("experiment", "");
        if (cmd.empty() || cmd == "study") c.source.fail(at / "experiment", "expected a subcommand name");
        std::string name = merged.value("name", "job" + std::to_string(k));
        if (!names.insert(name).second) c.source.fail(at / "name", "duplicate job name");
        // Job-local diagnostics point into the study file.
        io::RunConfig cfg;
        try {
            cfg = io::parse_config(merged, io::Source{c.source.name + " " + at.to_string(), {}});
        } catch (const ConfigurationError& e) {
            throw ConfigurationError(std::string(e.what()) + " (line " +
                                     std::to_string(io::line_of_pointer(c.source.text, at)) + ")");
        }
        cfg.seed = c.seed;
        plan.push_back({name, cmd, std::move(cfg)});
    }

    struct Outcome {
        bool passed = false;
        std::string log;
        std::string error;
        bool config_error = false;
    };
    auto run_one = [&](const Planned& p) {
        Outcome o;
        std::ostringstream log;
        try {
            Job j{p.command, p.cfg, &log, &log};
            io::OutputDir dir(root / p.name, p.command, p.cfg.raw, p.cfg.seed);
            o.passed = dispatch(j, dir);
            dir.finish();
        } catch (const ConfigurationError& e) {
            o.error = e.what();
            o.config_error = true;
        } catch (const std::exception& e) {
            o.error = e.what();
        }
        o.log = log.str();
        return o;
    };
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(plan.size(), std::thread::hardware_concurrency()));
    std::vector<Outcome> outcomes(plan.size());
    for (std::size_t start = 0; start < plan.size(); start += workers) {
        std::vector<std::future<Outcome>> running;
        for (std::size_t k = start; k < std::min(plan.size(), start + workers); ++k)
            running.push_back(std::async(std::launch::async, run_one, std::cref(plan[k])));
        for (std::size_t k = 0; k < running.size(); ++k) outcomes[start + k] = running[k].get();
    }

    json summary = json::array();
    bool ok = true;
    bool config_error = false;
    for (std::size_t k = 0; k < plan.size(); ++k) {
        const auto& o = outcomes[k];
        *job.out << "== " << plan[k].name << " (" << plan[k].command << "): "
                 << (o.error.empty() ? (o.passed ? "PASS" : "FAIL") : "ERROR") << "\n"
                 << o.log;
        if (!o.error.empty()) *job.err << plan[k].name << ": error: " << o.error << "\n";
        summary.push_back({{"name", plan[k].name},
                           {"experiment", plan[k].command},
                           {"config_hash", plan[k].cfg.hash()},
                           {"passed", o.error.empty() && o.passed},
                           {"error", o.error}});
        ok = ok && o.error.empty() && o.passed;
        config_error = config_error || o.config_error;
    }
    io::write_file(root / "study.json", summary.dump(2) + "\n");
    if (config_error) throw ConfigurationError("one or more study jobs had configuration errors");
    return ok;
}

// ---------------------------------------------------------------------------

inline std::optional<std::uint64_t> seed_from_env() {
    const char* s = std::getenv("WULFF_SEED");
    if (!s || !*s) return std::nullopt;
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(s, &used, 0);
        if (used != std::string(s).size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigurationError(std::string("WULFF_SEED is not an unsigned integer: '") + s + "'");
    }
}

/// Parse argv, run one subcommand and map the outcome to an exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Finsler torsion problems in cones: norms, FEM solves and rigidity experiments", "wulff_cli"};
    app.require_subcommand(1, 1);
    app.allow_extras(false);
    app.set_help_flag("--help", "print this help and exit");
    Flags flags;

    auto common = [&](CLI::App* sc, bool geometry) {
        sc->add_option("--config", flags.config, "JSON configuration file (wins over flags)");
        sc->add_option("--out", flags.out, "output directory")->capture_default_str();
        sc->add_option("--norm", flags.norm, "euclid | pnorm:P | quadratic:a,b,c,d | flower | flower_dual | numeric_dual:NORM");
        sc->add_option("--dual", flags.dual, "closed_form | numeric");
        sc->add_option("--seed", flags.seed, "sampling seed (WULFF_SEED overrides)");
        if (!geometry) return;
        sc->add_option("--cone", flags.cone, "full | quarter | half | sector:START,END (radians, pi allowed)");
        sc->add_option("--domain", flags.domain, "wulff:R | ellipse:A,B | perturbed:R,EPS,M");
        sc->add_option("--h", flags.h, "target mesh size");
        sc->add_option("--f", flags.f, "constant load");
        sc->add_option("--tol", flags.tol, "solver gradient tolerance (sup norm)");
        sc->add_option("--max-iter", flags.max_iter, "maximum Newton iterations");
    };
    auto* norms_check = app.add_subcommand("norms-check", "norm axioms, Euler identity and unit dual gradient");
    common(norms_check, false);
    norms_check->add_option("--samples", flags.samples, "number of seeded samples");
    auto* norms_dual = app.add_subcommand("norms-dual", "numeric dual against the closed form");
    common(norms_dual, false);
    norms_dual->add_option("--points", flags.points, "number of seeded dual vectors");
    auto* solve = app.add_subcommand("solve", "solve the torsion problem and write solution, flux and plots");
    common(solve, true);
    solve->add_option("--profile", flags.profile, "profile overlaid on the flux plot");
    auto* over = app.add_subcommand("check-overdetermined", "flux deviation from q(H0) along Gamma0");
    common(over, true);
    over->add_option("--profile", flags.profile, "linear:C | power:C,ALPHA | table:R:Q,...");
    over->add_option("--theta", flags.theta, "explicit pass threshold (default: 3x the Wulff baseline)");
    auto* compare = app.add_subcommand("compare", "comparison with the Wulff solutions of radii R1, R2");
    common(compare, true);
    compare->add_option("--profile", flags.profile, "also evaluate the flux claims for this profile");
    auto* flow = app.add_subcommand("flow", "trace flow lines of DH(Du)");
    common(flow, true);
    flow->add_option("--x0", flags.x0, "start point X,Y (repeatable)");
    flow->add_option("--dt", flags.dt, "RK4 step");
    flow->add_option("--max-steps", flags.max_steps, "step limit per curve");
    flow->add_flag("--exact", flags.exact, "use the closed-form Wulff solution instead of a solve");
    auto* study = app.add_subcommand("study", "run the jobs of a configuration concurrently");
    study->add_option("--config", flags.config, "JSON file with \"jobs\": [...]")->required();
    study->add_option("--out", flags.out, "output directory")->capture_default_str();
    study->add_option("--seed", flags.seed, "sampling seed (WULFF_SEED overrides)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        json flag_cfg = flags.to_json();
        json cfg_json = flag_cfg;
        io::Source src;
        if (!flags.config.empty()) {
            auto [file, fsrc] = io::load_json_file(flags.config);
            src = fsrc;
            std::vector<std::string> warnings;
            cfg_json = io::merge_flags(file, flag_cfg, &warnings);
            for (const auto& w : warnings) err << "warning: " << w << "\n";
        }
        if (command != "study" && cfg_json.contains("jobs"))
            src.fail(json::json_pointer("/jobs"), "\"jobs\" is only valid for the study subcommand");
        io::RunConfig cfg = command == "study" ? io::RunConfig{} : io::parse_config(cfg_json, src);
        if (command == "study") {
            cfg.raw = cfg_json;
            cfg.source = src;
            if (cfg_json.contains("seed") && cfg_json["seed"].is_number_unsigned()) cfg.seed = cfg_json["seed"].get<std::uint64_t>();
        }
        if (const auto s = seed_from_env()) cfg.seed = *s;

        Job job{command, cfg, &out, &err};
        bool ok = false;
        if (command == "study") {
            ok = cmd_study(job, flags.out);
        } else {
            io::OutputDir dir(flags.out, command, cfg.raw, cfg.seed);
            ok = dispatch(job, dir);
            dir.finish();
        }
        return ok ? kExitOk : kExitFailed;
    } catch (const ConfigurationError& e) {
        err << "configuration error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const MeshingError& e) {
        err << "configuration error: meshing failed: " << e.what() << "\n";
        return kExitConfig;
    } catch (const CapabilityError& e) {
        err << "configuration error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NonDifferentiableError& e) {
        err << "configuration error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const SolverError& e) {
        err << "solver error: " << e.what() << "\n";
        return kExitFailed;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailed;
    }
}

}  // namespace wulff::cli
