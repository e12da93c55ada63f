#pragma once

// Configuration parsing (JSON and compact `family:params` flags), artifact writers
// (CSV, JSON, SVG) and the output manifest.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "wulff/experiments.hpp"

namespace wulff::io {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Formatting

/// Shortest-safe round-trip representation of a double.
inline std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string fmt_short(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v == 0.0 ? 0.0 : v);
    return buf;
}

/// 64-bit FNV-1a, rendered as 16 hex digits.
inline std::string fnv1a_hex(const std::string& data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string config_hash(const json& config) { return fnv1a_hex(config.dump()); }

/// Real number with optional `pi` factor: "0.5", "-2", "4/3", "pi", "pi/2", "3pi/2", "2*pi", "inf".
inline double parse_real(std::string s) {
    auto trim = [](std::string t) {
        const auto a = t.find_first_not_of(" \t");
        const auto b = t.find_last_not_of(" \t");
        return a == std::string::npos ? std::string{} : t.substr(a, b - a + 1);
    };
    s = trim(s);
    auto plain = [&](const std::string& t) {
        const std::string u = trim(t);
        if (u.empty()) throw ConfigurationError("empty number");
        if (u == "inf" || u == "+inf") return std::numeric_limits<double>::infinity();
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(u, &used);
        } catch (const std::exception&) {
            throw ConfigurationError("not a number: '" + u + "'");
        }
        if (used != u.size()) throw ConfigurationError("not a number: '" + u + "'");
        return v;
    };
    const auto slash = s.find('/');
    const std::string num = slash == std::string::npos ? s : s.substr(0, slash);
    const double den = slash == std::string::npos ? 1.0 : plain(s.substr(slash + 1));
    double value = 0.0;
    const auto pi = num.find("pi");
    if (pi != std::string::npos) {
        std::string coef = trim(num.substr(0, pi));
        if (!trim(num.substr(pi + 2)).empty()) throw ConfigurationError("not a number: '" + s + "'");
        if (!coef.empty() && coef.back() == '*') coef.pop_back();
        coef = trim(coef);
        const double c = coef.empty() || coef == "+" ? 1.0 : coef == "-" ? -1.0 : plain(coef);
        value = c * std::numbers::pi;
    } else {
        value = plain(num);
    }
    if (den == 0.0) throw ConfigurationError("division by zero in '" + s + "'");
    return value / den;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

// ---------------------------------------------------------------------------
// Diagnostics

/// 1-based line and column of a byte offset.
inline std::pair<int, int> line_col(const std::string& text, std::size_t offset) {
    int line = 1;
    int col = 1;
    for (std::size_t i = 0; i < std::min(offset, text.size()); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

/// Best-effort source line of a JSON pointer: finds each object key of the path in order.
inline int line_of_pointer(const std::string& text, const json::json_pointer& ptr) {
    std::size_t pos = 0;
    std::size_t found = std::string::npos;
    for (const auto& token : split(ptr.to_string(), '/')) {
        if (token.empty()) continue;
        if (!token.empty() && std::all_of(token.begin(), token.end(), ::isdigit)) continue;
        const auto at = text.find('"' + token + '"', pos);
        if (at == std::string::npos) break;
        found = at;
        pos = at + token.size() + 2;
    }
    return found == std::string::npos ? 1 : line_col(text, found).first;
}

/// Source text and name used to attach line numbers to configuration errors.
struct Source {
    std::string name = "<flags>";
    std::string text;

    [[noreturn]] void fail(const json::json_pointer& at, const std::string& msg) const {
        const std::string where = at.to_string().empty() ? "/" : at.to_string();
        if (text.empty()) throw ConfigurationError(name + ": " + where + ": " + msg);
        throw ConfigurationError(name + ":" + std::to_string(line_of_pointer(text, at)) + ": " + where + ": " + msg);
    }
};

/// Parse JSON text; syntax errors become line-numbered configuration errors.
inline json parse_json_text(const std::string& text, const std::string& name) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        const auto [line, col] = line_col(text, e.byte == 0 ? 0 : e.byte - 1);
        std::string what = e.what();
        const auto cut = what.find("parse error");
        if (cut != std::string::npos) what = what.substr(cut);
        throw ConfigurationError(name + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + what);
    }
}

inline std::pair<json, Source> load_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigurationError(path + ": cannot open configuration file");
    std::stringstream ss;
    ss << in.rdbuf();
    Source src{path, ss.str()};
    return {parse_json_text(src.text, path), src};
}

// ---------------------------------------------------------------------------
// Typed access with diagnostics

namespace detail {

using Ptr = json::json_pointer;

inline const json& field(const json& obj, const std::string& key, const Ptr& base, const Source& src) {
    if (!obj.contains(key)) src.fail(base / key, "missing required key");
    return obj.at(key);
}

inline double real(const json& v, const Ptr& p, const Source& src) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        try {
            return parse_real(v.get<std::string>());
        } catch (const ConfigurationError& e) {
            src.fail(p, e.what());
        }
    }
    src.fail(p, "expected a number");
}

inline double real_key(const json& obj, const std::string& key, const Ptr& base, const Source& src) {
    return real(field(obj, key, base, src), base / key, src);
}

inline double real_key_or(const json& obj, const std::string& key, const Ptr& base, double fallback,
                          const Source& src) {
    return obj.contains(key) ? real(obj.at(key), base / key, src) : fallback;
}

inline int int_key(const json& obj, const std::string& key, const Ptr& base, const Source& src) {
    const json& v = field(obj, key, base, src);
    if (!v.is_number_integer()) src.fail(base / key, "expected an integer");
    return v.get<int>();
}

inline std::string string_key(const json& obj, const std::string& key, const Ptr& base, const Source& src) {
    const json& v = field(obj, key, base, src);
    if (!v.is_string()) src.fail(base / key, "expected a string");
    return v.get<std::string>();
}

inline Vec2 vec2(const json& v, const Ptr& p, const Source& src) {
    if (!v.is_array() || v.size() != 2) src.fail(p, "expected a 2-vector [x, y]");
    return {real(v[0], p / 0, src), real(v[1], p / 1, src)};
}

inline void require_object(const json& v, const Ptr& p, const Source& src, const char* what) {
    if (!v.is_object()) src.fail(p, std::string("expected ") + what);
}

/// Library validation errors are reported at `p`.
template <class F>
auto guarded(const Ptr& p, const Source& src, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const ConfigurationError& e) {
        src.fail(p, e.what());
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Norm / cone / domain / profile descriptions

inline Norm norm_from_json(const json& j, const Source& src, const json::json_pointer& p = json::json_pointer()) {
    using namespace detail;
    require_object(j, p, src, "a norm object");
    const std::string family = string_key(j, "family", p, src);
    const int dim = j.contains("dim") ? int_key(j, "dim", p, src) : 2;
    if (family == "euclidean") return guarded(p, src, [&] { return Norm::euclidean(dim); });
    if (family == "p_norm") {
        const double pv = real_key(j, "p", p, src);
        return guarded(p / "p", src, [&] { return Norm::p_norm(pv, dim); });
    }
    if (family == "quadratic") {
        const json& m = field(j, "matrix", p, src);
        if (!m.is_array() || m.empty()) src.fail(p / "matrix", "expected a square matrix");
        const auto n = static_cast<Eigen::Index>(m.size());
        Mat A(n, n);
        for (Eigen::Index r = 0; r < n; ++r) {
            const auto ru = static_cast<std::size_t>(r);
            if (!m[ru].is_array() || static_cast<Eigen::Index>(m[ru].size()) != n)
                src.fail(p / "matrix" / ru, "expected a row of length " + std::to_string(n));
            for (Eigen::Index c = 0; c < n; ++c) {
                const auto cu = static_cast<std::size_t>(c);
                A(r, c) = real(m[ru][cu], p / "matrix" / ru / cu, src);
            }
        }
        return guarded(p / "matrix", src, [&] { return Norm::quadratic(A); });
    }
    if (family == "disc_hull_gauge" || family == "disc_hull_support") {
        const json& cs = field(j, "centers", p, src);
        const json& rs = field(j, "radii", p, src);
        if (!cs.is_array() || !rs.is_array() || cs.size() != rs.size())
            src.fail(p / "radii", "centers and radii must be arrays of equal length");
        std::vector<Vec2> centers;
        std::vector<double> radii;
        for (std::size_t k = 0; k < cs.size(); ++k) {
            centers.push_back(vec2(cs[k], p / "centers" / k, src));
            radii.push_back(real(rs[k], p / "radii" / k, src));
        }
        return guarded(p, src, [&] {
            return family == "disc_hull_gauge" ? Norm::disc_hull_gauge(centers, radii)
                                               : Norm::disc_hull_support(centers, radii);
        });
    }
    if (family == "numeric_dual_of") return Norm::numeric_dual_of(norm_from_json(field(j, "inner", p, src), src, p / "inner"));
    src.fail(p / "family", "unknown norm family '" + family + "'");
}

inline json norm_to_json(const Norm& n) {
    json j;
    j["family"] = to_string(n.family());
    switch (n.family()) {
        case NormFamily::euclidean: j["dim"] = n.dim(); break;
        case NormFamily::p_norm:
            j["dim"] = n.dim();
            if (std::isinf(n.p()))
                j["p"] = "inf";
            else
                j["p"] = n.p();
            break;
        case NormFamily::quadratic: {
            json m = json::array();
            for (Eigen::Index r = 0; r < n.matrix().rows(); ++r) {
                json row = json::array();
                for (Eigen::Index c = 0; c < n.matrix().cols(); ++c) row.push_back(n.matrix()(r, c));
                m.push_back(row);
            }
            j["matrix"] = m;
            break;
        }
        case NormFamily::disc_hull_gauge:
        case NormFamily::disc_hull_support: {
            json cs = json::array();
            for (const auto& c : n.centers()) cs.push_back({c.x(), c.y()});
            j["centers"] = cs;
            j["radii"] = n.radii();
            break;
        }
        case NormFamily::numeric_dual_of: j["inner"] = norm_to_json(n.inner()); break;
    }
    return j;
}

inline Cone cone_from_json(const json& j, const Source& src, const json::json_pointer& p) {
    using namespace detail;
    require_object(j, p, src, "a cone object");
    const std::string kind = string_key(j, "kind", p, src);
    if (kind == "full") return Cone::full_plane();
    if (kind == "sector") {
        const double a = real_key(j, "start", p, src);
        const double b = real_key(j, "end", p, src);
        return guarded(p, src, [&] { return Cone::sector(a, b); });
    }
    src.fail(p / "kind", "expected \"full\" or \"sector\"");
}

inline json cone_to_json(const Cone& c) {
    if (c.is_full()) return {{"kind", "full"}};
    return {{"kind", "sector"}, {"start", c.start}, {"end", c.end}};
}

inline Domain domain_from_json(const json& j, const Norm& norm, const Cone& cone, const Source& src,
                               const json::json_pointer& p) {
    using namespace detail;
    require_object(j, p, src, "a domain object");
    const std::string kind = string_key(j, "kind", p, src);
    if (kind == "wulff") {
        const double R = real_key(j, "R", p, src);
        return guarded(p, src, [&] { return Domain::wulff(norm, R, cone); });
    }
    if (kind == "ellipse") {
        const double a = real_key(j, "a", p, src);
        const double b = real_key(j, "b", p, src);
        return guarded(p, src, [&] { return Domain::ellipse(a, b, cone); });
    }
    if (kind == "perturbed_wulff") {
        const double R = real_key(j, "R", p, src);
        const double eps = real_key(j, "epsilon", p, src);
        const int mode = int_key(j, "mode", p, src);
        return guarded(p, src, [&] { return Domain::perturbed_wulff(norm, R, eps, mode, cone); });
    }
    src.fail(p / "kind", "expected \"wulff\", \"ellipse\" or \"perturbed_wulff\"");
}

inline json domain_to_json(const Domain& d) {
    switch (d.kind) {
        case Domain::Kind::wulff: return {{"kind", "wulff"}, {"R", d.R}};
        case Domain::Kind::ellipse: return {{"kind", "ellipse"}, {"a", d.a}, {"b", d.b}};
        case Domain::Kind::perturbed_wulff:
            return {{"kind", "perturbed_wulff"}, {"R", d.R}, {"epsilon", d.amplitude}, {"mode", d.mode}};
    }
    return {};
}

inline Profile profile_from_json(const json& j, const Source& src, const json::json_pointer& p) {
    using namespace detail;
    require_object(j, p, src, "a profile object");
    const std::string kind = string_key(j, "kind", p, src);
    if (kind == "linear") {
        const double c = real_key(j, "c", p, src);
        return guarded(p, src, [&] { return Profile::linear(c); });
    }
    if (kind == "power") {
        const double c = real_key(j, "c", p, src);
        const double alpha = real_key(j, "alpha", p, src);
        return guarded(p, src, [&] { return Profile::power(c, alpha); });
    }
    if (kind == "table") {
        const json& pts = field(j, "points", p, src);
        if (!pts.is_array()) src.fail(p / "points", "expected [[r, q], ...]");
        std::vector<std::pair<double, double>> v;
        for (std::size_t k = 0; k < pts.size(); ++k) {
            const Vec2 rq = vec2(pts[k], p / "points" / k, src);
            v.emplace_back(rq.x(), rq.y());
        }
        return guarded(p / "points", src, [&] { return Profile::table(v); });
    }
    src.fail(p / "kind", "expected \"linear\", \"power\" or \"table\"");
}

inline json profile_to_json(const Profile& q) {
    switch (q.kind()) {
        case Profile::Kind::linear: return {{"kind", "linear"}, {"c", q.c()}};
        case Profile::Kind::power: return {{"kind", "power"}, {"c", q.c()}, {"alpha", q.alpha()}};
        case Profile::Kind::table: {
            json pts = json::array();
            for (const auto& [r, v] : q.points()) pts.push_back({r, v});
            return {{"kind", "table"}, {"points", pts}};
        }
    }
    return {};
}

inline SolverOptions solver_from_json(const json& j, const Source& src, const json::json_pointer& p) {
    using namespace detail;
    require_object(j, p, src, "a solver options object");
    static const std::vector<std::string> known = {"max_iterations", "gradient_tolerance",     "armijo_c",
                                                   "shrink",         "max_backtracks",         "hessian_regularization",
                                                   "stall_iterations"};
    for (const auto& [k, v] : j.items())
        if (std::find(known.begin(), known.end(), k) == known.end()) src.fail(p / k, "unknown solver option");
    SolverOptions o;
    if (j.contains("max_iterations")) o.max_iterations = int_key(j, "max_iterations", p, src);
    if (j.contains("max_backtracks")) o.max_backtracks = int_key(j, "max_backtracks", p, src);
    if (j.contains("stall_iterations")) o.stall_iterations = int_key(j, "stall_iterations", p, src);
    o.gradient_tolerance = real_key_or(j, "gradient_tolerance", p, o.gradient_tolerance, src);
    o.armijo_c = real_key_or(j, "armijo_c", p, o.armijo_c, src);
    o.shrink = real_key_or(j, "shrink", p, o.shrink, src);
    o.hessian_regularization = real_key_or(j, "hessian_regularization", p, o.hessian_regularization, src);
    guarded(p, src, [&] {
        o.validate();
        return 0;
    });
    return o;
}

inline json solver_to_json(const SolverOptions& o) {
    return {{"max_iterations", o.max_iterations},
            {"gradient_tolerance", o.gradient_tolerance},
            {"armijo_c", o.armijo_c},
            {"shrink", o.shrink},
            {"max_backtracks", o.max_backtracks},
            {"hessian_regularization", o.hessian_regularization},
            {"stall_iterations", o.stall_iterations}};
}

// ---------------------------------------------------------------------------
// Compact flag syntax, mirrored one-to-one by the JSON schema

inline json norm_flag(const std::string& flag) {
    const auto colon = flag.find(':');
    const std::string family = flag.substr(0, colon);
    const std::string args = colon == std::string::npos ? "" : flag.substr(colon + 1);
    auto need_args = [&] {
        if (args.empty()) throw ConfigurationError("--norm " + family + " needs parameters");
    };
    if (family == "euclid" || family == "euclidean") return norm_to_json(Norm::euclidean(2));
    if (family == "pnorm" || family == "p_norm" || family == "p") {
        need_args();
        const double p = parse_real(args);
        json j{{"family", "p_norm"}, {"dim", 2}};
        if (std::isinf(p))
            j["p"] = "inf";
        else
            j["p"] = p;
        return j;
    }
    if (family == "quadratic") {
        need_args();
        const auto parts = split(args, ',');
        const auto n = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(parts.size()))));
        if (n * n != parts.size()) throw ConfigurationError("--norm quadratic needs n*n matrix entries");
        json m = json::array();
        for (std::size_t r = 0; r < n; ++r) {
            json row = json::array();
            for (std::size_t c = 0; c < n; ++c) row.push_back(parse_real(parts[r * n + c]));
            m.push_back(row);
        }
        return {{"family", "quadratic"}, {"matrix", m}};
    }
    if (family == "flower") return norm_to_json(Norm::flower());
    if (family == "flower_dual" || family == "flower-dual") return norm_to_json(*Norm::flower().closed_form_dual());
    if (family == "numeric_dual" || family == "numeric_dual_of") {
        need_args();
        return {{"family", "numeric_dual_of"}, {"inner", norm_flag(args)}};
    }
    throw ConfigurationError("unknown norm '" + flag + "' (euclid, pnorm:P, quadratic:a,b,c,d, flower, flower_dual, "
                             "numeric_dual:NORM)");
}

inline json cone_flag(const std::string& flag) {
    if (flag == "full") return {{"kind", "full"}};
    if (flag == "quarter") return cone_to_json(Cone::sector(0.0, std::numbers::pi / 2));
    if (flag == "half") return cone_to_json(Cone::sector(0.0, std::numbers::pi));
    if (flag.rfind("sector:", 0) == 0) {
        const auto parts = split(flag.substr(7), ',');
        if (parts.size() != 2) throw ConfigurationError("--cone sector:START,END");
        return {{"kind", "sector"}, {"start", parse_real(parts[0])}, {"end", parse_real(parts[1])}};
    }
    throw ConfigurationError("unknown cone '" + flag + "' (full, quarter, half, sector:START,END)");
}

inline json domain_flag(const std::string& flag) {
    const auto colon = flag.find(':');
    const std::string kind = flag.substr(0, colon);
    const auto parts = colon == std::string::npos ? std::vector<std::string>{} : split(flag.substr(colon + 1), ',');
    if (kind == "wulff" && parts.size() == 1) return {{"kind", "wulff"}, {"R", parse_real(parts[0])}};
    if (kind == "ellipse" && parts.size() == 2)
        return {{"kind", "ellipse"}, {"a", parse_real(parts[0])}, {"b", parse_real(parts[1])}};
    if ((kind == "perturbed" || kind == "perturbed_wulff") && parts.size() == 3)
        return {{"kind", "perturbed_wulff"},
                {"R", parse_real(parts[0])},
                {"epsilon", parse_real(parts[1])},
                {"mode", static_cast<int>(std::lround(parse_real(parts[2])))}};
    throw ConfigurationError("unknown domain '" + flag + "' (wulff:R, ellipse:A,B, perturbed:R,EPS,M)");
}

inline json profile_flag(const std::string& flag) {
    const auto colon = flag.find(':');
    const std::string kind = flag.substr(0, colon);
    const std::string args = colon == std::string::npos ? "" : flag.substr(colon + 1);
    const auto parts = split(args, ',');
    if (kind == "linear" && parts.size() == 1 && !args.empty()) return {{"kind", "linear"}, {"c", parse_real(parts[0])}};
    if (kind == "power" && parts.size() == 2)
        return {{"kind", "power"}, {"c", parse_real(parts[0])}, {"alpha", parse_real(parts[1])}};
    if (kind == "table" && !args.empty()) {
        json pts = json::array();
        for (const auto& pr : parts) {
            const auto rq = split(pr, ':');
            if (rq.size() != 2) throw ConfigurationError("--profile table:R:Q,R:Q,...");
            pts.push_back({parse_real(rq[0]), parse_real(rq[1])});
        }
        return {{"kind", "table"}, {"points", pts}};
    }
    throw ConfigurationError("unknown profile '" + flag + "' (linear:C, power:C,ALPHA, table:R:Q,...)");
}

inline Vec2 point_flag(const std::string& flag) {
    const auto parts = split(flag, ',');
    if (parts.size() != 2) throw ConfigurationError("expected a point X,Y, got '" + flag + "'");
    return {parse_real(parts[0]), parse_real(parts[1])};
}

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
    json raw;  ///< canonical configuration (hashed)
    Source source;
    std::optional<Norm> norm;
    bool numeric_dual = false;
    Cone cone;
    std::optional<Domain> domain;
    std::optional<Profile> profile;
    double h = 0.05;
    double f = 1.0;
    SolverOptions solver;
    std::uint64_t seed = kDefaultSeed;

    std::string hash() const { return config_hash(raw); }

    DualPair pair() const {
        if (!norm) throw ConfigurationError("a norm is required");
        return numeric_dual ? DualPair::numeric(*norm) : DualPair::of(*norm);
    }

    const Domain& require_domain() const {
        if (!domain) throw ConfigurationError("a domain is required");
        return *domain;
    }

    ExperimentSetup setup() const {
        ExperimentSetup s{require_domain(), pair(), h, solver, Load::uniform(f), hash()};
        return s;
    }
};

inline const std::vector<std::string>& known_config_keys() {
    static const std::vector<std::string> keys = {"norm", "dual", "cone", "domain", "profile", "h", "f", "solver",
                                                  "seed", "outputs", "x0", "dt", "max_steps", "exact_field",
                                                  "points", "samples", "jobs", "experiment", "name", "theta_pass"};
    return keys;
}

/// Typed view of a configuration object; unknown top-level keys are rejected.
inline RunConfig parse_config(const json& j, const Source& src) {
    using namespace detail;
    const json::json_pointer root;
    if (!j.is_object()) src.fail(root, "configuration must be a JSON object");
    for (const auto& [k, v] : j.items())
        if (std::find(known_config_keys().begin(), known_config_keys().end(), k) == known_config_keys().end())
            src.fail(root / k, "unknown configuration key");
    RunConfig c;
    c.raw = j;
    c.source = src;
    if (j.contains("norm")) c.norm = norm_from_json(j["norm"], src, root / "norm");
    if (j.contains("dual")) {
        const std::string d = j["dual"].is_string() ? j["dual"].get<std::string>() : "";
        if (d != "closed_form" && d != "numeric") src.fail(root / "dual", "expected \"closed_form\" or \"numeric\"");
        c.numeric_dual = d == "numeric";
    }
    if (j.contains("cone")) c.cone = cone_from_json(j["cone"], src, root / "cone");
    if (j.contains("domain")) {
        if (!c.norm) src.fail(root / "domain", "a norm is required to build the domain");
        c.domain = domain_from_json(j["domain"], *c.norm, c.cone, src, root / "domain");
    }
    if (j.contains("profile")) c.profile = profile_from_json(j["profile"], src, root / "profile");
    c.h = real_key_or(j, "h", root, c.h, src);
    if (!(c.h > 0.0)) src.fail(root / "h", "mesh size must be positive");
    c.f = real_key_or(j, "f", root, c.f, src);
    if (j.contains("solver")) c.solver = solver_from_json(j["solver"], src, root / "solver");
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) src.fail(root / "seed", "expected a non-negative integer");
        c.seed = j["seed"].get<std::uint64_t>();
    }
    return c;
}

/// Overlay flag-derived keys onto a file configuration. File values win; each clash is reported.
inline json merge_flags(json file, const json& flags, std::vector<std::string>* warnings) {
    for (const auto& [k, v] : flags.items()) {
        if (file.contains(k)) {
            if (warnings && file[k] != v)
                warnings->push_back("--" + k + " ignored: the configuration file sets \"" + k + "\"");
        } else {
            file[k] = v;
        }
    }
    return file;
}

// ---------------------------------------------------------------------------
// Files and artifacts

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigurationError("cannot write " + path.string());
    out << content;
    if (!out) throw ConfigurationError("failed writing " + path.string());
}

struct Manifest {
    std::string command;
    json config;
    std::uint64_t seed = kDefaultSeed;
    std::vector<std::pair<std::string, std::string>> artifacts;  ///< (relative path, kind)

    void add(std::string path, std::string kind) { artifacts.emplace_back(std::move(path), std::move(kind)); }

    json to_json() const {
        json arts = json::array();
        for (const auto& [p, k] : artifacts) arts.push_back({{"path", p}, {"kind", k}});
        return {{"command", command}, {"config", config}, {"config_hash", config_hash(config)},
                {"seed", seed},       {"artifacts", arts}};
    }
};

/// Writes artifacts under one output directory and records them in manifest.json.
class OutputDir {
public:
    OutputDir(std::filesystem::path root, std::string command, json config, std::uint64_t seed) : root_(std::move(root)) {
        manifest_.command = std::move(command);
        manifest_.config = std::move(config);
        manifest_.seed = seed;
    }

    void write(const std::string& rel, const std::string& content, const std::string& kind) {
        write_file(root_ / rel, content);
        manifest_.add(rel, kind);
    }

    void finish() const { write_file(root_ / "manifest.json", manifest_.to_json().dump(2) + "\n"); }

    const std::filesystem::path& root() const { return root_; }

private:
    std::filesystem::path root_;
    Manifest manifest_;
};

// ---------------------------------------------------------------------------
// JSON and CSV views

inline json mesh_to_json(const Mesh& m, double h) {
    json v = json::array();
    for (const auto& x : m.vertices) v.push_back({x.x(), x.y()});
    json t = json::array();
    for (const auto& tri : m.triangles) t.push_back({tri[0], tri[1], tri[2]});
    json b = json::array();
    for (const auto& e : m.boundary) b.push_back({{"v", {e.v[0], e.v[1]}}, {"tag", to_string(e.tag)}, {"param", e.param}});
    return {{"h", h},
            {"num_vertices", m.num_vertices()},
            {"num_triangles", m.num_triangles()},
            {"min_angle_degrees", m.min_angle_degrees()},
            {"vertices", v},
            {"triangles", t},
            {"boundary", b}};
}

/// Value at O: nodal when O is a vertex, interpolated otherwise.
inline std::optional<double> value_at_origin(const ScalarField& u) {
    const Mesh& m = *u.mesh;
    for (std::size_t v = 0; v < m.num_vertices(); ++v)
        if (m.vertices[v].isZero(0.0)) return u.values[v];
    return FieldEvaluator(u).value(Vec2::Zero());
}

inline json solution_to_json(const ScalarField& u, const std::string& hash, double h) {
    json j = mesh_to_json(*u.mesh, h);
    j["values"] = std::vector<double>(u.values.data(), u.values.data() + u.values.size());
    j["energy"] = u.energy;
    j["residual"] = u.residual;
    j["iterations"] = u.iterations;
    j["residual_history"] = u.residual_history;
    const auto o = value_at_origin(u);
    j["u_at_origin"] = o ? json(*o) : json(nullptr);
    j["config_hash"] = hash;
    return j;
}

inline std::string solution_csv(const ScalarField& u) {
    std::string s = "x1,x2,u\n";
    const Mesh& m = *u.mesh;
    for (std::size_t v = 0; v < m.num_vertices(); ++v)
        s += fmt(m.vertices[v].x()) + "," + fmt(m.vertices[v].y()) + "," + fmt(u.values[v]) + "\n";
    return s;
}

inline std::string flux_csv(const FluxReport& flux, const std::optional<Profile>& q) {
    std::string s = "arc_param,z1,z2,H0_of_z,H_Du,q_of_H0,gamma_tag,normal_flux\n";
    for (const auto& z : flux.gamma0) {
        s += fmt(z.param) + "," + fmt(z.z.x()) + "," + fmt(z.z.y()) + "," + fmt(z.H0_of_z) + "," + fmt(z.flux) + "," +
             (q ? fmt((*q)(z.H0_of_z)) : std::string{}) + ",gamma0,\n";
    }
    for (const auto& z : flux.gamma1) {
        s += fmt(z.param) + "," + fmt(z.z.x()) + "," + fmt(z.z.y()) + ",," + fmt(z.H_Du) + ",,gamma1," +
             fmt(z.normal_flux) + "\n";
    }
    return s;
}

inline json report_to_json(const ExperimentReport& r) {
    json metrics = json::array();
    for (const auto& m : r.metrics) metrics.push_back({{"name", m.name}, {"value", m.value}});
    json verdicts = json::array();
    for (const auto& v : r.verdicts)
        verdicts.push_back({{"name", v.name},
                            {"passed", v.passed},
                            {"value", v.value},
                            {"tolerance", v.tolerance},
                            {"detail", v.detail}});
    return {{"experiment", r.experiment},
            {"passed", r.passed()},
            {"metrics", metrics},
            {"verdicts", verdicts},
            {"provenance",
             {{"config_hash", r.provenance.config_hash},
              {"h", r.provenance.h},
              {"solver_residual", r.provenance.solver_residual},
              {"solver_iterations", r.provenance.solver_iterations}}}};
}

inline std::string flowlines_csv(const std::vector<Flowline>& lines) {
    std::string s = "curve,step,t,x1,x2,u,H_Du,on_gamma1,residual\n";
    for (std::size_t c = 0; c < lines.size(); ++c) {
        const auto& f = lines[c];
        for (std::size_t k = 0; k < f.points.size(); ++k) {
            const auto& p = f.points[k];
            s += std::to_string(c) + "," + std::to_string(k) + "," + fmt(p.t) + "," + fmt(p.x.x()) + "," +
                 fmt(p.x.y()) + "," + fmt(p.u) + "," + fmt(p.H_Du) + "," + (p.on_gamma1 ? "1" : "0") + "," +
                 (k > 0 ? fmt(f.residuals[k - 1]) : std::string{}) + "\n";
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// SVG

/// Minimal SVG canvas mapping a data rectangle onto a fixed pixel frame (y up).
class Svg {
public:
    Svg(double xmin, double xmax, double ymin, double ymax, int width = 640, int height = 640, int margin = 48)
        : x0_(xmin), x1_(xmax), y0_(ymin), y1_(ymax), w_(width), h_(height), m_(margin) {
        if (!(x1_ > x0_)) x1_ = x0_ + 1.0;
        if (!(y1_ > y0_)) y1_ = y0_ + 1.0;
    }

    /// Equal-aspect frame around a point set.
    static Svg fit(const std::vector<Vec2>& pts, int size = 640) {
        double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
        for (const auto& p : pts) {
            xmin = std::min(xmin, p.x());
            xmax = std::max(xmax, p.x());
            ymin = std::min(ymin, p.y());
            ymax = std::max(ymax, p.y());
        }
        const double span = std::max({xmax - xmin, ymax - ymin, 1e-9});
        const double cx = 0.5 * (xmin + xmax);
        const double cy = 0.5 * (ymin + ymax);
        return Svg(cx - 0.5 * span, cx + 0.5 * span, cy - 0.5 * span, cy + 0.5 * span, size, size);
    }

    double px(double x) const { return m_ + (x - x0_) / (x1_ - x0_) * (w_ - 2 * m_); }
    double py(double y) const { return h_ - m_ - (y - y0_) / (y1_ - y0_) * (h_ - 2 * m_); }

    void line(const Vec2& a, const Vec2& b, const std::string& stroke, double width = 1.0) {
        body_ += "<line x1=\"" + fmt_short(px(a.x())) + "\" y1=\"" + fmt_short(py(a.y())) + "\" x2=\"" +
                 fmt_short(px(b.x())) + "\" y2=\"" + fmt_short(py(b.y())) + "\" stroke=\"" + stroke +
                 "\" stroke-width=\"" + fmt_short(width) + "\"/>\n";
    }

    void polyline(const std::vector<Vec2>& pts, const std::string& stroke, double width = 1.5) {
        if (pts.empty()) return;
        body_ += "<polyline fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"" + fmt_short(width) + "\" points=\"";
        for (const auto& p : pts) body_ += fmt_short(px(p.x())) + "," + fmt_short(py(p.y())) + " ";
        body_ += "\"/>\n";
    }

    void polygon(const std::array<Vec2, 3>& pts, const std::string& fill) {
        body_ += "<polygon stroke=\"none\" fill=\"" + fill + "\" points=\"";
        for (const auto& p : pts) body_ += fmt_short(px(p.x())) + "," + fmt_short(py(p.y())) + " ";
        body_ += "\"/>\n";
    }

    void circle(const Vec2& c, double r, const std::string& fill) {
        body_ += "<circle cx=\"" + fmt_short(px(c.x())) + "\" cy=\"" + fmt_short(py(c.y())) + "\" r=\"" +
                 fmt_short(r) + "\" fill=\"" + fill + "\"/>\n";
    }

    void text(double x, double y, const std::string& s, int size = 14, const std::string& anchor = "start") {
        body_ += "<text x=\"" + fmt_short(x) + "\" y=\"" + fmt_short(y) + "\" font-family=\"sans-serif\" font-size=\"" +
                 std::to_string(size) + "\" text-anchor=\"" + anchor + "\">" + escape(s) + "</text>\n";
    }

    /// Axes box with min/max tick labels.
    void axes(const std::string& xlabel, const std::string& ylabel) {
        line({x0_, y0_}, {x1_, y0_}, "#000");
        line({x0_, y0_}, {x0_, y1_}, "#000");
        text(px(x0_), h_ - m_ + 16, fmt_short(x0_), 11, "middle");
        text(px(x1_), h_ - m_ + 16, fmt_short(x1_), 11, "middle");
        text(m_ - 4, py(y0_) + 4, fmt_short(y0_), 11, "end");
        text(m_ - 4, py(y1_) + 4, fmt_short(y1_), 11, "end");
        text(0.5 * w_, h_ - 8, xlabel, 13, "middle");
        text(12, 0.5 * h_, ylabel, 13, "start");
    }

    std::string str() const {
        return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w_) + "\" height=\"" +
               std::to_string(h_) + "\" viewBox=\"0 0 " + std::to_string(w_) + " " + std::to_string(h_) +
               "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" + body_ + "</svg>\n";
    }

private:
    static std::string escape(const std::string& s) {
        std::string o;
        for (char c : s) {
            if (c == '<') o += "&lt;";
            else if (c == '>') o += "&gt;";
            else if (c == '&') o += "&amp;";
            else o += c;
        }
        return o;
    }

    double x0_, x1_, y0_, y1_;
    int w_, h_, m_;
    std::string body_;
};

/// Mesh edges (interior grey, Gamma0 red, Gamma1 blue) and the matching CSV of plotted segments.
inline std::pair<std::string, std::string> mesh_plot(const Mesh& m) {
    Svg svg = Svg::fit(m.vertices);
    std::string csv = "x1,y1,x2,y2,kind\n";
    std::vector<std::pair<int, int>> edges;
    for (const auto& t : m.triangles)
        for (int k = 0; k < 3; ++k) edges.emplace_back(std::minmax(t[k], t[(k + 1) % 3]));
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    for (const auto& [a, b] : edges) {
        svg.line(m.vertices[a], m.vertices[b], "#bbbbbb", 0.5);
        csv += fmt(m.vertices[a].x()) + "," + fmt(m.vertices[a].y()) + "," + fmt(m.vertices[b].x()) + "," +
               fmt(m.vertices[b].y()) + ",interior\n";
    }
    for (const auto& e : m.boundary) {
        const auto& a = m.vertices[e.v[0]];
        const auto& b = m.vertices[e.v[1]];
        svg.line(a, b, e.tag == BoundaryTag::gamma0 ? "#c0392b" : "#2471a3", 2.0);
        csv += fmt(a.x()) + "," + fmt(a.y()) + "," + fmt(b.x()) + "," + fmt(b.y()) + "," + to_string(e.tag) + "\n";
    }
    svg.text(12, 20, "mesh: " + std::to_string(m.num_triangles()) + " triangles; red Gamma0, blue Gamma1", 13);
    return {svg.str(), csv};
}

/// Triangles shaded by the mean nodal value. The data is the solution CSV.
inline std::string solution_plot(const ScalarField& u) {
    const Mesh& m = *u.mesh;
    Svg svg = Svg::fit(m.vertices);
    const double lo = u.min_value();
    const double hi = std::max(u.max_value(), lo + 1e-300);
    for (const auto& t : m.triangles) {
        const double v = (u.values[t[0]] + u.values[t[1]] + u.values[t[2]]) / 3.0;
        const double s = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
        char col[8];
        std::snprintf(col, sizeof col, "#%02x%02x%02x", static_cast<int>(255 * s), static_cast<int>(80 + 100 * s),
                      static_cast<int>(255 * (1 - s)));
        svg.polygon({m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]]}, col);
    }
    svg.text(12, 20, "u: min " + fmt_short(lo) + ", max " + fmt_short(hi), 13);
    return svg.str();
}

/// H(Du) along Gamma0 against the polar angle, with q(H0) overlaid when a profile is given.
inline std::string flux_plot(const FluxReport& flux, const std::optional<Profile>& q) {
    std::vector<const FluxSample*> s;
    for (const auto& z : flux.gamma0) s.push_back(&z);
    std::sort(s.begin(), s.end(), [](const auto* a, const auto* b) { return a->param < b->param; });
    double xmin = 0, xmax = 1, ymax = 0;
    if (!s.empty()) {
        xmin = s.front()->param;
        xmax = s.back()->param;
    }
    for (const auto* z : s) {
        ymax = std::max(ymax, z->flux);
        if (q) ymax = std::max(ymax, (*q)(z->H0_of_z));
    }
    Svg svg(xmin, xmax, 0.0, 1.1 * ymax + 1e-12, 720, 420);
    svg.axes("polar angle of Gamma0 edge midpoint", "H(Du)");
    std::vector<Vec2> qline;
    for (const auto* z : s) {
        svg.circle({z->param, z->flux}, 2.0, "#c0392b");
        if (q) qline.emplace_back(z->param, (*q)(z->H0_of_z));
    }
    if (q) svg.polyline(qline, "#2471a3", 1.5);
    svg.text(60, 20, q ? "dots: H(Du) on Gamma0; line: q(H0(z))" : "dots: H(Du) on Gamma0", 13);
    return svg.str();
}

/// Flow lines over the domain outline.
inline std::string flowlines_plot(const Mesh& m, const std::vector<Flowline>& lines) {
    std::vector<Vec2> pts = m.vertices;
    Svg svg = Svg::fit(pts);
    for (const auto& e : m.boundary)
        svg.line(m.vertices[e.v[0]], m.vertices[e.v[1]], e.tag == BoundaryTag::gamma0 ? "#c0392b" : "#2471a3", 1.5);
    for (const auto& f : lines) {
        std::vector<Vec2> c;
        for (const auto& p : f.points) c.push_back(p.x);
        svg.polyline(c, "#117a65", 1.5);
        if (!c.empty()) svg.circle(c.front(), 3.0, "#117a65");
    }
    svg.text(12, 20, "flow lines of DH(Du)", 13);
    return svg.str();
}

}  // namespace wulff::io
