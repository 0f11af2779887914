// Acceptance run: one PASS/FAIL line per criterion, exit code 0 when all pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "ptk/cli.hpp"
#include "ptk/errors.hpp"

using namespace ptk;

namespace {

struct Timed {
    RunReport report;
    double seconds = 0;
};

Timed run(const std::string& command, RunOptions opt) {
    const auto t0 = std::chrono::steady_clock::now();
    Timed t;
    t.report = run_command(command, opt);
    t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return t;
}

std::vector<const CheckRecord*> select(const RunReport& rep, const std::string& check, int rank = -1,
                                       const std::string& geometry = "") {
    std::vector<const CheckRecord*> out;
    for (const auto& r : rep.records)
        if (r.check == check && (rank < 0 || r.rank == rank) && (geometry.empty() || r.geometry == geometry))
            out.push_back(&r);
    return out;
}

double max_result(const std::vector<const CheckRecord*>& rs) {
    double m = 0;
    for (const auto* r : rs) m = std::max(m, r->result);
    return m;
}

double min_result(const std::vector<const CheckRecord*>& rs) {
    double m = INFINITY;
    for (const auto* r : rs) m = std::min(m, r->result);
    return m;
}

// Every record present, finite, below the bound and marked passing.
bool all_below(const std::vector<const CheckRecord*>& rs, double bound) {
    return !rs.empty() && std::all_of(rs.begin(), rs.end(), [&](const CheckRecord* r) {
        return r->pass && r->comparison == "<" && std::isfinite(r->result) && r->result < bound;
    });
}

bool all_above(const std::vector<const CheckRecord*>& rs, double bound) {
    return !rs.empty() && std::all_of(rs.begin(), rs.end(), [&](const CheckRecord* r) {
        return r->pass && std::isfinite(r->result) && r->result > bound;
    });
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

Outcome guarded(const std::function<Outcome()>& f) {
    try {
        return f();
    } catch (const std::exception& e) {
        return {false, std::string("error: ") + e.what()};
    }
}

RunReport identity_report;
RunReport flat_report;

Outcome identities() {
    RunOptions opt;
    opt.points = 20;
    opt.jet_order = 6;
    const Timed t = run("verify-identities", opt);
    identity_report = t.report;
    const std::vector<std::string> names{"identity.pairings",        "identity.d_of_x",
                                         "identity.euler",           "identity.d_x_commutator",
                                         "identity.d_torsion_free",  "identity.w_commutator",
                                         "identity.bianchi_first",   "identity.bianchi_second",
                                         "identity.x_w_zero",        "identity.z_w_weyl",
                                         "identity.y_w_cotton",      "identity.nabla_x",
                                         "identity.nabla_w",         "identity.nabla_y",
                                         "identity.nabla_z",         "identity.curvature_commutator"};
    bool ok = t.seconds < 30;
    double worst = 0;
    int count = 0;
    for (const auto& g : catalog_names())
        for (const auto& name : names) {
            const auto rs = select(t.report, name, -1, g);
            if (rs.size() != 1 || !all_below(rs, 1e-10) || rs.front()->tolerance > 1e-10) ok = false;
            worst = std::max(worst, max_result(rs));
            count += static_cast<int>(rs.size());
        }
    return {ok, std::to_string(count) + " identity records over " + std::to_string(catalog_names().size()) +
                    " geometries, max relative residual " + fmt("%.2e", worst) + ", " + fmt("%.2f s", t.seconds) +
                    " (limit 30 s)"};
}

Outcome projective_invariance() {
    const auto bases = {"flat2", "flat3", "sphere2", "hyperbolic2", "liouville", "perturbed2"};
    bool ok = true;
    double worst = 0;
    int count = 0;
    for (const char* g : bases)
        for (int r : {1, 2}) {
            const auto rs = select(identity_report, "projective.killing_operator", r, g);
            if (rs.size() != 1 || !all_below(rs, 1e-12)) ok = false;
            worst = std::max(worst, max_result(rs));
            count += static_cast<int>(rs.size());
        }
    return {ok, std::to_string(count) + " geometry/rank pairs, 20 random fields each, max |difference| " +
                    fmt("%.2e", worst)};
}

Outcome flat_all_rank() {
    RunOptions opt;
    opt.geometries = {"flat2"};
    opt.ranks = {1, 2, 3};
    const Timed t = run("flat-check", opt);
    flat_report = t.report;
    bool ok = true;
    double young = 0, par = 0, control = INFINITY;
    for (int r : {1, 2, 3}) {
        const auto y = select(t.report, "flat.young_residual", r, "flat2");
        const auto p = select(t.report, "flat.parallel_residual", r, "flat2");
        const auto c = select(t.report, "flat.control_young", r, "flat2");
        const auto d = select(t.report, "flat.oracle_dimension", r, "flat2");
        ok = ok && all_below(y, 1e-10) && all_below(p, 1e-10) && all_above(c, 1e-3);
        ok = ok && d.size() == 1 && d.front()->pass;
        young = std::max(young, max_result(y));
        par = std::max(par, max_result(p));
        control = std::min(control, min_result(c));
    }
    return {ok, "r = 1, 2, 3: Young residual " + fmt("%.2e", young) + ", parallel residual " + fmt("%.2e", par) +
                    ", control Young residual " + fmt("%.2e", control)};
}

Outcome recovery() {
    const auto rt = select(flat_report, "recovery.rank1_roundtrip");
    const auto f2 = select(flat_report, "recovery.rank2_factor");
    bool ok = all_below(rt, 1e-12) && all_below(f2, 1e-11);
    std::string consts;
    for (int n : {2, 3})
        for (int r : {1, 2, 3}) {
            bool found = false;
            for (const auto* c : select(flat_report, "recovery.constant", r)) {
                if (c->note.find("n = " + std::to_string(n)) == std::string::npos) continue;
                found = true;
                ok = ok && c->pass && std::abs(c->result) > 1e-6;
                consts += " c(" + std::to_string(n) + "," + std::to_string(r) + ")=" + fmt("%.4g", c->result);
            }
            ok = ok && found;
        }
    return {ok, "round trip " + fmt("%.2e", max_result(rt)) + ", X X L - (3/2) K " + fmt("%.2e", max_result(f2)) +
                    ";" + consts};
}

Outcome dimensions() {
    struct Case {
        const char* geometry;
        int r;
        int expected;
    };
    const std::vector<Case> cases{{"flat2", 1, 3},  {"flat2", 2, 6},   {"flat2", 3, 10},    {"flat3", 1, 6},
                                  {"flat3", 2, 20}, {"sphere2", 1, 3}, {"perturbed2", 1, 0}};
    bool ok = true;
    std::string detail;
    for (const auto& c : cases) {
        RunOptions opt;
        opt.geometries = {c.geometry};
        opt.ranks = {c.r};
        const Timed t = run("holonomy-dim", opt);
        const auto rs = select(t.report, "holonomy.dimension", c.r, c.geometry);
        const bool this_ok = rs.size() == 1 && rs.front()->pass && std::lround(rs.front()->result) == c.expected &&
                             t.report.passed() && t.seconds < 60;
        ok = ok && this_ok;
        detail += std::string(detail.empty() ? "" : "; ") + c.geometry + " r" + std::to_string(c.r) + " -> " +
                  (rs.size() == 1 ? std::to_string(std::lround(rs.front()->result)) : std::string("?")) + " (" +
                  fmt("%.1f s", t.seconds) + ")";
    }
    return {ok, detail + "; limit 60 s each"};
}

Outcome curved_rank2() {
    RunOptions opt;
    opt.geometries = {"liouville"};
    opt.ranks = {2};
    opt.points = 20;
    const Timed t = run("prolong-residual", opt);
    const auto res = select(t.report, "prolong.connection_residual", 2);
    const auto obs = select(t.report, "prolong.obstruction", 2);
    const auto xo = select(t.report, "prolong.x_orthogonal", 2);
    const auto ns = select(t.report, "prolong.non_solution", 2);
    const bool ok = all_below(res, 1e-8) && all_below(obs, 1e-7) && all_below(xo, 1e-10) && all_above(ns, 1e-3);
    return {ok, "connection residual " + fmt("%.2e", max_result(res)) + ", obstruction " +
                    fmt("%.2e", max_result(obs)) + ", X-contraction " + fmt("%.2e", max_result(xo)) +
                    ", non-solution " + fmt("%.2e", min_result(ns))};
}

Outcome rank1_agreement() {
    RunOptions opt;
    opt.geometries = {"sphere2"};
    opt.ranks = {1};
    opt.points = 20;
    const Timed t = run("prolong-residual", opt);
    const auto rs = select(t.report, "prolong.rank1_components", 1, "sphere2");
    return {all_below(rs, 1e-10), "known Killing fields at 20 points, max componentwise difference " +
                                      fmt("%.2e", max_result(rs))};
}

Outcome first_integrals() {
    RunOptions opt;
    opt.geometries = {"liouville"};
    opt.ranks = {2};
    const Timed t = run("geodesic-drift", opt);
    const auto drift = select(t.report, "geodesic.drift", 2);
    const auto ratio = select(t.report, "geodesic.rk4_ratio");
    bool ok = all_below(drift, 1e-8) && !ratio.empty();
    for (const auto* r : ratio) ok = ok && r->pass && r->result >= 12 && r->result <= 20;
    return {ok, "metric and Liouville integrals along 10 geodesics, max relative drift " +
                    fmt("%.2e", max_result(drift)) + ", RK4 ratio " + fmt("%.2f", min_result(ratio)) + ".." +
                    fmt("%.2f", max_result(ratio))};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"identity suite", identities},
        {"projective invariance of the Killing operator", projective_invariance},
        {"flat all-rank check", flat_all_rank},
        {"recovery constants", recovery},
        {"solution dimensions via holonomy", dimensions},
        {"rank-2 curved prolongation", curved_rank2},
        {"rank-1 connection agreement", rank1_agreement},
        {"geodesic first integrals", first_integrals},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const Outcome o = guarded(criteria[i].second);
        if (!o.pass) ++failed;
        std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
    return failed == 0 ? 0 : 1;
}
