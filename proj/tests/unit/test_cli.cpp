#include "doctest.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "ptk/cli.hpp"
#include "ptk/errors.hpp"
#include "ptk/expr.hpp"

using namespace ptk;

namespace {

std::string config_error(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

const CheckRecord* find(const RunReport& rep, const std::string& check, int rank = -1) {
    for (const auto& r : rep.records)
        if (r.check == check && (rank < 0 || r.rank == rank)) return &r;
    return nullptr;
}

// Symmetrized Levi-Civita derivative of a lowered symmetric tensor relative to the size of its
// unsymmetrized derivative, by fourth-order central differences of the metric and the components.
double killing_defect_fd(const GeometryConfig& cfg, const KnownSolution& s, const std::vector<double>& x) {
    const int n = cfg.n;
    const double h = 1e-3;
    std::vector<Expr> g, k;
    for (const auto& e : cfg.metric) g.push_back(parse(e, cfg.coordinates));
    for (const auto& e : s.components) k.push_back(parse(e, cfg.coordinates));
    auto at = [&](const std::vector<Expr>& f, std::size_t i, std::vector<double> p) { return eval_expr(f[i], p); };
    auto d = [&](const std::vector<Expr>& f, std::size_t i, int a) {
        auto shifted = [&](double t) {
            auto p = x;
            p[static_cast<std::size_t>(a)] += t;
            return at(f, i, p);
        };
        return (-shifted(2 * h) + 8 * shifted(h) - 8 * shifted(-h) + shifted(-2 * h)) / (12 * h);
    };
    Eigen::MatrixXd G(n, n);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) G(a, b) = at(g, static_cast<std::size_t>(a * n + b), x);
    const Eigen::MatrixXd Gi = G.inverse();
    auto gi = [&](int a, int b) { return static_cast<std::size_t>(a * n + b); };
    std::vector<double> gamma(static_cast<std::size_t>(n * n * n));  // [d][a][b] = Gamma^d_ab
    for (int dd = 0; dd < n; ++dd)
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) {
                double v = 0;
                for (int c = 0; c < n; ++c)
                    v += 0.5 * Gi(dd, c) * (d(g, gi(c, b), a) + d(g, gi(c, a), b) - d(g, gi(a, b), c));
                gamma[static_cast<std::size_t>((dd * n + a) * n + b)] = v;
            }
    const int r = s.r;
    int count = 1;
    for (int i = 0; i < r; ++i) count *= n;
    // nabla_a k_{b1..br} for every (a, b1..br), flattened a-major
    std::vector<double> nab(static_cast<std::size_t>(n * count));
    std::vector<int> idx(static_cast<std::size_t>(r));
    auto flat = [&](const std::vector<int>& ix) {
        int f = 0;
        for (int v : ix) f = f * n + v;
        return f;
    };
    for (int a = 0; a < n; ++a)
        for (int f = 0; f < count; ++f) {
            for (int i = r - 1, rest = f; i >= 0; --i, rest /= n) idx[static_cast<std::size_t>(i)] = rest % n;
            double v = d(k, static_cast<std::size_t>(f), a);
            for (int i = 0; i < r; ++i)
                for (int dd = 0; dd < n; ++dd) {
                    auto j = idx;
                    j[static_cast<std::size_t>(i)] = dd;
                    v -= gamma[static_cast<std::size_t>((dd * n + a) * n + idx[static_cast<std::size_t>(i)])] *
                         at(k, static_cast<std::size_t>(flat(j)), x);
                }
            nab[static_cast<std::size_t>(a * count + f)] = v;
        }
    // symmetrize over all r + 1 slots
    double worst = 0, scale = 1;
    for (double v : nab) scale = std::max(scale, std::abs(v));
    std::vector<int> all(static_cast<std::size_t>(r + 1));
    for (int F = 0; F < n * count; ++F) {
        for (int i = r, rest = F; i >= 0; --i, rest /= n) all[static_cast<std::size_t>(i)] = rest % n;
        std::vector<int> perm = all;
        std::sort(perm.begin(), perm.end());
        double sum = 0;
        int terms = 0;
        do {
            sum += nab[static_cast<std::size_t>(flat(perm))];
            ++terms;
        } while (std::next_permutation(perm.begin(), perm.end()));
        worst = std::max(worst, std::abs(sum / terms));
    }
    return worst / scale;
}

}  // namespace

TEST_CASE("catalog") {
    const auto names = catalog_names();
    CHECK(names.size() == 12);
    CHECK(std::find(names.begin(), names.end(), "sphere2-proj") != names.end());

    const auto flat = builtin_config("flat2");
    CHECK(flat.n == 2);
    CHECK(flat.metric.empty());
    REQUIRE(flat.connection.size() == 8);
    CHECK(std::all_of(flat.connection.begin(), flat.connection.end(), [](const auto& s) { return s == "0"; }));

    const auto sphere = builtin_config("sphere2");
    REQUIRE(sphere.metric.size() == 4);
    CHECK(sphere.metric[0] == "4/(1+x^2+y^2)^2");
    CHECK(sphere.metric[1] == "0");
    CHECK(sphere.upsilon.empty());

    const auto proj = builtin_config("sphere2-proj");
    CHECK(proj.upsilon.size() == 2);
    CHECK(proj.catalog_base == "sphere2");

    const auto hyp = builtin_config("hyperbolic2");
    CHECK(hyp.box.hi[0] == doctest::Approx(0.6));
    CHECK_THROWS_AS(builtin_config("torus"), ConfigError);
    CHECK_THROWS_AS(resolve_geometry("torus"), ConfigError);

    CHECK(flat_killing_count(2, 1) == 3);
    CHECK(flat_killing_count(2, 2) == 6);
    CHECK(flat_killing_count(2, 3) == 10);
    CHECK(flat_killing_count(3, 1) == 6);
    CHECK(flat_killing_count(3, 2) == 20);
}

TEST_CASE("configuration files") {
    const auto c = parse_config(R"j({"name": "cone", "coordinates": ["u", "v"],
        "metric": [["1 + u^2", "0"], ["0", "exp(v)"]], "upsilon": ["0", "u"], "box": 0.5, "jet_order": 7})j");
    CHECK(c.name == "cone");
    CHECK(c.n == 2);
    CHECK(c.coordinates == std::vector<std::string>{"u", "v"});
    CHECK(c.metric[3] == "exp(v)");
    CHECK(c.box.lo[1] == doctest::Approx(-0.5));
    CHECK(c.jet_order == 7);

    // numbers are accepted; the dimension is inferred
    const auto d = parse_config(R"j({"metric": [[1, 0, 0], [0, 1, 0], [0, 0, "1+z^2"]]})j");
    CHECK(d.n == 3);
    CHECK(d.coordinates.back() == "z");

    // symmetric up to rewriting
    CHECK_NOTHROW(parse_config(R"j({"metric": [["1", "x*y"], ["y*x", "1"]]})j"));

    const std::string asym = config_error(R"j({"metric": [["1", "x"], ["0", "1"]]})j");
    CHECK(contains(asym, "not symmetric"));
    const std::string conn = config_error(R"j({"connection": [[["0","0"],["x","0"]],[["0","0"],["0","0"]]]})j");
    CHECK(contains(conn, "not symmetric"));

    const std::string syntax = config_error("{\"metric\": [[1, 0], [0, 1]]");
    CHECK(contains(syntax, "syntax error at byte"));
    const std::string unknown = config_error(R"j({"metric": [[1, 0], [0, 1]], "signature": 2})j");
    CHECK(contains(unknown, "unknown field 'signature'"));
    const std::string both =
        config_error(R"j({"metric": [[1, 0], [0, 1]], "connection": [[[0,0],[0,0]],[[0,0],[0,0]]]})j");
    CHECK(contains(both, "exactly one"));
    CHECK(contains(config_error(R"j({"name": "none"})j"), "exactly one"));
    const std::string shape = config_error(R"j({"metric": [[1, 0], [0]]})j");
    CHECK(contains(shape, "metric[1]"));
    const std::string name = config_error(R"j({"metric": [["1", "0"], ["0", "1+q"]]})j");
    CHECK(contains(name, "metric[1][1]"));
    const std::string expr = config_error(R"j({"metric": [["1", "0"], ["0", "1+*x"]]})j");
    CHECK(contains(expr, "metric[1][1]"));
    CHECK(contains(config_error(R"j({"metric": [[1, 0], [0, 1]], "box": "wide"})j"), "box"));
    CHECK(contains(config_error(R"j({"metric": [[1, 0], [0, 1]], "upsilon": [0]})j"), "upsilon"));

    CHECK_THROWS_AS(load_config("/nonexistent/geometry.json"), ConfigError);
}

TEST_CASE("known solutions are Killing tensors of the catalog metrics") {
    std::mt19937 rng(11);
    for (const std::string name : {"sphere2", "hyperbolic2", "liouville", "perturbed2"}) {
        const auto cfg = builtin_config(name);
        std::uniform_real_distribution<double> u(cfg.box.lo[0] * 0.9, cfg.box.hi[0] * 0.9);
        for (int r = 1; r <= 2; ++r)
            for (const auto& s : known_solutions(cfg, r))
                for (int p = 0; p < 4; ++p) {
                    const std::vector<double> x{u(rng), u(rng)};
                    const double defect = killing_defect_fd(cfg, s, x);
                    INFO(name << " " << s.label << " at " << x[0] << ", " << x[1]);
                    CHECK(defect < 1e-9);
                }
    }
    // control: a rotation is not Killing for the Liouville metric
    const auto lv = builtin_config("liouville");
    CHECK(killing_defect_fd(lv, KnownSolution{"rotation", 1, {"-y*((1+x^2)+(1+y^4))", "x*((1+x^2)+(1+y^4))"}},
                            {0.3, 0.4}) > 1e-2);
    CHECK(known_solutions(lv, 1).empty());
    CHECK(expected_dimension(builtin_config("flat3"), 2) == 20);
    CHECK(expected_dimension(builtin_config("perturbed2"), 1) == 0);
    CHECK_FALSE(expected_dimension(lv, 1).has_value());
}

TEST_CASE("commands") {
    RunOptions opt;
    opt.geometries = {"flat2"};
    opt.points = 3;
    CHECK_THROWS_AS(run_command("make-coffee", opt), PreconditionError);
    RunOptions bad = opt;
    bad.loops = 4;
    CHECK_THROWS_AS(run_command("holonomy-dim", bad), PreconditionError);
    RunOptions missing = opt;
    missing.geometries = {"nowhere.json"};
    CHECK_THROWS_AS(run_command("verify-identities", missing), ConfigError);

    SUBCASE("identities are deterministic") {
        const RunReport a = run_command("verify-identities", opt);
        const RunReport b = run_command("verify-identities", opt);
        CHECK(a.passed());
        CHECK(exit_code(a) == 0);
        CHECK(a.jsonl() == b.jsonl());
        CHECK(find(a, "projective.killing_operator") != nullptr);
        std::istringstream lines(a.jsonl());
        std::string line;
        int count = 0;
        while (std::getline(lines, line)) {
            const auto j = nlohmann::ordered_json::parse(line);
            CHECK(j.begin().key() == "check");
            CHECK(j.contains("pass"));
            CHECK(j["seed"].is_number_unsigned());
            ++count;
        }
        CHECK(count == static_cast<int>(a.records.size()));
        CHECK(contains(a.summary(), std::to_string(count) + "/" + std::to_string(count) + " checks passed"));
    }

    SUBCASE("holonomy dimension of flat2 rank 2") {
        RunOptions h = opt;
        h.ranks = {2};
        h.steps = 64;
        const RunReport rep = run_command("holonomy-dim", h);
        const CheckRecord* dim = find(rep, "holonomy.dimension", 2);
        REQUIRE(dim != nullptr);
        CHECK(dim->result == 6);
        CHECK(dim->pass);
    }

    SUBCASE("prolongation residual on the Liouville metric") {
        RunOptions p = opt;
        p.geometries = {"liouville"};
        p.ranks = {2};
        const RunReport rep = run_command("prolong-residual", p);
        CHECK(rep.passed());
        const CheckRecord* res = find(rep, "prolong.connection_residual", 2);
        REQUIRE(res != nullptr);
        CHECK(res->result < 1e-8);
        const CheckRecord* ctrl = find(rep, "prolong.non_solution", 2);
        REQUIRE(ctrl != nullptr);
        CHECK(ctrl->result > 1e-3);
    }

    SUBCASE("flat-check on a projectively curved geometry") {
        RunOptions f = opt;
        f.geometries = {"liouville"};
        const RunReport named = run_command("flat-check", f);
        CHECK_FALSE(named.passed());
        CHECK(exit_code(named) == 1);
        f.geometries = {};
        f.ranks = {1};
        const RunReport all = run_command("flat-check", f);
        CHECK(all.passed());
        CHECK(std::any_of(all.skipped.begin(), all.skipped.end(),
                          [](const std::string& s) { return s.rfind("liouville", 0) == 0; }));
        // constant curvature is projectively flat
        f.geometries = {"sphere2"};
        CHECK(run_command("flat-check", f).passed());
    }

    SUBCASE("tolerance scale") {
        RunOptions t = opt;
        t.tol_scale = 1e-30;
        const RunReport rep = run_command("verify-identities", t);
        CHECK_FALSE(rep.passed());
    }

    SUBCASE("configuration file geometry") {
        const std::string path = "test_cli_geometry.json";
        {
            std::ofstream out(path);
            out << R"j({"name": "bump", "metric": [["1+0.2*x^2", "0"], ["0", "1+0.2*x^2"]], "box": 0.5})j";
        }
        RunOptions c = opt;
        c.geometries = {path};
        const RunReport rep = run_command("verify-identities", c);
        std::remove(path.c_str());
        CHECK(rep.passed());
        REQUIRE_FALSE(rep.records.empty());
        CHECK(rep.records.front().geometry == "bump");
    }
}
