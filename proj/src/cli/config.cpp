#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "json.hpp"
#include "ptk/cli.hpp"
#include "ptk/errors.hpp"
#include "ptk/expr.hpp"

namespace ptk {

namespace {

using json = nlohmann::json;

constexpr const char* proj_suffix = "-proj";

std::vector<std::string> default_coords(int n) {
    static const std::vector<std::string> names{"x", "y", "z", "w"};
    if (n < 1 || n > 4) throw ConfigError("dimension must be between 1 and 4 without explicit coordinates");
    return {names.begin(), names.begin() + n};
}

std::vector<std::string> diagonal(int n, const std::string& f) {
    std::vector<std::string> g(static_cast<std::size_t>(n * n), "0");
    for (int a = 0; a < n; ++a) g[static_cast<std::size_t>(a * n + a)] = f;
    return g;
}

GeometryConfig base_entry(const std::string& name) {
    GeometryConfig c;
    c.name = name;
    c.catalog_base = name;
    if (name == "flat2" || name == "flat3") {
        c.n = name == "flat2" ? 2 : 3;
        c.connection.assign(static_cast<std::size_t>(c.n * c.n * c.n), "0");
    } else if (name == "sphere2") {
        c.n = 2;
        c.metric = diagonal(2, "4/(1+x^2+y^2)^2");
    } else if (name == "hyperbolic2") {
        c.n = 2;
        c.metric = diagonal(2, "4/(1-x^2-y^2)^2");
    } else if (name == "liouville") {
        c.n = 2;
        c.metric = diagonal(2, "(1+x^2)+(1+y^4)");
    } else if (name == "perturbed2") {
        c.n = 2;
        c.metric = diagonal(2, "1+0.3*x^2*y");
    } else {
        throw ConfigError("unknown catalog geometry '" + name + "'");
    }
    c.coordinates = default_coords(c.n);
    // the disk chart of the hyperbolic plane ends at radius 1
    c.box = Box::cube(c.n, name == "hyperbolic2" ? 0.6 : 0.8);
    return c;
}

void check_expr(const std::string& src, const std::vector<std::string>& coords, const std::string& field) {
    try {
        parse(src, coords);
    } catch (const Error& e) {
        throw ConfigError(field + ": " + e.what());
    }
}

std::vector<std::string> string_list(const json& j, const std::string& field) {
    if (!j.is_array()) throw ConfigError(field + ": expected an array");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto& v = j[i];
        const std::string f = field + "[" + std::to_string(i) + "]";
        if (v.is_string()) out.push_back(v.get<std::string>());
        else if (v.is_number()) {
            std::ostringstream os;
            os.precision(17);
            os << v.get<double>();
            out.push_back(os.str());
        } else
            throw ConfigError(f + ": expected an expression string or a number");
    }
    return out;
}

// Nested arrays of the given depth and extent n, flattened row-major.
std::vector<std::string> nested(const json& j, int depth, int n, const std::string& field) {
    if (depth == 1) {
        auto v = string_list(j, field);
        if (static_cast<int>(v.size()) != n)
            throw ConfigError(field + ": expected " + std::to_string(n) + " entries, got " + std::to_string(v.size()));
        return v;
    }
    if (!j.is_array() || static_cast<int>(j.size()) != n)
        throw ConfigError(field + ": expected an array of " + std::to_string(n) + " entries");
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) {
        auto part = nested(j[static_cast<std::size_t>(i)], depth - 1, n, field + "[" + std::to_string(i) + "]");
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

// Two expressions agree when they parse to the same tree or evaluate equally at sample points of the box.
bool same_function(const std::string& a, const std::string& b, const GeometryConfig& c) {
    const Expr ea = parse(a, c.coordinates), eb = parse(b, c.coordinates);
    if (structurally_equal(ea.root(), eb.root())) return true;
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int s = 0; s < 8; ++s) {
        std::vector<double> x(static_cast<std::size_t>(c.n));
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = c.box.lo[i] + (c.box.hi[i] - c.box.lo[i]) * u(rng);
        double va = 0, vb = 0;
        try {
            va = eval_expr(ea, x);
            vb = eval_expr(eb, x);
        } catch (const Error&) {
            continue;
        }
        if (std::abs(va - vb) > 1e-12 * std::max(1.0, std::max(std::abs(va), std::abs(vb)))) return false;
    }
    return true;
}

void validate(const GeometryConfig& c) {
    const int n = c.n;
    if (c.metric.empty() == c.connection.empty())
        throw ConfigError(c.name + ": exactly one of 'metric' and 'connection' must be given");
    if (static_cast<int>(c.box.lo.size()) != n || static_cast<int>(c.box.hi.size()) != n)
        throw ConfigError(c.name + ": box must have " + std::to_string(n) + " intervals");
    for (int i = 0; i < n; ++i)
        if (!(c.box.lo[static_cast<std::size_t>(i)] < c.box.hi[static_cast<std::size_t>(i)]))
            throw ConfigError(c.name + ": box interval " + std::to_string(i) + " is empty");
    const auto N = static_cast<std::size_t>(n);
    for (std::size_t i = 0; i < c.metric.size(); ++i)
        check_expr(c.metric[i], c.coordinates, "metric[" + std::to_string(i / N) + "][" + std::to_string(i % N) + "]");
    for (std::size_t i = 0; i < c.connection.size(); ++i)
        check_expr(c.connection[i], c.coordinates,
                   "connection[" + std::to_string(i / (N * N)) + "][" + std::to_string(i / N % N) + "][" + std::to_string(i % N) + "]");
    for (std::size_t i = 0; i < c.upsilon.size(); ++i)
        check_expr(c.upsilon[i], c.coordinates, "upsilon[" + std::to_string(i) + "]");
    if (!c.upsilon.empty() && static_cast<int>(c.upsilon.size()) != n)
        throw ConfigError(c.name + ": upsilon needs " + std::to_string(n) + " components");
    if (!c.metric.empty())
        for (std::size_t a = 0; a < N; ++a)
            for (std::size_t b = a + 1; b < N; ++b)
                if (!same_function(c.metric[a * N + b], c.metric[b * N + a], c))
                    throw ConfigError(c.name + ": metric is not symmetric: g[" + std::to_string(a) + "][" +
                                      std::to_string(b) + "] differs from g[" + std::to_string(b) + "][" +
                                      std::to_string(a) + "]");
    if (!c.connection.empty())
        for (std::size_t a = 0; a < N; ++a)
            for (std::size_t b = a + 1; b < N; ++b)
                for (std::size_t k = 0; k < N; ++k)
                    if (!same_function(c.connection[(a * N + b) * N + k], c.connection[(b * N + a) * N + k], c))
                        throw ConfigError(c.name + ": connection is not symmetric in its lower indices at [" +
                                          std::to_string(a) + "][" + std::to_string(b) + "][" + std::to_string(k) +
                                          "]");
    if (c.jet_order < 0) throw ConfigError(c.name + ": jet_order must be positive");
}

std::vector<ScalarField> fields(const std::vector<std::string>& src, const std::vector<std::string>& coords) {
    std::vector<ScalarField> out;
    out.reserve(src.size());
    for (const auto& s : src) out.push_back(as_field(parse(s, coords)));
    return out;
}

}  // namespace

std::vector<std::string> catalog_names() {
    std::vector<std::string> out;
    for (const char* b : {"flat2", "flat3", "sphere2", "hyperbolic2", "liouville", "perturbed2"}) {
        out.emplace_back(b);
        out.push_back(std::string(b) + proj_suffix);
    }
    return out;
}

GeometryConfig builtin_config(const std::string& name) {
    const std::string suffix = proj_suffix;
    if (name.size() > suffix.size() && name.ends_with(suffix)) {
        GeometryConfig c = base_entry(name.substr(0, name.size() - suffix.size()));
        c.name = name;
        // Upsilon = x dy
        c.upsilon.assign(static_cast<std::size_t>(c.n), "0");
        c.upsilon[1] = "x";
        return c;
    }
    return base_entry(name);
}

GeometryConfig parse_config(std::string_view text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(origin + ": syntax error at byte " + std::to_string(e.byte) + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError(origin + ": top level must be an object");
    static const std::vector<std::string> known{"name", "dimension", "coordinates", "metric",
                                                "connection", "upsilon", "box", "jet_order"};
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError(origin + ": unknown field '" + key + "'");
    const bool has_metric = j.contains("metric"), has_conn = j.contains("connection");
    if (has_metric == has_conn) throw ConfigError(origin + ": exactly one of 'metric' and 'connection' must be given");

    GeometryConfig c;
    c.name = j.value("name", std::string("custom"));
    if (j.contains("coordinates")) c.coordinates = string_list(j["coordinates"], "coordinates");
    if (j.contains("dimension")) {
        if (!j["dimension"].is_number_integer()) throw ConfigError(origin + ": dimension must be an integer");
        c.n = j["dimension"].get<int>();
    } else if (!c.coordinates.empty()) {
        c.n = static_cast<int>(c.coordinates.size());
    } else {
        const json& m = has_metric ? j["metric"] : j["connection"];
        if (!m.is_array()) throw ConfigError(origin + ": cannot infer the dimension");
        c.n = static_cast<int>(m.size());
    }
    if (c.n < 1) throw ConfigError(origin + ": dimension must be at least 1");
    if (c.coordinates.empty()) c.coordinates = default_coords(c.n);
    if (static_cast<int>(c.coordinates.size()) != c.n)
        throw ConfigError(origin + ": " + std::to_string(c.coordinates.size()) + " coordinate names for dimension " +
                          std::to_string(c.n));
    try {
        if (has_metric) c.metric = nested(j["metric"], 2, c.n, "metric");
        if (has_conn) c.connection = nested(j["connection"], 3, c.n, "connection");
        if (j.contains("upsilon")) c.upsilon = nested(j["upsilon"], 1, c.n, "upsilon");
    } catch (const ConfigError& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    c.box = Box::cube(c.n, 0.8);
    if (j.contains("box")) {
        const json& b = j["box"];
        if (b.is_number()) {
            c.box = Box::cube(c.n, b.get<double>());
        } else if (b.is_object() && b.contains("lo") && b.contains("hi") && b["lo"].is_array() && b["hi"].is_array()) {
            try {
                c.box.lo = b["lo"].get<std::vector<double>>();
                c.box.hi = b["hi"].get<std::vector<double>>();
            } catch (const json::exception&) {
                throw ConfigError(origin + ": box.lo and box.hi must be arrays of numbers");
            }
        } else {
            throw ConfigError(origin + ": box must be a half-width or {\"lo\": [...], \"hi\": [...]}");
        }
    }
    if (j.contains("jet_order")) {
        if (!j["jet_order"].is_number_integer()) throw ConfigError(origin + ": jet_order must be an integer");
        c.jet_order = j["jet_order"].get<int>();
    }
    try {
        validate(c);
    } catch (const ConfigError& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    return c;
}

GeometryConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open configuration file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

GeometryConfig resolve_geometry(const std::string& name_or_path) {
    const auto names = catalog_names();
    if (std::find(names.begin(), names.end(), name_or_path) != names.end()) return builtin_config(name_or_path);
    if (name_or_path.ends_with(".json") || name_or_path.find('/') != std::string::npos)
        return load_config(name_or_path);
    throw ConfigError("unknown geometry '" + name_or_path + "' (not a catalog name or a .json path)");
}

AffineStructure build_structure(const GeometryConfig& cfg) {
    AffineStructure A = cfg.metric.empty()
                            ? AffineStructure::from_connection(cfg.name, cfg.n, fields(cfg.connection, cfg.coordinates))
                            : AffineStructure::from_metric(cfg.name, cfg.n, fields(cfg.metric, cfg.coordinates));
    if (!cfg.upsilon.empty()) A = A.projective_change(fields(cfg.upsilon, cfg.coordinates), cfg.name);
    return A;
}

std::vector<KnownSolution> known_solutions(const GeometryConfig& cfg, int r) {
    const std::string& b = cfg.catalog_base;
    std::vector<KnownSolution> out;
    auto lowered = [](const std::string& lam, const std::string& u, const std::string& v) {
        return std::vector<std::string>{lam + "*(" + u + ")", lam + "*(" + v + ")"};
    };
    if (b == "flat2" || b == "flat3") {
        if (r == 1) {
            out.push_back({"rotation xy", 1, b == "flat2" ? std::vector<std::string>{"-y", "x"}
                                                          : std::vector<std::string>{"-y", "x", "0"}});
            out.push_back({"translation x", 1, b == "flat2" ? std::vector<std::string>{"1", "0"}
                                                            : std::vector<std::string>{"1", "0", "0"}});
        } else if (r == 2) {
            if (b == "flat2") {
                out.push_back({"rotation squared", 2, {"y^2", "-x*y", "-x*y", "x^2"}});
                out.push_back({"rotation times translation", 2, {"-2*y", "x", "x", "0"}});
            } else {
                out.push_back({"rotation squared", 2, {"y^2", "-x*y", "0", "-x*y", "x^2", "0", "0", "0", "0"}});
                out.push_back({"rotation yz times rotation xz", 2,
                               {"0", "-z^2", "y*z", "-z^2", "0", "x*z", "y*z", "x*z", "-2*x*y"}});
            }
        } else if (r == 3 && b == "flat2") {
            out.push_back({"rotation cubed", 3, {"-y^3", "x*y^2", "x*y^2", "-x^2*y", "x*y^2", "-x^2*y", "-x^2*y", "x^3"}});
        }
        return out;
    }
    if (b == "sphere2" || b == "hyperbolic2") {
        const bool sph = b == "sphere2";
        const std::string lam = sph ? "4/(1+x^2+y^2)^2" : "4/(1-x^2-y^2)^2";
        if (r == 1) {
            out.push_back({"rotation", 1, lowered(lam, "-y", "x")});
            if (sph) {
                out.push_back({"boost x", 1, lowered(lam, "0.5*(1+x^2-y^2)", "x*y")});
                out.push_back({"boost y", 1, lowered(lam, "x*y", "0.5*(1-x^2+y^2)")});
            } else {
                out.push_back({"boost x", 1, lowered(lam, "0.5*(1-x^2+y^2)", "-x*y")});
                out.push_back({"boost y", 1, lowered(lam, "-x*y", "0.5*(1+x^2-y^2)")});
            }
        } else if (r == 2) {
            out.push_back({"metric", 2, diagonal(2, lam)});
            const std::string l2 = "(" + lam + ")^2";
            out.push_back({"rotation squared", 2, {l2 + "*y^2", "-" + l2 + "*x*y", "-" + l2 + "*x*y", l2 + "*x^2"}});
        }
        return out;
    }
    if (b == "liouville") {
        if (r == 2) {
            out.push_back({"metric", 2, diagonal(2, "(1+x^2)+(1+y^4)")});
            out.push_back({"liouville integral", 2,
                           {"((1+x^2)+(1+y^4))*(1+y^4)", "0", "0", "-((1+x^2)+(1+y^4))*(1+x^2)"}});
        }
        return out;
    }
    if (b == "perturbed2") {
        if (r == 2) out.push_back({"metric", 2, diagonal(2, "1+0.3*x^2*y")});
        return out;
    }
    return out;
}

int flat_killing_count(int n, int r) {
    auto fact = [](int k) {
        double f = 1;
        for (int i = 2; i <= k; ++i) f *= i;
        return f;
    };
    return static_cast<int>(std::lround(fact(n + r - 1) * fact(n + r) / (fact(r) * fact(r + 1) * fact(n - 1) * fact(n))));
}

std::optional<int> expected_dimension(const GeometryConfig& cfg, int r) {
    const std::string& b = cfg.catalog_base;
    if (b == "flat2" || b == "flat3") return flat_killing_count(cfg.n, r);
    // constant curvature: maximal dimension
    if ((b == "sphere2" || b == "hyperbolic2") && r <= 2) return flat_killing_count(2, r);
    if (b == "perturbed2" && r == 1) return 0;
    if (b == "perturbed2" && r == 2) return 1;
    if (b == "liouville" && r == 2) return 2;
    return std::nullopt;
}

}  // namespace ptk
