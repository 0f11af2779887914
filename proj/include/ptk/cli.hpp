#pragma once

// Geometry catalog, configuration files and batch verification commands.
// The configuration schema and the report format are described in docs/config.md.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ptk/geometry.hpp"
#include "ptk/killing.hpp"
#include "ptk/transport.hpp"

namespace ptk {

struct GeometryConfig {
    std::string name;
    int n = 0;
    std::vector<std::string> coordinates;
    std::vector<std::string> metric;      // n^2 expressions, g_ab at a*n + b; empty when a connection is given
    std::vector<std::string> connection;  // n^3 expressions, Gamma_ab^c at (a*n + b)*n + c
    std::vector<std::string> upsilon;     // optional projective change, n expressions
    Box box;
    int jet_order = 0;                    // 0: use the command default
    std::string catalog_base;             // catalog entry this config derives from, if any
};

/// A known solution of the Killing-type equation of rank r: unweighted lowered components.
struct KnownSolution {
    std::string label;
    int r = 1;
    std::vector<std::string> components;
};

/// Names of the built-in geometries, each followed by its "-proj" variant.
std::vector<std::string> catalog_names();
/// Raises ConfigError for an unknown name.
GeometryConfig builtin_config(const std::string& name);
/// JSON text; errors carry byte offsets (syntax) or the offending field (schema, expressions).
GeometryConfig parse_config(std::string_view text, const std::string& origin = "<config>");
GeometryConfig load_config(const std::string& path);
/// Catalog name, or a path to a configuration file.
GeometryConfig resolve_geometry(const std::string& name_or_path);

AffineStructure build_structure(const GeometryConfig& cfg);

/// Solutions known in closed form for catalog geometries (none for user configurations).
/// Valid for the projectively changed variants after density lifting.
std::vector<KnownSolution> known_solutions(const GeometryConfig& cfg, int r);
/// Dimension of the solution space when it is known independently.
std::optional<int> expected_dimension(const GeometryConfig& cfg, int r);
/// Number of Killing tensors of rank r on flat n-space,
/// (n+r-1)! (n+r)! / (r! (r+1)! (n-1)! n!).
int flat_killing_count(int n, int r);

struct CheckRecord {
    std::string check;
    std::string anchor;  // the identity or property being checked
    std::string geometry;
    int rank = 0;        // 0 when the check does not depend on a rank
    double result = 0;
    bool integer_result = false;
    double tolerance = 0;
    std::string comparison;  // "<", ">", "==", "in"
    double upper = 0;        // upper end for "in"
    bool pass = false;
    std::uint64_t seed = 0;
    std::string note;
};

struct RunOptions {
    std::vector<std::string> geometries;  // empty: every catalog geometry the command applies to
    std::vector<int> ranks;               // empty: command default
    int points = 20;
    int loops = 8;
    int steps = 200;
    std::uint64_t seed = 1;
    int jet_order = 6;
    double tol_scale = 1.0;
};

struct RunReport {
    std::string command;
    std::vector<CheckRecord> records;
    std::vector<std::string> skipped;  // "<geometry>: <reason>" for checks that do not apply

    bool passed() const;
    /// One JSON object per line, in record order.
    std::string jsonl() const;
    std::string summary() const;
};

std::vector<std::string> command_names();
/// Raises PreconditionError for an unknown command or when nothing applies; module errors
/// are recorded as failing checks.
RunReport run_command(const std::string& command, const RunOptions& opt);
/// 0 when every check passes, 1 otherwise.
int exit_code(const RunReport& report);

}  // namespace ptk
