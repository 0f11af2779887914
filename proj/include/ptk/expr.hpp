#pragma once

// Scalar-field expressions over named chart coordinates.
// Grammar and precedence are described in docs/expressions.md.

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ptk/jet.hpp"

namespace ptk {

enum class NodeKind { number, variable, neg, add, sub, mul, div, pow, call };
enum class Func { sin, cos, exp, log, sqrt, pow };

struct ExprNode {
    NodeKind kind;
    std::size_t pos = 0;  // byte offset of the token that produced the node
    double value = 0.0;   // number
    int var = -1;         // variable: coordinate index
    Func fn = Func::sin;  // call
    std::vector<std::shared_ptr<const ExprNode>> args;
};

using NodePtr = std::shared_ptr<const ExprNode>;

class Expr {
public:
    Expr(NodePtr root, std::vector<std::string> coords)
        : root_(std::move(root)), coords_(std::move(coords)) {}

    const ExprNode& root() const { return *root_; }
    const NodePtr& root_ptr() const { return root_; }
    const std::vector<std::string>& coordinates() const { return coords_; }
    int dim() const { return static_cast<int>(coords_.size()); }

private:
    NodePtr root_;
    std::vector<std::string> coords_;
};

Expr parse(std::string_view src, const std::vector<std::string>& coordinate_names);

double eval_expr(const Expr& e, std::span<const double> point);
Jet eval_expr_jet(const Expr& e, std::span<const double> base_point, int order);
/// Evaluate with the coordinates already given as jets.
Jet eval_expr_jet(const Expr& e, std::span<const Jet> coords);

/// The expression as a jet-evaluable field.
ScalarField as_field(const Expr& e);

/// Minimal-parenthesis rendering that reparses to the same tree.
std::string to_string(const Expr& e);

bool structurally_equal(const ExprNode& a, const ExprNode& b);

}  // namespace ptk
