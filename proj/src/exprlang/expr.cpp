#include "ptk/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <functional>

#include "ptk/errors.hpp"

namespace ptk {

namespace {

enum class Tok { number, ident, op, lparen, rparen, comma, end };

struct Token {
    Tok kind;
    std::size_t pos;
    std::string_view text;
    double value = 0.0;
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) { advance(); }

    const Token& peek() const { return cur_; }
    Token take() {
        Token t = cur_;
        advance();
        return t;
    }

private:
    void advance() {
        while (i_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[i_]))) ++i_;
        const std::size_t start = i_;
        if (i_ >= src_.size()) {
            cur_ = {Tok::end, start, {}};
            return;
        }
        const char c = src_[i_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            double v = 0.0;
            auto [p, ec] = std::from_chars(src_.data() + i_, src_.data() + src_.size(), v,
                                           std::chars_format::general);
            if (ec != std::errc()) throw SyntaxError("malformed number", start);
            i_ = static_cast<std::size_t>(p - src_.data());
            cur_ = {Tok::number, start, src_.substr(start, i_ - start), v};
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            while (i_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[i_])) || src_[i_] == '_'))
                ++i_;
            cur_ = {Tok::ident, start, src_.substr(start, i_ - start)};
            return;
        }
        ++i_;
        switch (c) {
            case '+': case '-': case '*': case '/': case '^':
                cur_ = {Tok::op, start, src_.substr(start, 1)};
                return;
            case '(': cur_ = {Tok::lparen, start, src_.substr(start, 1)}; return;
            case ')': cur_ = {Tok::rparen, start, src_.substr(start, 1)}; return;
            case ',': cur_ = {Tok::comma, start, src_.substr(start, 1)}; return;
            default: throw SyntaxError(std::string("unexpected character '") + c + "'", start);
        }
    }

    std::string_view src_;
    std::size_t i_ = 0;
    Token cur_{Tok::end, 0, {}};
};

struct BinOp {
    NodeKind kind;
    int prec;
    bool right;
};

bool binary_op(const Token& t, BinOp& out) {
    if (t.kind != Tok::op) return false;
    switch (t.text[0]) {
        case '+': out = {NodeKind::add, 1, false}; return true;
        case '-': out = {NodeKind::sub, 1, false}; return true;
        case '*': out = {NodeKind::mul, 2, false}; return true;
        case '/': out = {NodeKind::div, 2, false}; return true;
        case '^': out = {NodeKind::pow, 4, true}; return true;
    }
    return false;
}

// Unary minus sits between * / and ^: -x^2 is -(x^2), 2*-x is allowed.
constexpr int kUnaryPrec = 3;

NodePtr make(NodeKind k, std::size_t pos, std::vector<NodePtr> args = {}) {
    auto n = std::make_shared<ExprNode>();
    n->kind = k;
    n->pos = pos;
    n->args = std::move(args);
    return n;
}

class Parser {
public:
    Parser(std::string_view src, const std::vector<std::string>& coords)
        : lex_(src), coords_(coords) {}

    NodePtr parse_all() {
        if (lex_.peek().kind == Tok::end) throw SyntaxError("empty expression", 0);
        NodePtr e = expression(0);
        const Token& t = lex_.peek();
        if (t.kind == Tok::rparen) throw SyntaxError("unbalanced ')'", t.pos);
        if (t.kind != Tok::end) throw SyntaxError("unexpected trailing input", t.pos);
        return e;
    }

private:
    NodePtr expression(int min_prec) {
        NodePtr lhs = unary();
        BinOp op{};
        while (binary_op(lex_.peek(), op) && op.prec >= min_prec) {
            const Token t = lex_.take();
            const int next = op.right ? op.prec : op.prec + 1;
            NodePtr rhs = op.kind == NodeKind::pow ? exponent() : expression(next);
            lhs = make(op.kind, t.pos, {lhs, rhs});
        }
        return lhs;
    }

    // Right operand of ^: may itself start with a unary minus (2^-1).
    NodePtr exponent() {
        const Token& t = lex_.peek();
        if (t.kind == Tok::op && (t.text[0] == '-' || t.text[0] == '+')) {
            const Token s = lex_.take();
            NodePtr inner = exponent();
            return s.text[0] == '-' ? make(NodeKind::neg, s.pos, {inner}) : inner;
        }
        return expression(4);
    }

    NodePtr unary() {
        const Token& t = lex_.peek();
        if (t.kind == Tok::op && (t.text[0] == '-' || t.text[0] == '+')) {
            const Token s = lex_.take();
            NodePtr inner = expression(kUnaryPrec + 1);
            // a unary operand may itself begin with a sign: --x
            return s.text[0] == '-' ? make(NodeKind::neg, s.pos, {inner}) : inner;
        }
        return primary();
    }

    NodePtr primary() {
        const Token t = lex_.take();
        switch (t.kind) {
            case Tok::number: {
                auto n = make(NodeKind::number, t.pos);
                std::const_pointer_cast<ExprNode>(n)->value = t.value;
                return n;
            }
            case Tok::ident: return identifier(t);
            case Tok::lparen: {
                NodePtr e = expression(0);
                const Token& close = lex_.peek();
                if (close.kind != Tok::rparen) throw SyntaxError("expected ')'", close.pos);
                lex_.take();
                return e;
            }
            case Tok::end: throw SyntaxError("missing operand", t.pos);
            default: throw SyntaxError("unexpected '" + std::string(t.text) + "'", t.pos);
        }
    }

    NodePtr identifier(const Token& t) {
        static const std::pair<std::string_view, Func> funcs[] = {
            {"sin", Func::sin}, {"cos", Func::cos},   {"exp", Func::exp},
            {"log", Func::log}, {"sqrt", Func::sqrt}, {"pow", Func::pow}};
        for (std::size_t i = 0; i < coords_.size(); ++i) {
            if (coords_[i] == t.text) {
                auto n = make(NodeKind::variable, t.pos);
                std::const_pointer_cast<ExprNode>(n)->var = static_cast<int>(i);
                return n;
            }
        }
        for (const auto& [name, fn] : funcs) {
            if (name != t.text) continue;
            if (lex_.peek().kind != Tok::lparen)
                throw SyntaxError("expected '(' after function name", lex_.peek().pos);
            lex_.take();
            std::vector<NodePtr> args{expression(0)};
            if (fn == Func::pow) {
                if (lex_.peek().kind != Tok::comma) throw SyntaxError("expected ','", lex_.peek().pos);
                lex_.take();
                args.push_back(expression(0));
            }
            if (lex_.peek().kind != Tok::rparen) throw SyntaxError("expected ')'", lex_.peek().pos);
            lex_.take();
            auto n = make(NodeKind::call, t.pos, std::move(args));
            std::const_pointer_cast<ExprNode>(n)->fn = fn;
            return n;
        }
        throw NameError(std::string(t.text), t.pos);
    }

    Lexer lex_;
    const std::vector<std::string>& coords_;
};

template <class T, class Ops>
T evaluate(const ExprNode& n, const Ops& ops) {
    try {
        switch (n.kind) {
            case NodeKind::number: return ops.constant(n.value);
            case NodeKind::variable: return ops.variable(n.var);
            case NodeKind::neg: return -evaluate<T>(*n.args[0], ops);
            case NodeKind::add: return evaluate<T>(*n.args[0], ops) + evaluate<T>(*n.args[1], ops);
            case NodeKind::sub: return evaluate<T>(*n.args[0], ops) - evaluate<T>(*n.args[1], ops);
            case NodeKind::mul: return evaluate<T>(*n.args[0], ops) * evaluate<T>(*n.args[1], ops);
            case NodeKind::div: return ops.div(evaluate<T>(*n.args[0], ops), evaluate<T>(*n.args[1], ops));
            case NodeKind::pow: return ops.pow(evaluate<T>(*n.args[0], ops), evaluate<T>(*n.args[1], ops));
            case NodeKind::call: {
                T a = evaluate<T>(*n.args[0], ops);
                switch (n.fn) {
                    case Func::sin: return ops.sin(a);
                    case Func::cos: return ops.cos(a);
                    case Func::exp: return ops.exp(a);
                    case Func::log: return ops.log(a);
                    case Func::sqrt: return ops.sqrt(a);
                    case Func::pow: return ops.pow(a, evaluate<T>(*n.args[1], ops));
                }
            }
        }
    } catch (const DomainError& e) {
        if (e.position() >= 0) throw;
        throw DomainError(std::string(e.what()) + " at offset " + std::to_string(n.pos),
                          static_cast<std::ptrdiff_t>(n.pos));
    } catch (const SingularityError& e) {
        throw DomainError(std::string(e.what()) + " at offset " + std::to_string(n.pos),
                          static_cast<std::ptrdiff_t>(n.pos));
    }
    throw DomainError("unknown node", static_cast<std::ptrdiff_t>(n.pos));
}

struct RealOps {
    std::span<const double> x;
    double constant(double v) const { return v; }
    double variable(int i) const { return x[i]; }
    double div(double a, double b) const { return scalar::div(a, b); }
    double pow(double a, double b) const { return scalar::pow(a, b); }
    double sin(double a) const { return std::sin(a); }
    double cos(double a) const { return std::cos(a); }
    double exp(double a) const { return std::exp(a); }
    double log(double a) const { return scalar::log(a); }
    double sqrt(double a) const { return scalar::sqrt(a); }
};

struct JetOps {
    std::span<const Jet> x;
    Jet constant(double v) const { return Jet::constant(x[0].dim(), x[0].order(), v); }
    Jet variable(int i) const { return x[i]; }
    Jet div(const Jet& a, const Jet& b) const { return a / b; }
    Jet pow(const Jet& a, const Jet& b) const { return ptk::pow(a, b); }
    Jet sin(const Jet& a) const { return ptk::sin(a); }
    Jet cos(const Jet& a) const { return ptk::cos(a); }
    Jet exp(const Jet& a) const { return ptk::exp(a); }
    Jet log(const Jet& a) const { return ptk::log(a); }
    Jet sqrt(const Jet& a) const { return ptk::sqrt(a); }
};

std::string number_text(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

bool is_additive(NodeKind k) { return k == NodeKind::add || k == NodeKind::sub; }
bool is_multiplicative(NodeKind k) { return k == NodeKind::mul || k == NodeKind::div; }

void render(const ExprNode& n, const std::vector<std::string>& coords, std::string& out) {
    auto wrapped = [&](const ExprNode& c, bool paren) {
        if (paren) out += '(';
        render(c, coords, out);
        if (paren) out += ')';
    };
    switch (n.kind) {
        case NodeKind::number: out += number_text(n.value); return;
        case NodeKind::variable: out += coords[n.var]; return;
        case NodeKind::neg: {
            const NodeKind k = n.args[0]->kind;
            out += '-';
            wrapped(*n.args[0], is_additive(k) || is_multiplicative(k) || k == NodeKind::neg);
            return;
        }
        case NodeKind::add:
        case NodeKind::sub: {
            wrapped(*n.args[0], false);
            out += n.kind == NodeKind::add ? " + " : " - ";
            wrapped(*n.args[1], is_additive(n.args[1]->kind));
            return;
        }
        case NodeKind::mul:
        case NodeKind::div: {
            const NodeKind l = n.args[0]->kind, r = n.args[1]->kind;
            wrapped(*n.args[0], is_additive(l));
            out += n.kind == NodeKind::mul ? "*" : "/";
            wrapped(*n.args[1], is_additive(r) || is_multiplicative(r));
            return;
        }
        case NodeKind::pow: {
            const NodeKind b = n.args[0]->kind;
            wrapped(*n.args[0], !(b == NodeKind::number || b == NodeKind::variable || b == NodeKind::call));
            out += '^';
            const NodeKind e = n.args[1]->kind;
            // the exponent binds a full unary-or-power chain, anything looser needs parentheses
            wrapped(*n.args[1], is_additive(e) || is_multiplicative(e));
            return;
        }
        case NodeKind::call: {
            static const char* names[] = {"sin", "cos", "exp", "log", "sqrt", "pow"};
            out += names[static_cast<int>(n.fn)];
            out += '(';
            render(*n.args[0], coords, out);
            if (n.fn == Func::pow) {
                out += ", ";
                render(*n.args[1], coords, out);
            }
            out += ')';
            return;
        }
    }
}

}  // namespace

Expr parse(std::string_view src, const std::vector<std::string>& coordinate_names) {
    Parser p(src, coordinate_names);
    return Expr(p.parse_all(), coordinate_names);
}

double eval_expr(const Expr& e, std::span<const double> point) {
    if (static_cast<int>(point.size()) != e.dim())
        throw ShapeError("point dimension " + std::to_string(point.size()) +
                         " does not match expression coordinates " + std::to_string(e.dim()));
    return evaluate<double>(e.root(), RealOps{point});
}

Jet eval_expr_jet(const Expr& e, std::span<const Jet> coords) {
    if (static_cast<int>(coords.size()) != e.dim() || coords.empty())
        throw ShapeError("coordinate jets do not match expression coordinates");
    return evaluate<Jet>(e.root(), JetOps{coords});
}

Jet eval_expr_jet(const Expr& e, std::span<const double> base_point, int order) {
    if (static_cast<int>(base_point.size()) != e.dim())
        throw ShapeError("point dimension does not match expression coordinates");
    const auto xs = coordinate_jets(base_point, order);
    return eval_expr_jet(e, xs);
}

ScalarField as_field(const Expr& e) {
    return ScalarField([e](std::span<const Jet> x) { return eval_expr_jet(e, x); });
}

std::string to_string(const Expr& e) {
    std::string out;
    render(e.root(), e.coordinates(), out);
    return out;
}

bool structurally_equal(const ExprNode& a, const ExprNode& b) {
    if (a.kind != b.kind || a.args.size() != b.args.size()) return false;
    switch (a.kind) {
        case NodeKind::number:
            if (a.value != b.value) return false;
            break;
        case NodeKind::variable:
            if (a.var != b.var) return false;
            break;
        case NodeKind::call:
            if (a.fn != b.fn) return false;
            break;
        default: break;
    }
    for (std::size_t i = 0; i < a.args.size(); ++i)
        if (!structurally_equal(*a.args[i], *b.args[i])) return false;
    return true;
}

}  // namespace ptk
