#include "doctest.h"

#include <random>

#include "ptk/errors.hpp"
#include "ptk/expr.hpp"

using namespace ptk;

namespace {
const std::vector<std::string> xy{"x", "y"};

double ev(const std::string& s, std::vector<double> p, const std::vector<std::string>& c = xy) {
    return eval_expr(parse(s, c), p);
}
}  // namespace

TEST_CASE("precedence and associativity") {
    CHECK(ev("1+2*3", {}, {}) == 7.0);
    CHECK(ev("2*x + sin(y)", {1, 0}) == 2.0);
    CHECK(ev("x^2^3", {2, 0}) == 256.0);
    CHECK(ev("-x^2", {3, 0}) == -9.0);
    CHECK(ev("2^-1", {0, 0}) == 0.5);
    CHECK(ev("8/4/2", {0, 0}) == 1.0);
    CHECK(ev("1-2-3", {0, 0}) == -4.0);
    CHECK(ev("(1+2)*3", {0, 0}) == 9.0);
    CHECK(ev("2*-x", {1.5, 0}) == -3.0);
    CHECK(ev("pow(x, 3) - x*x*x", {1.1, 0}) == doctest::Approx(0.0));
    CHECK(ev("1.5e2 + .5", {0, 0}) == 150.5);
}

TEST_CASE("sphere conformal factor at the origin") {
    CHECK(ev("4/(1+x^2+y^2)^2", {0, 0}) == 4.0);
}

TEST_CASE("jet evaluation") {
    auto j = eval_expr_jet(parse("x*y", xy), std::vector<double>{1, 1}, 1);
    CHECK(j.value() == 1.0);
    CHECK(jet_partial(j, std::vector<int>{1, 0}) == 1.0);
    CHECK(jet_partial(j, std::vector<int>{0, 1}) == 1.0);
}

TEST_CASE("errors carry positions") {
    try {
        ev("log(x)", {0, 0});
        FAIL("expected domain error");
    } catch (const DomainError& e) {
        CHECK(e.position() == 0);
    }
    try {
        ev("1 + 1/x", {0, 0});
        FAIL("expected domain error");
    } catch (const DomainError& e) {
        CHECK(e.position() == 5);
    }
    try {
        parse("x + z", xy);
        FAIL("expected name error");
    } catch (const NameError& e) {
        CHECK(e.offset() == 4);
        CHECK(e.name() == "z");
    }
    auto syntax_at = [](const std::string& s) -> long {
        try {
            parse(s, xy);
        } catch (const SyntaxError& e) {
            return static_cast<long>(e.offset());
        }
        return -1;
    };
    CHECK(syntax_at("(x+1") == 4);
    CHECK(syntax_at("x+1)") == 3);
    CHECK(syntax_at("x+") == 2);
    CHECK(syntax_at("2x") == 1);
    CHECK(syntax_at("x y") == 2);
    CHECK(syntax_at("") == 0);
    CHECK(syntax_at("sin x") == 4);
    CHECK(syntax_at("x # y") == 2);
    CHECK_THROWS_AS(eval_expr(parse("x", xy), std::vector<double>{1.0}), ShapeError);
}

namespace {

NodePtr random_tree(std::mt19937& rng, int depth) {
    std::uniform_int_distribution<int> pick(0, 9);
    auto n = std::make_shared<ExprNode>();
    const int choice = depth <= 0 ? pick(rng) % 2 : pick(rng);
    switch (choice) {
        case 0: {
            n->kind = NodeKind::number;
            std::uniform_real_distribution<double> u(0, 10);
            const double v = u(rng);
            n->value = (pick(rng) < 5) ? std::round(v) : v;
            break;
        }
        case 1:
            n->kind = NodeKind::variable;
            n->var = pick(rng) % 2;
            break;
        case 2:
            n->kind = NodeKind::neg;
            n->args = {random_tree(rng, depth - 1)};
            break;
        case 3: case 4: case 5: case 6: case 7: {
            static const NodeKind ops[] = {NodeKind::add, NodeKind::sub, NodeKind::mul, NodeKind::div,
                                           NodeKind::pow};
            n->kind = ops[choice - 3];
            n->args = {random_tree(rng, depth - 1), random_tree(rng, depth - 1)};
            break;
        }
        default:
            n->kind = NodeKind::call;
            n->fn = static_cast<Func>(pick(rng) % 6);
            n->args = {random_tree(rng, depth - 1)};
            if (n->fn == Func::pow) n->args.push_back(random_tree(rng, depth - 1));
    }
    return n;
}

}  // namespace

TEST_CASE("pretty-print round trip on random expressions") {
    std::mt19937 rng(20240611);
    for (int i = 0; i < 100; ++i) {
        Expr e(random_tree(rng, 5), xy);
        const std::string s = to_string(e);
        INFO(s);
        Expr back = parse(s, xy);
        CHECK(structurally_equal(e.root(), back.root()));
        CHECK(to_string(back) == s);
    }
}

TEST_CASE("real and jet evaluation agree exactly at degree zero") {
    const char* srcs[] = {"4/(1+x^2+y^2)^2", "sin(x)*exp(y) - sqrt(2+x)", "pow(1+x*x, 0.3) / log(3+y)",
                          "(1+x^2)*(1+y^4)", "x^y", "cos(x - y)^-3", "1/(1+0.3*x^2*y)"};
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(0.1, 0.9);
    for (const char* s : srcs) {
        Expr e = parse(s, xy);
        for (int t = 0; t < 10; ++t) {
            std::vector<double> p{u(rng), u(rng)};
            const double r = eval_expr(e, p);
            for (int k = 0; k <= 6; ++k) CHECK(eval_expr_jet(e, p, k).value() == r);
        }
    }
}
