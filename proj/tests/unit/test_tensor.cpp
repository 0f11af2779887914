#include "doctest.h"

#include <cmath>
#include <random>

#include "ptk/errors.hpp"
#include "ptk/tensor.hpp"

using namespace ptk;
using SK = SlotKind;

namespace {

ChartTensor random_tensor(int n, std::vector<SK> slots, std::mt19937& rng, int order = 0) {
    ChartTensor t(n, std::move(slots), 0.0, order);
    std::uniform_real_distribution<double> u(-1, 1);
    for (auto& v : t.data()) v = u(rng);
    return t;
}

std::vector<SK> cotractors(int k) { return std::vector<SK>(k, SK::cotractor); }

}  // namespace

TEST_CASE("two-slot symmetrization and antisymmetrization") {
    ChartTensor t(2, {SK::cotangent, SK::cotangent});
    t({0, 1}) = 1.0;
    auto s = symmetrize(t, {0, 1});
    CHECK(s({0, 0}) == 0.0);
    CHECK(s({0, 1}) == 0.5);
    CHECK(s({1, 0}) == 0.5);
    CHECK(s({1, 1}) == 0.0);
    auto a = antisymmetrize(t, {0, 1});
    CHECK(a({0, 1}) == 0.5);
    CHECK(a({1, 0}) == -0.5);
    CHECK(max_abs_diff(symmetrize(s, {0, 1}), s) == 0.0);
    CHECK(antisymmetrize(s, {0, 1}).max_abs() == 0.0);

    std::mt19937 rng(1);
    auto r = random_tensor(3, {SK::cotangent, SK::cotangent}, rng);
    CHECK(max_abs_diff(symmetrize(r, {0, 1}) + antisymmetrize(r, {0, 1}), r) < 1e-15);
    auto r3 = random_tensor(3, {SK::tangent, SK::tangent, SK::tangent}, rng);
    auto once = symmetrize(r3, {0, 1, 2});
    CHECK(max_abs_diff(symmetrize(once, {0, 1, 2}), once) < 1e-15);
    // direct recomputation over the 6 permutations
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) {
                const double e = (r3({i, j, k}) + r3({i, k, j}) + r3({j, i, k}) + r3({j, k, i}) +
                                  r3({k, i, j}) + r3({k, j, i})) / 6.0;
                CHECK(once({i, j, k}) == doctest::Approx(e).epsilon(1e-15));
            }
    ChartTensor mixed(2, {SK::tangent, SK::cotangent});
    CHECK_THROWS_AS(symmetrize(mixed, {0, 1}), ShapeError);
}

TEST_CASE("contraction and products") {
    auto d = delta(3, SK::tangent, SK::cotangent);
    CHECK(contract(d, 0, 1).value(0) == 3.0);
    std::mt19937 rng(2);
    auto v = random_tensor(3, {SK::tangent}, rng);
    auto w = random_tensor(3, {SK::cotangent}, rng);
    const double dot = v({0}) * w({0}) + v({1}) * w({1}) + v({2}) * w({2});
    CHECK(contract(tensor_product(v, w), 0, 1).value(0) == doctest::Approx(dot));
    auto A = random_tensor(2, {SK::tangent, SK::cotangent}, rng);
    auto B = random_tensor(2, {SK::tangent, SK::cotangent}, rng);
    auto AB = contract(tensor_product(A, B), 1, 2);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            CHECK(AB({i, j}) == doctest::Approx(A({i, 0}) * B({0, j}) + A({i, 1}) * B({1, j})));
    CHECK_THROWS_AS(contract(tensor_product(v, v), 0, 1), ShapeError);
    ChartTensor wt(2, {SK::tangent}, 1.5);
    ChartTensor wu(2, {SK::cotangent}, -0.5);
    CHECK(tensor_product(wt, wu).weight() == 1.0);
}

TEST_CASE("einsum on jets multiplies component fields") {
    std::mt19937 rng(3);
    auto a = random_tensor(2, {SK::tangent}, rng, 3);
    auto b = random_tensor(2, {SK::cotangent}, rng, 3);
    auto c = einsum("a,a->", {&a, &b});
    Jet expect = a.jet(0) * b.jet(0) + a.jet(1) * b.jet(1);
    for (std::size_t k = 0; k < expect.coeffs().size(); ++k)
        CHECK(c.coeffs(0)[k] == doctest::Approx(expect.coeffs()[k]).epsilon(1e-14));
    // an operand completing before an earlier one
    auto m = random_tensor(2, {SK::tangent, SK::tangent}, rng);
    auto p = random_tensor(2, {SK::cotangent}, rng);
    auto q = random_tensor(2, {SK::cotangent}, rng);
    auto r = einsum("a,bc,b->ac", {&p, &m, &q});
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            CHECK(r({i, j}) == doctest::Approx(p({i}) * (m({0, j}) * q({0}) + m({1, j}) * q({1}))));
    ChartTensor x(2, {SK::tractor});
    CHECK_THROWS_AS(einsum("A,a->", {&x, &p}), ShapeError);
}

TEST_CASE("einsum matches a direct jet loop") {
    std::mt19937 rng(4);
    const int n = 2;
    auto A = random_tensor(n, {SK::cotangent, SK::cotractor, SK::tangent}, rng, 2);
    auto B = random_tensor(n, {SK::tractor, SK::tangent, SK::cotangent}, rng, 2);
    auto C = random_tensor(n, {SK::cotangent}, rng, 2);
    auto R = einsum("aBc,Bde,c->dea", {&A, &B, &C});
    for (int d = 0; d < 2; ++d)
        for (int e = 0; e < 2; ++e)
            for (int a = 0; a < 2; ++a) {
                Jet want(n, 2);
                for (int Bi = 0; Bi < 3; ++Bi)
                    for (int c = 0; c < 2; ++c)
                        want += A.jet(A.flat({a, Bi, c})) * B.jet(B.flat({Bi, d, e})) * C.jet(C.flat({c}));
                const auto got = R.coeffs(R.flat({d, e, a}));
                for (std::size_t k = 0; k < got.size(); ++k)
                    CHECK(got[k] == doctest::Approx(want.coeffs()[k]).epsilon(1e-13));
            }
    // outer product, a self-trace, and a transpose
    auto O = einsum("a,e->ea", {&C, &C});
    CHECK(O({1, 0}) == doctest::Approx(C({0}) * C({1})));
    auto T = einsum("aBa->B", {&A});
    CHECK(T({2}) == doctest::Approx(A({0, 2, 0}) + A({1, 2, 1})));
    auto P = einsum("aBc->cBa", {&A});
    CHECK(P({1, 2, 0}) == A({0, 2, 1}));
}

TEST_CASE("scale tags") {
    ChartTensor a(2, {SK::cotractor}, 0, 0, "s1");
    ChartTensor b(2, {SK::cotractor}, 0, 0, "s2");
    CHECK_THROWS_AS(a + b, ScaleError);
    ChartTensor c(2, {SK::cotractor});
    CHECK((a + c).scale_tag() == "s1");
}

TEST_CASE("young projector of type (1,1) is the antisymmetric part") {
    std::mt19937 rng(4);
    auto t = random_tensor(2, cotractors(2), rng);
    CHECK(max_abs_diff(young_project_rr(t, 1), antisymmetrize(t, {0, 1})) < 1e-15);
    CHECK_THROWS_AS(young_project_rr(t, 2), ShapeError);
}

namespace {

// residual of the three Young conditions on a (r,r) candidate
double young_residual(const ChartTensor& t, int r) {
    std::vector<int> first(r), last(r), big(r + 1);
    for (int i = 0; i < r; ++i) {
        first[i] = i;
        last[i] = r + i;
        big[i + 1] = r + i;
    }
    big[0] = 0;
    double res = max_abs_diff(symmetrize(t, first), t);
    res = std::max(res, max_abs_diff(symmetrize(t, last), t));
    res = std::max(res, symmetrize(t, big).max_abs());
    std::vector<int> lead(r + 1);
    for (int i = 0; i <= r; ++i) lead[i] = i;
    res = std::max(res, symmetrize(t, lead).max_abs());
    return res;
}

}  // namespace

TEST_CASE("young projector: idempotence scalar and image") {
    for (int r = 1; r <= 3; ++r) {
        for (int n : {2, 3}) {
            if (r == 3 && n == 3) continue;
            std::mt19937 rng(100 + r * 10 + n);
            auto t0 = random_tensor(n, cotractors(2 * r), rng);
            auto p0 = young_project_rr(t0, r);
            auto pp0 = young_project_rr(p0, r);
            // c from the ratio at the largest component
            std::size_t f = 0;
            for (std::size_t i = 0; i < p0.ncomp(); ++i)
                if (std::abs(p0.value(i)) > std::abs(p0.value(f))) f = i;
            const double c = pp0.value(f) / p0.value(f);
            INFO("r=" << r << " n=" << n << " c=" << c);
            CHECK(c > 0.0);
            if (r == 1) CHECK(c == doctest::Approx(1.0).epsilon(1e-14));
            const int trials = r == 3 ? 5 : 50;
            for (int k = 0; k < trials; ++k) {
                auto t = random_tensor(n, cotractors(2 * r), rng);
                auto p = young_project_rr(t, r);
                auto pp = young_project_rr(p, r);
                CHECK(max_abs_diff(pp, c * p) <= 1e-12 * p.max_abs());
                CHECK(young_residual(p, r) < 1e-12);
            }
        }
    }
}

TEST_CASE("young projector (2,2): pairwise symmetry and closed forms") {
    std::mt19937 rng(5);
    const int n = 3;
    auto t = random_tensor(n, cotractors(4), rng);
    auto p = young_project_rr(t, 2);
    CHECK(max_abs_diff(p, permute(p, {2, 3, 0, 1})) < 1e-14);

    // S symmetric in its last pair
    auto s = symmetrize(random_tensor(n, cotractors(4), rng), {2, 3});
    auto ps = young_project_rr(s, 2);
    const int N = n + 1;
    auto S = [&](int a, int b, int c, int d) { return s({a, b, c, d}); };
    auto sym = [&](int a, int b, int c, int d) { return 0.5 * (S(a, b, c, d) + S(b, a, c, d)); };
    double worst = 0;
    for (int B = 0; B < N; ++B)
        for (int C = 0; C < N; ++C)
            for (int D = 0; D < N; ++D)
                for (int E = 0; E < N; ++E) {
                    const double closed = 0.25 * (sym(B, C, D, E) + sym(D, E, B, C)) -
                                          0.125 * (sym(D, C, B, E) + sym(E, B, C, D) + sym(D, B, C, E) +
                                                   sym(E, C, B, D));
                    worst = std::max(worst, std::abs(closed - ps({B, C, D, E})));
                }
    CHECK(worst < 1e-13);

    // S in T* (x) T_(2,1): symmetric in the last pair and S_{B(CDE)} = 0
    auto raw = symmetrize(random_tensor(n, cotractors(4), rng), {2, 3});
    auto s21 = raw - symmetrize(raw, {1, 2, 3});
    CHECK(symmetrize(s21, {1, 2, 3}).max_abs() < 1e-15);
    auto p21 = young_project_rr(s21, 2);
    auto T = [&](int a, int b, int c, int d) { return s21({a, b, c, d}); };
    auto skew = [&](int a, int b, int c, int d) { return 0.5 * (T(a, b, c, d) - T(b, a, c, d)); };
    worst = 0;
    for (int B = 0; B < N; ++B)
        for (int C = 0; C < N; ++C)
            for (int D = 0; D < N; ++D)
                for (int E = 0; E < N; ++E) {
                    const double closed = 0.75 * (T(B, C, D, E) - skew(B, C, D, E)) -
                                          0.375 * (skew(D, C, B, E) + skew(E, B, C, D) + skew(D, B, C, E) +
                                                   skew(E, C, B, D));
                    worst = std::max(worst, std::abs(closed - p21({B, C, D, E})));
                }
    CHECK(worst < 1e-13);
}

TEST_CASE("permute moves slots") {
    std::mt19937 rng(6);
    auto t = random_tensor(2, {SK::tangent, SK::cotangent, SK::tractor}, rng);
    auto p = permute(t, {2, 0, 1});
    CHECK(p.kind(0) == SK::tractor);
    CHECK(p({2, 1, 0}) == t({1, 0, 2}));
    CHECK_THROWS_AS(permute(t, {0, 0, 1}), ShapeError);
}
