#include "doctest.h"

#include <cmath>
#include <random>

#include "ptk/errors.hpp"
#include "ptk/tractor.hpp"
#include "sample_geometries.hpp"

using namespace ptk;
using SK = SlotKind;
using sample::random_tensor;

namespace {

std::vector<AffineStructure> curved_structures() {
    auto c3 = sample::curved3();
    auto lv = sample::liouville();
    return {c3, c3.projective_change(sample::fields({"x*y", "z", "0.5*x"}, 3), "curved3-proj"), lv,
            lv.projective_change(sample::fields({"0", "x"}, 2), "liouville-proj")};
}

std::vector<double> point(int n, std::mt19937& rng) {
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    std::vector<double> x(n);
    for (auto& v : x) v = u(rng);
    return x;
}

}  // namespace

TEST_CASE("splitting tractor pairings are exact") {
    for (int n : {2, 3}) {
        auto F = tractor_frame(sample::flat(n), std::vector<double>(n, 0.0), 2);
        auto c = canonical_tractors(F);
        CHECK(einsum("A,A->", {&c.X, &c.Y}).value(0) == 1.0);
        auto zw = einsum("Ab,Aa->ab", {&c.Z, &c.W});
        auto id = delta(n, SK::tangent, SK::cotangent);
        CHECK(max_abs_diff(permute(zw, {1, 0}), id) == 0.0);
        CHECK(einsum("A,Aa->a", {&c.Y, &c.W}).max_abs() == 0.0);
        CHECK(einsum("A,Ab->b", {&c.X, &c.Z}).max_abs() == 0.0);
        CHECK(c.X.weight() == 1.0);
        CHECK(c.Y.weight() == -1.0);
        CHECK(c.Z.weight() == -1.0);
        CHECK(c.W.weight() == 1.0);
    }
}

TEST_CASE("splitting tractors differentiate as expected") {
    std::mt19937 rng(21);
    for (const auto& A : curved_structures()) {
        const int n = A.n();
        auto F = tractor_frame(A, point(n, rng), 3);
        auto c = canonical_tractors(F, 2);
        auto c1 = canonical_tractors(F, 1);
        auto P = F.stack.schouten.truncated(1);
        CHECK(max_abs_diff(tractor_covd(F, c.X), permute(c1.W, {1, 0})) < 1e-12);
        // nabla_a W^B_b = -P_ab X^B
        auto dW = tractor_covd(F, c.W);
        auto pX = einsum("ab,B->aBb", {&P, &c1.X});
        CHECK(max_abs_diff(dW, -1.0 * pX) < 1e-12);
        // nabla_a Y_B = P_ab Z_B^b
        auto dY = tractor_covd(F, c.Y);
        auto pZ = einsum("ab,Bb->aB", {&P, &c1.Z});
        CHECK(max_abs_diff(dY, pZ) < 1e-12);
        // nabla_a Z_B^b = -delta_a^b Y_B
        auto dZ = tractor_covd(F, c.Z);
        auto dl = delta(n, SK::tangent, SK::cotangent).promoted(1);
        auto dy = einsum("ba,B->aBb", {&dl, &c1.Y});
        CHECK(max_abs_diff(dZ, -1.0 * dy) < 1e-12);
        // and the jets agree beyond the value
        CHECK(max_abs_diff(tractor_covd(F, c.X).partial(0), permute(c1.W, {1, 0}).partial(0)) < 1e-12);
    }
}

TEST_CASE("cotractor connection in components") {
    std::mt19937 rng(22);
    for (const auto& A : curved_structures()) {
        const int n = A.n();
        auto F = tractor_frame(A, point(n, rng), 3);
        auto V = random_tensor(rng, n, {SK::cotractor}, 0.0, 2, F.scale_tag);
        ChartTensor sigma(n, {}, 1.0, 2, F.scale_tag);
        ChartTensor mu(n, {SK::cotangent}, 1.0, 2, F.scale_tag);
        sigma.set_jet(0, V.jet(0));
        for (int b = 0; b < n; ++b) mu.set_jet(static_cast<std::size_t>(b), V.jet(static_cast<std::size_t>(b + 1)));
        auto dsig = covd(F.stack, sigma);
        auto dmu = covd(F.stack, mu);
        auto dV = tractor_covd(F, V);
        auto P = F.stack.schouten.truncated(1);
        for (int a = 0; a < n; ++a) {
            const Jet top = dsig.jet(static_cast<std::size_t>(a)) - mu.truncated(1).jet(static_cast<std::size_t>(a));
            CHECK(std::abs(dV({a, 0}) - top.value()) < 1e-12);
            for (int b = 0; b < n; ++b) {
                const double want = dmu({a, b}) + P({a, b}) * sigma({});
                CHECK(std::abs(dV({a, b + 1}) - want) < 1e-12);
            }
        }
    }
}

TEST_CASE("flat cotractor examples") {
    auto F = tractor_frame(sample::flat(2), std::vector<double>{0.1, 0.2}, 2);
    ChartTensor V(2, {SK::cotractor}, 0.0, 0, F.scale_tag);
    V({0}) = 0.7;
    V({1}) = 2.0;
    V({2}) = -3.0;
    auto dV = tractor_covd(F, V.promoted(1));
    CHECK(dV({0, 0}) == -2.0);
    CHECK(dV({1, 0}) == 3.0);
    for (int a = 0; a < 2; ++a)
        for (int b = 1; b <= 2; ++b) CHECK(dV({a, b}) == 0.0);
    auto c = canonical_tractors(F, 1);
    auto c0 = canonical_tractors(F, 0);
    CHECK(max_abs_diff(tractor_covd(F, c.X), permute(c0.W, {1, 0})) == 0.0);
}

TEST_CASE("thomas D examples") {
    std::mt19937 rng(23);
    for (const auto& A : curved_structures()) {
        const int n = A.n();
        auto F = tractor_frame(A, point(n, rng), 3);
        auto c = canonical_tractors(F, 2);
        auto c1 = canonical_tractors(F, 1);
        auto DX = thomas_d(F, c.X);
        CHECK(DX.weight() == 0.0);
        CHECK(max_abs_diff(permute(DX, {1, 0}), delta(n, SK::tractor, SK::cotractor).promoted(1)) < 1e-12);
        CHECK(permute(DX, {1, 0}).partial(0).max_abs() < 1e-12);

        auto V = random_tensor(rng, n, {SK::tractor, SK::cotractor}, 3.0, 2, F.scale_tag);
        auto DV = thomas_d(F, V);
        CHECK(DV.weight() == 2.0);
        auto xdv = einsum("A,ABC->BC", {&c1.X, &DV});
        CHECK(max_abs_diff(xdv, 3.0 * V.truncated(1)) < 1e-12);

        auto f = random_tensor(rng, n, {}, 0.0, 2, F.scale_tag);
        auto Df = thomas_d(F, f);
        CHECK(Df({0}) == 0.0);
        for (int a = 0; a < n; ++a) CHECK(Df({a + 1}) == doctest::Approx(f.partial(a).value(0)).epsilon(1e-14));
    }
}

TEST_CASE("D commutes with X up to the identity") {
    std::mt19937 rng(24);
    std::uniform_real_distribution<double> uw(-3, 3);
    for (const auto& A : curved_structures()) {
        const int n = A.n();
        auto F = tractor_frame(A, point(n, rng), 3);
        auto c = canonical_tractors(F, 2);
        auto c1 = canonical_tractors(F, 1);
        auto V = random_tensor(rng, n, {SK::cotractor}, uw(rng), 2, F.scale_tag);
        auto lhs = thomas_d(F, tensor_product(c.X, V));
        auto DV = thomas_d(F, V);
        auto rhs = einsum("B,AC->ABC", {&c1.X, &DV});
        auto id = delta(n, SK::tractor, SK::cotractor).promoted(1);
        auto v1 = V.truncated(1);
        auto dV = einsum("BA,C->ABC", {&id, &v1});
        CHECK(max_abs_diff(lhs - rhs, dV) < 1e-12);
    }
}

TEST_CASE("D is torsion free on densities and Leibniz") {
    std::mt19937 rng(25);
    std::uniform_real_distribution<double> uw(-3, 3);
    for (const auto& A : curved_structures()) {
        const int n = A.n();
        auto F = tractor_frame(A, point(n, rng), 4);
        for (int trial = 0; trial < 3; ++trial) {
            auto tau = random_tensor(rng, n, {}, uw(rng), 3, F.scale_tag);
            auto DD = thomas_d(F, thomas_d(F, tau));
            CHECK(antisymmetrize(DD, {0, 1}).max_abs() < 1e-10);
        }
        auto U = random_tensor(rng, n, {SK::tractor}, uw(rng), 2, F.scale_tag);
        auto V = random_tensor(rng, n, {SK::cotractor, SK::cotractor}, uw(rng), 2, F.scale_tag);
        auto lhs = thomas_d(F, tensor_product(U, V));
        auto DU = thomas_d(F, U);
        auto DV = thomas_d(F, V);
        auto u1 = U.truncated(1);
        auto v1 = V.truncated(1);
        auto rhs = einsum("AB,CD->ABCD", {&DU, &v1}) + einsum("B,ACD->ABCD", {&u1, &DV});
        CHECK(max_abs_diff(lhs, rhs) < 1e-11);
    }
}

TEST_CASE("tractor curvature: formula against commutator") {
    std::mt19937 rng(26);
    for (const auto& A : curved_structures()) {
        auto F = tractor_frame(A, point(A.n(), rng), 4);
        auto k = tractor_curvature_formula(F);
        auto kc = tractor_curvature_commutator(F);
        CHECK(max_abs_diff(k.truncated(kc.order()), kc) < 1e-10);
        CHECK(max_abs_diff(k.truncated(kc.order()).partial(1), kc.partial(1)) < 1e-10);
        CHECK_NOTHROW(tractor_curvature(F));
    }
    auto F2 = tractor_frame(sample::sphere(), std::vector<double>{0, 0}, 2);
    CHECK_THROWS_AS(tractor_curvature(F2), OrderError);
}

TEST_CASE("tractor curvature examples") {
    auto flatF = tractor_frame(sample::flat(3), std::vector<double>{0.1, 0.2, 0.3}, 3);
    CHECK(tractor_curvature(flatF).max_abs() == 0.0);

    std::mt19937 rng(27);
    std::uniform_real_distribution<double> u(-0.9, 0.9);
    auto S = sample::sphere();
    for (int i = 0; i < 20; ++i) {
        auto F = tractor_frame(S, std::vector<double>{u(rng), u(rng)}, 3);
        CHECK(tractor_curvature(F).max_abs() < 1e-11);
    }

    // Liouville: W-slot vanishes, X-slot is minus Cotton, checked against
    // finite differences of pointwise Schouten values.
    auto L = sample::liouville();
    std::vector<double> x{0.45, -0.35};
    auto F = tractor_frame(L, x, 3);
    auto k = tractor_curvature(F);
    const int n = 2;
    const double h = 1e-4;
    std::vector<ChartTensor> dP(n);
    for (int a = 0; a < n; ++a) {
        auto xp = x, xm = x, xp2 = x, xm2 = x;
        xp[a] += h;
        xm[a] -= h;
        xp2[a] += 2 * h;
        xm2[a] -= 2 * h;
        auto Pp = curvature_stack(L, xp, 2).schouten.truncated(0);
        auto Pm = curvature_stack(L, xm, 2).schouten.truncated(0);
        auto Pp2 = curvature_stack(L, xp2, 2).schouten.truncated(0);
        auto Pm2 = curvature_stack(L, xm2, 2).schouten.truncated(0);
        dP[a] = (1.0 / (12 * h)) * (Pm2 - 8.0 * Pm + 8.0 * Pp - Pp2);
    }
    auto G = F.stack.gamma.truncated(0);
    auto P = F.stack.schouten.truncated(0);
    double biggest = 0;
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            for (int d = 0; d < n; ++d) {
                double C = dP[a]({b, d}) - dP[b]({a, d});
                for (int e = 0; e < n; ++e) C += -G({a, d, e}) * P({b, e}) + G({b, d, e}) * P({a, e});
                CHECK(k({a, b, 0, d + 1}) == doctest::Approx(-C).epsilon(1e-6).scale(1.0));
                biggest = std::max(biggest, std::abs(C));
                for (int c = 0; c < n; ++c) CHECK(std::abs(k({a, b, c + 1, d + 1})) < 1e-12);
            }
    CHECK(biggest > 1e-3);
}

TEST_CASE("W-curvature identities") {
    std::mt19937 rng(28);
    std::uniform_real_distribution<double> uw(-3, 3);
    for (const auto& A : curved_structures()) {
        const int n = A.n();
        auto F = tractor_frame(A, point(n, rng), 5);
        auto Wc = w_curvature(F);
        CHECK(Wc.weight() == -2.0);
        auto c = canonical_tractors(F, Wc.order());
        CHECK(einsum("A,ABCD->BCD", {&c.X, &Wc}).max_abs() == 0.0);
        CHECK(einsum("B,ABCD->ACD", {&c.X, &Wc}).max_abs() == 0.0);
        CHECK(einsum("D,ABCD->ABC", {&c.X, &Wc}).max_abs() < 1e-15);

        auto zw = einsum("Cc,ABCD->ABcD", {&c.Z, &Wc});
        auto weyl = F.stack.weyl.truncated(Wc.order());
        auto zzz = einsum("Aa,Bb,Dd,abcd->ABcD", {&c.Z, &c.Z, &c.Z, &weyl});
        CHECK(max_abs_diff(zw, zzz) < 1e-12);
        auto yw = einsum("C,ABCD->ABD", {&c.Y, &Wc});
        auto cot = F.stack.cotton.truncated(Wc.order());
        auto zzc = einsum("Aa,Bb,Dd,abd->ABD", {&c.Z, &c.Z, &c.Z, &cot});
        CHECK(max_abs_diff(yw, -1.0 * zzc) < 1e-12);

        // [D_A, D_B] V^C = W_AB^C_D V^D
        for (int trial = 0; trial < 2; ++trial) {
            auto V = random_tensor(rng, n, {SK::tractor}, uw(rng), 3, F.scale_tag);
            auto DD = thomas_d(F, thomas_d(F, V));
            auto comm = DD - permute(DD, {1, 0, 2});
            auto v1 = V.truncated(1);
            auto w1 = Wc.truncated(1);
            CHECK(max_abs_diff(comm, einsum("ABCD,D->ABC", {&w1, &v1})) < 1e-10);
            CHECK(max_abs_diff(comm, w_sharp(Wc, V)) < 1e-10);
        }
        // commutator on a two-cotractor field matches the sharp action
        auto T = random_tensor(rng, n, {SK::cotractor, SK::cotractor}, uw(rng), 3, F.scale_tag);
        auto DDT = thomas_d(F, thomas_d(F, T));
        auto commT = DDT - permute(DDT, {1, 0, 2, 3});
        auto t1 = T.truncated(1);
        auto w1 = Wc.truncated(1);
        auto manual = -1.0 * einsum("ABEC,ED->ABCD", {&w1, &t1}) - einsum("ABED,CE->ABCD", {&w1, &t1});
        CHECK(max_abs_diff(w_sharp(Wc, T), manual) < 1e-14);
        CHECK(max_abs_diff(commT, manual) < 1e-10);

        // Bianchi identities
        auto lowered = permute(Wc, {0, 1, 3, 2});
        CHECK(antisymmetrize(lowered, {0, 1, 2}).max_abs() < 1e-10);
        auto DW = thomas_d(F, Wc);
        CHECK(antisymmetrize(DW, {0, 1, 2}).max_abs() < 1e-10);
    }
}

TEST_CASE("W-curvature on flat space and errors") {
    std::mt19937 rng(29);
    auto F = tractor_frame(sample::flat(2), std::vector<double>{0.3, 0.3}, 3);
    auto Wc = w_curvature(F);
    auto T = random_tensor(rng, 2, {SK::cotractor, SK::tractor}, 0.0, 1, F.scale_tag);
    CHECK(w_sharp(Wc, T).max_abs() == 0.0);
    auto bad = random_tensor(rng, 2, {SK::cotangent}, 0.0, 1);
    CHECK_THROWS_AS(w_sharp(Wc, bad), KindError);
    auto other = random_tensor(rng, 2, {SK::cotractor}, 0.0, 1, "elsewhere");
    CHECK_THROWS_AS(tractor_covd(F, other), ScaleError);
}
