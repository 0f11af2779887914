#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <sstream>

#include "json.hpp"
#include "ptk/cli.hpp"
#include "ptk/errors.hpp"
#include "ptk/expr.hpp"

namespace ptk {

namespace {

using SK = SlotKind;
using Vec = std::vector<double>;

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

// Independent stream per (seed, geometry, check group).
std::mt19937 stream(std::uint64_t seed, const std::string& geometry, const std::string& group) {
    const std::uint64_t g = fnv1a(geometry), c = fnv1a(group);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(g), static_cast<std::uint32_t>(g >> 32),
                      static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32)};
    return std::mt19937(seq);
}

// Points uniform in the central 90% of the box.
std::vector<Vec> sample_points(const Box& box, int count, std::mt19937& rng, double shrink = 0.9) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Vec> out;
    for (int k = 0; k < count; ++k) {
        Vec x(box.lo.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double mid = 0.5 * (box.lo[i] + box.hi[i]), half = 0.5 * (box.hi[i] - box.lo[i]);
            x[i] = mid + shrink * half * u(rng);
        }
        out.push_back(std::move(x));
    }
    return out;
}

ChartTensor random_tensor(std::mt19937& rng, int n, std::vector<SK> slots, double weight, int order,
                          const std::string& tag = {}) {
    std::uniform_real_distribution<double> u(-1, 1);
    ChartTensor t(n, std::move(slots), weight, order, tag);
    for (auto& c : t.data()) c = u(rng);
    return t;
}

ChartTensor random_symmetric(std::mt19937& rng, int n, int r, double weight, int order) {
    auto k = random_tensor(rng, n, std::vector<SK>(static_cast<std::size_t>(r), SK::cotangent), weight, order);
    if (r < 2) return k;
    std::vector<int> all(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) all[static_cast<std::size_t>(i)] = i;
    return symmetrize(k, all);
}

double rel_diff(const ChartTensor& a, const ChartTensor& b) {
    return max_abs_diff(a, b) / std::max({1.0, a.max_abs(), b.max_abs()});
}

double frob(const ChartTensor& t) {
    double s = 0;
    for (std::size_t f = 0; f < t.ncomp(); ++f) s += t.value(f) * t.value(f);
    return std::sqrt(s);
}

std::vector<ScalarField> as_fields(const std::vector<std::string>& src, const std::vector<std::string>& coords) {
    std::vector<ScalarField> out;
    for (const auto& s : src) out.push_back(as_field(parse(s, coords)));
    return out;
}

struct Geometry {
    GeometryConfig cfg;
    AffineStructure A;
    AffineStructure base;  // without the projective change
};

Geometry make_geometry(const GeometryConfig& cfg) {
    GeometryConfig plain = cfg;
    plain.upsilon.clear();
    return Geometry{cfg, build_structure(cfg), build_structure(plain)};
}

// Weighted (lifted) candidate from unweighted components; flat charts need no lift.
KillingCandidate weighted(const Geometry& g, const KnownSolution& s) {
    KillingCandidate c{s.r, as_fields(s.components, g.cfg.coordinates)};
    return g.base.has_metric() ? density_lift(c, g.base) : c;
}

KillingCandidate unweighted(const Geometry& g, const KnownSolution& s) {
    return KillingCandidate{s.r, as_fields(s.components, g.cfg.coordinates)};
}

class Recorder {
public:
    Recorder(RunReport& rep, const RunOptions& opt, std::string geometry)
        : rep_(rep), opt_(opt), geometry_(std::move(geometry)) {}

    void below(const std::string& check, const std::string& anchor, int rank, double value, double tol,
               const std::string& note = {}) {
        CheckRecord r = base(check, anchor, rank);
        r.result = value;
        r.tolerance = tol * opt_.tol_scale;
        r.comparison = "<";
        r.pass = std::isfinite(value) && value < r.tolerance;
        r.note = note;
        rep_.records.push_back(std::move(r));
    }
    void above(const std::string& check, const std::string& anchor, int rank, double value, double tol,
               const std::string& note = {}) {
        CheckRecord r = base(check, anchor, rank);
        r.result = value;
        r.tolerance = tol / opt_.tol_scale;
        r.comparison = ">";
        r.pass = std::isfinite(value) && value > r.tolerance;
        r.note = note;
        rep_.records.push_back(std::move(r));
    }
    void equal(const std::string& check, const std::string& anchor, int rank, int value, int want, bool extra_ok,
               const std::string& note = {}) {
        CheckRecord r = base(check, anchor, rank);
        r.result = value;
        r.integer_result = true;
        r.tolerance = want;
        r.comparison = "==";
        r.pass = value == want && extra_ok;
        r.note = note;
        rep_.records.push_back(std::move(r));
    }
    void within(const std::string& check, const std::string& anchor, int rank, double value, double lo, double hi,
                const std::string& note = {}) {
        CheckRecord r = base(check, anchor, rank);
        r.result = value;
        r.tolerance = lo;
        r.upper = hi;
        r.comparison = "in";
        r.pass = std::isfinite(value) && value >= lo && value <= hi;
        r.note = note;
        rep_.records.push_back(std::move(r));
    }
    void failure(const std::string& check, const std::string& anchor, int rank, const std::string& why) {
        CheckRecord r = base(check, anchor, rank);
        r.result = std::numeric_limits<double>::quiet_NaN();
        r.comparison = "error";
        r.pass = false;
        r.note = why;
        rep_.records.push_back(std::move(r));
    }
    // Runs body; a library error becomes a failing record under `check`.
    void guarded(const std::string& check, const std::string& anchor, int rank, const std::function<void()>& body) {
        try {
            body();
        } catch (const Error& e) {
            failure(check, anchor, rank, e.what());
        }
    }
    void skip(const std::string& why) { rep_.skipped.push_back(geometry_ + ": " + why); }
    const RunOptions& opt() const { return opt_; }

private:
    CheckRecord base(const std::string& check, const std::string& anchor, int rank) const {
        CheckRecord r;
        r.check = check;
        r.anchor = anchor;
        r.geometry = geometry_;
        r.rank = rank;
        r.seed = opt_.seed;
        return r;
    }

    RunReport& rep_;
    const RunOptions& opt_;
    std::string geometry_;
};

// ---------------------------------------------------------------------------
// verify-identities

void verify_identities(const Geometry& g, Recorder& rec) {
    const RunOptions& opt = rec.opt();
    const int n = g.A.n();
    const int K = std::max(g.cfg.jet_order > 0 ? g.cfg.jet_order : opt.jet_order, 5);
    auto rng = stream(opt.seed, g.cfg.name, "identities");
    // half-integer weights keep weight arithmetic exact
    std::uniform_int_distribution<int> half(-6, 6);
    auto uw = [&](std::mt19937& r) { return 0.5 * half(r); };
    const auto pts = sample_points(g.cfg.box, opt.points, rng);

    struct Acc {
        std::string check, anchor;
        double worst = 0;
    };
    std::vector<Acc> acc{
        {"identity.pairings", "X^A Y_A = 1, Z_A^b W^A_a = delta_a^b, Y_A W^A_a = 0, X^A Z_A^b = 0"},
        {"identity.d_of_x", "D_A X^B = delta_A^B"},
        {"identity.euler", "X^A D_A V = w V"},
        {"identity.d_x_commutator", "D_A (X^B V) - X^B D_A V = delta_A^B V"},
        {"identity.d_torsion_free", "D_[A D_B] tau = 0 on densities"},
        {"identity.w_commutator", "[D_A, D_B] V = W_AB # V"},
        {"identity.bianchi_first", "W_[AB C]^D = 0"},
        {"identity.bianchi_second", "D_[E W_AB]^C_D = 0"},
        {"identity.x_w_zero", "X^A W_AB^C_D = X^B W_AB^C_D = X^D W_AB^C_D = 0"},
        {"identity.z_w_weyl", "Z_C^c W_AB^C_D = Z_A^a Z_B^b Z_D^d W_ab^c_d"},
        {"identity.y_w_cotton", "Y_C W_AB^C_D = -Z_A^a Z_B^b Z_D^d C_abd"},
        {"identity.nabla_x", "nabla_a X^B = W^B_a"},
        {"identity.nabla_w", "nabla_a W^B_b = -P_ab X^B"},
        {"identity.nabla_y", "nabla_a Y_B = P_ab Z_B^b"},
        {"identity.nabla_z", "nabla_a Z_B^b = -delta_a^b Y_B"},
        {"identity.curvature_commutator", "kappa from the connection coefficients = [nabla_a, nabla_b] on cotractors"},
    };
    auto bump = [&](std::size_t i, double v) { acc[i].worst = std::max(acc[i].worst, v); };

    rec.guarded("identity.suite", "tractor identities at sampled points", 0, [&] {
        for (const auto& p : pts) {
            const TractorFrame F = tractor_frame(g.A, p, K);
            const std::string& tag = F.scale_tag;
            const auto c0 = canonical_tractors(F, 0);
            const auto c1 = canonical_tractors(F, 1);
            const auto c2 = canonical_tractors(F, 2);
            const auto id_tc = delta(n, SK::tractor, SK::cotractor);

            // pairings
            {
                double v = std::abs(einsum("A,A->", {&c0.X, &c0.Y}).value(0) - 1.0);
                auto zw = permute(einsum("Ab,Aa->ab", {&c0.Z, &c0.W}), {1, 0});
                v = std::max(v, max_abs_diff(zw, delta(n, SK::tangent, SK::cotangent)));
                v = std::max(v, einsum("A,Aa->a", {&c0.Y, &c0.W}).max_abs());
                v = std::max(v, einsum("A,Ab->b", {&c0.X, &c0.Z}).max_abs());
                bump(0, v);
            }
            // D X = delta
            {
                auto DX = permute(thomas_d(F, c2.X), {1, 0});
                bump(1, rel_diff(DX, id_tc.promoted(DX.order())));
            }
            // Euler
            {
                const double w = uw(rng);
                auto V = random_tensor(rng, n, {SK::tractor, SK::cotractor}, w, 2, tag);
                auto DV = thomas_d(F, V);
                auto xdv = einsum("A,ABC->BC", {&c1.X, &DV});
                bump(2, rel_diff(xdv, w * V.truncated(1)));
            }
            // D(XV) - X DV = delta V
            {
                auto V = random_tensor(rng, n, {SK::cotractor}, uw(rng), 2, tag);
                auto lhs = thomas_d(F, tensor_product(c2.X, V));
                auto DV = thomas_d(F, V);
                auto rhs = einsum("B,AC->ABC", {&c1.X, &DV});
                auto id1 = id_tc.promoted(1);
                auto v1 = V.truncated(1);
                bump(3, rel_diff(lhs - rhs, einsum("BA,C->ABC", {&id1, &v1})));
            }
            // torsion free on densities
            {
                auto tau = random_tensor(rng, n, {}, uw(rng), 3, tag);
                auto DD = thomas_d(F, thomas_d(F, tau));
                bump(4, antisymmetrize(DD, {0, 1}).max_abs() / std::max(1.0, DD.max_abs()));
            }
            const ChartTensor Wc = w_curvature(F);
            // commutator of D on a tractor and on a cotractor pair
            {
                auto V = random_tensor(rng, n, {SK::tractor}, uw(rng), 3, tag);
                auto DD = thomas_d(F, thomas_d(F, V));
                auto comm = DD - permute(DD, {1, 0, 2});
                double v = rel_diff(comm, w_sharp(Wc, V).truncated(comm.order()));
                auto T = random_tensor(rng, n, {SK::cotractor, SK::cotractor}, uw(rng), 3, tag);
                auto DDT = thomas_d(F, thomas_d(F, T));
                auto commT = DDT - permute(DDT, {1, 0, 2, 3});
                v = std::max(v, rel_diff(commT, w_sharp(Wc, T).truncated(commT.order())));
                bump(5, v);
            }
            // Bianchi identities
            {
                auto lowered = permute(Wc, {0, 1, 3, 2});
                bump(6, antisymmetrize(lowered, {0, 1, 2}).max_abs() / std::max(1.0, Wc.max_abs()));
                auto DW = thomas_d(F, Wc);
                bump(7, antisymmetrize(DW, {0, 1, 2}).max_abs() / std::max(1.0, DW.max_abs()));
            }
            // X, Z, Y against W
            {
                const auto c = canonical_tractors(F, Wc.order());
                double v = einsum("A,ABCD->BCD", {&c.X, &Wc}).max_abs();
                v = std::max(v, einsum("B,ABCD->ACD", {&c.X, &Wc}).max_abs());
                v = std::max(v, einsum("D,ABCD->ABC", {&c.X, &Wc}).max_abs());
                bump(8, v / std::max(1.0, Wc.max_abs()));
                auto zw = einsum("Cc,ABCD->ABcD", {&c.Z, &Wc});
                auto weyl = F.stack.weyl.truncated(Wc.order());
                auto zzz = einsum("Aa,Bb,Dd,abcd->ABcD", {&c.Z, &c.Z, &c.Z, &weyl});
                bump(9, rel_diff(zw, zzz));
                auto yw = einsum("C,ABCD->ABD", {&c.Y, &Wc});
                auto cot = F.stack.cotton.truncated(Wc.order());
                auto zzc = einsum("Aa,Bb,Dd,abd->ABD", {&c.Z, &c.Z, &c.Z, &cot});
                bump(10, rel_diff(yw, -1.0 * zzc));
            }
            // derivatives of the splitting tractors
            {
                auto P = F.stack.schouten.truncated(1);
                bump(11, rel_diff(tractor_covd(F, c2.X), permute(c1.W, {1, 0})));
                auto pX = einsum("ab,B->aBb", {&P, &c1.X});
                bump(12, rel_diff(tractor_covd(F, c2.W), -1.0 * pX));
                auto pZ = einsum("ab,Bb->aB", {&P, &c1.Z});
                bump(13, rel_diff(tractor_covd(F, c2.Y), pZ));
                auto dl = delta(n, SK::tangent, SK::cotangent).promoted(1);
                auto dy = einsum("ba,B->aBb", {&dl, &c1.Y});
                bump(14, rel_diff(tractor_covd(F, c2.Z), -1.0 * dy));
            }
            // curvature formula against the commutator
            {
                auto k = tractor_curvature_formula(F);
                auto kc = tractor_curvature_commutator(F);
                bump(15, rel_diff(k.truncated(kc.order()), kc));
            }
        }
        for (const auto& a : acc) rec.below(a.check, a.anchor, 0, a.worst, 1e-10, "max relative residual over points");
    });
}

// killing_operator agrees between a geometry and its projectively changed variant.
void projective_invariance(const Geometry& g, const Geometry& changed, Recorder& rec) {
    const RunOptions& opt = rec.opt();
    const int n = g.A.n();
    for (int r : {1, 2}) {
        rec.guarded("projective.killing_operator", "nabla_(a k_b..c) is unchanged by Gamma -> Gamma + Upsilon", r, [&] {
            auto rng = stream(opt.seed, g.cfg.name, "projective" + std::to_string(r));
            const auto pts = sample_points(g.cfg.box, 20, rng);
            double worst = 0, scale = 0;
            for (const auto& p : pts) {
                const TractorFrame F = tractor_frame(g.A, p, 3);
                const TractorFrame G = tractor_frame(changed.A, p, 3);
                auto k = random_symmetric(rng, n, r, 2.0 * r, 2);
                auto a = killing_operator(F, k), b = killing_operator(G, k);
                for (std::size_t f = 0; f < a.data().size(); ++f)
                    worst = std::max(worst, std::abs(a.data()[f] - b.data()[f]));
                scale = std::max(scale, a.max_abs());
            }
            std::ostringstream note;
            note << "20 random k against " << changed.cfg.name << "; operator scale " << scale;
            rec.below("projective.killing_operator", "nabla_(a k_b..c) is unchanged by Gamma -> Gamma + Upsilon", r,
                      worst, 1e-12, note.str());
        });
    }
}

// ---------------------------------------------------------------------------
// flat-check

bool projectively_flat(const AffineStructure& A, const Box& box) {
    Vec mid(box.lo.size());
    for (std::size_t i = 0; i < mid.size(); ++i) mid[i] = 0.5 * (box.lo[i] + box.hi[i]) + 0.01 * static_cast<double>(i + 1);
    return tractor_curvature(tractor_frame(A, mid, 3)).max_abs() < 1e-8;
}

void recovery_checks(Recorder& rec, const RunOptions& opt) {
    for (int n : {2, 3})
        for (int r : {1, 2, 3}) {
            rec.guarded("recovery.constant", "X..X P(D^r K) = c K with c != 0", r, [&] {
                const double c = recovery_constant(n, r);
                std::ostringstream note;
                note << "n = " << n << ", c = " << c;
                rec.above("recovery.constant", "X..X P(D^r K) = c K with c != 0", r, std::abs(c), 1e-6, note.str());
            });
        }
    (void)opt;
}

void flat_check(const Geometry& g, Recorder& rec, const std::vector<int>& ranks, bool explicit_geometry) {
    const RunOptions& opt = rec.opt();
    const int n = g.A.n();
    bool flat = false;
    try {
        flat = projectively_flat(g.A, g.cfg.box);
    } catch (const Error& e) {
        rec.failure("flat.precondition", "tractor curvature vanishes", 0, e.what());
        return;
    }
    if (!flat) {
        if (explicit_geometry)
            rec.failure("flat.precondition", "tractor curvature vanishes", 0, "structure is not projectively flat");
        else
            rec.skip("flat-check needs a projectively flat structure");
        return;
    }
    const bool polynomial = g.cfg.catalog_base == "flat2" || g.cfg.catalog_base == "flat3";
    for (int r : ranks) {
        auto rng = stream(opt.seed, g.cfg.name, "flat" + std::to_string(r));
        const auto pts = sample_points(g.cfg.box, std::min(opt.points, 5), rng, 0.7);
        std::vector<KillingCandidate> basis;
        std::string source;
        if (polynomial) {
            const auto pb = flat_polynomial_oracle(n, r);
            rec.equal("flat.oracle_dimension", "polynomial Killing tensors of degree <= r on flat space", r,
                      pb.dimension, flat_killing_count(n, r), true, "closed-form count");
            basis = pb.basis;
            source = "polynomial oracle basis";
        } else {
            for (const auto& s : known_solutions(g.cfg, r)) basis.push_back(weighted(g, s));
            source = "closed-form solutions";
        }
        if (basis.empty()) {
            rec.skip("flat-check rank " + std::to_string(r) + ": no known solutions");
            continue;
        }
        rec.guarded("flat.young_residual", "D^r K lies in the (r,r) Young class for solutions", r, [&] {
            double young = 0, par = 0, kill = 0, recov = 0;
            bool consistent = true;
            for (const auto& p : pts) {
                const TractorFrame F = tractor_frame(g.A, p, r + 3);
                for (const auto& c : basis) {
                    const auto res = flat_case_check(F, candidate_jet(c, n, p, r + 1), r);
                    young = std::max(young, res.young_residual);
                    par = std::max(par, res.parallel_residual);
                    kill = std::max(kill, res.killing_residual);
                    recov = std::max(recov, res.recovery_residual);
                    consistent = consistent && res.consistent;
                }
            }
            rec.below("flat.young_residual", "D^r K lies in the (r,r) Young class for solutions", r, young, 1e-10, source);
            rec.below("flat.parallel_residual", "nabla P_(r,r)(D^r K) = 0 for solutions", r, par, 1e-10, source);
            rec.below("flat.killing_residual", "nabla_(a k_b..c) = 0", r, kill, 1e-10, source);
            rec.below("flat.recovery_residual", "k recovered from P_(r,r)(D^r K)", r, recov, 1e-10, source);
            rec.equal("flat.consistent", "Young residual and Killing residual vanish together", r, consistent ? 1 : 0, 1,
                      true);
        });
        rec.guarded("flat.control_young", "a non-solution leaves the Young class", r, [&] {
            // k = x^2 dx..dx
            std::vector<std::string> comp(static_cast<std::size_t>(std::pow(n, r)), "0");
            comp[0] = g.cfg.coordinates[0] + "^2";
            KillingCandidate c{r, as_fields(comp, g.cfg.coordinates)};
            const TractorFrame F = tractor_frame(g.A, pts.front(), r + 3);
            const auto res = flat_case_check(F, candidate_jet(c, n, pts.front(), r + 1), r);
            rec.above("flat.control_young", "a non-solution leaves the Young class", r, res.young_residual, 1e-3,
                      "k = x^2 dx..dx");
        });
    }
    // recovery round trips on random k
    rec.guarded("recovery.rank1_roundtrip", "k = X^B L_BC Z^C_c for L = L(k)", 1, [&] {
        auto rng = stream(opt.seed, g.cfg.name, "recovery");
        const auto pts = sample_points(g.cfg.box, std::min(opt.points, 5), rng, 0.7);
        double r1 = 0, r2 = 0;
        for (const auto& p : pts) {
            const TractorFrame F = tractor_frame(g.A, p, 4);
            auto k1 = random_symmetric(rng, n, 1, 2.0, 2);
            r1 = std::max(r1, rel_diff(recover_k(F, splitting_L(F, k1), 1), k1.truncated(1)));
            auto k2 = random_symmetric(rng, n, 2, 4.0, 3);
            auto L = splitting_L(F, k2);
            auto K = inject_k(F, k2.truncated(L.order()));
            const auto c = canonical_tractors(F, L.order());
            auto xxl = einsum("B,C,BCDE->DE", {&c.X, &c.X, &L});
            r2 = std::max(r2, rel_diff(xxl, 1.5 * K));
        }
        rec.below("recovery.rank1_roundtrip", "k = X^B L_BC Z^C_c for L = L(k)", 1, r1, 1e-12);
        rec.below("recovery.rank2_factor", "X^B X^C L_BCDE = (3/2) K_DE", 2, r2, 1e-11);
    });
}

// ---------------------------------------------------------------------------
// prolong-residual

void prolong_residual(const Geometry& g, Recorder& rec, const std::vector<int>& ranks) {
    const RunOptions& opt = rec.opt();
    const int n = g.A.n();
    for (int r : ranks) {
        if (r != 1 && r != 2) {
            rec.failure("prolong.rank", "prolongation connection of rank 1 or 2", r, "unsupported rank");
            continue;
        }
        auto rng = stream(opt.seed, g.cfg.name, "prolong" + std::to_string(r));
        const auto pts = sample_points(g.cfg.box, opt.points, rng);
        const auto sols = known_solutions(g.cfg, r);
        const std::string anchor_conn =
            r == 1 ? "nabla_a L_BC + W_BC^E_A W^A_a X^F L_EF = 0 for L = L(k)" : "nabla_c L - Q_c # L = 0 for L = L(k)";
        if (sols.empty()) {
            rec.skip("prolong-residual rank " + std::to_string(r) + ": no known solutions; structural checks only");
        } else {
            rec.guarded("prolong.connection_residual", anchor_conn, r, [&] {
                double worst = 0, dform = 0, obstruction = 0;
                for (const auto& p : pts) {
                    const TractorFrame F = tractor_frame(g.A, p, 5);
                    for (const auto& s : sols) {
                        const auto c = weighted(g, s);
                        auto k = candidate_jet(c, n, p, r + 1);
                        auto L = splitting_L(F, k);
                        if (r == 1) {
                            worst = std::max(worst, rank1_prolongation_derivative(F, L).max_abs());
                        } else {
                            worst = std::max(worst, rank2_prolongation_derivative(F, L).max_abs());
                            dform = std::max(dform, max_abs_diff(thomas_d(F, L).truncated(0), rank2_Q_dform(F, L).truncated(0)));
                        }
                        obstruction = std::max(obstruction, integrability_obstruction(F, L.truncated(0), r).max_abs());
                    }
                }
                std::string labels;
                for (const auto& s : sols) labels += (labels.empty() ? "" : ", ") + s.label;
                rec.below("prolong.connection_residual", anchor_conn, r, worst, 1e-8, labels);
                if (r == 2)
                    rec.below("prolong.thomas_d_form", "D_C L = R_C for L = L(k)", r, dform, 1e-8, labels);
                rec.below("prolong.obstruction", "integrability condition annihilates L(k)", r, obstruction, 1e-7, labels);
            });
        }
        // a random state is not parallel
        rec.guarded("prolong.non_solution", "a random normalized state is not parallel", r, [&] {
            const TractorFrame F = tractor_frame(g.A, pts.front(), 4);
            double best = 0;
            for (int attempt = 0; attempt < 2 && best <= 1e-3; ++attempt) {
                ChartTensor L = random_tensor(rng, n, std::vector<SK>(static_cast<std::size_t>(2 * r), SK::cotractor), 0.0,
                                              1, F.scale_tag);
                L = r == 1 ? antisymmetrize(L, {0, 1}) : young_project_rr(L, 2);
                L = (1.0 / frob(L.truncated(0))) * L;
                const auto D = r == 1 ? rank1_prolongation_derivative(F, L) : rank2_prolongation_derivative(F, L);
                best = std::max(best, D.max_abs());
            }
            rec.above("prolong.non_solution", "a random normalized state is not parallel", r, best, 1e-3);
        });
        if (r == 2) {
            rec.guarded("prolong.x_orthogonal", "X^C R_C = 0 for every state", r, [&] {
                double worst = 0, cross = 0;
                for (int i = 0; i < 30; ++i) {
                    const auto& p = pts[static_cast<std::size_t>(i) % pts.size()];
                    const TractorFrame F = tractor_frame(g.A, p, 3);
                    auto L = young_project_rr(
                        random_tensor(rng, n, std::vector<SK>(4, SK::cotractor), 0.0, 0, F.scale_tag), 2);
                    auto R = rank2_Q_dform(F, L);
                    const auto c = canonical_tractors(F, 0);
                    worst = std::max(worst, einsum("C,CDEAB->DEAB", {&c.X, &R}).max_abs() / std::max(1.0, R.max_abs()));
                    cross = std::max(cross, rel_diff(rank2_Q_sharp(F, L), rank2_Q_sharp_from_dform(F, L)));
                }
                rec.below("prolong.x_orthogonal", "X^C R_C = 0 for every state", r, worst, 1e-10, "30 random states");
                rec.below("prolong.tractor_form", "Q_c # L = W^C_c R_C", r, cross, 1e-10, "30 random states");
            });
        }
        if (r == 1 && g.base.has_metric() && g.cfg.upsilon.empty()) {
            rec.guarded("prolong.rank1_components", "nabla_a k_c - mu_ac and nabla_a mu_bc - R_bc^d_a k_d", r, [&] {
                double worst = 0;
                for (const auto& p : pts) {
                    const TractorFrame F = tractor_frame(g.A, p, 3);
                    auto V = antisymmetrize(random_tensor(rng, n, {SK::cotractor, SK::cotractor}, 0.0, 1, F.scale_tag),
                                            {0, 1});
                    auto D = rank1_prolongation_derivative(F, V);
                    ChartTensor k(n, {SK::cotangent}, 2.0, 1);
                    ChartTensor mu(n, {SK::cotangent, SK::cotangent}, 2.0, 1);
                    for (int c = 0; c < n; ++c) {
                        k.set_jet(static_cast<std::size_t>(c), V.jet(V.flat({0, c + 1})));
                        for (int b = 0; b < n; ++b) mu.set_jet(mu.flat({b, c}), V.jet(V.flat({b + 1, c + 1})));
                    }
                    auto dk = covd(F.stack, k);
                    auto dmu = covd(F.stack, mu);
                    auto R = F.stack.riemann.truncated(0);
                    auto k0 = k.truncated(0);
                    auto rk = einsum("bcda,d->abc", {&R, &k0});
                    for (int a = 0; a < n; ++a)
                        for (int c = 0; c < n; ++c) {
                            worst = std::max(worst, std::abs(D({a, 0, c + 1}) - (dk({a, c}) - mu({a, c}))));
                            for (int b = 0; b < n; ++b)
                                worst = std::max(worst, std::abs(D({a, b + 1, c + 1}) - (dmu({a, b, c}) - rk({a, b, c}))));
                        }
                }
                rec.below("prolong.rank1_components", "nabla_a k_c - mu_ac and nabla_a mu_bc - R_bc^d_a k_d", r, worst,
                          1e-10, "tractor form against the two-component system on random states");
            });
        }
    }
}

// ---------------------------------------------------------------------------
// holonomy-dim

void holonomy_dim(const Geometry& g, Recorder& rec, const std::vector<int>& ranks) {
    const RunOptions& opt = rec.opt();
    const int n = g.A.n();
    auto rng = stream(opt.seed, g.cfg.name, "holonomy");
    const Vec base = sample_points(g.cfg.box, 1, rng, 0.2).front();
    const std::string anchor = "dimension of the space of solutions";
    for (int r : ranks) {
        const auto want = expected_dimension(g.cfg, r);
        if (r == 1 || r == 2) {
            rec.guarded("holonomy.dimension", anchor, r, [&] {
                DimensionOptions d;
                d.num_loops = opt.loops;
                d.steps = opt.steps;
                d.seed = opt.seed;
                const auto rep = solution_space_dimension(g.A, r, base, g.cfg.box, d);
                std::ostringstream note;
                note << "holonomy bound " << rep.holonomy_bound << ", obstruction bound " << rep.obstruction_bound;
                if (rep.indeterminate) note << ", indeterminate";
                if (want) {
                    rec.equal("holonomy.dimension", anchor, r, rep.dimension, *want, !rep.indeterminate, note.str());
                } else {
                    note << ", no independent count";
                    rec.equal("holonomy.dimension", anchor, r, rep.dimension, rep.dimension,
                              rep.agree && !rep.indeterminate, note.str());
                }
                rec.equal("holonomy.bounds_agree", "holonomy and obstruction bounds coincide", r,
                          std::abs(rep.holonomy_bound - rep.obstruction_bound), 0, true);
                rec.below("holonomy.class_residual", "transport stays in the state subspace", r, rep.class_residual, 1e-10);
            });
        } else {
            // higher rank: flat path through the polynomial oracle
            rec.guarded("holonomy.dimension", anchor, r, [&] {
                if (g.cfg.catalog_base != "flat2" && g.cfg.catalog_base != "flat3")
                    throw PreconditionError("rank " + std::to_string(r) + " is supported on flat charts only");
                const auto pb = flat_polynomial_oracle(n, r);
                const TractorFrame F = tractor_frame(g.A, base, r + 3);
                double worst = 0;
                for (const auto& c : pb.basis)
                    worst = std::max(worst, flat_case_check(F, candidate_jet(c, n, base, r + 1), r).young_residual);
                std::ostringstream note;
                note << "flat path: polynomial oracle, worst Young residual " << worst;
                rec.equal("holonomy.dimension", anchor, r, pb.dimension, want.value_or(pb.dimension), worst < 1e-10,
                          note.str());
            });
        }
    }
}

// ---------------------------------------------------------------------------
// geodesic-drift

bool geodesic_applicable(const Geometry& g, const std::vector<int>& ranks) {
    if (!g.cfg.upsilon.empty()) return false;
    for (int r : ranks)
        if (!known_solutions(g.cfg, r).empty()) return true;
    return false;
}

void geodesic_drift(const Geometry& g, Recorder& rec, const std::vector<int>& ranks) {
    const RunOptions& opt = rec.opt();
    const int n = g.A.n();
    if (!geodesic_applicable(g, ranks)) {
        rec.skip("geodesic-drift needs known first integrals of an unchanged connection");
        return;
    }
    const int steps = 2 * opt.steps;
    const double T = 2.0;
    double hw = std::numeric_limits<double>::max();
    for (std::size_t i = 0; i < g.cfg.box.lo.size(); ++i) hw = std::min(hw, 0.5 * (g.cfg.box.hi[i] - g.cfg.box.lo[i]));
    auto rng = stream(opt.seed, g.cfg.name, "geodesics");
    std::normal_distribution<double> gauss;
    std::vector<GeodesicSample> curves;
    rec.guarded("geodesic.drift", "k(u, .., u) is constant along geodesics", 0, [&] {
        // initial data are redrawn when a geodesic leaves the box
        for (int attempt = 0; curves.size() < 10; ++attempt) {
            if (attempt == 100) throw ChartExitError("geodesics keep leaving the chart box", 0.0);
            const Vec x0 = sample_points(g.cfg.box, 1, rng, 0.5).front();
            Vec u0(static_cast<std::size_t>(n));
            double norm = 0;
            for (auto& v : u0) {
                v = gauss(rng);
                norm += v * v;
            }
            for (auto& v : u0) v *= 0.25 * hw / std::sqrt(norm);
            try {
                curves.push_back(integrate_geodesic(g.A, x0, u0, T, steps, g.cfg.box));
            } catch (const ChartExitError&) {
            }
        }
        for (int r : ranks) {
            const auto sols = known_solutions(g.cfg, r);
            if (sols.empty()) continue;
            double worst = 0;
            std::string labels;
            for (const auto& s : sols) {
                labels += (labels.empty() ? "" : ", ") + s.label;
                for (const auto& c : curves) worst = std::max(worst, first_integral_drift(g.A, unweighted(g, s), c));
            }
            std::ostringstream note;
            note << "10 geodesics, T = " << T << ", " << steps << " steps; " << labels;
            rec.below("geodesic.drift", "k(u, .., u) is constant along geodesics", r, worst, 1e-8, note.str());
        }
    });
    rec.guarded("geodesic.rk4_ratio", "RK4 error ratio under step halving", 0, [&] {
        const Vec x0 = sample_points(g.cfg.box, 1, rng, 0.3).front();
        Vec u0(static_cast<std::size_t>(n), 0.0);
        u0[0] = 0.4 * hw;
        if (n > 1) u0[1] = 0.3 * hw;
        const auto ratios = rk4_convergence_ratios(g.A, x0, u0, 1.0, 10, 3, g.cfg.box);
        if (std::any_of(ratios.begin(), ratios.end(), [](double q) { return !std::isfinite(q); })) {
            rec.skip("rk4 ratio undefined: the integrator is exact here (straight geodesics)");
            return;
        }
        double worst = 16;
        for (double q : ratios)
            if (std::abs(q - 16) > std::abs(worst - 16)) worst = q;
        std::ostringstream note;
        note << "ratios";
        for (double q : ratios) note << " " << q;
        rec.within("geodesic.rk4_ratio", "RK4 error ratio under step halving", 0, worst, 12, 20, note.str());
    });
}

// ---------------------------------------------------------------------------

std::vector<Geometry> geometries_for(const RunOptions& opt, bool& explicit_geometry) {
    explicit_geometry = !opt.geometries.empty();
    std::vector<Geometry> out;
    const auto names = explicit_geometry ? opt.geometries : catalog_names();
    for (const auto& name : names) out.push_back(make_geometry(resolve_geometry(name)));
    return out;
}

std::vector<int> ranks_or(const RunOptions& opt, std::vector<int> def) { return opt.ranks.empty() ? def : opt.ranks; }

void run_one(const std::string& command, const Geometry& g, const std::vector<Geometry>& all, const RunOptions& opt,
             bool explicit_geometry, RunReport& rep) {
    Recorder rec(rep, opt, g.cfg.name);
    if (command == "verify-identities") {
        verify_identities(g, rec);
        if (g.cfg.upsilon.empty() && !g.cfg.catalog_base.empty()) {
            Geometry changed = make_geometry(builtin_config(g.cfg.catalog_base + "-proj"));
            projective_invariance(g, changed, rec);
        }
        (void)all;
    } else if (command == "flat-check") {
        flat_check(g, rec, ranks_or(opt, {1, 2, 3}), explicit_geometry);
    } else if (command == "prolong-residual") {
        prolong_residual(g, rec, ranks_or(opt, {1, 2}));
    } else if (command == "holonomy-dim") {
        holonomy_dim(g, rec, ranks_or(opt, {1, 2}));
    } else if (command == "geodesic-drift") {
        geodesic_drift(g, rec, ranks_or(opt, {1, 2}));
    }
}

}  // namespace

std::vector<std::string> command_names() {
    return {"verify-identities", "flat-check", "prolong-residual", "holonomy-dim", "geodesic-drift", "full-suite"};
}

RunReport run_command(const std::string& command, const RunOptions& opt) {
    const auto cmds = command_names();
    if (std::find(cmds.begin(), cmds.end(), command) == cmds.end())
        throw PreconditionError("unknown command '" + command + "'");
    if (opt.points < 1 || opt.loops < 8 || opt.steps < 16 || opt.jet_order < 2 || !(opt.tol_scale > 0))
        throw PreconditionError("options out of range: points >= 1, loops >= 8, steps >= 16, jet order >= 2, tol scale > 0");
    bool explicit_geometry = false;
    const auto geoms = geometries_for(opt, explicit_geometry);
    RunReport rep;
    rep.command = command;
    const std::vector<std::string> parts =
        command == "full-suite"
            ? std::vector<std::string>{"verify-identities", "flat-check", "prolong-residual", "holonomy-dim", "geodesic-drift"}
            : std::vector<std::string>{command};
    for (const auto& part : parts) {
        if (part == "flat-check") {
            Recorder rec(rep, opt, "flat");
            recovery_checks(rec, opt);
        }
        for (const auto& g : geoms) run_one(part, g, geoms, opt, explicit_geometry && command != "full-suite", rep);
    }
    if (rep.records.empty()) throw PreconditionError("no checks apply to the selected geometries");
    return rep;
}

bool RunReport::passed() const {
    return std::all_of(records.begin(), records.end(), [](const CheckRecord& r) { return r.pass; });
}

int exit_code(const RunReport& report) { return report.passed() ? 0 : 1; }

std::string RunReport::jsonl() const {
    std::string out;
    for (const auto& r : records) {
        nlohmann::ordered_json j;
        j["check"] = r.check;
        j["anchor"] = r.anchor;
        j["geometry"] = r.geometry;
        j["rank"] = r.rank;
        if (!std::isfinite(r.result)) j["result"] = nullptr;
        else if (r.integer_result) j["result"] = static_cast<long long>(std::llround(r.result));
        else j["result"] = r.result;
        j["comparison"] = r.comparison;
        if (r.comparison == "==") j["tolerance"] = static_cast<long long>(std::llround(r.tolerance));
        else j["tolerance"] = r.tolerance;
        if (r.comparison == "in") j["upper"] = r.upper;
        j["pass"] = r.pass;
        j["seed"] = r.seed;
        if (!r.note.empty()) j["note"] = r.note;
        out += j.dump() + "\n";
    }
    return out;
}

std::string RunReport::summary() const {
    std::ostringstream os;
    int failed = 0;
    for (const auto& r : records) {
        if (r.pass) continue;
        ++failed;
        os << "FAIL " << r.geometry << " " << r.check;
        if (r.rank) os << " r=" << r.rank;
        if (r.comparison == "error") os << ": " << r.note;
        else {
            os << ": " << r.result << " " << (r.comparison == "in" ? "not in" : "vs") << " " << r.tolerance;
            if (r.comparison == "in") os << ".." << r.upper;
            if (!r.note.empty()) os << " (" << r.note << ")";
        }
        os << "\n";
    }
    for (const auto& s : skipped) os << "skipped " << s << "\n";
    os << command << ": " << records.size() - static_cast<std::size_t>(failed) << "/" << records.size()
       << " checks passed\n";
    return os.str();
}

}  // namespace ptk
