#include "ptk/killing.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <random>
#include <string>
#include <utility>

#include "ptk/errors.hpp"

namespace ptk {

using SK = SlotKind;

namespace {

const std::string kUpper = "ABCDFGHIJKLMNOPQRSTUVWXYZ";
const std::string kLower = "abcdfghijklmnopqrstuvwxyz";

int ipow(int b, int e) {
    int v = 1;
    for (int i = 0; i < e; ++i) v *= b;
    return v;
}

void require_rank(const ChartTensor& t, int rank, SK kind, const char* what) {
    if (t.rank() != rank) throw ShapeError(std::string(what) + ": wrong number of slots");
    for (auto k : t.slots())
        if (k != kind) throw KindError(std::string(what) + ": wrong slot kind");
}

// Tractor curvature with the commutator cross-check whenever the frame allows it.
ChartTensor kappa_of(const TractorFrame& F) {
    return F.order >= 2 ? tractor_curvature(F) : tractor_curvature_formula(F);
}

// X^B1 .. X^Br contracted into the first r slots of a 2r-slot tensor.
ChartTensor contract_x(const TractorFrame& F, const ChartTensor& L, int r) {
    const auto c = canonical_tractors(F, L.order());
    std::string spec;
    std::vector<const ChartTensor*> ops;
    const std::string all = kUpper.substr(0, static_cast<std::size_t>(2 * r));
    for (int i = 0; i < r; ++i) {
        spec += all[i];
        spec += ',';
        ops.push_back(&c.X);
    }
    spec += all + "->" + all.substr(static_cast<std::size_t>(r));
    ops.push_back(&L);
    return einsum(spec, ops);
}

// Extract Z-slots: W^A_a .. W^B_b K_A..B.
ChartTensor extract_z(const TractorFrame& F, const ChartTensor& K) {
    const int r = K.rank();
    const auto c = canonical_tractors(F, K.order());
    std::string spec;
    std::vector<const ChartTensor*> ops;
    for (int i = 0; i < r; ++i) {
        spec += kUpper[i];
        spec += kLower[i];
        spec += ',';
        ops.push_back(&c.W);
    }
    spec += kUpper.substr(0, static_cast<std::size_t>(r)) + "->" + kLower.substr(0, static_cast<std::size_t>(r));
    ops.push_back(&K);
    return einsum(spec, ops);
}

std::vector<int> iota_slots(int from, int count) {
    std::vector<int> v(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) v[static_cast<std::size_t>(i)] = from + i;
    return v;
}

// Component block of a tensor at a fixed value of its leading slot.
ChartTensor slice_leading(const ChartTensor& t, int i) {
    std::vector<SK> slots(t.slots().begin() + 1, t.slots().end());
    ChartTensor out(t.n(), slots, t.weight(), t.order(), t.scale_tag());
    const std::size_t block = out.ncomp() * out.ncoef();
    auto src = t.data().subspan(static_cast<std::size_t>(i) * block, block);
    std::copy(src.begin(), src.end(), out.data().begin());
    return out;
}

void place_leading(ChartTensor& dst, int i, const ChartTensor& part) {
    const std::size_t block = part.ncomp() * part.ncoef();
    auto src = part.data();
    std::copy(src.begin(), src.end(), dst.data().begin() + static_cast<std::ptrdiff_t>(i * block));
}

double skew_defect(const ChartTensor& V) {
    return max_abs_diff(V, -1.0 * permute(V, {1, 0}));
}

}  // namespace

ChartTensor candidate_jet(const KillingCandidate& c, int n, std::span<const double> x, int order) {
    if (c.r < 1) throw UnsupportedRankError("rank must be positive");
    if (static_cast<int>(c.components.size()) != ipow(n, c.r))
        throw ShapeError("candidate needs n^r component fields");
    ChartTensor k(n, std::vector<SK>(static_cast<std::size_t>(c.r), SK::cotangent), 2.0 * c.r, order);
    for (std::size_t f = 0; f < k.ncomp(); ++f) k.set_jet(f, jet_of(c.components[f], x, order));
    if (c.r > 1) {
        const ChartTensor s = symmetrize(k, iota_slots(0, c.r));
        double diff = 0;
        for (std::size_t i = 0; i < k.data().size(); ++i) diff = std::max(diff, std::abs(k.data()[i] - s.data()[i]));
        double scale = 1;
        for (double v : k.data()) scale = std::max(scale, std::abs(v));
        if (diff > 1e-12 * scale) throw ShapeError("candidate components are not symmetric");
    }
    return k;
}

KillingCandidate density_lift(const KillingCandidate& c, const AffineStructure& metric_source) {
    if (!metric_source.has_metric()) throw PreconditionError("density lift needs a metric");
    const int n = metric_source.n();
    const double w = 2.0 * c.r;
    const auto g = metric_source.metric_fields();
    KillingCandidate out;
    out.r = c.r;
    for (const auto& comp : c.components) {
        out.components.emplace_back([comp, g, n, w](std::span<const Jet> xs) {
            std::vector<Jet> gm;
            gm.reserve(g.size());
            for (const auto& f : g) gm.push_back(f(xs));
            const Jet det = jet_determinant(gm, n);
            return comp(xs) * pow(det, -w / (2.0 * n + 2.0));
        });
    }
    return out;
}

ChartTensor inject_k(const TractorFrame& F, const ChartTensor& k) {
    const int r = k.rank();
    if (r < 1) throw UnsupportedRankError("rank must be positive");
    require_rank(k, r, SK::cotangent, "inject_k");
    const auto c = canonical_tractors(F, k.order());
    std::string spec;
    std::vector<const ChartTensor*> ops;
    for (int i = 0; i < r; ++i) {
        spec += kUpper[i];
        spec += kLower[i];
        spec += ',';
        ops.push_back(&c.Z);
    }
    spec += kLower.substr(0, static_cast<std::size_t>(r)) + "->" + kUpper.substr(0, static_cast<std::size_t>(r));
    ops.push_back(&k);
    return einsum(spec, ops);
}

ChartTensor killing_operator(const TractorFrame& F, const ChartTensor& k) {
    require_rank(k, k.rank(), SK::cotangent, "killing_operator");
    const ChartTensor d = covariant_derivative(F.stack.gamma, k);
    return symmetrize(d, iota_slots(0, k.rank() + 1));
}

ChartTensor killing_operator_tractor(const TractorFrame& F, const ChartTensor& k) {
    const ChartTensor DK = thomas_d(F, inject_k(F, k));
    return symmetrize(DK, iota_slots(0, k.rank() + 1));
}

ChartTensor thomas_d_power(const TractorFrame& F, const ChartTensor& K, int r) {
    ChartTensor out = K;
    for (int i = 0; i < r; ++i) out = thomas_d(F, out);
    return out;
}

ChartTensor splitting_L(const TractorFrame& F, const ChartTensor& k) {
    const int r = k.rank();
    return young_project_rr(thomas_d_power(F, inject_k(F, k), r), r);
}

double recovery_constant(int n, int r) {
    static std::mutex mu;
    static std::map<std::pair<int, int>, double> cache;
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find({n, r});
        if (it != cache.end()) return it->second;
    }
    std::vector<ScalarField> zero(static_cast<std::size_t>(n * n * n), ScalarField::constant(0.0));
    const auto flat = AffineStructure::from_connection("flat", n, zero);
    const std::vector<double> x(static_cast<std::size_t>(n), 0.0);
    const TractorFrame F = tractor_frame(flat, x, std::max(2, r + 1));
    std::mt19937 rng(1000u + static_cast<unsigned>(31 * n + r));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    ChartTensor k(n, std::vector<SK>(static_cast<std::size_t>(r), SK::cotangent), 2.0 * r, r, F.scale_tag);
    for (auto& v : k.data()) v = u(rng);
    if (r > 1) k = symmetrize(k, iota_slots(0, r));
    const ChartTensor K = inject_k(F, k).truncated(0);
    const ChartTensor L = splitting_L(F, k);
    const ChartTensor lhs = contract_x(F, L, r);
    double num = 0, den = 0;
    for (std::size_t f = 0; f < K.ncomp(); ++f) {
        num += lhs.value(f) * K.value(f);
        den += K.value(f) * K.value(f);
    }
    const double c = num / den;
    std::lock_guard<std::mutex> lock(mu);
    cache[{n, r}] = c;
    return c;
}

ChartTensor recover_k_any_rank(const TractorFrame& F, const ChartTensor& L, int r) {
    require_rank(L, 2 * r, SK::cotractor, "recover_k");
    const double c = recovery_constant(F.n, r);
    return extract_z(F, (1.0 / c) * contract_x(F, L, r));
}

ChartTensor recover_k(const TractorFrame& F, const ChartTensor& L, int r) {
    if (r != 1 && r != 2) throw UnsupportedRankError("recovery is implemented for ranks 1 and 2");
    require_rank(L, 2 * r, SK::cotractor, "recover_k");
    const double c = r == 1 ? 1.0 : 1.5;
    return extract_z(F, (1.0 / c) * contract_x(F, L, r));
}

// ---------------------------------------------------------------------------
// Rank 1

ChartTensor rank1_Q_sharp(const TractorFrame& F, const ChartTensor& V) {
    require_rank(V, 2, SK::cotractor, "rank-1 state");
    return QSharpOperator(F, 1, V.order()).apply(V);
}

ChartTensor rank1_prolongation_derivative(const TractorFrame& F, const ChartTensor& V) {
    require_rank(V, 2, SK::cotractor, "rank-1 state");
    double scale = 1;
    for (double v : V.data()) scale = std::max(scale, std::abs(v));
    if (skew_defect(V) > 1e-12 * scale) throw ShapeError("rank-1 state must be skew");
    const ChartTensor dV = tractor_covd(F, V);
    const ChartTensor Q = rank1_Q_sharp(F, V);
    const int q = std::min(dV.order(), Q.order());
    return dV.truncated(q) - Q.truncated(q);
}

// ---------------------------------------------------------------------------
// Rank 2

ChartTensor rank2_Q_dform(const TractorFrame& F, const ChartTensor& L) {
    require_rank(L, 4, SK::cotractor, "rank-2 state");
    if (F.order < 2) throw OrderError("the rank-2 derivative formula needs connection jets of order >= 3");
    const ChartTensor Wfull = w_curvature(kappa_of(F));
    const ChartTensor DW = thomas_d(F, Wfull);
    const int q = std::min(L.order(), DW.order());
    const ChartTensor Wc = Wfull.truncated(q);
    const ChartTensor Dw = DW.truncated(q);
    const ChartTensor l = L.truncated(q);
    const auto c = canonical_tractors(F, q);
    const ChartTensor* X = &c.X;
    const ChartTensor M = w_sharp(Wc, l);  // [p][q][L slots]
    const ChartTensor N = w_sharp(Dw, l);  // [h][p][q][L slots]
    const std::string out = "->CDEAB";

    ChartTensor line1 = symmetrize(einsum("CDEFAB,F" + out, {&M, X}), {1, 2});
    line1 += symmetrize(einsum("CABFED,F" + out, {&M, X}), {3, 4});

    ChartTensor line2 = einsum("DABFEC,F" + out, {&M, X}) + einsum("ADEFBC,F" + out, {&M, X});
    line2 = symmetrize(symmetrize(line2, {1, 2}), {3, 4});

    ChartTensor line3 = symmetrize(einsum("DECABFG,F,G" + out, {&N, X, X}), {1, 2});
    line3 += symmetrize(einsum("ABCDEFG,F,G" + out, {&N, X, X}), {3, 4});

    ChartTensor line4 = einsum("DEABCFG,F,G" + out, {&N, X, X}) + einsum("ABDECFG,F,G" + out, {&N, X, X});
    line4 = symmetrize(symmetrize(line4, {1, 2}), {3, 4});

    ChartTensor line5 = einsum("ACDEBFG,F,G" + out, {&N, X, X}) + einsum("DCABEFG,F,G" + out, {&N, X, X});
    line5 = symmetrize(symmetrize(line5, {1, 2}), {3, 4});

    ChartTensor R = line1 + line2;
    R -= (1.0 / 6.0) * line3;
    R -= (1.0 / 3.0) * line4;
    R -= (1.0 / 6.0) * line5;
    return R;
}

ChartTensor rank2_Q_sharp_from_dform(const TractorFrame& F, const ChartTensor& L) {
    const ChartTensor R = rank2_Q_dform(F, L);
    const auto c = canonical_tractors(F, R.order());
    return einsum("Cc,CDEAB->cDEAB", {&c.W, &R});
}

ChartTensor rank2_Q_sharp(const TractorFrame& F, const ChartTensor& L) {
    require_rank(L, 4, SK::cotractor, "rank-2 state");
    return QSharpOperator(F, 2, L.order()).apply(L);
}

namespace {

double max_coeff(const ChartTensor& t) {
    double m = 0;
    for (double v : t.data()) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace

QSharpOperator::QSharpOperator(const TractorFrame& F, int r, int order) : r_(r) {
    if (r == 2 && F.order < 2) throw OrderError("the rank-2 derivative formula needs connection jets of order >= 3");
    const ChartTensor kfull = kappa_of(F);
    if (r == 2) {
        const ChartTensor dkfull = tractor_covd(F, kfull);  // [a][b][c][up][low] = nabla_a kappa_bc
        init(kfull, &dkfull, order);
    } else {
        init(kfull, nullptr, order);
    }
}

QSharpOperator::QSharpOperator(const ChartTensor& kfull, const ChartTensor* dkfull, int r, int order) : r_(r) {
    init(kfull, dkfull, order);
}

void QSharpOperator::init(const ChartTensor& kfull, const ChartTensor* dkfull, int order) {
    const int r = r_;
    if (r != 1 && r != 2) throw UnsupportedRankError("explicit prolongation connections exist for ranks 1 and 2");
    const int n = kfull.n();
    if (r == 1) {
        const ChartTensor Wfull = w_curvature(kfull);
        q_ = std::min(order, Wfull.order());
        w_ = Wfull.truncated(q_);
        c_ = canonical_tractors(n, q_, kfull.scale_tag());
        vanishes_ = max_coeff(w_) < 1e-13;
        return;
    }
    if (!dkfull) throw PreconditionError("the rank-2 operator needs nabla kappa");
    q_ = std::min(order, dkfull->order());
    const ChartTensor kap = kfull.truncated(q_);
    const ChartTensor dk = dkfull->truncated(q_);
    c_ = canonical_tractors(n, q_, kfull.scale_tag());
    vanishes_ = std::max(max_coeff(kap), max_coeff(dk)) < 1e-13;

    // Z_A^a kappa_ca, Z_A^a Z_D^d kappa_ad
    kz_ = einsum("Aa,caUV->cAUV", {&c_.Z, &kap});
    kzz_ = w_curvature(kap);
    // sym_(AD) (3 Y_A Z_D^b kappa_bc - Z_A^a Z_D^b nabla_a kappa_bc)
    h_ = 3.0 * einsum("A,Db,bcUV->ADcUV", {&c_.Y, &c_.Z, &kap});
    h_ -= einsum("Aa,Db,abcUV->ADcUV", {&c_.Z, &c_.Z, &dk});
    h_ = symmetrize(h_, {0, 1});
    // sym_(AB) (3 Y_A Z_B^b Z_D^d kappa_bd - Z_A^a Z_B^b Z_D^d nabla_a kappa_bd)
    j_ = 3.0 * einsum("A,Bb,Dd,bdUV->ABDUV", {&c_.Y, &c_.Z, &c_.Z, &kap});
    j_ -= einsum("Aa,Bb,Dd,abdUV->ABDUV", {&c_.Z, &c_.Z, &c_.Z, &dk});
    j_ = symmetrize(j_, {0, 1});
}

ChartTensor QSharpOperator::apply(const ChartTensor& V) const {
    require_rank(V, 2 * r_, SK::cotractor, "state");
    if (V.order() < q_) throw OrderError("state jet order is below the operator order");
    const ChartTensor v = V.truncated(q_);
    const ChartTensor* X = &c_.X;
    const ChartTensor* Wt = &c_.W;
    if (r_ == 1) return -1.0 * einsum("BCEA,Aa,F,EF->aBC", {&w_, Wt, X, &v});

    const std::string out = "->cDEAB";
    const ChartTensor S1 = w_sharp(kz_, v);   // [c][A][L slots]
    const ChartTensor S2 = w_sharp(kzz_, v);  // [A][D][L slots]
    const ChartTensor SH = w_sharp(h_, v);    // [A][D][c][L slots]
    const ChartTensor SJ = w_sharp(j_, v);    // [A][B][D][L slots]

    ChartTensor line1 = symmetrize(einsum("cABFED,F" + out, {&S1, X}), {3, 4});
    line1 += symmetrize(einsum("cDEFAB,F" + out, {&S1, X}), {1, 2});

    ChartTensor line2 = einsum("ADEFBC,F,Cc" + out, {&S2, X, Wt}) - einsum("ADECBF,F,Cc" + out, {&S2, X, Wt});
    line2 = symmetrize(symmetrize(line2, {1, 2}), {3, 4});

    ChartTensor quarter = einsum("ADcBEFG,F,G" + out, {&SH, X, X});
    quarter += einsum("AEcBDFG,F,G" + out, {&SH, X, X});
    quarter += einsum("BDcAEFG,F,G" + out, {&SH, X, X});
    quarter += einsum("BEcADFG,F,G" + out, {&SH, X, X});
    ChartTensor pair = einsum("ABcDEFG,F,G" + out, {&SH, X, X});
    pair += einsum("DEcABFG,F,G" + out, {&SH, X, X});

    ChartTensor last = symmetrize(einsum("ABDECFG,F,G,Cc" + out, {&SJ, X, X, Wt}), {1, 2});
    last += symmetrize(einsum("DEABCFG,F,G,Cc" + out, {&SJ, X, X, Wt}), {3, 4});

    ChartTensor Q = line1 + line2;
    Q -= (1.0 / 12.0) * quarter;
    Q += (1.0 / 6.0) * pair;
    Q += (1.0 / 3.0) * last;  // D_(A W_B)D = -J, so the D-form's -1/3 term enters with +
    return Q;
}

ChartTensor rank2_prolongation_derivative(const TractorFrame& F, const ChartTensor& L) {
    const ChartTensor dL = tractor_covd(F, L);
    const ChartTensor Q = rank2_Q_sharp(F, L);
    const int q = std::min(dL.order(), Q.order());
    return dL.truncated(q) - Q.truncated(q);
}

ChartTensor q_sharp(const TractorFrame& F, const ChartTensor& V, int r) {
    if (r == 1) return rank1_Q_sharp(F, V);
    if (r == 2) return rank2_Q_sharp(F, V);
    throw UnsupportedRankError("explicit prolongation connections exist for ranks 1 and 2");
}

ChartTensor integrability_obstruction(const TractorFrame& F, const ChartTensor& L, int r) {
    return integrability_obstruction(F, std::span<const ChartTensor>(&L, 1), r).front();
}

std::vector<ChartTensor> integrability_obstruction(const TractorFrame& F, std::span<const ChartTensor> Ls, int r) {
    if (r != 1 && r != 2) throw UnsupportedRankError("explicit prolongation connections exist for ranks 1 and 2");
    if (F.order < 3) throw OrderError("the integrability operator needs connection jets of order >= 4");
    const int n = F.n;
    const QSharpOperator op1(F, r, 1);
    const QSharpOperator op0(F, r, 0);
    const ChartTensor kap = kappa_of(F).truncated(0);
    const auto& space = JetSpace::of(n);
    std::vector<int> swap = iota_slots(0, 2 + 2 * r);
    std::swap(swap[0], swap[1]);

    std::vector<ChartTensor> result;
    result.reserve(Ls.size());
    for (const ChartTensor& L : Ls) {
        require_rank(L, 2 * r, SK::cotractor, "state");
        const ChartTensor L0 = L.truncated(0);

        // A jet of L that is parallel at the base point, so that nabla_b (Q_a # L1) = (nabla_b Q_a) # L0.
        ChartTensor L1 = L0.promoted(1);
        L1.set_scale_tag(F.scale_tag);
        const ChartTensor dL1 = tractor_covd(F, L1);
        for (int b = 0; b < n; ++b) {
            std::vector<int> alpha(static_cast<std::size_t>(n), 0);
            alpha[static_cast<std::size_t>(b)] = 1;
            const std::size_t kb = space.index_of(alpha);
            const ChartTensor slice = slice_leading(dL1, b);
            for (std::size_t f = 0; f < L1.ncomp(); ++f) L1.coeffs(f)[kb] = -slice.value(f);
        }

        const ChartTensor QL = op1.apply(L1);         // [a][slots], order 1
        const ChartTensor dQL = tractor_covd(F, QL);  // [b][a][slots] = nabla_b (Q_a # L)
        const ChartTensor QL0 = QL.truncated(0);

        std::vector<SK> slots{SK::cotangent, SK::cotangent};
        slots.insert(slots.end(), L.slots().begin(), L.slots().end());
        ChartTensor QQ(n, slots, 0.0, 0, F.scale_tag);  // [o][i] = Q_o # (Q_i # L)
        for (int i = 0; i < n; ++i) {
            const ChartTensor inner = op0.apply(slice_leading(QL0, i));  // [o][slots]
            for (int o = 0; o < n; ++o) place_leading(QQ, o * n + i, slice_leading(inner, o));
        }
        const ChartTensor KL = w_sharp(kap, L0);  // [b][a][slots] = kappa_ba # L
        const ChartTensor dQ = dQL.truncated(0);
        ChartTensor sum = dQ - permute(dQ, swap);
        sum += permute(QQ, swap) - QQ;
        result.push_back(KL - sum);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Flat case, any rank

FlatCaseResult flat_case_check(const TractorFrame& F, const ChartTensor& k, int r, double tol) {
    if (r < 1 || k.rank() != r) throw UnsupportedRankError("rank must be positive and match k");
    if (k.order() < r + 1) throw OrderError("flat-case check needs k jets of order >= r + 1");
    if (tractor_curvature_formula(F).max_abs() > 1e-8)
        throw PreconditionError("structure is not projectively flat at this point");
    double scale = 1;
    for (std::size_t f = 0; f < k.ncomp(); ++f) scale = std::max(scale, std::abs(k.value(f)));
    const double eps = tol * scale;

    FlatCaseResult res;
    const ChartTensor K = inject_k(F, k);
    const ChartTensor DK = thomas_d_power(F, K, r);
    res.young_residual = symmetrize(DK, iota_slots(0, r + 1)).max_abs();
    res.killing_residual = killing_operator(F, k).max_abs();
    const ChartTensor L = young_project_rr(DK, r);
    res.parallel_residual = tractor_covd(F, L).max_abs();
    res.recovery_residual = max_abs_diff(recover_k_any_rank(F, L, r).truncated(0), k.truncated(0));
    res.solution = res.killing_residual < eps;
    const bool young_ok = res.young_residual < eps;
    res.consistent = (young_ok == res.solution) && (!res.solution || res.parallel_residual < eps);
    return res;
}

int young22_dimension(int n) {
    const int m = (n + 1) * (n + 1);
    return m * (m - 1) / 12;
}

}  // namespace ptk
