#include "ptk/tractor.hpp"

#include <algorithm>
#include <cstdio>
#include <string>

#include "ptk/errors.hpp"

namespace ptk {

using SK = SlotKind;

namespace {

const std::string kLabels = "cdfghijklmnopqrstuvwxyz";
const std::string kLead = "ABCDFGHIJK";

}  // namespace

TractorFrame tractor_frame(const AffineStructure& A, std::span<const double> x, int order) {
    return tractor_frame(curvature_stack(A, x, order));
}

TractorFrame tractor_frame(const CurvatureStack& s) {
    TractorFrame F;
    F.n = s.gamma.n();
    F.order = s.order - 1;
    F.scale_tag = s.gamma.scale_tag();
    F.stack = s;
    const int n = F.n;
    const int q = F.order;
    const ChartTensor G = s.gamma.truncated(q);
    const ChartTensor gt = s.gtrace.truncated(q);
    ChartTensor A(n, {SK::cotangent, SK::cotractor, SK::tractor}, 0.0, q, F.scale_tag);
    for (int a = 0; a < n; ++a) {
        const Jet ga = gt.jet(static_cast<std::size_t>(a));
        A.set_jet(A.flat({a, 0, 0}), ga);
        A({a, 0, a + 1}) = -1.0;
        for (int b = 0; b < n; ++b) {
            A.set_jet(A.flat({a, b + 1, 0}), s.schouten.jet(s.schouten.flat({a, b})));
            for (int c = 0; c < n; ++c) {
                Jet v = -G.jet(G.flat({a, b, c}));
                if (b == c) v += ga;
                A.set_jet(A.flat({a, b + 1, c + 1}), v);
            }
        }
    }
    F.conn = A;
    return F;
}

CanonicalTractors canonical_tractors(const TractorFrame& F, int order) {
    return canonical_tractors(F.n, order, F.scale_tag);
}

CanonicalTractors canonical_tractors(int n, int order, const std::string& scale_tag) {
    CanonicalTractors c;
    c.X = ChartTensor(n, {SK::tractor}, 1.0, 0, scale_tag);
    c.Y = ChartTensor(n, {SK::cotractor}, -1.0, 0, scale_tag);
    c.Z = ChartTensor(n, {SK::cotractor, SK::tangent}, -1.0, 0, scale_tag);
    c.W = ChartTensor(n, {SK::tractor, SK::cotangent}, 1.0, 0, scale_tag);
    c.X({0}) = 1.0;
    c.Y({0}) = 1.0;
    for (int a = 0; a < n; ++a) {
        c.Z({a + 1, a}) = 1.0;
        c.W({a + 1, a}) = 1.0;
    }
    if (order > 0) {
        c.X = c.X.promoted(order);
        c.Y = c.Y.promoted(order);
        c.Z = c.Z.promoted(order);
        c.W = c.W.promoted(order);
    }
    return c;
}

ChartTensor tractor_covd(const TractorFrame& F, const ChartTensor& T) {
    merge_scale(T.scale_tag(), F.scale_tag);
    if (T.n() != F.n) throw ShapeError("tensor dimension does not match the frame");
    return covariant_derivative(F.stack.gamma, T, &F.conn);
}

ChartTensor thomas_d(const TractorFrame& F, const ChartTensor& V) {
    const ChartTensor nab = tractor_covd(F, V);
    const int q = nab.order();
    std::vector<SK> slots{SK::cotractor};
    slots.insert(slots.end(), V.slots().begin(), V.slots().end());
    ChartTensor out(F.n, slots, V.weight() - 1.0, q, nab.scale_tag());
    const ChartTensor v = V.truncated(q);
    const std::size_t block = v.ncomp() * v.ncoef();
    auto dst = out.data();
    auto src = v.data();
    for (std::size_t i = 0; i < block; ++i) dst[i] = V.weight() * src[i];
    auto rest = nab.data();
    std::copy(rest.begin(), rest.end(), dst.begin() + static_cast<std::ptrdiff_t>(block));
    return out;
}

ChartTensor tractor_curvature_formula(const TractorFrame& F) {
    const int n = F.n;
    const int q = F.order - 1;
    if (q < 0) throw OrderError("tractor curvature needs connection jets of order >= 2");
    const ChartTensor Wy = F.stack.weyl.truncated(q);
    const ChartTensor C = F.stack.cotton.truncated(q);
    ChartTensor kappa(n, {SK::cotangent, SK::cotangent, SK::tractor, SK::cotractor}, 0.0, q, F.scale_tag);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            for (int d = 0; d < n; ++d) {
                for (int c = 0; c < n; ++c)
                    kappa.set_jet(kappa.flat({a, b, c + 1, d + 1}), Wy.jet(Wy.flat({a, b, c, d})));
                kappa.set_jet(kappa.flat({a, b, 0, d + 1}), -C.jet(C.flat({a, b, d})));
            }
    return kappa;
}

ChartTensor tractor_curvature_commutator(const TractorFrame& F) {
    const int n = F.n;
    const int q = F.order - 2;
    if (q < 0) throw OrderError("commutator route needs connection jets of order >= 3");
    ChartTensor kappa(n, {SK::cotangent, SK::cotangent, SK::tractor, SK::cotractor}, 0.0, q, F.scale_tag);
    for (int d = 0; d <= n; ++d) {
        ChartTensor e(n, {SK::tractor}, 0.0, 0, F.scale_tag);
        e({d}) = 1.0;
        const ChartTensor dd = tractor_covd(F, tractor_covd(F, e.promoted(F.order)));
        const ChartTensor comm = dd - permute(dd, {1, 0, 2});
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b)
                for (int c = 0; c <= n; ++c)
                    std::copy(comm.coeffs(comm.flat({a, b, c})).begin(), comm.coeffs(comm.flat({a, b, c})).end(),
                              kappa.coeffs(kappa.flat({a, b, c, d})).begin());
    }
    return kappa;
}

ChartTensor tractor_curvature(const TractorFrame& F) {
    if (F.order < 2) throw OrderError("tractor curvature needs connection jets of order >= 3");
    ChartTensor kappa = tractor_curvature_formula(F);
    const ChartTensor check = tractor_curvature_commutator(F);
    const double diff = max_abs_diff(kappa.truncated(check.order()), check);
    if (diff > 1e-10 * std::max(1.0, kappa.max_abs())) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "tractor curvature mismatch between formula and commutator: %.3e", diff);
        throw Error(buf);
    }
    return kappa;
}

ChartTensor w_curvature(const ChartTensor& kappa) {
    const int n = kappa.n();
    ChartTensor Wc(n, {SK::cotractor, SK::cotractor, SK::tractor, SK::cotractor}, -2.0, kappa.order(),
                   kappa.scale_tag());
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            for (int c = 0; c <= n; ++c)
                for (int d = 0; d <= n; ++d) {
                    auto src = kappa.coeffs(kappa.flat({a, b, c, d}));
                    std::copy(src.begin(), src.end(), Wc.coeffs(Wc.flat({a + 1, b + 1, c, d})).begin());
                }
    return Wc;
}

ChartTensor w_curvature(const TractorFrame& F) { return w_curvature(tractor_curvature(F)); }

ChartTensor w_sharp(const ChartTensor& Wc, const ChartTensor& T) {
    const int lead = Wc.rank() - 2;
    if (lead < 0 || Wc.kind(lead) != SK::tractor || Wc.kind(lead + 1) != SK::cotractor)
        throw KindError("the acting tensor must end in a tractor and a cotractor slot");
    if (lead > static_cast<int>(kLead.size())) throw ShapeError("too many leading slots");
    for (auto k : T.slots())
        if (!is_tractor_kind(k)) throw KindError("the W-curvature action needs tractor-type slots only");
    if (T.rank() > static_cast<int>(kLabels.size())) throw ShapeError("tensor rank too large");
    const int q = std::min(Wc.order(), T.order());
    const ChartTensor W = Wc.truncated(q);
    const ChartTensor V = T.truncated(q);
    const std::string ll = kLead.substr(0, static_cast<std::size_t>(lead));
    const std::string tl = kLabels.substr(0, static_cast<std::size_t>(T.rank()));
    const std::string out_labels = ll + tl;
    std::vector<SK> slots(Wc.slots().begin(), Wc.slots().begin() + lead);
    slots.insert(slots.end(), T.slots().begin(), T.slots().end());
    ChartTensor out(T.n(), slots, W.weight() + V.weight(), q, merge_scale(W.scale_tag(), V.scale_tag()));
    for (int i = 0; i < T.rank(); ++i) {
        std::string in = tl;
        in[i] = 'e';
        const std::string free(1, tl[i]);
        if (T.kind(i) == SK::cotractor)
            out -= einsum(ll + "e" + free + "," + in + "->" + out_labels, {&W, &V});
        else
            out += einsum(ll + free + "e," + in + "->" + out_labels, {&W, &V});
    }
    return out;
}

}  // namespace ptk
