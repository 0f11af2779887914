#include "ptk/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "ptk/errors.hpp"

namespace ptk {

using SK = SlotKind;

namespace {

std::vector<Jet> eval_fields(std::span<const ScalarField> fields, std::span<const double> x, int order) {
    const auto xs = coordinate_jets(x, order);
    std::vector<Jet> out;
    out.reserve(fields.size());
    for (const auto& f : fields) {
        Jet j = f(xs);
        if (j.dim() != static_cast<int>(x.size()) || j.order() != order)
            throw ShapeError("field returned a jet of the wrong shape");
        if (j.first_non_finite() >= 0) throw NonFiniteError("non-finite value in geometry field");
        out.push_back(std::move(j));
    }
    return out;
}

void check_point(int n, std::span<const double> x) {
    if (static_cast<int>(x.size()) != n)
        throw ShapeError("point has dimension " + std::to_string(x.size()) + ", chart has " + std::to_string(n));
}

}  // namespace

AffineStructure AffineStructure::from_connection(std::string name, int n, std::vector<ScalarField> gamma) {
    if (n < 2) throw ShapeError("projective structures need dimension >= 2");
    if (static_cast<int>(gamma.size()) != n * n * n) throw ShapeError("connection needs n^3 component fields");
    auto fields = std::make_shared<const std::vector<ScalarField>>(std::move(gamma));
    GammaFn fn = [n, fields](std::span<const double> x, int order) {
        check_point(n, x);
        const auto jets = eval_fields(*fields, x, order);
        ChartTensor G(n, {SK::cotangent, SK::cotangent, SK::tangent}, 0.0, order);
        double scale = 0.0, torsion = 0.0;
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b)
                for (int c = 0; c < n; ++c) {
                    const auto& j = jets[(a * n + b) * n + c];
                    G.set_jet(G.flat({a, b, c}), j);
                    scale = std::max(scale, std::abs(j.value()));
                    torsion = std::max(torsion, std::abs(j.value() - jets[(b * n + a) * n + c].value()));
                }
        if (torsion > 1e-12 * std::max(1.0, scale))
            throw PreconditionError("connection coefficients are not symmetric in the lower indices");
        return G;
    };
    return AffineStructure(std::move(name), n, std::move(fn), {});
}

AffineStructure AffineStructure::from_metric(std::string name, int n, std::vector<ScalarField> metric) {
    if (n < 2) throw ShapeError("projective structures need dimension >= 2");
    if (static_cast<int>(metric.size()) != n * n) throw ShapeError("metric needs n^2 component fields");
    auto fields = std::make_shared<const std::vector<ScalarField>>(metric);
    GammaFn fn = [n, fields](std::span<const double> x, int order) {
        return levi_civita(*fields, n, x, order);
    };
    return AffineStructure(std::move(name), n, std::move(fn), std::move(metric));
}

ChartTensor AffineStructure::metric_jet(std::span<const double> x, int order) const {
    if (!has_metric()) throw PreconditionError("structure '" + name_ + "' has no metric");
    check_point(n_, x);
    const auto jets = eval_fields(metric_, x, order);
    ChartTensor g(n_, {SK::cotangent, SK::cotangent}, 0.0, order);
    for (int a = 0; a < n_; ++a)
        for (int b = 0; b < n_; ++b) {
            g.set_jet(g.flat({a, b}), jets[a * n_ + b]);
            if (std::abs(jets[a * n_ + b].value() - jets[b * n_ + a].value()) >
                1e-12 * std::max(1.0, std::abs(jets[a * n_ + b].value())))
                throw PreconditionError("metric is not symmetric");
        }
    return g;
}

ChartTensor AffineStructure::gamma_jet(std::span<const double> x, int order) const {
    ChartTensor g = gamma_(x, order);
    g.set_scale_tag(name_);
    return g;
}

AffineStructure AffineStructure::projective_change(std::vector<ScalarField> upsilon, std::string name) const {
    if (static_cast<int>(upsilon.size()) != n_) throw ShapeError("one-form needs n component fields");
    auto base = gamma_;
    const int n = n_;
    auto ups = std::make_shared<const std::vector<ScalarField>>(std::move(upsilon));
    GammaFn fn = [n, base, ups](std::span<const double> x, int order) {
        ChartTensor G = base(x, order);
        const auto u = eval_fields(*ups, x, order);
        for (int a = 0; a < n; ++a)
            for (int c = 0; c < n; ++c) {
                // U_a delta_c^b + U_c delta_a^b
                auto add = [&](int b, const Jet& j) {
                    auto dst = G.coeffs(G.flat({a, c, b}));
                    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += j.coeffs()[k];
                };
                add(c, u[a]);
                add(a, u[c]);
            }
        return G;
    };
    return AffineStructure(std::move(name), n, std::move(fn), {});
}

// ---------------------------------------------------------------------------

std::vector<Jet> jet_matrix_inverse(std::span<const Jet> m, int size) {
    if (static_cast<int>(m.size()) != size * size) throw ShapeError("matrix size mismatch");
    std::vector<Jet> a(m.begin(), m.end());
    const int dim = a[0].dim(), order = a[0].order();
    std::vector<Jet> inv(size * size, Jet(dim, order));
    for (int i = 0; i < size; ++i) inv[i * size + i] = Jet::constant(dim, order, 1.0);
    double scale = 0.0;
    for (const auto& j : a) scale = std::max(scale, std::abs(j.value()));
    for (int col = 0; col < size; ++col) {
        int piv = col;
        for (int r = col + 1; r < size; ++r)
            if (std::abs(a[r * size + col].value()) > std::abs(a[piv * size + col].value())) piv = r;
        if (std::abs(a[piv * size + col].value()) <= 1e-14 * std::max(scale, 1e-300))
            throw LinAlgError("singular matrix at the base point");
        if (piv != col)
            for (int k = 0; k < size; ++k) {
                std::swap(a[piv * size + k], a[col * size + k]);
                std::swap(inv[piv * size + k], inv[col * size + k]);
            }
        const Jet p = a[col * size + col];
        for (int k = 0; k < size; ++k) {
            a[col * size + k] = a[col * size + k] / p;
            inv[col * size + k] = inv[col * size + k] / p;
        }
        for (int r = 0; r < size; ++r) {
            if (r == col) continue;
            const Jet f = a[r * size + col];
            for (int k = 0; k < size; ++k) {
                a[r * size + k] -= f * a[col * size + k];
                inv[r * size + k] -= f * inv[col * size + k];
            }
        }
    }
    return inv;
}

Jet jet_determinant(std::span<const Jet> m, int size) {
    if (static_cast<int>(m.size()) != size * size) throw ShapeError("matrix size mismatch");
    if (size == 1) return m[0];
    if (size == 2) return m[0] * m[3] - m[1] * m[2];
    // Laplace expansion along the first row; sizes here are tiny
    Jet det(m[0].dim(), m[0].order());
    for (int c = 0; c < size; ++c) {
        std::vector<Jet> minor;
        for (int r = 1; r < size; ++r)
            for (int k = 0; k < size; ++k)
                if (k != c) minor.push_back(m[r * size + k]);
        const Jet term = m[c] * jet_determinant(minor, size - 1);
        if (c % 2 == 0) det += term;
        else det -= term;
    }
    return det;
}

ChartTensor levi_civita(const ChartTensor& g) {
    const int n = g.n();
    if (g.slots() != std::vector<SK>{SK::cotangent, SK::cotangent}) throw ShapeError("metric must be a (0,2) tensor");
    if (g.order() < 1) throw OrderError("Levi-Civita coefficients need metric jets of order >= 1");
    const int m = g.order() - 1;
    std::vector<Jet> gm;
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) gm.push_back(g.jet(g.flat({a, b})).truncated(m));
    const auto ginv = jet_matrix_inverse(gm, n);
    std::vector<ChartTensor> dg;
    for (int a = 0; a < n; ++a) dg.push_back(g.partial(a));
    auto d = [&](int a, int b, int c) { return dg[a].jet(dg[a].flat({b, c})); };
    ChartTensor G(n, {SK::cotangent, SK::cotangent, SK::tangent}, 0.0, m);
    for (int a = 0; a < n; ++a)
        for (int b = a; b < n; ++b)
            for (int c = 0; c < n; ++c) {
                Jet s(n, m);
                for (int e = 0; e < n; ++e) s += ginv[c * n + e] * (d(a, b, e) + d(b, a, e) - d(e, a, b));
                s *= 0.5;
                G.set_jet(G.flat({a, b, c}), s);
                G.set_jet(G.flat({b, a, c}), s);
            }
    return G;
}

ChartTensor levi_civita(std::span<const ScalarField> g, int n, std::span<const double> x, int order) {
    check_point(n, x);
    if (static_cast<int>(g.size()) != n * n) throw ShapeError("metric needs n^2 component fields");
    const auto jets = eval_fields(g, x, order + 1);
    ChartTensor gt(n, {SK::cotangent, SK::cotangent}, 0.0, order + 1);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) gt.set_jet(gt.flat({a, b}), jets[a * n + b]);
    return levi_civita(gt);
}

// ---------------------------------------------------------------------------

namespace {

const std::string kLabels = "bcdfghijklmnopqrstuvwxyzBCDEFGHIJKLMNOPQRSTUVWXYZ";

}  // namespace

ChartTensor covariant_derivative(const ChartTensor& gamma, const ChartTensor& t, const ChartTensor* tractor_coeffs) {
    const int n = t.n();
    if (t.order() < 1) throw OrderError("covariant derivative needs a field jet of order >= 1");
    const int q = t.order() - 1;
    if (gamma.order() < q) throw OrderError("connection jets of insufficient order for this derivative");
    const ChartTensor G = gamma.truncated(q);
    const ChartTensor T = t.truncated(q);
    const int rank = t.rank();
    if (rank + 1 > static_cast<int>(kLabels.size())) throw ShapeError("tensor rank too large");

    std::vector<SK> slots{SK::cotangent};
    slots.insert(slots.end(), t.slots().begin(), t.slots().end());
    ChartTensor out(n, slots, t.weight(), q, merge_scale(t.scale_tag(), gamma.scale_tag()));

    // partial derivatives
    for (int a = 0; a < n; ++a) {
        ChartTensor d = t.partial(a);
        for (std::size_t f = 0; f < d.ncomp(); ++f) {
            auto src = d.coeffs(f);
            auto dst = out.coeffs(static_cast<std::size_t>(a) * d.ncomp() + f);
            std::copy(src.begin(), src.end(), dst.begin());
        }
    }

    const std::string tl = kLabels.substr(0, static_cast<std::size_t>(rank));
    const std::string out_labels = "a" + tl;
    ChartTensor A;
    bool have_tractor = false;
    for (int i = 0; i < rank; ++i) {
        std::string in = tl;
        in[i] = 'e';
        const std::string free(1, tl[i]);
        ChartTensor term;
        switch (t.kind(i)) {
            case SK::tangent:
                term = einsum("ae" + free + "," + in + "->" + out_labels, {&G, &T});
                out += term;
                break;
            case SK::cotangent:
                term = einsum("a" + free + "e," + in + "->" + out_labels, {&G, &T});
                out -= term;
                break;
            case SK::cotractor:
            case SK::tractor:
                if (!tractor_coeffs) throw KindError("tractor slot present; use the tractor covariant derivative");
                if (!have_tractor) {
                    if (tractor_coeffs->order() < q) throw OrderError("tractor connection jets of insufficient order");
                    A = tractor_coeffs->truncated(q);
                    have_tractor = true;
                }
                if (t.kind(i) == SK::cotractor) {
                    out += einsum("a" + free + "e," + in + "->" + out_labels, {&A, &T});
                } else {
                    out -= einsum("ae" + free + "," + in + "->" + out_labels, {&A, &T});
                }
                break;
        }
    }
    if (t.weight() != 0.0) {
        ChartTensor gt(n, {SK::cotangent}, 0.0, q);
        for (int a = 0; a < n; ++a) {
            Jet s(n, q);
            for (int b = 0; b < n; ++b) s += G.jet(G.flat({a, b, b}));
            gt.set_jet(static_cast<std::size_t>(a), s * (t.weight() / (n + 1)));
        }
        ChartTensor dens = einsum("a," + tl + "->" + out_labels, {&gt, &T});
        dens.set_weight(t.weight());
        out += dens;
    }
    return out;
}

ChartTensor covd(const CurvatureStack& s, const ChartTensor& t) {
    for (auto k : t.slots())
        if (is_tractor_kind(k)) throw KindError("covd acts on tangent/cotangent/density slots only");
    return covariant_derivative(s.gamma, t);
}

CurvatureStack curvature_stack(const AffineStructure& A, std::span<const double> x, int order) {
    return curvature_stack(A.gamma_jet(x, order));
}

CurvatureStack curvature_stack(const ChartTensor& gamma) {
    const int n = gamma.n();
    const int m = gamma.order();
    if (m < 2) throw OrderError("curvature stack needs connection jets of order >= 2");
    CurvatureStack s;
    s.order = m;
    s.gamma = gamma;
    const int q = m - 1;
    const std::string tag = gamma.scale_tag();

    s.gtrace = ChartTensor(n, {SK::cotangent}, 0.0, m, tag);
    for (int a = 0; a < n; ++a) {
        Jet t(n, m);
        for (int b = 0; b < n; ++b) t += gamma.jet(gamma.flat({a, b, b}));
        s.gtrace.set_jet(static_cast<std::size_t>(a), t / static_cast<double>(n + 1));
    }

    // R_ab^c_d = d_a G_bd^c - d_b G_ad^c + G_ae^c G_bd^e - G_be^c G_ad^e
    const ChartTensor G = gamma.truncated(q);
    ChartTensor dG(n, {SK::cotangent, SK::cotangent, SK::cotangent, SK::tangent}, 0.0, q, tag);
    for (int a = 0; a < n; ++a) {
        ChartTensor d = gamma.partial(a);
        for (std::size_t f = 0; f < d.ncomp(); ++f) {
            auto src = d.coeffs(f);
            std::copy(src.begin(), src.end(), dG.coeffs(static_cast<std::size_t>(a) * d.ncomp() + f).begin());
        }
    }
    ChartTensor R = einsum("abdc->abcd", {&dG}) - einsum("badc->abcd", {&dG});
    R += einsum("aec,bde->abcd", {&G, &G});
    R -= einsum("bec,ade->abcd", {&G, &G});
    s.riemann = R;

    s.ricci = einsum("cbcd->bd", {&R});
    const ChartTensor sym = symmetrize(s.ricci, {0, 1});
    const ChartTensor skew = antisymmetrize(s.ricci, {0, 1});
    s.schouten = (1.0 / (n - 1)) * sym + (1.0 / (n + 1)) * skew;
    s.beta = -2.0 * antisymmetrize(s.schouten, {0, 1});

    const ChartTensor dl = delta(n, SK::tangent, SK::cotangent).promoted(q);
    ChartTensor W = R;
    W -= einsum("ca,bd->abcd", {&dl, &s.schouten});
    W += einsum("cb,ad->abcd", {&dl, &s.schouten});
    W -= einsum("ab,cd->abcd", {&s.beta, &dl});
    s.weyl = W;

    const ChartTensor dP = covariant_derivative(gamma, s.schouten);
    s.cotton = dP - einsum("bac->abc", {&dP});
    return s;
}

ChartTensor volume_density(const AffineStructure& A, std::span<const double> x, int order, double w) {
    const ChartTensor g = A.metric_jet(x, order);
    const int n = A.n();
    std::vector<Jet> gm;
    for (std::size_t f = 0; f < g.ncomp(); ++f) gm.push_back(g.jet(f));
    const Jet det = jet_determinant(gm, n);
    if (det.value() <= 0.0) throw LinAlgError("metric determinant is not positive");
    ChartTensor out(n, {}, w, order);
    out.set_jet(0, pow(det, -w / (2.0 * n + 2.0)));
    return out;
}

}  // namespace ptk
