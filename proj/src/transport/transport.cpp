#include "ptk/transport.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <random>

#include "ptk/errors.hpp"
#include "ptk/tractor.hpp"

namespace ptk {

using SK = SlotKind;

// ---------------------------------------------------------------------------
// Boxes and geodesics

Box Box::cube(int n, double half_width) {
    return Box{std::vector<double>(static_cast<std::size_t>(n), -half_width),
               std::vector<double>(static_cast<std::size_t>(n), half_width)};
}

bool Box::contains(std::span<const double> x) const {
    if (x.size() != lo.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!(x[i] >= lo[i] && x[i] <= hi[i])) return false;
    return true;
}

namespace {

using Vec = std::vector<double>;

Vec axpy(const Vec& x, double h, const Vec& v) {
    Vec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + h * v[i];
    return out;
}

// -Gamma_ab^c u^a u^b at x; ChartExitError outside the box.
Vec geodesic_accel(const AffineStructure& A, const Vec& x, const Vec& u, const Box& box, double t) {
    if (!box.contains(x)) throw ChartExitError("geodesic left the chart box", t);
    const ChartTensor G = A.gamma_jet(x, 0);
    const int n = A.n();
    Vec acc(static_cast<std::size_t>(n), 0.0);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            for (int c = 0; c < n; ++c) acc[c] -= G({a, b, c}) * u[a] * u[b];
    return acc;
}

void require_dim(const AffineStructure& A, std::size_t size, const char* what) {
    if (static_cast<int>(size) != A.n()) throw ShapeError(std::string(what) + " has the wrong dimension");
}

}  // namespace

GeodesicSample integrate_geodesic(const AffineStructure& A, std::span<const double> x0,
                                  std::span<const double> u0, double T, int steps, const Box& box) {
    require_dim(A, x0.size(), "initial point");
    require_dim(A, u0.size(), "initial velocity");
    if (steps < 1) throw PreconditionError("geodesic integration needs at least one step");
    const double h = T / steps;
    GeodesicSample s;
    Vec x(x0.begin(), x0.end()), u(u0.begin(), u0.end());
    s.t.push_back(0.0);
    s.x.push_back(x);
    s.u.push_back(u);
    for (int k = 0; k < steps; ++k) {
        const double t = k * h;
        const Vec a1 = geodesic_accel(A, x, u, box, t);
        const Vec x2 = axpy(x, h / 2, u), u2 = axpy(u, h / 2, a1);
        const Vec a2 = geodesic_accel(A, x2, u2, box, t + h / 2);
        const Vec x3 = axpy(x, h / 2, u2), u3 = axpy(u, h / 2, a2);
        const Vec a3 = geodesic_accel(A, x3, u3, box, t + h / 2);
        const Vec x4 = axpy(x, h, u3), u4 = axpy(u, h, a3);
        const Vec a4 = geodesic_accel(A, x4, u4, box, t + h);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] += h / 6 * (u[i] + 2 * u2[i] + 2 * u3[i] + u4[i]);
            u[i] += h / 6 * (a1[i] + 2 * a2[i] + 2 * a3[i] + a4[i]);
        }
        if (!box.contains(x)) throw ChartExitError("geodesic left the chart box", t + h);
        s.t.push_back(t + h);
        s.x.push_back(x);
        s.u.push_back(u);
    }
    return s;
}

double first_integral_drift(const AffineStructure& A, const KillingCandidate& c, const GeodesicSample& curve) {
    const int n = A.n();
    int count = 1;
    for (int i = 0; i < c.r; ++i) count *= n;
    if (static_cast<int>(c.components.size()) != count) throw ShapeError("candidate has the wrong number of components");
    auto integral = [&](const Vec& x, const Vec& u) {
        double sum = 0;
        for (int f = 0; f < count; ++f) {
            double term = jet_of(c.components[static_cast<std::size_t>(f)], x, 0).value();
            for (int s = 0, rest = f; s < c.r; ++s, rest /= n) term *= u[static_cast<std::size_t>(rest % n)];
            sum += term;
        }
        return sum;
    };
    const double I0 = integral(curve.x.front(), curve.u.front());
    double drift = 0;
    for (std::size_t k = 1; k < curve.t.size(); ++k)
        drift = std::max(drift, std::abs(integral(curve.x[k], curve.u[k]) - I0));
    return drift / std::max(std::abs(I0), 1e-12);
}

std::vector<double> rk4_convergence_ratios(const AffineStructure& A, std::span<const double> x0,
                                           std::span<const double> u0, double T, int steps, int refinements,
                                           const Box& box) {
    std::vector<Vec> ends;
    for (int k = 0; k <= refinements; ++k) ends.push_back(integrate_geodesic(A, x0, u0, T, steps << k, box).x.back());
    auto dist = [](const Vec& a, const Vec& b) {
        double s = 0;
        for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
        return std::sqrt(s);
    };
    std::vector<double> ratios;
    for (int k = 0; k + 2 <= refinements; ++k)
        ratios.push_back(dist(ends[k], ends[k + 1]) / dist(ends[k + 1], ends[k + 2]));
    return ratios;
}

// ---------------------------------------------------------------------------
// Curves

Curve segment(std::vector<double> x0, std::vector<double> x1, int steps) {
    Vec d(x0.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = x1[i] - x0[i];
    Curve c;
    c.steps = steps;
    c.pieces.push_back({[x0, d](double t) { return axpy(x0, t, d); }, [d](double) { return d; }});
    return c;
}

Curve polygon_loop(const std::vector<std::vector<double>>& waypoints, int steps) {
    if (waypoints.size() < 3 || waypoints.front() != waypoints.back())
        throw PreconditionError("a polygon loop needs at least two distinct waypoints and must close");
    Curve c;
    c.steps = steps;
    c.closed = true;
    for (std::size_t k = 0; k + 1 < waypoints.size(); ++k)
        c.pieces.push_back(segment(waypoints[k], waypoints[k + 1], steps).pieces.front());
    return c;
}

Curve rectangle_loop(std::vector<double> corner, int i, int j, double h1, double h2, int steps) {
    auto p1 = corner, p2 = corner, p3 = corner;
    p1[static_cast<std::size_t>(i)] += h1;
    p2[static_cast<std::size_t>(i)] += h1;
    p2[static_cast<std::size_t>(j)] += h2;
    p3[static_cast<std::size_t>(j)] += h2;
    return polygon_loop({corner, p1, p2, p3, corner}, steps);
}

Curve lissajous_loop(std::vector<double> base, std::vector<double> amplitude, std::vector<int> frequency,
                     std::vector<double> phase, int steps) {
    const double tau = 2 * std::numbers::pi;
    Curve c;
    c.steps = steps;
    c.closed = true;
    c.pieces.push_back({[=](double t) {
                            Vec x = base;
                            for (std::size_t k = 0; k < x.size(); ++k)
                                x[k] += amplitude[k] * (std::sin(tau * frequency[k] * t + phase[k]) - std::sin(phase[k]));
                            return x;
                        },
                        [=](double t) {
                            Vec v(base.size());
                            for (std::size_t k = 0; k < v.size(); ++k)
                                v[k] = amplitude[k] * tau * frequency[k] * std::cos(tau * frequency[k] * t + phase[k]);
                            return v;
                        }});
    return c;
}

Curve reparametrized(const Curve& c) {
    Curve out = c;
    for (auto& p : out.pieces) {
        const CurvePiece orig = p;
        p.x = [orig](double t) { return orig.x(t * t * (3 - 2 * t)); };
        p.dx = [orig](double t) {
            Vec v = orig.dx(t * t * (3 - 2 * t));
            for (double& e : v) e *= 6 * t * (1 - t);
            return v;
        };
    }
    return out;
}

Curve concatenated(const Curve& c1, const Curve& c2) {
    const Vec e = c1.end(), s = c2.start();
    for (std::size_t i = 0; i < e.size(); ++i)
        if (std::abs(e[i] - s[i]) > 1e-12) throw PreconditionError("concatenated curves must meet");
    if (c1.steps != c2.steps) throw PreconditionError("concatenated curves must use the same step count");
    Curve out = c1;
    out.pieces.insert(out.pieces.end(), c2.pieces.begin(), c2.pieces.end());
    out.closed = c1.closed && c2.closed;
    return out;
}

// ---------------------------------------------------------------------------
// Fibers

ConnectionKind connection_kind_for_rank(int r) {
    if (r == 1) return ConnectionKind::rank1_prolongation;
    if (r == 2) return ConnectionKind::rank2_prolongation;
    throw UnsupportedRankError("explicit prolongation connections exist for ranks 1 and 2");
}

int state_slots(ConnectionKind kind) {
    switch (kind) {
        case ConnectionKind::plain_tractor: return 1;
        case ConnectionKind::rank1_prolongation: return 2;
        case ConnectionKind::rank2_prolongation: return 4;
    }
    return 0;
}

namespace {

int ipow(int b, int e) {
    int v = 1;
    for (int i = 0; i < e; ++i) v *= b;
    return v;
}

// Orthonormal basis of the column space of a projector matrix.
Eigen::MatrixXd range_basis(const Eigen::MatrixXd& P) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(P, Eigen::ComputeThinU);
    const auto& s = svd.singularValues();
    int rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > 1e-10 * std::max(1.0, s(0))) ++rank;
    return svd.matrixU().leftCols(rank);
}

Eigen::MatrixXd build_fiber(ConnectionKind kind, int n) {
    const int N = n + 1;
    const int k = state_slots(kind);
    const int dim = ipow(N, k);
    if (kind == ConnectionKind::plain_tractor) return Eigen::MatrixXd::Identity(dim, dim);
    Eigen::MatrixXd P(dim, dim);
    for (int j = 0; j < dim; ++j) {
        ChartTensor e(n, std::vector<SK>(static_cast<std::size_t>(k), SK::cotractor));
        e.value(static_cast<std::size_t>(j)) = 1.0;
        const ChartTensor pe = kind == ConnectionKind::rank1_prolongation ? antisymmetrize(e, {0, 1})
                                                                           : young_project_rr(e, 2);
        for (int i = 0; i < dim; ++i) P(i, j) = pe.value(static_cast<std::size_t>(i));
    }
    return range_basis(P);
}

}  // namespace

const Eigen::MatrixXd& fiber_basis(ConnectionKind kind, int n) {
    static std::mutex mu;
    static std::map<std::pair<int, int>, Eigen::MatrixXd> cache;
    std::lock_guard<std::mutex> lock(mu);
    const auto key = std::make_pair(static_cast<int>(kind), n);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, build_fiber(kind, n)).first;
    return it->second;
}

int fiber_dimension(ConnectionKind kind, int n) { return static_cast<int>(fiber_basis(kind, n).cols()); }

ChartTensor state_from_coords(ConnectionKind kind, int n, const Eigen::VectorXd& c) {
    const Eigen::MatrixXd& B = fiber_basis(kind, n);
    if (c.size() != B.cols()) throw ShapeError("fiber coordinates have the wrong length");
    const Eigen::VectorXd v = B * c;
    ChartTensor S(n, std::vector<SK>(static_cast<std::size_t>(state_slots(kind)), SK::cotractor));
    for (Eigen::Index i = 0; i < v.size(); ++i) S.value(static_cast<std::size_t>(i)) = v(i);
    return S;
}

Eigen::VectorXd coords_from_state(ConnectionKind kind, const ChartTensor& S) {
    const int k = state_slots(kind);
    if (S.rank() != k) throw ShapeError("state has the wrong number of slots for this connection");
    for (auto s : S.slots())
        if (s != SK::cotractor) throw ShapeError("states have cotractor slots only");
    const Eigen::MatrixXd& B = fiber_basis(kind, S.n());
    Eigen::VectorXd v(B.rows());
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = S.value(static_cast<std::size_t>(i));
    return B.transpose() * v;
}

// ---------------------------------------------------------------------------
// Connection matrices and transport

namespace {

// Q_a # restricted to the fiber, as a linear map of the independent curvature components at a point:
// kappa_ab (a < b) for rank 1, together with nabla_e kappa_ab (a < b) for rank 2.
struct QLinear {
    struct Coord {
        int tensor;  // 0: kappa, 1: nabla kappa
        std::size_t flat, partner;
    };
    std::vector<Coord> coords;
    Eigen::MatrixXd G;       // column p: the matrices B^T Q_a # B, stacked [a], for unit component p
    Eigen::VectorXd offres;  // column p: max |(1 - B B^T) Q_a # B|
};

QLinear build_q_linear(ConnectionKind kind, const ChartTensor& kap, const ChartTensor* dk) {
    const int n = kap.n();
    const int r = kind == ConnectionKind::rank1_prolongation ? 1 : 2;
    const Eigen::MatrixXd& B = fiber_basis(kind, n);
    const Eigen::Index d = B.cols();
    const Eigen::Index dim = B.rows();
    QLinear L;
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b)
            for (int u = 0; u <= n; ++u)
                for (int v = 0; v <= n; ++v) L.coords.push_back({0, kap.flat({a, b, u, v}), kap.flat({b, a, u, v})});
    if (r == 2)
        for (int e = 0; e < n; ++e)
            for (int a = 0; a < n; ++a)
                for (int b = a + 1; b < n; ++b)
                    for (int u = 0; u <= n; ++u)
                        for (int v = 0; v <= n; ++v)
                            L.coords.push_back({1, dk->flat({e, a, b, u, v}), dk->flat({e, b, a, u, v})});
    const Eigen::Index P = static_cast<Eigen::Index>(L.coords.size());
    L.G.resize(n * d * d, P);
    L.offres.resize(P);
    std::vector<ChartTensor> states;
    for (Eigen::Index i = 0; i < d; ++i) {
        ChartTensor s = state_from_coords(kind, n, Eigen::VectorXd::Unit(d, i));
        s.set_scale_tag(kap.scale_tag());
        states.push_back(s);
    }
    ChartTensor K = kap.truncated(0), D = dk ? dk->truncated(0) : ChartTensor();
    for (double& v : K.data()) v = 0;
    if (dk)
        for (double& v : D.data()) v = 0;
    for (Eigen::Index p = 0; p < P; ++p) {
        const auto& c = L.coords[static_cast<std::size_t>(p)];
        ChartTensor& T = c.tensor == 0 ? K : D;
        T.value(c.flat) = 1;
        T.value(c.partner) = -1;
        const QSharpOperator Q(K, dk ? &D : nullptr, r, 0);
        Eigen::MatrixXd qall(n * dim, d);  // rows [a][slots]
        for (Eigen::Index i = 0; i < d; ++i) {
            const ChartTensor qi = Q.apply(states[static_cast<std::size_t>(i)]);
            for (Eigen::Index f = 0; f < n * dim; ++f) qall(f, i) = qi.value(static_cast<std::size_t>(f));
        }
        double off = 0;
        for (int a = 0; a < n; ++a) {
            const Eigen::MatrixXd q = qall.middleRows(a * dim, dim);
            const Eigen::MatrixXd w = B.transpose() * q;
            off = std::max(off, (q - B * w).cwiseAbs().maxCoeff());
            L.G.col(p).segment(a * d * d, d * d) = w.reshaped();
        }
        L.offres(p) = off;
        T.value(c.flat) = 0;
        T.value(c.partner) = 0;
    }
    return L;
}

const QLinear& q_linear(ConnectionKind kind, const ChartTensor& kap, const ChartTensor* dk) {
    static std::mutex mu;
    static std::map<std::pair<int, int>, QLinear> cache;
    std::lock_guard<std::mutex> lock(mu);
    const auto key = std::make_pair(static_cast<int>(kind), kap.n());
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, build_q_linear(kind, kap, dk)).first;
    return it->second;
}

}  // namespace

ConnectionMatrices connection_matrices(const AffineStructure& A, ConnectionKind kind, std::span<const double> x) {
    const int n = A.n();
    const int N = n + 1;
    const int k = state_slots(kind);
    const int dim = ipow(N, k);
    const Eigen::MatrixXd& B = fiber_basis(kind, n);
    const Eigen::Index d = B.cols();
    // Q needs nabla kappa for rank 2, kappa for rank 1.
    const int gamma_order = kind == ConnectionKind::rank2_prolongation ? 3 : 2;
    const TractorFrame F = tractor_frame(A, x, gamma_order);

    ConnectionMatrices out;
    std::vector<int> idx(static_cast<std::size_t>(k));
    for (int a = 0; a < n; ++a) {
        // Cotractor action on every slot: (A_a V)_{..B..} = A_aB^C V_{..C..}.
        Eigen::MatrixXd Aa(N, N);
        for (int b = 0; b < N; ++b)
            for (int c = 0; c < N; ++c) Aa(b, c) = F.conn.value(F.conn.flat({a, b, c}));
        Eigen::MatrixXd act = Eigen::MatrixXd::Zero(dim, d);
        for (int f = 0; f < dim; ++f) {
            for (int s = 0, rest = f; s < k; ++s, rest /= N) idx[static_cast<std::size_t>(k - 1 - s)] = rest % N;
            int stride = 1;
            for (int s = k - 1; s >= 0; --s) {
                const int b = idx[static_cast<std::size_t>(s)];
                for (int c = 0; c < N; ++c)
                    if (Aa(b, c) != 0.0) act.row(f) += Aa(b, c) * B.row(f + (c - b) * stride);
                stride *= N;
            }
        }
        const Eigen::MatrixXd omega = B.transpose() * act;
        out.class_residual = std::max(out.class_residual, (act - B * omega).cwiseAbs().maxCoeff());
        out.omega.push_back(omega);
    }
    if (kind == ConnectionKind::plain_tractor) return out;

    const ChartTensor kfull = tractor_curvature_formula(F);
    const bool rank2 = kind == ConnectionKind::rank2_prolongation;
    const ChartTensor dk = rank2 ? tractor_covd(F, kfull).truncated(0) : ChartTensor();
    const ChartTensor kap = kfull.truncated(0);
    // below this every curvature term is negligible
    if (std::max(kap.max_abs(), rank2 ? dk.max_abs() : 0.0) < 1e-13) return out;
    const QLinear& Q = q_linear(kind, kap, rank2 ? &dk : nullptr);
    Eigen::VectorXd c(static_cast<Eigen::Index>(Q.coords.size()));
    for (std::size_t p = 0; p < Q.coords.size(); ++p)
        c(static_cast<Eigen::Index>(p)) = (Q.coords[p].tensor == 0 ? kap : dk).value(Q.coords[p].flat);
    const Eigen::VectorXd w = Q.G * c;
    for (int a = 0; a < n; ++a) out.omega[static_cast<std::size_t>(a)] -= w.segment(a * d * d, d * d).reshaped(d, d);
    out.class_residual += c.cwiseAbs().dot(Q.offres);
    return out;
}

TransportResult transport_map(const AffineStructure& A, ConnectionKind kind, const Curve& curve, const Box& box,
                              bool estimate_error) {
    if (curve.pieces.empty()) throw PreconditionError("empty curve");
    if (curve.steps < 16) throw PreconditionError("curves need at least 16 steps per piece");
    const Eigen::Index d = fiber_basis(kind, A.n()).cols();
    TransportResult res;
    res.map = Eigen::MatrixXd::Identity(d, d);
    Eigen::MatrixXd coarse = res.map;
    double t_global = 0;
    auto rk4 = [](Eigen::MatrixXd& P, double h, const Eigen::MatrixXd& w0, const Eigen::MatrixXd& wm,
                  const Eigen::MatrixXd& w1) {
        const Eigen::MatrixXd k1 = -w0 * P;
        const Eigen::MatrixXd k2 = -wm * (P + h / 2 * k1);
        const Eigen::MatrixXd k3 = -wm * (P + h / 2 * k2);
        const Eigen::MatrixXd k4 = -w1 * (P + h * k3);
        P += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    };
    for (const auto& piece : curve.pieces) {
        auto omega_at = [&](double t) {
            const Vec x = piece.x(t);
            if (!box.contains(x)) throw ChartExitError("transport curve left the chart box", t_global + t);
            const Vec v = piece.dx(t);
            const ConnectionMatrices cm = connection_matrices(A, kind, x);
            res.class_residual = std::max(res.class_residual, cm.class_residual);
            ++res.evaluations;
            Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d, d);
            for (std::size_t a = 0; a < v.size(); ++a) w += v[a] * cm.omega[a];
            return w;
        };
        const double h = 1.0 / curve.steps;
        Eigen::MatrixXd w0 = omega_at(0.0);
        for (int s = 0; s < curve.steps; ++s) {
            const double t = s * h;
            const Eigen::MatrixXd wm = omega_at(t + h / 2);
            const Eigen::MatrixXd w1 = omega_at(t + h);
            if (estimate_error) {
                // two half steps against one full step on the same evaluations
                rk4(coarse, h, w0, wm, w1);
                rk4(res.map, h / 2, w0, omega_at(t + h / 4), wm);
                rk4(res.map, h / 2, wm, omega_at(t + 3 * h / 4), w1);
            } else {
                rk4(res.map, h, w0, wm, w1);
            }
            w0 = w1;
        }
        t_global += 1.0;
    }
    if (estimate_error) res.error_estimate = (res.map - coarse).norm() / 15;
    return res;
}

ChartTensor parallel_transport(const AffineStructure& A, ConnectionKind kind, const Curve& curve,
                               const ChartTensor& S0, const Box& box) {
    const Eigen::VectorXd c0 = coords_from_state(kind, S0);
    const TransportResult tr = transport_map(A, kind, curve, box);
    return state_from_coords(kind, A.n(), tr.map * c0);
}

// ---------------------------------------------------------------------------
// Dimension of the space of parallel sections

int numerical_rank(const Eigen::MatrixXd& m, double* threshold, bool* ambiguous, std::vector<double>* singular_values,
                   double floor) {
    if (m.size() == 0) {
        if (threshold) *threshold = std::max(1e-8, floor);
        if (ambiguous) *ambiguous = false;
        return 0;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& s = svd.singularValues();
    const double tol = std::max(1e-8 * std::max(1.0, s(0)), floor);
    int rank = 0;
    bool amb = false;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) > tol) ++rank;
        if (s(i) > tol / 10 && s(i) < tol * 10) amb = true;
    }
    if (threshold) *threshold = tol;
    if (ambiguous) *ambiguous = amb;
    if (singular_values) singular_values->assign(s.data(), s.data() + s.size());
    return rank;
}

namespace {

// A random closed curve through base inside the box: rectangles and Lissajous loops alternate.
Curve random_loop(std::mt19937_64& rng, const Vec& base, const Box& box, int which, int steps) {
    const int n = static_cast<int>(base.size());
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto room = [&](int i, double sign) {
        return sign > 0 ? box.hi[static_cast<std::size_t>(i)] - base[static_cast<std::size_t>(i)]
                        : base[static_cast<std::size_t>(i)] - box.lo[static_cast<std::size_t>(i)];
    };
    auto side = [&](int i) {
        const double sign = u01(rng) < 0.5 ? -1.0 : 1.0;
        const double r = std::max(room(i, sign), room(i, -sign));
        const double s = room(i, sign) >= room(i, -sign) ? sign : -sign;
        return s * std::min(0.6, 0.9 * r) * (0.4 + 0.6 * u01(rng));
    };
    if (which % 2 == 0) {
        std::uniform_int_distribution<int> pick(0, n - 1);
        const int i = pick(rng);
        int j = pick(rng);
        while (j == i) j = pick(rng);
        return rectangle_loop(base, i, j, side(i), side(j), steps);
    }
    std::vector<double> amp(static_cast<std::size_t>(n)), phase(static_cast<std::size_t>(n));
    std::vector<int> freq(static_cast<std::size_t>(n));
    std::uniform_int_distribution<int> fpick(1, 3);
    for (int i = 0; i < n; ++i) {
        const double r = std::min(room(i, 1.0), room(i, -1.0));
        amp[static_cast<std::size_t>(i)] = std::min(0.3, 0.45 * r) * (0.5 + 0.5 * u01(rng));
        freq[static_cast<std::size_t>(i)] = fpick(rng) + (i == 1 ? 1 : 0);
        phase[static_cast<std::size_t>(i)] = 2 * std::numbers::pi * u01(rng);
    }
    return lissajous_loop(base, amp, freq, phase, steps);
}

}  // namespace

ObstructionReport obstruction_rank(const AffineStructure& A, int r, std::span<const double> base, const Box& box,
                                   const DimensionOptions& opt) {
    const ConnectionKind kind = connection_kind_for_rank(r);
    const int n = A.n();
    require_dim(A, base.size(), "base point");
    const Vec x0(base.begin(), base.end());
    if (!box.contains(x0)) throw ChartExitError("base point outside the chart box", 0.0);
    if (opt.obstruction_points < 1) throw PreconditionError("obstruction stack needs at least one point");
    const Eigen::Index d = fiber_basis(kind, n).cols();
    std::mt19937_64 rng(opt.seed + 0x9e3779b97f4a7c15ULL);

    // Obstruction maps at random points, composed with transport from the base point.
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::vector<Eigen::MatrixXd> blocks;
    Eigen::Index rows = 0;
    double oerr2 = 0;
    for (int p = 0; p < opt.obstruction_points; ++p) {
        Vec y(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const double lo = std::max(box.lo[static_cast<std::size_t>(i)], x0[static_cast<std::size_t>(i)] - 0.6);
            const double hi = std::min(box.hi[static_cast<std::size_t>(i)], x0[static_cast<std::size_t>(i)] + 0.6);
            y[static_cast<std::size_t>(i)] = lo + (hi - lo) * u01(rng);
        }
        Eigen::MatrixXd T = Eigen::MatrixXd::Identity(d, d);
        double terr = 0;
        if (p > 0) {
            const TransportResult tr =
                transport_map(A, kind, segment(x0, y, opt.steps / 4 < 16 ? 16 : opt.steps / 4), box, true);
            T = tr.map;
            terr = tr.error_estimate;
        } else {
            y = x0;
        }
        const TractorFrame F = tractor_frame(A, y, 4);
        std::vector<ChartTensor> states;
        for (Eigen::Index i = 0; i < d; ++i) {
            ChartTensor s = state_from_coords(kind, n, Eigen::VectorXd::Unit(d, i));
            s.set_scale_tag(F.scale_tag);
            states.push_back(s);
        }
        const auto obs = integrability_obstruction(F, states, r);
        Eigen::MatrixXd O(static_cast<Eigen::Index>(obs.front().ncomp()), d);
        for (Eigen::Index i = 0; i < d; ++i)
            for (std::size_t f = 0; f < obs.front().ncomp(); ++f)
                O(static_cast<Eigen::Index>(f), i) = obs[static_cast<std::size_t>(i)].value(f);
        const double oerr = O.norm() * terr;
        oerr2 += oerr * oerr;
        Eigen::MatrixXd blk = O * T;
        rows += blk.rows();
        blocks.push_back(std::move(blk));
    }
    Eigen::MatrixXd ostack(rows, d);
    for (Eigen::Index off = 0; const auto& b : blocks) {
        ostack.middleRows(off, b.rows()) = b;
        off += b.rows();
    }
    ObstructionReport rep;
    rep.fiber_dim = static_cast<int>(d);
    rep.integration_error = std::sqrt(oerr2);
    rep.rank = numerical_rank(ostack, &rep.threshold, &rep.indeterminate, &rep.singular_values,
                              10 * rep.integration_error);
    rep.bound = rep.fiber_dim - rep.rank;
    return rep;
}

DimensionReport solution_space_dimension(const AffineStructure& A, int r, std::span<const double> base,
                                         const Box& box, const DimensionOptions& opt) {
    if (opt.num_loops < 8) throw PreconditionError("holonomy estimates need at least 8 loops");
    const ConnectionKind kind = connection_kind_for_rank(r);
    const int n = A.n();
    require_dim(A, base.size(), "base point");
    const Vec x0(base.begin(), base.end());
    if (!box.contains(x0)) throw ChartExitError("base point outside the chart box", 0.0);
    const Eigen::Index d = fiber_basis(kind, n).cols();

    DimensionReport rep;
    rep.fiber_dim = static_cast<int>(d);
    std::mt19937_64 rng(opt.seed);

    // Loops are transported one after another; the stack order is the loop order.
    Eigen::MatrixXd stack(d * opt.num_loops, d);
    double err2 = 0;
    for (int l = 0; l < opt.num_loops; ++l) {
        const TransportResult tr = transport_map(A, kind, random_loop(rng, x0, box, l, opt.steps), box, true);
        err2 += tr.error_estimate * tr.error_estimate;
        rep.class_residual = std::max(rep.class_residual, tr.class_residual);
        stack.middleRows(l * d, d) = tr.map - Eigen::MatrixXd::Identity(d, d);
    }
    bool amb = false;
    rep.integration_error = std::sqrt(err2);
    // singular values below ten times the integration error are not resolved
    rep.holonomy_rank =
        numerical_rank(stack, &rep.threshold, &amb, &rep.holonomy_singular_values, 10 * rep.integration_error);
    rep.indeterminate = amb;
    rep.holonomy_bound = static_cast<int>(d) - rep.holonomy_rank;
    {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(stack, Eigen::ComputeFullV);
        rep.fixed_space = svd.matrixV().rightCols(rep.holonomy_bound);
    }

    const ObstructionReport obs = obstruction_rank(A, r, base, box, opt);
    rep.obstruction_rank = obs.rank;
    rep.obstruction_bound = obs.bound;
    rep.indeterminate = rep.indeterminate || obs.indeterminate;
    rep.dimension = std::min(rep.holonomy_bound, rep.obstruction_bound);
    rep.agree = rep.holonomy_bound == rep.obstruction_bound;
    if (!rep.agree)
        rep.warning = "holonomy bound " + std::to_string(rep.holonomy_bound) + " and obstruction bound " +
                      std::to_string(rep.obstruction_bound) + " differ; reporting the smaller";
    return rep;
}

// ---------------------------------------------------------------------------
// Flat polynomial oracle

namespace {

// Sorted multi-indices (non-decreasing index lists) of length r over n values.
void multisets(int n, int r, int start, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
    if (static_cast<int>(cur.size()) == r) {
        out.push_back(cur);
        return;
    }
    for (int i = start; i < n; ++i) {
        cur.push_back(i);
        multisets(n, r, i, cur, out);
        cur.pop_back();
    }
}

}  // namespace

PolynomialBasis flat_polynomial_oracle(int n, int r) {
    if (n < 1 || r < 1) throw PreconditionError("flat oracle needs n >= 1 and r >= 1");
    const JetSpace& space = JetSpace::of(n);
    const auto nmono = static_cast<Eigen::Index>(space.size(r));
    std::vector<std::vector<int>> comps, eqs;
    std::vector<int> cur;
    multisets(n, r, 0, cur, comps);
    multisets(n, r + 1, 0, cur, eqs);
    std::map<std::vector<int>, Eigen::Index> comp_index;
    for (std::size_t i = 0; i < comps.size(); ++i) comp_index[comps[i]] = static_cast<Eigen::Index>(i);

    // unknown (component I, monomial alpha) -> column I * nmono + alpha
    const Eigen::Index ncols = static_cast<Eigen::Index>(comps.size()) * nmono;
    const auto nlow = r >= 1 ? static_cast<Eigen::Index>(space.size(r - 1)) : 0;
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(eqs.size()) * nlow, ncols);
    for (std::size_t e = 0; e < eqs.size(); ++e) {
        const auto& J = eqs[e];
        for (std::size_t pos = 0; pos < J.size(); ++pos) {
            const int j = J[pos];
            std::vector<int> rest = J;
            rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(pos));
            const Eigen::Index ci = comp_index.at(rest);
            // d_j x^alpha = alpha_j x^(alpha - e_j)
            for (Eigen::Index a = 0; a < nmono; ++a) {
                const auto alpha = space.multi_index(static_cast<std::size_t>(a));
                if (alpha[static_cast<std::size_t>(j)] == 0) continue;
                std::vector<int> beta(alpha.begin(), alpha.end());
                beta[static_cast<std::size_t>(j)] -= 1;
                const auto b = static_cast<Eigen::Index>(space.index_of(beta));
                M(static_cast<Eigen::Index>(e) * nlow + b, ci * nmono + a) += alpha[static_cast<std::size_t>(j)];
            }
        }
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    int rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > 1e-10 * std::max(1.0, s(0))) ++rank;
    PolynomialBasis out;
    out.n = n;
    out.r = r;
    out.dimension = static_cast<int>(ncols) - rank;
    const Eigen::MatrixXd null = svd.matrixV().rightCols(out.dimension);

    const int ncomp = ipow(n, r);
    for (int k = 0; k < out.dimension; ++k) {
        std::vector<std::vector<double>> coeffs(static_cast<std::size_t>(ncomp));
        KillingCandidate cand{r, {}};
        for (int f = 0; f < ncomp; ++f) {
            std::vector<int> idx(static_cast<std::size_t>(r));
            for (int s2 = r - 1, rest = f; s2 >= 0; --s2, rest /= n) idx[static_cast<std::size_t>(s2)] = rest % n;
            std::sort(idx.begin(), idx.end());
            const Eigen::Index ci = comp_index.at(idx);
            std::vector<double> c(static_cast<std::size_t>(nmono));
            for (Eigen::Index a = 0; a < nmono; ++a) c[static_cast<std::size_t>(a)] = null(ci * nmono + a, k);
            coeffs[static_cast<std::size_t>(f)] = c;
            cand.components.emplace_back([c, n](std::span<const Jet> x) {
                const JetSpace& sp = JetSpace::of(n);
                Jet sum = Jet::constant(n, x[0].order(), 0.0);
                for (std::size_t a = 0; a < c.size(); ++a) {
                    if (c[a] == 0.0) continue;
                    Jet term = Jet::constant(n, x[0].order(), c[a]);
                    const auto alpha = sp.multi_index(a);
                    for (int v = 0; v < n; ++v)
                        for (int p = 0; p < alpha[static_cast<std::size_t>(v)]; ++p) term *= x[static_cast<std::size_t>(v)];
                    sum += term;
                }
                return sum;
            });
        }
        out.coefficients.push_back(std::move(coeffs));
        out.basis.push_back(std::move(cand));
    }
    return out;
}

}  // namespace ptk
