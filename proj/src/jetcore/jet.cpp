#include "ptk/jet.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <unordered_map>

#include "ptk/errors.hpp"

namespace ptk {

namespace {

std::uint64_t encode(std::span<const int> alpha) {
    std::uint64_t key = 0;
    for (int a : alpha) key = key * (kMaxJetOrder + 1) + static_cast<std::uint64_t>(a);
    return key;
}

// All multi-indices of exactly `degree` in `dim` variables, first variable
// highest power first.
void append_degree(int dim, int degree, std::vector<int>& out) {
    std::vector<int> alpha(dim, 0);
    std::function<void(int, int)> rec = [&](int var, int remaining) {
        if (var == dim - 1) {
            alpha[var] = remaining;
            out.insert(out.end(), alpha.begin(), alpha.end());
            return;
        }
        for (int a = remaining; a >= 0; --a) {
            alpha[var] = a;
            rec(var + 1, remaining - a);
        }
    };
    rec(0, degree);
}

}  // namespace

JetSpace::JetSpace(int dim) : dim_(dim) {
    if (dim < 1) throw ShapeError("jet dimension must be positive");
    for (int d = 0; d <= kMaxJetOrder; ++d) {
        append_degree(dim, d, indices_);
        size_by_order_.push_back(indices_.size() / static_cast<std::size_t>(dim));
    }
    const std::size_t count = size_by_order_.back();
    degrees_.resize(count);
    factorials_.resize(count);
    std::unordered_map<std::uint64_t, std::uint32_t> lookup;
    for (std::size_t k = 0; k < count; ++k) {
        auto alpha = multi_index(k);
        degrees_[k] = std::accumulate(alpha.begin(), alpha.end(), 0);
        double f = 1.0;
        for (int a : alpha)
            for (int i = 2; i <= a; ++i) f *= i;
        factorials_[k] = f;
        lookup.emplace(encode(alpha), static_cast<std::uint32_t>(k));
    }

    // Products grouped by degree of the result.
    std::vector<std::vector<Product>> by_degree(kMaxJetOrder + 1);
    std::vector<int> sum(dim);
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t j = 0; j < count; ++j) {
            if (degrees_[i] + degrees_[j] > kMaxJetOrder) continue;
            auto a = multi_index(i);
            auto b = multi_index(j);
            for (int v = 0; v < dim; ++v) sum[v] = a[v] + b[v];
            const auto out = lookup.at(encode(sum));
            by_degree[degrees_[out]].push_back(
                {static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), out});
        }
    }
    for (auto& group : by_degree) {
        products_.insert(products_.end(), group.begin(), group.end());
        products_by_order_.push_back(products_.size());
    }

    deriv_src_.resize(dim);
    deriv_fac_.resize(dim);
    const std::size_t lower = size_by_order_[kMaxJetOrder - 1];
    for (int v = 0; v < dim; ++v) {
        deriv_src_[v].resize(lower);
        deriv_fac_[v].resize(lower);
        for (std::size_t k = 0; k < lower; ++k) {
            auto a = multi_index(k);
            std::copy(a.begin(), a.end(), sum.begin());
            sum[v] += 1;
            deriv_src_[v][k] = lookup.at(encode(sum));
            deriv_fac_[v][k] = static_cast<double>(sum[v]);
        }
    }

    lookup_ = std::move(lookup);
}

const JetSpace& JetSpace::of(int dim) {
    static std::mutex m;
    static std::map<int, std::unique_ptr<JetSpace>> spaces;
    std::lock_guard lock(m);
    auto& slot = spaces[dim];
    if (!slot) slot.reset(new JetSpace(dim));
    return *slot;
}

std::size_t JetSpace::size(int order) const {
    if (order < 0 || order > kMaxJetOrder)
        throw OrderError("jet order " + std::to_string(order) + " outside [0, " +
                         std::to_string(kMaxJetOrder) + "]");
    return size_by_order_[order];
}

std::size_t JetSpace::index_of(std::span<const int> alpha) const {
    if (static_cast<int>(alpha.size()) != dim_) throw ShapeError("multi-index length mismatch");
    int deg = 0;
    for (int a : alpha) {
        if (a < 0) throw ShapeError("negative multi-index entry");
        deg += a;
    }
    if (deg > kMaxJetOrder) throw OrderError("multi-index degree exceeds maximum jet order");
    return lookup_.at(encode(alpha));
}

std::span<const JetSpace::Product> JetSpace::products(int order) const {
    if (order < 0 || order > kMaxJetOrder) throw OrderError("jet order out of range");
    return {products_.data(), products_by_order_[order]};
}

namespace jetk {

void mul_acc(const JetSpace& s, int order, const double* a, const double* b, double* out,
             double scale) {
    if (order == 0) {
        out[0] += scale * a[0] * b[0];
        return;
    }
    for (const auto& p : s.products(order)) out[p.out] += scale * a[p.lhs] * b[p.rhs];
}

void div(const JetSpace& s, int order, const double* a, const double* b, double* out) {
    const double b0 = b[0];
    if (b0 == 0.0) throw SingularityError("jet division by a quantity with vanishing value");
    const std::size_t count = s.size(order);
    std::vector<double> acc(count, 0.0);
    auto prods = s.products(order);
    std::size_t p = 0;
    std::size_t k = 0;
    for (int deg = 0; deg <= order; ++deg) {
        const std::size_t pend = s.products(deg).size();
        for (; p < pend; ++p) {
            const auto& pr = prods[p];
            if (pr.rhs != 0) acc[pr.out] += out[pr.lhs] * b[pr.rhs];
        }
        const std::size_t kend = s.size(deg);
        for (; k < kend; ++k) out[k] = (k == 0) ? scalar::div(a[0], b0) : (a[k] - acc[k]) / b0;
    }
}

void compose(const JetSpace& s, int order, const double* a, std::span<const double> d,
             double* out) {
    const std::size_t count = s.size(order);
    std::vector<double> h(a, a + count);
    h[0] = 0.0;
    std::vector<double> acc(count, 0.0);
    const int top = std::min<int>(order, static_cast<int>(d.size()) - 1);
    acc[0] = d[top];
    std::vector<double> next(count);
    const auto prods = s.products(order);
    for (int k = top - 1; k >= 0; --k) {
        std::fill(next.begin(), next.end(), 0.0);
        // h has no constant term; skipping it keeps infinite d[k] out of lower coefficients
        for (const auto& p : prods)
            if (p.rhs != 0) next[p.out] += acc[p.lhs] * h[p.rhs];
        next[0] += d[k];
        acc.swap(next);
    }
    std::copy(acc.begin(), acc.end(), out);
}

void derivative(const JetSpace& s, int order, int var, const double* a, double* out) {
    if (order < 1) throw OrderError("cannot differentiate a jet of order 0");
    const std::size_t count = s.size(order - 1);
    auto src = s.derivative_source(var);
    auto fac = s.derivative_factor(var);
    for (std::size_t k = 0; k < count; ++k) out[k] = fac[k] * a[src[k]];
}

}  // namespace jetk

namespace scalar {

namespace {
bool small_integer(double p) { return std::abs(p) <= 1024.0 && std::floor(p) == p; }

template <class T>
T ipow(T base, unsigned e, T one) {
    T result = one;
    while (e) {
        if (e & 1u) result = result * base;
        e >>= 1;
        if (e) base = base * base;
    }
    return result;
}
}  // namespace

double pow(double a, double p) {
    if (small_integer(p)) {
        const double m = ipow(a, static_cast<unsigned>(std::abs(p)), 1.0);
        if (p >= 0) return m;
        return div(1.0, m);
    }
    if (a < 0.0) throw DomainError("negative base raised to a non-integer power");
    return std::pow(a, p);
}

double sqrt(double a) {
    if (a < 0.0) throw DomainError("square root of a negative number");
    return std::sqrt(a);
}

double log(double a) {
    if (a <= 0.0) throw DomainError("logarithm of a non-positive number");
    return std::log(a);
}

double div(double a, double b) {
    if (b == 0.0) throw SingularityError("division by zero");
    return a / b;
}

}  // namespace scalar

// ---------------------------------------------------------------------------

Jet::Jet(int dim, int order) : space_(&JetSpace::of(dim)), order_(order) {
    c_.assign(space_->size(order), 0.0);
}

Jet Jet::constant(int dim, int order, double value) {
    Jet j(dim, order);
    j.c_[0] = value;
    return j;
}

Jet Jet::variable(int dim, int order, int var, double x0) {
    if (var < 0 || var >= dim) throw ShapeError("coordinate index out of range");
    Jet j(dim, order);
    j.c_[0] = x0;
    if (order >= 1) j.c_[1 + var] = 1.0;
    return j;
}

double Jet::coeff(std::span<const int> alpha) const {
    const std::size_t k = space_->index_of(alpha);
    if (k >= c_.size()) throw OrderError("multi-index degree exceeds jet order");
    return c_[k];
}

double Jet::partial(std::span<const int> alpha) const {
    const std::size_t k = space_->index_of(alpha);
    if (k >= c_.size()) throw OrderError("derivative order exceeds jet order");
    return space_->factorial(k) * c_[k];
}

Jet Jet::derivative(int var) const {
    if (var < 0 || var >= dim()) throw ShapeError("derivative variable out of range");
    Jet out(dim(), order_ - 1 < 0 ? 0 : order_ - 1);
    jetk::derivative(*space_, order_, var, c_.data(), out.c_.data());
    return out;
}

Jet Jet::truncated(int order) const {
    if (order > order_) throw OrderError("cannot raise the order of a jet by truncation");
    Jet out = *this;
    out.order_ = order;
    out.c_.resize(space_->size(order));
    return out;
}

void Jet::require_compatible(const Jet& o, const char* op) const {
    if (dim() != o.dim() || order_ != o.order_)
        throw ShapeError(std::string("jet ") + op + ": mismatched dim/order (" +
                         std::to_string(dim()) + "/" + std::to_string(order_) + " vs " +
                         std::to_string(o.dim()) + "/" + std::to_string(o.order_) + ")");
}

Jet& Jet::operator+=(const Jet& o) {
    require_compatible(o, "add");
    for (std::size_t k = 0; k < c_.size(); ++k) c_[k] += o.c_[k];
    return *this;
}

Jet& Jet::operator-=(const Jet& o) {
    require_compatible(o, "sub");
    for (std::size_t k = 0; k < c_.size(); ++k) c_[k] -= o.c_[k];
    return *this;
}

Jet operator*(const Jet& a, const Jet& b) {
    a.require_compatible(b, "mul");
    Jet out(a.dim(), a.order_);
    jetk::mul_acc(*a.space_, a.order_, a.c_.data(), b.c_.data(), out.c_.data());
    return out;
}

Jet operator/(const Jet& a, const Jet& b) {
    a.require_compatible(b, "div");
    Jet out(a.dim(), a.order_);
    jetk::div(*a.space_, a.order_, a.c_.data(), b.c_.data(), out.c_.data());
    return out;
}

Jet& Jet::operator*=(const Jet& o) { return *this = *this * o; }
Jet& Jet::operator/=(const Jet& o) { return *this = *this / o; }

Jet& Jet::operator+=(double v) {
    c_[0] += v;
    return *this;
}
Jet& Jet::operator-=(double v) {
    c_[0] -= v;
    return *this;
}
Jet& Jet::operator*=(double v) {
    for (auto& x : c_) x *= v;
    return *this;
}
Jet& Jet::operator/=(double v) {
    if (v == 0.0) throw SingularityError("jet division by zero scalar");
    for (auto& x : c_) x /= v;
    return *this;
}

Jet operator-(double v, const Jet& a) {
    Jet out = -a;
    out.c_[0] += v;
    return out;
}

Jet operator/(double v, const Jet& a) { return Jet::constant(a.dim(), a.order(), v) / a; }

Jet Jet::operator-() const {
    Jet out = *this;
    for (auto& x : out.c_) x = -x;
    return out;
}

std::ptrdiff_t Jet::first_non_finite() const noexcept {
    for (std::size_t k = 0; k < c_.size(); ++k)
        if (!std::isfinite(c_[k])) return static_cast<std::ptrdiff_t>(k);
    return -1;
}

Jet jet_combine(const Jet& a, const Jet& b, JetOp op) {
    switch (op) {
        case JetOp::add: return a + b;
        case JetOp::sub: return a - b;
        case JetOp::mul: return a * b;
        case JetOp::div: return a / b;
    }
    throw ShapeError("unknown jet operation");
}

double jet_partial(const Jet& j, std::span<const int> multi_index) { return j.partial(multi_index); }

namespace {

Jet composed(const Jet& a, std::vector<double> d) {
    Jet out(a.dim(), a.order());
    jetk::compose(a.space(), a.order(), a.coeffs().data(), d, out.coeffs().data());
    return out;
}

double inv_factorial(int k) {
    double f = 1.0;
    for (int i = 2; i <= k; ++i) f *= i;
    return 1.0 / f;
}

}  // namespace

Jet sin(const Jet& a) {
    const double s = std::sin(a.value()), c = std::cos(a.value());
    const std::array<double, 4> cyc{s, c, -s, -c};
    std::vector<double> d(a.order() + 1);
    for (int k = 0; k <= a.order(); ++k) d[k] = cyc[k % 4] * inv_factorial(k);
    return composed(a, std::move(d));
}

Jet cos(const Jet& a) {
    const double s = std::sin(a.value()), c = std::cos(a.value());
    const std::array<double, 4> cyc{c, -s, -c, s};
    std::vector<double> d(a.order() + 1);
    for (int k = 0; k <= a.order(); ++k) d[k] = cyc[k % 4] * inv_factorial(k);
    return composed(a, std::move(d));
}

Jet exp(const Jet& a) {
    const double e = std::exp(a.value());
    std::vector<double> d(a.order() + 1);
    for (int k = 0; k <= a.order(); ++k) d[k] = e * inv_factorial(k);
    return composed(a, std::move(d));
}

Jet log(const Jet& a) {
    const double a0 = a.value();
    std::vector<double> d(a.order() + 1);
    d[0] = scalar::log(a0);
    double pw = 1.0;
    for (int k = 1; k <= a.order(); ++k) {
        pw *= a0;
        d[k] = ((k % 2) ? 1.0 : -1.0) / (k * pw);
    }
    return composed(a, std::move(d));
}

namespace {

// d_k = binom(p, k) a0^(p - k), with d_0 supplied by the caller.
std::vector<double> power_series(double a0, double p, int order, double d0) {
    std::vector<double> d(order + 1);
    d[0] = d0;
    double binom = 1.0;
    for (int k = 1; k <= order; ++k) {
        binom *= (p - (k - 1)) / k;
        d[k] = binom * std::pow(a0, p - k);
    }
    return d;
}

}  // namespace

Jet sqrt(const Jet& a) {
    const double a0 = a.value();
    const double v = scalar::sqrt(a0);
    return composed(a, power_series(a0, 0.5, a.order(), v));
}

Jet pow(const Jet& a, double p) {
    if (std::abs(p) <= 1024.0 && std::floor(p) == p) {
        unsigned e = static_cast<unsigned>(std::abs(p));
        Jet result = Jet::constant(a.dim(), a.order(), 1.0);
        Jet base = a;
        while (e) {
            if (e & 1u) result = result * base;
            e >>= 1;
            if (e) base = base * base;
        }
        if (p >= 0) return result;
        return 1.0 / result;
    }
    const double a0 = a.value();
    const double v = scalar::pow(a0, p);
    return composed(a, power_series(a0, p, a.order(), v));
}

Jet pow(const Jet& a, const Jet& p) {
    if (a.dim() != p.dim() || a.order() != p.order())
        throw ShapeError("pow: mismatched jet dim/order");
    bool constant_exponent = true;
    for (std::size_t k = 1; k < p.coeffs().size(); ++k)
        if (p.coeffs()[k] != 0.0) constant_exponent = false;
    if (constant_exponent) return pow(a, p.value());
    if (a.value() <= 0.0) throw DomainError("variable exponent requires a positive base");
    Jet out = exp(p * log(a));
    out.coeffs()[0] = scalar::pow(a.value(), p.value());
    return out;
}

ScalarField ScalarField::constant(double v) {
    return ScalarField([v](std::span<const Jet> x) {
        const int dim = x.empty() ? 1 : x[0].dim();
        const int order = x.empty() ? 0 : x[0].order();
        return Jet::constant(dim, order, v);
    });
}

std::vector<Jet> coordinate_jets(std::span<const double> base_point, int order) {
    if (order < 0) throw OrderError("negative jet order");
    const int dim = static_cast<int>(base_point.size());
    std::vector<Jet> xs;
    xs.reserve(dim);
    for (int i = 0; i < dim; ++i) xs.push_back(Jet::variable(dim, order, i, base_point[i]));
    return xs;
}

Jet jet_of(const ScalarField& field, std::span<const double> base_point, int order) {
    if (!field.valid()) throw ShapeError("jet_of: empty scalar field");
    const auto xs = coordinate_jets(base_point, order);
    const int dim = static_cast<int>(base_point.size());
    Jet j;
    try {
        j = field(xs);
    } catch (const DomainError& e) {
        throw NonFiniteError(std::string("field evaluation failed: ") + e.what(),
                             std::vector<int>(dim, 0));
    } catch (const SingularityError& e) {
        throw NonFiniteError(std::string("field evaluation failed: ") + e.what(),
                             std::vector<int>(dim, 0));
    }
    if (j.dim() != dim || j.order() != order)
        throw ShapeError("jet_of: field returned a jet of the wrong shape");
    const auto bad = j.first_non_finite();
    if (bad >= 0) {
        auto alpha = j.space().multi_index(static_cast<std::size_t>(bad));
        std::vector<int> mi(alpha.begin(), alpha.end());
        std::string s = "(";
        for (std::size_t i = 0; i < mi.size(); ++i) s += (i ? "," : "") + std::to_string(mi[i]);
        throw NonFiniteError("non-finite jet coefficient at multi-index " + s + ")", mi);
    }
    return j;
}

}  // namespace ptk
