#pragma once

// Truncated multivariate Taylor expansions ("jets") of scalar fields at a
// base point. Coefficients are stored Taylor-normalized, c[alpha] =
// d^alpha f(x0) / alpha!, in graded order: every multi-index of degree k
// precedes every multi-index of degree k+1, so the coefficients of a jet of
// order m are a prefix of those of any higher order jet.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

namespace ptk {

inline constexpr int kMaxJetOrder = 10;
inline constexpr int kDefaultJetOrder = 6;

/// Multi-index bookkeeping for jets in `dim` variables up to kMaxJetOrder.
/// One immutable instance per dimension, shared by all jets of that dimension.
class JetSpace {
public:
    struct Product {
        std::uint32_t lhs, rhs, out;
    };

    static const JetSpace& of(int dim);

    int dim() const noexcept { return dim_; }

    /// Number of multi-indices of total degree <= order.
    std::size_t size(int order) const;
    std::span<const int> multi_index(std::size_t k) const {
        return {indices_.data() + k * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
    }
    int degree(std::size_t k) const noexcept { return degrees_[k]; }
    std::size_t index_of(std::span<const int> alpha) const;

    /// All (i, j, k) with alpha_i + alpha_j = alpha_k and |alpha_k| <= order.
    std::span<const Product> products(int order) const;

    /// For the derivative in variable v: source coefficient and factor per
    /// target coefficient k < size(max_order - 1).
    std::span<const std::uint32_t> derivative_source(int var) const { return deriv_src_[var]; }
    std::span<const double> derivative_factor(int var) const { return deriv_fac_[var]; }

    /// alpha! for coefficient k.
    double factorial(std::size_t k) const noexcept { return factorials_[k]; }

private:
    explicit JetSpace(int dim);

    int dim_;
    std::vector<int> indices_;
    std::vector<int> degrees_;
    std::vector<double> factorials_;
    std::vector<std::size_t> size_by_order_;
    std::unordered_map<std::uint64_t, std::uint32_t> lookup_;
    std::vector<Product> products_;
    std::vector<std::size_t> products_by_order_;
    std::vector<std::vector<std::uint32_t>> deriv_src_;
    std::vector<std::vector<double>> deriv_fac_;
};

/// Low-level coefficient kernels shared with the tensor layer.
namespace jetk {

/// out += scale * a * b, truncated at `order`.
void mul_acc(const JetSpace& s, int order, const double* a, const double* b, double* out,
             double scale = 1.0);
/// out = a / b, truncated at `order`. Throws SingularityError if b[0] == 0.
void div(const JetSpace& s, int order, const double* a, const double* b, double* out);
/// out = sum_k d[k] h^k with h = a - a[0] (Horner), truncated at `order`.
void compose(const JetSpace& s, int order, const double* a, std::span<const double> d, double* out);
/// out = d/dx_var a, result truncated at order - 1.
void derivative(const JetSpace& s, int order, int var, const double* a, double* out);

}  // namespace jetk

/// A truncated Taylor expansion of a scalar field about a base point.
class Jet {
public:
    Jet() = default;
    Jet(int dim, int order);

    static Jet constant(int dim, int order, double value);
    /// The coordinate function x_var expanded about base value x0.
    static Jet variable(int dim, int order, int var, double x0);

    int dim() const noexcept { return space_ ? space_->dim() : 0; }
    int order() const noexcept { return order_; }
    const JetSpace& space() const { return *space_; }

    double value() const noexcept { return c_.empty() ? 0.0 : c_[0]; }
    /// Taylor coefficient d^alpha f / alpha!.
    double coeff(std::span<const int> alpha) const;
    /// Derivative value d^alpha f(x0). Throws OrderError if |alpha| > order.
    double partial(std::span<const int> alpha) const;

    std::span<const double> coeffs() const noexcept { return c_; }
    std::span<double> coeffs() noexcept { return c_; }

    /// d/dx_var, one order lower.
    Jet derivative(int var) const;
    Jet truncated(int order) const;

    Jet& operator+=(const Jet& o);
    Jet& operator-=(const Jet& o);
    Jet& operator*=(const Jet& o);
    Jet& operator/=(const Jet& o);
    Jet& operator+=(double v);
    Jet& operator-=(double v);
    Jet& operator*=(double v);
    Jet& operator/=(double v);

    friend Jet operator+(Jet a, const Jet& b) { return a += b; }
    friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
    friend Jet operator*(const Jet& a, const Jet& b);
    friend Jet operator/(const Jet& a, const Jet& b);
    friend Jet operator+(Jet a, double v) { return a += v; }
    friend Jet operator+(double v, Jet a) { return a += v; }
    friend Jet operator-(Jet a, double v) { return a -= v; }
    friend Jet operator-(double v, const Jet& a);
    friend Jet operator*(Jet a, double v) { return a *= v; }
    friend Jet operator*(double v, Jet a) { return a *= v; }
    friend Jet operator/(Jet a, double v) { return a /= v; }
    friend Jet operator/(double v, const Jet& a);
    Jet operator-() const;

    /// Index of the first non-finite coefficient, or -1.
    std::ptrdiff_t first_non_finite() const noexcept;

private:
    void require_compatible(const Jet& o, const char* op) const;

    const JetSpace* space_ = nullptr;
    int order_ = 0;
    std::vector<double> c_;
};

enum class JetOp { add, sub, mul, div };

/// Strict binary combination: dims and orders must match (ShapeError),
/// division by a jet with vanishing value raises SingularityError.
Jet jet_combine(const Jet& a, const Jet& b, JetOp op);

/// alpha! * coeff(alpha), i.e. the derivative value at the base point.
double jet_partial(const Jet& j, std::span<const int> multi_index);

// Elementary functions. Domain violations raise DomainError; the value
// coefficient is always computed with the same scalar routine as plain
// real evaluation (see scalar namespace).
Jet sin(const Jet& a);
Jet cos(const Jet& a);
Jet exp(const Jet& a);
Jet log(const Jet& a);
Jet sqrt(const Jet& a);
Jet pow(const Jet& a, double p);
Jet pow(const Jet& a, const Jet& p);

/// Scalar counterparts used for plain evaluation; jets reuse them for the
/// degree-0 coefficient so real and jet evaluation agree bit for bit.
namespace scalar {
double pow(double a, double p);
double sqrt(double a);
double log(double a);
double div(double a, double b);
}  // namespace scalar

/// A scalar field that can be expanded at any point: it receives the
/// coordinate jets x_i (expanded at the base point) and returns its own jet.
using ScalarFieldFn = std::function<Jet(std::span<const Jet>)>;

class ScalarField {
public:
    ScalarField() = default;
    explicit ScalarField(ScalarFieldFn fn) : fn_(std::move(fn)) {}
    static ScalarField constant(double v);

    bool valid() const noexcept { return static_cast<bool>(fn_); }
    Jet operator()(std::span<const Jet> coords) const { return fn_(coords); }

private:
    ScalarFieldFn fn_;
};

/// Jet of `field` at `base_point`. Raises NonFiniteError naming the first
/// non-finite multi-index.
Jet jet_of(const ScalarField& field, std::span<const double> base_point, int order);

/// Coordinate jets (x_i about base_point) of the given order.
std::vector<Jet> coordinate_jets(std::span<const double> base_point, int order);

}  // namespace ptk
