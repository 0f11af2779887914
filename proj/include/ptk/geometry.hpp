#pragma once

// Torsion-free affine connections on a single chart and their curvature.
//
// Index conventions (all tensors are ChartTensor jets at a base point):
//   Gamma[a][b][c] = Gamma_ab^c, with  nabla_a v^c = d_a v^c + Gamma_ab^c v^b
//   R[a][b][c][d]  = R_ab^c_d,   with  [nabla_a, nabla_b] v^c = R_ab^c_d v^d
//   Ric_bd = R_cb^c_d, P_(ab) = Ric_(ab)/(n-1), P_[ab] = Ric_[ab]/(n+1)
// A density of weight w has the single component sigma with
//   nabla_a sigma = d_a sigma + w gamma_a sigma,  gamma_a = Gamma_ab^b / (n+1).

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ptk/jet.hpp"
#include "ptk/tensor.hpp"

namespace ptk {

class AffineStructure {
public:
    using GammaFn = std::function<ChartTensor(std::span<const double>, int)>;

    /// gamma holds n^3 fields, Gamma_ab^c at position (a*n + b)*n + c.
    static AffineStructure from_connection(std::string name, int n, std::vector<ScalarField> gamma);
    /// metric holds n^2 fields, g_ab at position a*n + b; the connection is Levi-Civita.
    static AffineStructure from_metric(std::string name, int n, std::vector<ScalarField> metric);

    int n() const noexcept { return n_; }
    const std::string& name() const noexcept { return name_; }
    bool has_metric() const noexcept { return !metric_.empty(); }
    const std::vector<ScalarField>& metric_fields() const noexcept { return metric_; }

    /// g_ab as a jet tensor of the given order. Requires has_metric().
    ChartTensor metric_jet(std::span<const double> x, int order) const;
    /// Gamma_ab^c as a jet tensor of the given order.
    ChartTensor gamma_jet(std::span<const double> x, int order) const;

    /// Gamma'_ac^b = Gamma_ac^b + U_a delta_c^b + U_c delta_a^b for the one-form U (n fields).
    AffineStructure projective_change(std::vector<ScalarField> upsilon, std::string name) const;

private:
    AffineStructure(std::string name, int n, GammaFn gamma, std::vector<ScalarField> metric)
        : name_(std::move(name)), n_(n), gamma_(std::move(gamma)), metric_(std::move(metric)) {}

    std::string name_;
    int n_ = 0;
    GammaFn gamma_;
    std::vector<ScalarField> metric_;
};

/// Inverse of a square matrix of jets (Gauss-Jordan with partial pivoting on values).
/// Throws LinAlgError when singular at the base point.
std::vector<Jet> jet_matrix_inverse(std::span<const Jet> m, int size);
Jet jet_determinant(std::span<const Jet> m, int size);

/// Levi-Civita coefficients of a metric jet of order m + 1, returned at order m.
ChartTensor levi_civita(const ChartTensor& g);
/// Same, starting from metric fields.
ChartTensor levi_civita(std::span<const ScalarField> g, int n, std::span<const double> x, int order);

struct CurvatureStack {
    int order = 0;        // jet order of gamma; curvature is one lower, Cotton two lower
    ChartTensor gamma;    // Gamma_ab^c
    ChartTensor gtrace;   // gamma_a = Gamma_ab^b / (n+1)
    ChartTensor riemann;  // R_ab^c_d
    ChartTensor ricci;    // Ric_bd
    ChartTensor schouten; // P_ab
    ChartTensor beta;     // beta_ab = -2 P_[ab]
    ChartTensor weyl;     // W_ab^c_d
    ChartTensor cotton;   // C_abc = nabla_a P_bc - nabla_b P_ac
};

/// Curvature quantities at x from Gamma jets of the given order (>= 2).
CurvatureStack curvature_stack(const AffineStructure& A, std::span<const double> x, int order);
CurvatureStack curvature_stack(const ChartTensor& gamma);

/// Covariant derivative of a weighted tensor field given as a jet of order q >= 1.
/// The result gains a leading cotangent slot and has order q - 1. Tangent and
/// cotangent slots use Gamma; tractor-type slots use `tractor_coeffs` (A_aB^C,
/// cotractor action (nabla V)_B = d V_B + A_aB^C V_C); passing null with tractor
/// slots present raises KindError.
ChartTensor covariant_derivative(const ChartTensor& gamma, const ChartTensor& t,
                                 const ChartTensor* tractor_coeffs = nullptr);

/// covd for tangent/cotangent/density tensors using the stack's connection.
ChartTensor covd(const CurvatureStack& s, const ChartTensor& t);

/// Weighted density (det g)^(-w / (2n+2)) as a jet of the given order; weight w, parallel for Levi-Civita.
/// Density components do not depend on the representative connection, so the result carries no scale tag.
ChartTensor volume_density(const AffineStructure& A, std::span<const double> x, int order, double w);

}  // namespace ptk
