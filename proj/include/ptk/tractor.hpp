#pragma once

// Projective tractor calculus in the splitting of one representative connection.
//
// Cotractor index B: 0 is the Y-slot (sigma), 1..n the Z-slot (mu_b).
// Tractor index B:   0 is the X-slot (rho),   1..n the W-slot (nu^b).
// Cotractor connection coefficients A_aB^C act as (nabla V)_B = d V_B + A_aB^C V_C:
//   A_a0^0 = gamma_a,  A_a0^c = -delta_a^c,  A_ab^0 = P_ab,  A_ab^c = -Gamma_ab^c + gamma_a delta_b^c
// which is the density-coupled form of (sigma, mu) -> (nabla sigma - mu, nabla mu + P sigma)
// for sigma of weight 1 and mu_b of weight 1. Tractor slots act by -A_aC^B.

#include <span>
#include <string>

#include "ptk/geometry.hpp"
#include "ptk/tensor.hpp"

namespace ptk {

struct TractorFrame {
    int n = 0;
    int order = 0;          // jet order of the connection coefficients (Gamma order - 1)
    std::string scale_tag;  // name of the representative connection
    CurvatureStack stack;
    ChartTensor conn;       // A_aB^C, slots (cotangent, cotractor, tractor)
};

/// Frame data at x from Gamma jets of the given order (>= 2).
TractorFrame tractor_frame(const AffineStructure& A, std::span<const double> x, int order);
TractorFrame tractor_frame(const CurvatureStack& s);

struct CanonicalTractors {
    ChartTensor X;  // X^A, weight 1
    ChartTensor Y;  // Y_A, weight -1
    ChartTensor Z;  // Z_A^a, weight -1
    ChartTensor W;  // W^A_a, weight 1
};

/// Splitting tractors as constant jets of the given order, tagged with the frame's scale.
CanonicalTractors canonical_tractors(const TractorFrame& F, int order = 0);
CanonicalTractors canonical_tractors(int n, int order, const std::string& scale_tag);

/// Coupled tractor/affine covariant derivative of a weighted tensor jet of order q >= 1.
/// Prepends a cotangent slot; the result has order q - 1.
ChartTensor tractor_covd(const TractorFrame& F, const ChartTensor& T);

/// Thomas-D: prepends a cotractor slot with component 0 = w V and component a+1 = nabla_a V.
/// Weight drops by one and jet order by one.
ChartTensor thomas_d(const TractorFrame& F, const ChartTensor& V);

/// kappa_ab^C_D = W_ab^c_d W^C_c Z_D^d - C_abd Z_D^d X^C at order F.order - 1.
/// Cross-checked against the commutator of tractor_covd on basis tractors;
/// a mismatch beyond 1e-10 raises Error. Needs F.order >= 2.
ChartTensor tractor_curvature(const TractorFrame& F);
/// The formula alone, without the commutator cross-check.
ChartTensor tractor_curvature_formula(const TractorFrame& F);
/// The commutator route alone, at order F.order - 2.
ChartTensor tractor_curvature_commutator(const TractorFrame& F);

/// W_AB^C_D = Z_A^a Z_B^b kappa_ab^C_D, slots (cotractor, cotractor, tractor, cotractor), weight -2.
ChartTensor w_curvature(const TractorFrame& F);
ChartTensor w_curvature(const ChartTensor& kappa);

/// (W_AB # T): the leading slots of Wc followed by T's slots. Wc ends in a tractor and a
/// cotractor slot (W_AB^C_D, kappa_ab^C_D, or any such endomorphism-valued tensor).
/// Each cotractor slot of T contributes -W_AB^E_C T_..E.., each tractor slot +W_AB^C_E T^..E..
/// Both inputs are truncated to the smaller jet order.
ChartTensor w_sharp(const ChartTensor& Wc, const ChartTensor& T);

}  // namespace ptk
