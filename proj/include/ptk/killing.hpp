#pragma once

// Killing-type equations nabla_(a0 k_a1...ar) = 0 for k of weight 2r, their tractor
// form, the splitting operator L = P_(r,r)(D^r K) and the prolongation connections
// for ranks 1 and 2.
//
// All tensors are ChartTensor jets in the splitting of the frame's representative
// connection. Cotractor pairs of L are (B1..Br | C1..Cr); for r = 2 the derivative
// output is indexed [c][D][E][A][B] for nabla_c L_DEAB.

#include <span>
#include <vector>

#include "ptk/geometry.hpp"
#include "ptk/tensor.hpp"
#include "ptk/tractor.hpp"

namespace ptk {

/// Symmetric covariant tensor of rank r given by n^r component fields (row-major),
/// read as components of a density-weighted field of weight 2r.
struct KillingCandidate {
    int r = 1;
    std::vector<ScalarField> components;
};

/// Candidate jet at x: r cotangent slots, weight 2r, no scale tag.
/// Raises ShapeError when the component fields are not symmetric to 1e-12.
ChartTensor candidate_jet(const KillingCandidate& c, int n, std::span<const double> x, int order);

/// Multiplies every component by (det g)^(-2r/(2n+2)) of the metric of `metric_source`,
/// turning an unweighted Killing tensor of that metric into a weight-2r solution.
KillingCandidate density_lift(const KillingCandidate& c, const AffineStructure& metric_source);

/// K_B..C = Z_B^b .. Z_C^c k_b..c (r cotractor slots, weight r).
ChartTensor inject_k(const TractorFrame& F, const ChartTensor& k);

/// nabla_(a0 k_a1..ar) with the density term; order drops by one.
ChartTensor killing_operator(const TractorFrame& F, const ChartTensor& k);
/// D_(A0 K_A1..Ar), the tractor form of the same equation.
ChartTensor killing_operator_tractor(const TractorFrame& F, const ChartTensor& k);

/// D_B1 .. D_Br K_C1..Cr (order drops by r).
ChartTensor thomas_d_power(const TractorFrame& F, const ChartTensor& K, int r);
/// L = P_(r,r)(D^r K), 2r cotractor slots, weight 0; order drops by r.
ChartTensor splitting_L(const TractorFrame& F, const ChartTensor& k);

/// Constant c with X^B1..X^Br P_(r,r)(D^r K) = c K, measured on a random K in a flat chart.
/// Cached per (n, r).
double recovery_constant(int n, int r);

/// k from L: contract X into the first r slots, divide by c, extract Z-slots. r in {1, 2}.
ChartTensor recover_k(const TractorFrame& F, const ChartTensor& L, int r);
/// Same for any r, dividing by the measured constant.
ChartTensor recover_k_any_rank(const TractorFrame& F, const ChartTensor& L, int r);

/// Rank 1: -W_BC^E_A W^A_a X^F V_EF, indexed [a][B][C].
ChartTensor rank1_Q_sharp(const TractorFrame& F, const ChartTensor& V);
/// nabla_a V_BC + W_BC^E_A W^A_a X^F V_EF. Raises ShapeError unless V is skew.
ChartTensor rank1_prolongation_derivative(const TractorFrame& F, const ChartTensor& V);

/// Rank 2, Thomas-D form: right-hand side R_C for D_C L_DEAB, indexed [C][D][E][A][B], weight -1.
ChartTensor rank2_Q_dform(const TractorFrame& F, const ChartTensor& L);
/// Rank 2, tractor-connection form: Q_c # L indexed [c][D][E][A][B].
ChartTensor rank2_Q_sharp(const TractorFrame& F, const ChartTensor& L);
/// W^C_c R_C from the Thomas-D form, for comparison with rank2_Q_sharp.
ChartTensor rank2_Q_sharp_from_dform(const TractorFrame& F, const ChartTensor& L);
/// nabla_c L - Q_c # L.
ChartTensor rank2_prolongation_derivative(const TractorFrame& F, const ChartTensor& L);

/// Q_a # V for r in {1, 2}, on a constant section value V (2r cotractor slots, any order).
ChartTensor q_sharp(const TractorFrame& F, const ChartTensor& V, int r);

/// Q_a # at one frame for r in {1, 2}, with the state-independent curvature terms built
/// once so that many states can be mapped cheaply. Works at jet order
/// min(order, F.order - 1) for r = 1 and min(order, F.order - 2) for r = 2.
class QSharpOperator {
public:
    QSharpOperator(const TractorFrame& F, int r, int order);
    /// From the tractor curvature kappa [a][b][up][low] and, for r = 2, nabla kappa
    /// [a][b][c][up][low]; Q_a # is linear in both.
    QSharpOperator(const ChartTensor& kappa, const ChartTensor* nabla_kappa, int r, int order);

    int rank() const noexcept { return r_; }
    int order() const noexcept { return q_; }
    /// True when every curvature coefficient entering Q is below 1e-13, so Q_a # is zero to that accuracy.
    bool vanishes() const noexcept { return vanishes_; }
    /// Q_a # V with V truncated to order(); indexed [a][slots of V].
    ChartTensor apply(const ChartTensor& V) const;

private:
    void init(const ChartTensor& kappa, const ChartTensor* nabla_kappa, int order);

    int r_ = 0;
    int q_ = 0;
    bool vanishes_ = false;
    CanonicalTractors c_;
    ChartTensor w_;                 // r = 1: W-curvature
    ChartTensor kz_, kzz_, h_, j_;  // r = 2: Z kappa, Z Z kappa and the two Y/nabla kappa combinations
};

/// kappa_ba # L - [(nabla_b Q_a) # L - (nabla_a Q_b) # L + Q_a # Q_b # L - Q_b # Q_a # L],
/// indexed [b][a][slots of L]; evaluated at the base point from the pointwise value of L.
/// Needs frame order >= 3.
ChartTensor integrability_obstruction(const TractorFrame& F, const ChartTensor& L, int r);
/// The same for several states at one frame.
std::vector<ChartTensor> integrability_obstruction(const TractorFrame& F, std::span<const ChartTensor> Ls, int r);

struct FlatCaseResult {
    double young_residual = 0;    // |sym over the first r+1 slots of D^r K|
    double killing_residual = 0;  // |nabla_(a k_..)|
    double parallel_residual = 0; // |nabla P(D^r K)|
    double recovery_residual = 0; // |recovered k - k|
    bool solution = false;        // killing_residual below tolerance
    bool consistent = false;      // young and killing residuals vanish together, and solutions are parallel
};

/// Flat-case checks for any rank. k must have jet order >= r + 1 and the frame order >= k.order() - 1.
/// Raises PreconditionError when the tractor curvature at x exceeds 1e-8.
FlatCaseResult flat_case_check(const TractorFrame& F, const ChartTensor& k, int r, double tol = 1e-8);

/// Dimension of the (2,2) Young module over R^(n+1): (n+1)^2((n+1)^2 - 1)/12.
int young22_dimension(int n);

}  // namespace ptk
