#pragma once

// Geodesics, first integrals, parallel transport of prolonged states, and holonomy
// estimates of the dimension of the space of parallel sections.
//
// A prolonged state is stored in fiber coordinates: the fiber is the subspace of
// cotractor tensors (skew 2-tensors for rank 1, the (2,2) Young class for rank 2)
// with an orthonormal basis B in component space, and a state S has coordinates
// B^T vec(S). Along a curve x(t) a parallel state solves c' = -x'^a Omega_a(x) c with
// Omega_a = B^T (A_a-action - Q_a #) B, where A_a-action is the cotractor
// connection acting on every slot.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ptk/geometry.hpp"
#include "ptk/killing.hpp"

namespace ptk {

/// Axis-aligned chart bounding box.
struct Box {
    std::vector<double> lo, hi;

    static Box cube(int n, double half_width);
    bool contains(std::span<const double> x) const;
};

struct GeodesicSample {
    std::vector<double> t;
    std::vector<std::vector<double>> x;  // positions
    std::vector<std::vector<double>> u;  // velocities
};

/// Classical RK4 on (x, u) with u'^c = -Gamma_ab^c u^a u^b. Raises ChartExitError
/// (with the exit time) when a stage leaves the box.
GeodesicSample integrate_geodesic(const AffineStructure& A, std::span<const double> x0,
                                  std::span<const double> u0, double T, int steps, const Box& box);

/// max_t |I(t) - I(0)| / max(|I(0)|, 1e-12) for I = k_b..c u^b..u^c, with k given by
/// unweighted component fields.
double first_integral_drift(const AffineStructure& A, const KillingCandidate& c, const GeodesicSample& curve);

/// Successive ratios |x_N - x_2N| / |x_2N - x_4N| of geodesic endpoints over `refinements`
/// halvings of the step, starting from `steps`; about 16 for a fourth-order method.
std::vector<double> rk4_convergence_ratios(const AffineStructure& A, std::span<const double> x0,
                                           std::span<const double> u0, double T, int steps, int refinements,
                                           const Box& box);

/// A smooth curve piece on t in [0, 1].
struct CurvePiece {
    std::function<std::vector<double>(double)> x;
    std::function<std::vector<double>(double)> dx;
};

/// Piecewise-smooth curve; every piece is integrated with `steps` RK4 steps.
struct Curve {
    std::vector<CurvePiece> pieces;
    int steps = 200;
    bool closed = false;

    std::vector<double> start() const { return pieces.front().x(0.0); }
    std::vector<double> end() const { return pieces.back().x(1.0); }
};

Curve segment(std::vector<double> x0, std::vector<double> x1, int steps);
/// Closed polygon through the waypoints (first == last).
Curve polygon_loop(const std::vector<std::vector<double>>& waypoints, int steps);
/// Rectangle with a corner at `corner` spanned by h1 e_i and h2 e_j.
Curve rectangle_loop(std::vector<double> corner, int i, int j, double h1, double h2, int steps);
/// x(t) = base + a_k (sin(2 pi f_k t + p_k) - sin p_k), closed for integer f_k.
Curve lissajous_loop(std::vector<double> base, std::vector<double> amplitude, std::vector<int> frequency,
                     std::vector<double> phase, int steps);
/// Same points traversed with t -> t^2 (3 - 2t) on every piece.
Curve reparametrized(const Curve& c);
/// c1 followed by c2 (c1 must end where c2 starts).
Curve concatenated(const Curve& c1, const Curve& c2);

enum class ConnectionKind { plain_tractor, rank1_prolongation, rank2_prolongation };

ConnectionKind connection_kind_for_rank(int r);
int state_slots(ConnectionKind kind);

/// Orthonormal basis of the state subspace in component space (rows: components of a
/// tensor with state_slots cotractor slots).
const Eigen::MatrixXd& fiber_basis(ConnectionKind kind, int n);
int fiber_dimension(ConnectionKind kind, int n);

ChartTensor state_from_coords(ConnectionKind kind, int n, const Eigen::VectorXd& c);
/// B^T vec(S); raises ShapeError on a state of the wrong shape.
Eigen::VectorXd coords_from_state(ConnectionKind kind, const ChartTensor& S);

/// Omega_a at one point, one d x d matrix per coordinate direction.
struct ConnectionMatrices {
    std::vector<Eigen::MatrixXd> omega;
    /// Bound on max over a of |(1 - B B^T)(A_a-action - Q_a #) B|: the part of the connection
    /// action leaving the state subspace, dropped by the projection.
    double class_residual = 0;
};

ConnectionMatrices connection_matrices(const AffineStructure& A, ConnectionKind kind, std::span<const double> x);

struct TransportResult {
    Eigen::MatrixXd map;        // fiber coordinates at the start -> at the end
    double class_residual = 0;  // max over evaluation points
    int evaluations = 0;
    double error_estimate = -1;  // Frobenius step-doubling estimate; -1 when not requested
};

/// Transport of the identity frame along the curve. Raises ChartExitError when the
/// curve leaves the box. With estimate_error every step is taken as two half steps and
/// compared with the full step.
TransportResult transport_map(const AffineStructure& A, ConnectionKind kind, const Curve& curve, const Box& box,
                              bool estimate_error = false);

/// Transport of one state; S0 must have the slot shape of the connection kind.
ChartTensor parallel_transport(const AffineStructure& A, ConnectionKind kind, const Curve& curve,
                               const ChartTensor& S0, const Box& box);

struct DimensionReport {
    int fiber_dim = 0;
    int holonomy_rank = 0;     // numerical rank of the stacked (Hol_i - Id)
    double integration_error = 0;  // 2-norm bound of the stacked step-doubling estimates
    int holonomy_bound = 0;    // fiber_dim - holonomy_rank
    int obstruction_rank = 0;  // numerical rank of the stacked transported obstruction maps
    int obstruction_bound = 0;
    int dimension = 0;         // the smaller bound
    bool agree = true;
    bool indeterminate = false;  // a singular value within a factor 10 of the threshold
    double threshold = 0;
    std::vector<double> holonomy_singular_values;
    double class_residual = 0;
    Eigen::MatrixXd fixed_space;  // orthonormal basis (fiber coordinates) of the holonomy fixed space
    std::string warning;
};

struct DimensionOptions {
    int num_loops = 8;
    int steps = 200;
    int obstruction_points = 10;
    std::uint64_t seed = 1;
};

struct ObstructionReport {
    int fiber_dim = 0;
    int rank = 0;   // numerical rank of the stacked transported obstruction maps
    int bound = 0;  // fiber_dim - rank
    bool indeterminate = false;
    double threshold = 0;
    double integration_error = 0;
    std::vector<double> singular_values;
};

/// Integrability obstruction of rank r at the base point and at opt.obstruction_points - 1
/// random points, each pulled back to the base fiber by transport along a segment.
ObstructionReport obstruction_rank(const AffineStructure& A, int r, std::span<const double> base, const Box& box,
                                   const DimensionOptions& opt = {});

/// Holonomy estimate of the number of parallel sections of the prolongation connection
/// of rank r in {1, 2}, cross-checked against the integrability obstruction transported
/// to random points.
DimensionReport solution_space_dimension(const AffineStructure& A, int r, std::span<const double> base,
                                         const Box& box, const DimensionOptions& opt = {});

/// Number of singular values above tol = max(1e-8 max(1, sigma_max), floor).
int numerical_rank(const Eigen::MatrixXd& m, double* threshold = nullptr, bool* ambiguous = nullptr,
                   std::vector<double>* singular_values = nullptr, double floor = 0);

/// Killing tensors of a flat connection (Gamma = 0) whose components are polynomials of
/// degree <= r, from the coefficientwise symmetrized-derivative equations.
struct PolynomialBasis {
    int n = 0, r = 0;
    int dimension = 0;
    /// Coefficients per basis element: for every component (row-major, n^r of them) the
    /// coefficients of the monomials of degree <= r in JetSpace graded order.
    std::vector<std::vector<std::vector<double>>> coefficients;
    std::vector<KillingCandidate> basis;
};

PolynomialBasis flat_polynomial_oracle(int n, int r);

}  // namespace ptk
