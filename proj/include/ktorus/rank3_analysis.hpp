#pragma once

#include <array>
#include <iosfwd>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ktorus/spectral_solver.hpp"

namespace kt {

/// The weight-3 pseudoform Lambda on the grid, by the real mu-derivative formulas
/// and by the complex lambda-derivative formulas, with its three complex parts.
struct LambdaForm {
  Grid L1, L2;                  // real route
  Grid L1_complex, L2_complex;  // complex route, 2 L(1) + 4 L(2) - 2 L(3)
  /// parts[k] = (Lambda^(k+1)_1, Lambda^(k+1)_2).
  std::array<std::array<Grid, 2>, 3> parts;
  /// max |real - complex| over both components.
  double route_discrepancy = 0.0;
  /// Largest imaginary residue of the complex evaluation, relative to its scale.
  double imag_residue = 0.0;
  /// max |2 L(1) + 4 L(2) - 2 L(3) - L| from the stored parts.
  double parts_residual = 0.0;
  /// max |Lambda| (real route).
  double norm = 0.0;
};

LambdaForm lambda_form(const MetricGrid& metric);

/// Lambda at an arbitrary point from the analytic jet (real route).
Vec2 lambda_at(const ConformalFactor& cf, const Vec2& x);
/// Same through the complex route; imag receives the imaginary residue.
Vec2 lambda_complex_at(const ConformalFactor& cf, const Vec2& x, double* imag = nullptr);

/// Trace-free rank-2 field with T_11 = -T_22 = e^{4mu}(-c2 mu_x + c1 mu_y) and
/// T_12 = e^{4mu}(c1 mu_x + c2 mu_y). Requires weight(c) = 3.
TraceFreeField make_T(const PseudoVector& c, const MetricGridPtr& metric);

/// Closed form of the covector delta T^c from the jet at one point.
Vec2 delta_T_at(const PseudoVector& c, const ConformalFactor& cf, const Vec2& x);

struct PhiReport {
  Grid covariant;  // lambda^{-1}(d_x (delta T)_2 - d_y (delta T)_1) from grid calculus
  Grid paired;     // c1 Lambda_1 + c2 Lambda_2
  double discrepancy = 0.0;
};

PhiReport phi_c(const PseudoVector& c, const MetricGridPtr& metric);

/// delta(delta T^c) through the general divergence, and the closed form
/// -c2 Lambda_1 + c1 Lambda_2.
struct Delta2Report {
  Grid general;
  Grid closed_form;
  double discrepancy = 0.0;
};

Delta2Report delta2_T(const PseudoVector& c, const MetricGridPtr& metric);

/// u = w + alpha_1 x + alpha_2 y with w periodic.
struct CohomologySolution {
  Grid w;
  Vec2 alpha = Vec2::Zero();

  /// <sigma, [gamma]> = alpha . (p e1 + q e2).
  double pairing(const Lattice& lattice, const std::array<int, 2>& cls) const;
};

/// (u_x, u_y) on the grid.
std::array<Grid, 2> gradient(const MetricGrid& metric, const CohomologySolution& u);

/// 1/2 Delta^2 u + div(K grad u) with the Riemannian Laplacian and divergence.
Grid fourth_order_apply(const MetricGrid& metric, const CohomologySolution& u);

/// (grad-perp K) u = lambda^{-1}(-K_y u_x + K_x u_y).
Grid transport_apply(const MetricGrid& metric, const CohomologySolution& u);

struct FourthOrderOptions {
  double tol = 1e-12;
  int max_iter = 2000;
};

struct FourthOrderSolve {
  Grid w;
  SolveStats stats;
  /// Mean of lambda * rhs removed before solving (compatibility defect).
  double mean_removed = 0.0;
  /// max |L u - rhs| / max |rhs|.
  double forward_residual = 0.0;
};

/// Solves 1/2 Delta^2 u + div(K grad u) = rhs for the periodic part w with alpha
/// fixed (the affine part only enters through div(K alpha)).
FourthOrderSolve solve_fourth_order_rhs(const MetricGrid& metric, const Grid& rhs,
                                        const Vec2& alpha, const FourthOrderOptions& opts = {});

struct FourthOrderReport {
  CohomologySolution u;
  /// max residual of the fourth-order equation, relative to max |rhs|.
  double forward_residual = 0.0;
  /// L2 residual of the first-order transport equation after fitting alpha, relative
  /// to |c| times the L2 norm of Lambda.
  double transport_residual = 0.0;
  double mean_removed = 0.0;
  bool degenerate = false;
  bool converged = true;
  int iterations = 0;
};

/// Fourth-order equation with rhs -c2 Lambda_1 + c1 Lambda_2. The affine part alpha
/// is free in that equation and is fitted by least squares on the transport residual.
FourthOrderReport solve_fourth_order(const PseudoVector& c, const MetricGridPtr& metric,
                                     const FourthOrderOptions& opts = {});

struct TransportMinimum {
  /// min over unit c of the L2 transport residual after fitting alpha, relative to
  /// the L2 norm of Lambda.
  double residual = 0.0;
  PseudoVector best_c{3, 1.0, 0.0};
  /// Residuals for c = (1, 0) and c = (0, 1).
  std::array<double, 2> basis_residuals{0.0, 0.0};
  double forward_residual = 0.0;
  bool degenerate = false;
  bool converged = true;
};

/// Everything is linear in c, so the minimum over unit c comes from the smallest
/// eigenvalue of the 2 x 2 Gram matrix of the basis residuals.
TransportMinimum transport_minimum(const MetricGridPtr& metric, const FourthOrderOptions& opts = {});

/// Covariant Hessian nabla nabla u as a rank-2 field.
SymTensorField hessian(const MetricGridPtr& metric, const CohomologySolution& u);

struct ThirdDerivativeReport {
  double residual = 0.0;  // max over the 8 components
  double scale = 0.0;     // max |nabla nabla nabla u|
};

/// Mismatch of all third covariant derivatives of u against
/// g_jk(-K u_i + (delta T)_i) + nabla_i T_jk.
ThirdDerivativeReport third_derivative_residual(const CohomologySolution& u, const PseudoVector& c,
                                                const MetricGridPtr& metric);

struct SystemResiduals {
  std::array<Grid, 2> reduced;    // (1/2(u_11 - u_22) - T_11, u_12 - T_12)
  std::array<Grid, 3> invariant;  // trace-free Hessian minus T, components 11, 12, 22
  double difference = 0.0;        // max |reduced - matching invariant components|
};

SystemResiduals system_residuals(const CohomologySolution& u, const PseudoVector& c,
                                 const MetricGridPtr& metric);

// ---------------------------------------------------------------- isolines

struct IsolineSample {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
};

/// Isoline of K traced by x' = e^{-2mu}(-K_y, K_x), so |gamma'| = |grad K| in the metric.
struct IsolineCurve {
  double level = 0.0;
  std::vector<IsolineSample> samples;
  bool closed = false;
  /// Lattice class of the lift displacement (closed curves).
  std::array<int, 2> lift{0, 0};
  double period = 0.0;
  /// Smallest metric norm of grad K met along the curve.
  double min_grad = 0.0;
  /// max |K - level| over the samples.
  double level_error = 0.0;
  /// True when tracing stopped in the critical zone.
  bool clipped = false;
};

struct IsolineOptions {
  double tol = 1e-11;
  /// tol_crit = crit_rel * max |grad K|.
  double crit_rel = 1e-6;
  int min_samples = 256;
};

struct IsolineSet {
  std::vector<IsolineCurve> curves;
  bool degenerate = false;
  double tol_crit = 0.0;
};

/// Marching-squares seeds on the grid, Newton projection onto the level and ODE
/// tracing of each component.
IsolineSet extract_isolines(const MetricGrid& metric, double level, const IsolineOptions& opts = {});

/// Traces the isoline K = level through seed (first projected onto the level) until
/// it returns to the seed modulo Gamma or enters the critical zone |grad K| < tol_crit.
/// cell is the grid spacing used for return detection and sample density.
IsolineCurve trace_isoline(const ConformalFactor& cf, const Vec2& seed, double level,
                           double tol_crit, const IsolineOptions& opts = {}, double cell = 0.01);

/// Integral of phi along the isoline from start over [0, t_end], carried as an extra
/// ODE component. end receives the final point on the lift.
double isoline_arc_integral(const ConformalFactor& cf, const Vec2& start, double t_end,
                            const std::function<double(const Vec2&)>& phi, double tol = 1e-11,
                            Vec2* end = nullptr);

struct IsolineIntegral {
  double value = 0.0;
  double error = 0.0;
  /// alpha . lift for closed curves, u(end) - u(start) for open ones.
  std::optional<double> expected;
  double mismatch = 0.0;
};

/// Integral of c1 Lambda_1 + c2 Lambda_2 dt along the curve.
IsolineIntegral isoline_integral(const IsolineCurve& curve, const PseudoVector& c,
                                 const ConformalFactor& cf,
                                 const CohomologySolution* u = nullptr,
                                 const MetricGrid* grid = nullptr);

struct CohomologyFit {
  Vec2 alpha = Vec2::Zero();
  /// RMS of integral - alpha . lift over the curves, and the RMS of the integrals.
  double residual = 0.0;
  double scale = 0.0;
  /// RMS of the integrals of |c1 Lambda_1 + c2 Lambda_2|, a cancellation-free size.
  double magnitude = 0.0;
  /// RMS of the quadrature error estimates.
  double error = 0.0;
  int curves = 0;
};

/// Least-squares class alpha over closed critical-point-free isolines.
CohomologyFit fit_cohomology(const std::vector<IsolineCurve>& curves, const PseudoVector& c,
                             const ConformalFactor& cf);

struct CriticalPoint {
  Vec2 x = Vec2::Zero();
  double K = 0.0;
  /// 0 minimum, 1 saddle, 2 maximum.
  int index = 1;
  double hessian_det = 0.0;
};

/// Nondegenerate critical points of K: grid candidates refined by Newton on grad K.
std::vector<CriticalPoint> critical_points(const MetricGrid& metric);

struct DiskCheck {
  CriticalPoint center;
  double level = 0.0;
  /// Integral over the disk by the coarea formula and by the boundary flux of
  /// (delta T^c)-perp.
  double coarea = 0.0;
  double flux = 0.0;
  /// Riemannian disk area by the coarea formula.
  double area = 0.0;
  /// Annulus between the boundary and a smaller loop, plus the smaller disk, against
  /// the full disk.
  double collapse_mismatch = 0.0;
};

struct AnnulusCheck {
  double level0 = 0.0;
  double level1 = 0.0;
  std::array<int, 2> lift{0, 0};
  double integral = 0.0;
  /// alpha . lift (K1 - K0) with the fitted class.
  double predicted = 0.0;
  /// Spread of the per-level loop integrals across the annulus.
  double loop_spread = 0.0;
  double loop_mean = 0.0;
};

struct DomainReport {
  std::vector<DiskCheck> disks;
  std::vector<AnnulusCheck> annuli;
  CohomologyFit fit;
  std::string note;
};

DomainReport domain_integral_checks(const MetricGridPtr& metric, const PseudoVector& c,
                                    int levels = 9);

/// (integral of Lambda_1 dsigma, integral of Lambda_2 dsigma).
Vec2 mean_value_check(const MetricGrid& metric);

/// Isoline polylines as CSV: curve,level,closed,t,x,y.
void write_isolines_csv(const std::vector<IsolineCurve>& curves, std::ostream& out);

}  // namespace kt
