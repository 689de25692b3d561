#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ktorus/linear_solvers.hpp"
#include "ktorus/tensor_calculus.hpp"

namespace kt {

/// Constant pseudovector of weight m: c1 + i c2 = a^m (c1' + i c2') under z = a z'.
struct PseudoVector {
  int weight = 1;
  double c1 = 0.0;
  double c2 = 0.0;

  Complex complex() const { return {c1, c2}; }
  double norm() const { return std::hypot(c1, c2); }
  /// Components in the coordinates z' with z = a z'. Real c stays real only for
  /// real a^m; otherwise the imaginary part is dropped and should be checked.
  Complex transformed_complex(Complex a) const;
  PseudoVector transformed(Complex a) const;
  /// (-c2, c1), again of the same weight.
  PseudoVector perp() const { return {weight, -c2, c1}; }
};

/// 1-pseudoform of weight m: w1 + i w2 = conj(a)^{-m} (w1' + i w2').
struct PseudoForm {
  int weight = 0;
  Grid w1, w2;

  PseudoForm transformed(Complex a) const;
  /// c1 w1 + c2 w2, an invariant function for matching weights.
  Grid pair(const PseudoVector& c) const;
};

struct KernelReport {
  int rank = 0;
  /// Kernel fields for c = (1, 0) and c = (0, 1), on the caller's grid.
  TraceFreeField k1, k2;
  /// max |pd k_i| on the caller's grid.
  double pd_residual = 0.0;
  /// Smallest singular values of the discretised delta p d, ascending.
  std::vector<double> singular_values;
  /// Count of singular values <= null_tol.
  int null_dim = 0;
  double null_tol = 1e-10;
  /// Spectral norm of the difference of orthogonal projectors onto the numerical
  /// nullspace and onto the span of the sampled kernel fields.
  double subspace_error = 0.0;
  /// First nonzero eigenvalue of the flat operator at the same resolution.
  double gap_reference = 0.0;
  int svd_n = 0;
};

/// Kernel fields of delta p d on rank-m trace-free fields plus the SVD check on an
/// odd svd_n x svd_n grid.
KernelReport kernel_delta_pd(int m, const MetricGridPtr& metric, int svd_n = 21);

/// Kernel field with a = e^{2m mu} c1, b = e^{2m mu} c2.
TraceFreeField kernel_field(int m, const PseudoVector& c, const MetricGridPtr& metric);

/// Dense real matrix of delta p d acting on (a, b) stacked, on the metric grid.
Eigen::MatrixXd delta_pd_matrix(int m, const MetricGridPtr& metric);

struct RangeReport {
  bool in_range = false;
  double mean_a = 0.0;  // integral of a against dsigma
  double mean_b = 0.0;
  double tolerance = 0.0;
};

RangeReport range_membership(const TraceFreeField& f);

struct JSplitOptions {
  double tol = 1e-12;
  int max_iter = 5000;
  /// Nonzero seeds start the iteration from a random guess instead of zero.
  std::uint64_t seed = 0;
};

struct JSplit {
  TraceFreeField potential;   // p d v
  TraceFreeField solenoidal;  // f - p d v
  TraceFreeField v;           // rank m - 1, L2-orthogonal to the kernel
  SolveStats stats;
  /// max |delta f^s| / max |f|.
  double divergence_residual = 0.0;
};

JSplit j_split(const TraceFreeField& f, const JSplitOptions& opts = {});

/// Z^{m,c}: a = e^{2m mu}(c1 mu_x + c2 mu_y), b = e^{2m mu}(c2 mu_x - c1 mu_y).
/// Requires weight(c) = m + 1. For m = 0, a is the invariant scalar d mu(c).
TraceFreeField make_Z(int m, const PseudoVector& c, const MetricGridPtr& metric);

struct PotentialOptions {
  double tol = 1e-12;
  int max_iter = 4000;
  double eps_pot = 1e-6;
};

struct PotentialTestResult {
  /// Killing rank m under test; the field is Z^{m-1,c} and v has rank m - 2.
  int m = 0;
  int grid_n = 0;
  double residual_rel = 0.0;
  std::optional<PseudoVector> best_c;
  std::optional<SymTensorField> solution_v;
  /// Relative residual at the minimising c, then sqrt of the larger generalised eigenvalue of (G_R, G_Z).
  std::vector<double> singular_values;
  bool degenerate = false;
  bool converged = true;
  int iterations = 0;
  /// ||d v - Z^{m-1, best_c}|| / ||Z^{m-1, best_c}|| in L2 for the returned v.
  double solution_residual = 0.0;
};

/// Is Z^{m-1,c} = d v solvable for some unit c? Least squares in the weighted L2
/// norm with LSQR on each c-basis image, then the 2 x 2 generalised eigenproblem.
PotentialTestResult potentiality_test(int m, const MetricGridPtr& metric,
                                      const PotentialOptions& opts = {});

/// Residual of the general discrete d on S^{s}: W^{1/2} d applied and transposed,
/// exposed for adjoint checks.
Eigen::VectorXd weighted_d_apply(const MetricGrid& metric, int s, const Eigen::VectorXd& v);
Eigen::VectorXd weighted_d_transpose(const MetricGrid& metric, int s, const Eigen::VectorXd& y);

struct RotationCheck {
  double angle = 0.0;     // theta with z = e^{i theta} z'
  double residual = 0.0;  // max |d^2 lambda' / dx' dy'| / max |second derivatives of lambda|
};

/// For m = 2: rotate so that c becomes (|c|, 0) and test the mixed derivative of
/// lambda in the rotated frame.
RotationCheck liouville_rotation_check(const PseudoVector& c, const MetricGrid& metric);

}  // namespace kt
