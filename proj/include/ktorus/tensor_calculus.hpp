#pragma once

#include <array>
#include <optional>
#include <vector>

#include "ktorus/spectral_grid.hpp"

namespace kt {

double binomial(int n, int k);

/// Rank-m symmetric tensor field on the torus. Component k holds f_{1..1 2..2} with
/// k twos, so a field carries m + 1 grids.
class SymTensorField {
 public:
  SymTensorField(MetricGridPtr metric, int rank);
  SymTensorField(MetricGridPtr metric, std::vector<Grid> components);

  static SymTensorField scalar(MetricGridPtr metric, Grid u);
  /// g = e^{2 mu}(dx^2 + dy^2), components (lambda, 0, lambda).
  static SymTensorField metric_tensor(MetricGridPtr metric);

  int rank() const { return static_cast<int>(comps_.size()) - 1; }
  int n() const { return metric_->n(); }
  const MetricGridPtr& metric() const { return metric_; }
  const SpectralGrid& grid() const { return metric_->grid(); }

  const Grid& operator[](int k) const { return comps_[k]; }
  Grid& operator[](int k) { return comps_[k]; }
  const std::vector<Grid>& components() const { return comps_; }

  /// Largest absolute component value.
  double max_norm() const;

  SymTensorField& operator+=(const SymTensorField& o);
  SymTensorField& operator-=(const SymTensorField& o);
  SymTensorField& operator*=(double s);

 private:
  MetricGridPtr metric_;
  std::vector<Grid> comps_;
};

SymTensorField operator+(SymTensorField a, const SymTensorField& b);
SymTensorField operator-(SymTensorField a, const SymTensorField& b);
SymTensorField operator*(double s, SymTensorField a);

/// Trace-free field stored through a = f_{1..1} and b = f_{1..12}. Rank 0 is allowed
/// as a degenerate case where a is the scalar and b is carried along unused.
class TraceFreeField {
 public:
  TraceFreeField(MetricGridPtr metric, int rank);
  TraceFreeField(MetricGridPtr metric, int rank, Grid a, Grid b);

  int rank() const { return rank_; }
  int n() const { return metric_->n(); }
  const MetricGridPtr& metric() const { return metric_; }
  const SpectralGrid& grid() const { return metric_->grid(); }

  Grid a, b;

  /// Full component expansion with f_{k+2} = -f_k.
  SymTensorField expand() const;
  /// a - i b, the complex form used by the fast operator paths.
  CGrid complex() const;
  static TraceFreeField from_complex(MetricGridPtr metric, int rank, const CGrid& phi);

  double max_norm() const;

  TraceFreeField& operator+=(const TraceFreeField& o);
  TraceFreeField& operator-=(const TraceFreeField& o);
  TraceFreeField& operator*=(double s);

 private:
  MetricGridPtr metric_;
  int rank_;
};

TraceFreeField operator+(TraceFreeField a, const TraceFreeField& b);
TraceFreeField operator-(TraceFreeField a, const TraceFreeField& b);
TraceFreeField operator*(double s, TraceFreeField a);

/// Parts f^k of f = sum_k i^{(m - r_k)/2} f^k. Part k has rank 2k (m even) or
/// 2k + 1 (m odd); for even m, part 0 is a rank-0 field holding the scalar.
struct HarmonicDecomposition {
  int rank = 0;
  std::vector<TraceFreeField> parts;

  std::optional<Grid> scalar() const;
  SymTensorField reconstruct() const;
};

// Algebra.
SymTensorField sym_product(const SymTensorField& f, const SymTensorField& h);
SymTensorField op_i(const SymTensorField& f);
SymTensorField op_j(const SymTensorField& f);
SymTensorField op_p(const SymTensorField& f);
/// p f returned in trace-free storage.
TraceFreeField trace_free_part(const SymTensorField& f);

/// Pointwise fiber pairing g^{..}g^{..} f h, as a grid.
Grid fiber_inner(const SymTensorField& f, const SymTensorField& h);
/// L2 pairing with the Riemannian area form.
double l2_inner(const SymTensorField& f, const SymTensorField& h);
double l2_norm(const SymTensorField& f);

// Calculus.
/// (nabla_1 f, nabla_2 f), each a rank-m field in the remaining indices.
std::array<SymTensorField, 2> covariant_derivative(const SymTensorField& f);
SymTensorField inner_derivative(const SymTensorField& f);
SymTensorField divergence(const SymTensorField& f);

/// Divergence of a trace-free field: e^{-2mu}(a_x + b_y, -a_y + b_x).
TraceFreeField divergence(const TraceFreeField& f);
/// p d of a trace-free field (rank m -> m + 1), through the complex form.
TraceFreeField pd(const TraceFreeField& f);
/// delta p d of a trace-free field.
TraceFreeField delta_pd(const TraceFreeField& f);

bool is_killing(const SymTensorField& f, double rel_tol = 1e-8);

HarmonicDecomposition harmonic_decompose(const SymTensorField& f);

/// Chain coefficients of the harmonic form of d with n kept explicit.
double chain_coefficient_even(int k, int n = 2);
double chain_coefficient_odd(int k, int n = 2);

/// Max norms of each chain equation; the odd case starts with delta f^0.
std::vector<double> chain_residuals(const SymTensorField& f);

/// e^{-m mu}(a cos m theta + b sin m theta) at grid node (i, j).
double to_polynomial(const TraceFreeField& f, int i, int j, double theta);
/// Same at an arbitrary point, interpolating a and b spectrally.
double to_polynomial(const TraceFreeField& f, const Vec2& point, double theta);
/// f_{i..} xi^i .. for a general field at grid node (i, j).
double polynomial_value(const SymTensorField& f, int i, int j, const Vec2& xi);

/// (d_x(e^{-2m mu} a) - d_y(e^{-2m mu} b), d_y(e^{-2m mu} a) + d_x(e^{-2m mu} b)).
std::pair<Grid, Grid> cauchy_riemann_residual(const TraceFreeField& f);

}  // namespace kt
