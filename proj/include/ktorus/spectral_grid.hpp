#pragma once

#include <functional>
#include <memory>

#include <Eigen/Dense>

#include "ktorus/lattice_metric.hpp"

namespace kt {

/// Scalar field sampled on the N x N fundamental-domain grid; entry (i, j) sits at
/// lattice coordinates (i / N, j / N).
using Grid = Eigen::ArrayXXd;
using CGrid = Eigen::ArrayXXcd;

/// Uniform periodic grid over one fundamental domain with FFT-based spectral
/// calculus. Spectra use the same (i, j) layout with i <-> k1 and j <-> k2.
/// Every derivative multiplier vanishes on Nyquist modes, so odd N gives exact
/// kernels (constants only) for the first-order operators.
class SpectralGrid {
 public:
  SpectralGrid(Lattice lattice, int n);
  ~SpectralGrid();
  SpectralGrid(const SpectralGrid&) = delete;
  SpectralGrid& operator=(const SpectralGrid&) = delete;

  int n() const { return n_; }
  const Lattice& lattice() const { return lattice_; }
  double area() const { return lattice_.area(); }

  Vec2 point(int i, int j) const;
  Grid sample(const std::function<double(const Vec2&)>& f) const;
  Grid zeros() const { return Grid::Zero(n_, n_); }
  Grid constant(double v) const { return Grid::Constant(n_, n_, v); }

  /// Signed frequency of spectral index p.
  int frequency(int p) const { return p <= n_ / 2 ? p : p - n_; }
  bool is_nyquist(int p, int q) const;
  /// Wave vector of spectral entry (p, q).
  Vec2 wave_vector(int p, int q) const { return {wx_(p, q), wy_(p, q)}; }

  /// Normalised forward transform: f = sum_k F_k exp(i w_k . x).
  CGrid forward(const Grid& f) const;
  CGrid forward(const CGrid& f) const;
  CGrid inverse(const CGrid& spectrum) const;
  Grid inverse_real(const CGrid& spectrum) const;

  Grid dx(const Grid& f) const { return derivative(f, 1, 0); }
  Grid dy(const Grid& f) const { return derivative(f, 0, 1); }
  Grid derivative(const Grid& f, int ox, int oy) const;
  CGrid derivative(const CGrid& f, int ox, int oy) const;

  /// d/dz = (d/dx - i d/dy) / 2 and d/dzbar = (d/dx + i d/dy) / 2.
  CGrid dz(const CGrid& f) const;
  CGrid dzbar(const CGrid& f) const;

  /// Flat Laplacian and its inverse on mean-zero data (the mean is dropped).
  Grid laplacian(const Grid& f) const;
  Grid inverse_laplacian(const Grid& f) const;

  /// Applies a Fourier multiplier m(w) to f.
  Grid apply_multiplier(const Grid& f, const std::function<Complex(const Vec2&)>& m) const;
  CGrid apply_multiplier(const CGrid& f, const std::function<Complex(const Vec2&)>& m) const;

  /// Grid average and flat-measure integral (average times area). Both are exact for
  /// band-limited integrands resolved by the grid.
  double mean(const Grid& f) const { return f.mean(); }
  double integrate(const Grid& f) const { return f.mean() * area(); }

  /// Trigonometric interpolant of f evaluated at an arbitrary physical point.
  double interpolate(const CGrid& spectrum, const Vec2& x) const;

 private:
  struct Plans;
  Lattice lattice_;
  int n_;
  Grid wx_, wy_;
  std::unique_ptr<Plans> plans_;
};

/// Metric data sampled on a spectral grid: mu and its jet, lambda = e^{2 mu}, the
/// Gaussian curvature and its gradient. All entries come from the analytic series.
class MetricGrid {
 public:
  MetricGrid(const ConformalFactor& cf, int n);

  static std::shared_ptr<const MetricGrid> make(const ConformalFactor& cf, int n) {
    return std::make_shared<const MetricGrid>(cf, n);
  }

  const SpectralGrid& grid() const { return *grid_; }
  const ConformalFactor& factor() const { return cf_; }
  int n() const { return grid_->n(); }

  Grid mu, mu_x, mu_y, mu_xx, mu_xy, mu_yy, mu_xxx, mu_xxy, mu_xyy, mu_yyy;
  Grid lambda;  // e^{2 mu}
  Grid K, K_x, K_y;

  /// Integral over the torus with the Riemannian area form e^{2 mu} dx dy.
  double integrate_area(const Grid& f) const { return grid_->integrate(f * lambda); }
  double total_area() const { return grid_->integrate(lambda); }

 private:
  ConformalFactor cf_;
  std::shared_ptr<SpectralGrid> grid_;
};

using MetricGridPtr = std::shared_ptr<const MetricGrid>;

}  // namespace kt
