#pragma once

#include <array>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace kt {

using Vec2 = Eigen::Vector2d;
using Complex = std::complex<double>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Period lattice of the torus R^2 / Gamma, spanned by e1 and e2 with e1 x e2 > 0.
class Lattice {
 public:
  Lattice(const Vec2& e1, const Vec2& e2);

  static Lattice unit_square() { return Lattice({1.0, 0.0}, {0.0, 1.0}); }
  static Lattice rectangular(double l1, double l2) { return Lattice({l1, 0.0}, {0.0, l2}); }

  const Vec2& e1() const { return e1_; }
  const Vec2& e2() const { return e2_; }
  double area() const { return e1_.x() * e2_.y() - e1_.y() * e2_.x(); }

  /// Physical point for lattice coordinates (s, t): s*e1 + t*e2.
  Vec2 to_physical(const Vec2& st) const { return basis_ * st; }
  Vec2 to_lattice(const Vec2& x) const { return basis_inv_ * x; }

  /// p*e1 + q*e2.
  Vec2 translation(long p, long q) const {
    return static_cast<double>(p) * e1_ + static_cast<double>(q) * e2_;
  }

  /// Wave vector 2*pi*E^{-T} k of the dual-lattice frequency (k1, k2).
  Vec2 wave_vector(int k1, int k2) const {
    return 2.0 * M_PI * (basis_inv_.transpose() * Vec2(k1, k2));
  }

  /// Lattice of the coordinates z' defined by z = a z'.
  Lattice transformed(Complex a) const;

  const Eigen::Matrix2d& basis() const { return basis_; }

 private:
  Vec2 e1_, e2_;
  Eigen::Matrix2d basis_;
  Eigen::Matrix2d basis_inv_;
};

struct FourierMode {
  int k1 = 0;
  int k2 = 0;
  Complex amplitude;
};

/// mu and its partial derivatives through order 3 at one point.
struct MetricJet {
  double mu = 0.0;
  double mu_x = 0.0, mu_y = 0.0;
  double mu_xx = 0.0, mu_xy = 0.0, mu_yy = 0.0;
  double mu_xxx = 0.0, mu_xxy = 0.0, mu_xyy = 0.0, mu_yyy = 0.0;
  /// Largest |imaginary part| of the summed series, relative to the absolute sum of
  /// its terms (floored at 1); zero up to rounding for a Hermitian mode table.
  double imag_residue = 0.0;
};

/// Christoffel symbols of e^{2 mu}(dx^2 + dy^2), upper index first.
struct Christoffels {
  double g1_11, g1_12, g1_22;
  double g2_11, g2_12, g2_22;

  /// Gamma^k_{ij} with k, i, j in {0, 1}.
  double operator()(int k, int i, int j) const;
};

/// Gamma-periodic conformal exponent mu of g = e^{2 mu}(dx^2 + dy^2), stored as a
/// finite Fourier series over the dual lattice. The mode table is Hermitian-closed
/// on construction, so mu is real.
class ConformalFactor {
 public:
  explicit ConformalFactor(Lattice lattice) : lattice_(std::move(lattice)) {}

  /// Modes whose negatives are missing get their conjugate partner added. A mode
  /// listed together with an inconsistent partner is rejected.
  ConformalFactor(Lattice lattice, const std::vector<FourierMode>& modes);

  static ConformalFactor flat(const Lattice& lattice) { return ConformalFactor(lattice); }

  const Lattice& lattice() const { return lattice_; }
  const std::vector<FourierMode>& modes() const { return modes_; }

  /// Largest |k1| or |k2| among the stored modes.
  int max_degree() const;
  /// True when every non-constant mode vanishes.
  bool is_constant(double tol = 0.0) const;
  Complex amplitude(int k1, int k2) const;

  double mu(const Vec2& x) const;
  MetricJet jet(const Vec2& x) const;

  /// Same metric in the coordinates z' with z = a z': the lattice becomes
  /// Gamma / a and mu'(z') = mu(a z') + log|a|. Mode indices are unchanged.
  ConformalFactor transformed(Complex a) const;

  /// Default sampling resolution: max(128, 4 * max_degree).
  int default_grid_n() const;

 private:
  void add_mode(const FourierMode& mode);

  Lattice lattice_;
  std::vector<FourierMode> modes_;
};

MetricJet eval_jet(const ConformalFactor& cf, const Vec2& point);
Christoffels christoffels(const MetricJet& jet);

/// K = -e^{-2 mu} (mu_xx + mu_yy).
double gaussian_curvature(const MetricJet& jet);
double gaussian_curvature(const ConformalFactor& cf, const Vec2& point);

/// Euclidean-coordinate gradient (K_x, K_y), exact from the third-order jet.
Vec2 curvature_gradient(const MetricJet& jet);

}  // namespace kt
