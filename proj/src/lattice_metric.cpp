#include "ktorus/lattice_metric.hpp"

#include <algorithm>
#include <cmath>

namespace kt {

Lattice::Lattice(const Vec2& e1, const Vec2& e2) : e1_(e1), e2_(e2) {
  const double cross = e1.x() * e2.y() - e1.y() * e2.x();
  if (!(std::abs(cross) > 0.0) || !std::isfinite(cross)) {
    throw Error("lattice vectors are linearly dependent");
  }
  if (cross < 0.0) {
    throw Error("lattice basis must be positively oriented (e1 x e2 > 0)");
  }
  basis_.col(0) = e1;
  basis_.col(1) = e2;
  basis_inv_ = basis_.inverse();
}

Lattice Lattice::transformed(Complex a) const {
  if (a == Complex(0.0, 0.0)) throw Error("coordinate change z = a z' needs a != 0");
  const Complex z1 = Complex(e1_.x(), e1_.y()) / a;
  const Complex z2 = Complex(e2_.x(), e2_.y()) / a;
  return Lattice({z1.real(), z1.imag()}, {z2.real(), z2.imag()});
}

double Christoffels::operator()(int k, int i, int j) const {
  if (i > j) std::swap(i, j);
  const int idx = i + j;  // 0: 11, 1: 12, 2: 22
  if (k == 0) return idx == 0 ? g1_11 : (idx == 1 ? g1_12 : g1_22);
  return idx == 0 ? g2_11 : (idx == 1 ? g2_12 : g2_22);
}

ConformalFactor::ConformalFactor(Lattice lattice, const std::vector<FourierMode>& modes)
    : lattice_(std::move(lattice)) {
  for (const auto& m : modes) {
    if (!std::isfinite(m.amplitude.real()) || !std::isfinite(m.amplitude.imag())) {
      throw Error("non-finite Fourier amplitude at k = (" + std::to_string(m.k1) + ", " +
                  std::to_string(m.k2) + ")");
    }
    add_mode(m);
  }
  // Hermitian closure.
  std::vector<FourierMode> partners;
  for (const auto& m : modes_) {
    const bool has_partner = std::any_of(modes_.begin(), modes_.end(), [&](const FourierMode& o) {
      return o.k1 == -m.k1 && o.k2 == -m.k2;
    });
    if (!has_partner) partners.push_back({-m.k1, -m.k2, std::conj(m.amplitude)});
  }
  for (const auto& p : partners) modes_.push_back(p);
  for (const auto& m : modes_) {
    const Complex partner = amplitude(-m.k1, -m.k2);
    const double scale = std::max(1.0, std::abs(m.amplitude));
    if (std::abs(partner - std::conj(m.amplitude)) > 1e-12 * scale) {
      throw Error("Fourier modes (" + std::to_string(m.k1) + ", " + std::to_string(m.k2) +
                  ") and its negative are not complex conjugates");
    }
  }
  std::sort(modes_.begin(), modes_.end(), [](const FourierMode& a, const FourierMode& b) {
    return a.k1 != b.k1 ? a.k1 < b.k1 : a.k2 < b.k2;
  });
  // Force exact symmetry so that the imaginary parts cancel to rounding.
  for (auto& m : modes_) {
    if (m.k1 == 0 && m.k2 == 0) m.amplitude = Complex(m.amplitude.real(), 0.0);
  }
}

void ConformalFactor::add_mode(const FourierMode& mode) {
  for (auto& m : modes_) {
    if (m.k1 == mode.k1 && m.k2 == mode.k2) {
      m.amplitude += mode.amplitude;
      return;
    }
  }
  modes_.push_back(mode);
}

int ConformalFactor::max_degree() const {
  int d = 0;
  for (const auto& m : modes_) {
    if (m.amplitude == Complex(0.0, 0.0)) continue;
    d = std::max({d, std::abs(m.k1), std::abs(m.k2)});
  }
  return d;
}

bool ConformalFactor::is_constant(double tol) const {
  return std::all_of(modes_.begin(), modes_.end(), [tol](const FourierMode& m) {
    return (m.k1 == 0 && m.k2 == 0) || std::abs(m.amplitude) <= tol;
  });
}

Complex ConformalFactor::amplitude(int k1, int k2) const {
  for (const auto& m : modes_) {
    if (m.k1 == k1 && m.k2 == k2) return m.amplitude;
  }
  return {0.0, 0.0};
}

double ConformalFactor::mu(const Vec2& x) const {
  double sum = 0.0;
  for (const auto& m : modes_) {
    const Vec2 w = lattice_.wave_vector(m.k1, m.k2);
    sum += (m.amplitude * std::exp(Complex(0.0, w.dot(x)))).real();
  }
  return sum;
}

MetricJet ConformalFactor::jet(const Vec2& x) const {
  std::array<Complex, 10> acc{};
  std::array<double, 10> scale{};
  // exp(i w.x) = exp(2 pi i k1 s) exp(2 pi i k2 t) with (s, t) the lattice coordinates.
  int deg = 0;
  for (const auto& m : modes_) deg = std::max({deg, std::abs(m.k1), std::abs(m.k2)});
  const Vec2 st = lattice_.to_lattice(x);
  std::vector<Complex> p1(2 * deg + 1), p2(2 * deg + 1);
  for (int k = -deg; k <= deg; ++k) {
    p1[k + deg] = std::polar(1.0, 2.0 * M_PI * k * st(0));
    p2[k + deg] = std::polar(1.0, 2.0 * M_PI * k * st(1));
  }
  for (const auto& m : modes_) {
    const Vec2 w = lattice_.wave_vector(m.k1, m.k2);
    const Complex e = m.amplitude * (p1[m.k1 + deg] * p2[m.k2 + deg]);
    // i^k factors of the derivatives applied to e.
    const double a = w.x(), b = w.y();
    const Complex ie(-e.imag(), e.real());
    acc[0] += e;
    acc[1] += a * ie;
    acc[2] += b * ie;
    acc[3] -= a * a * e;
    acc[4] -= a * b * e;
    acc[5] -= b * b * e;
    acc[6] -= a * a * a * ie;
    acc[7] -= a * a * b * ie;
    acc[8] -= a * b * b * ie;
    acc[9] -= b * b * b * ie;
    // |term| does not depend on x; |re| + |im| bounds |amplitude|.
    const double r = std::abs(m.amplitude.real()) + std::abs(m.amplitude.imag());
    const double aa = std::abs(a), bb = std::abs(b);
    scale[0] += r;
    scale[1] += r * aa;
    scale[2] += r * bb;
    scale[3] += r * aa * aa;
    scale[4] += r * aa * bb;
    scale[5] += r * bb * bb;
    scale[6] += r * aa * aa * aa;
    scale[7] += r * aa * aa * bb;
    scale[8] += r * aa * bb * bb;
    scale[9] += r * bb * bb * bb;
  }
  MetricJet j;
  j.mu = acc[0].real();
  j.mu_x = acc[1].real();
  j.mu_y = acc[2].real();
  j.mu_xx = acc[3].real();
  j.mu_xy = acc[4].real();
  j.mu_yy = acc[5].real();
  j.mu_xxx = acc[6].real();
  j.mu_xxy = acc[7].real();
  j.mu_xyy = acc[8].real();
  j.mu_yyy = acc[9].real();
  for (size_t t = 0; t < acc.size(); ++t) {
    j.imag_residue = std::max(j.imag_residue, std::abs(acc[t].imag()) / std::max(1.0, scale[t]));
  }
  return j;
}

ConformalFactor ConformalFactor::transformed(Complex a) const {
  ConformalFactor out(lattice_.transformed(a));
  out.modes_ = modes_;
  const double shift = std::log(std::abs(a));
  bool found = false;
  for (auto& m : out.modes_) {
    if (m.k1 == 0 && m.k2 == 0) {
      m.amplitude += shift;
      found = true;
    }
  }
  if (!found && shift != 0.0) out.modes_.push_back({0, 0, Complex(shift, 0.0)});
  return out;
}

int ConformalFactor::default_grid_n() const { return std::max(128, 4 * max_degree()); }

MetricJet eval_jet(const ConformalFactor& cf, const Vec2& point) { return cf.jet(point); }

Christoffels christoffels(const MetricJet& j) {
  return {j.mu_x, j.mu_y, -j.mu_x, -j.mu_y, j.mu_x, j.mu_y};
}

double gaussian_curvature(const MetricJet& j) {
  return -std::exp(-2.0 * j.mu) * (j.mu_xx + j.mu_yy);
}

double gaussian_curvature(const ConformalFactor& cf, const Vec2& point) {
  return gaussian_curvature(cf.jet(point));
}

Vec2 curvature_gradient(const MetricJet& j) {
  const double lap = j.mu_xx + j.mu_yy;
  const double e = std::exp(-2.0 * j.mu);
  return {-e * (j.mu_xxx + j.mu_xyy - 2.0 * j.mu_x * lap),
          -e * (j.mu_xxy + j.mu_yyy - 2.0 * j.mu_y * lap)};
}

}  // namespace kt
