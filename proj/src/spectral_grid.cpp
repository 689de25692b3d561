#include "ktorus/spectral_grid.hpp"

#include <cmath>
#include <mutex>

#include <fftw3.h>

namespace kt {

namespace {
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

struct SpectralGrid::Plans {
  fftw_plan fwd = nullptr;
  fftw_plan bwd = nullptr;
  ~Plans() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    if (fwd) fftw_destroy_plan(fwd);
    if (bwd) fftw_destroy_plan(bwd);
  }
};

SpectralGrid::SpectralGrid(Lattice lattice, int n)
    : lattice_(std::move(lattice)), n_(n), plans_(std::make_unique<Plans>()) {
  if (n < 3) throw Error("spectral grid needs n >= 3");
  wx_.resize(n, n);
  wy_.resize(n, n);
  for (int q = 0; q < n; ++q) {
    for (int p = 0; p < n; ++p) {
      const Vec2 w = lattice_.wave_vector(frequency(p), frequency(q));
      wx_(p, q) = w.x();
      wy_(p, q) = w.y();
    }
  }
  CGrid scratch_in(n, n), scratch_out(n, n);
  auto* in = reinterpret_cast<fftw_complex*>(scratch_in.data());
  auto* out = reinterpret_cast<fftw_complex*>(scratch_out.data());
  std::lock_guard<std::mutex> lock(planner_mutex());
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  plans_->fwd = fftw_plan_dft_2d(n, n, in, out, FFTW_FORWARD, flags);
  plans_->bwd = fftw_plan_dft_2d(n, n, in, out, FFTW_BACKWARD, flags);
}

SpectralGrid::~SpectralGrid() = default;

bool SpectralGrid::is_nyquist(int p, int q) const {
  return n_ % 2 == 0 && (p == n_ / 2 || q == n_ / 2);
}

Vec2 SpectralGrid::point(int i, int j) const {
  return lattice_.to_physical(Vec2(static_cast<double>(i) / n_, static_cast<double>(j) / n_));
}

Grid SpectralGrid::sample(const std::function<double(const Vec2&)>& f) const {
  Grid out(n_, n_);
  for (int j = 0; j < n_; ++j) {
    for (int i = 0; i < n_; ++i) out(i, j) = f(point(i, j));
  }
  return out;
}

CGrid SpectralGrid::forward(const CGrid& f) const {
  CGrid in = f;
  CGrid out(n_, n_);
  fftw_execute_dft(plans_->fwd, reinterpret_cast<fftw_complex*>(in.data()),
                   reinterpret_cast<fftw_complex*>(out.data()));
  out /= static_cast<double>(n_) * n_;
  return out;
}

CGrid SpectralGrid::forward(const Grid& f) const { return forward(CGrid(f.cast<Complex>())); }

CGrid SpectralGrid::inverse(const CGrid& spectrum) const {
  CGrid in = spectrum;
  CGrid out(n_, n_);
  fftw_execute_dft(plans_->bwd, reinterpret_cast<fftw_complex*>(in.data()),
                   reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

Grid SpectralGrid::inverse_real(const CGrid& spectrum) const { return inverse(spectrum).real(); }

CGrid SpectralGrid::apply_multiplier(const CGrid& f,
                                     const std::function<Complex(const Vec2&)>& m) const {
  CGrid s = forward(f);
  for (int q = 0; q < n_; ++q) {
    for (int p = 0; p < n_; ++p) s(p, q) *= m(wave_vector(p, q));
  }
  return inverse(s);
}

Grid SpectralGrid::apply_multiplier(const Grid& f,
                                    const std::function<Complex(const Vec2&)>& m) const {
  return apply_multiplier(CGrid(f.cast<Complex>()), m).real();
}

CGrid SpectralGrid::derivative(const CGrid& f, int ox, int oy) const {
  if (ox == 0 && oy == 0) return f;
  CGrid s = forward(f);
  const Complex I(0.0, 1.0);
  for (int q = 0; q < n_; ++q) {
    for (int p = 0; p < n_; ++p) {
      if (is_nyquist(p, q)) {
        s(p, q) = 0.0;
        continue;
      }
      s(p, q) *= std::pow(I * wx_(p, q), ox) * std::pow(I * wy_(p, q), oy);
    }
  }
  return inverse(s);
}

Grid SpectralGrid::derivative(const Grid& f, int ox, int oy) const {
  if (ox == 0 && oy == 0) return f;
  return derivative(CGrid(f.cast<Complex>()), ox, oy).real();
}

CGrid SpectralGrid::dz(const CGrid& f) const {
  CGrid s = forward(f);
  for (int q = 0; q < n_; ++q) {
    for (int p = 0; p < n_; ++p) {
      s(p, q) *= is_nyquist(p, q) ? Complex(0.0) : 0.5 * Complex(wy_(p, q), wx_(p, q));
    }
  }
  return inverse(s);
}

CGrid SpectralGrid::dzbar(const CGrid& f) const {
  CGrid s = forward(f);
  for (int q = 0; q < n_; ++q) {
    for (int p = 0; p < n_; ++p) {
      s(p, q) *= is_nyquist(p, q) ? Complex(0.0) : 0.5 * Complex(-wy_(p, q), wx_(p, q));
    }
  }
  return inverse(s);
}

Grid SpectralGrid::laplacian(const Grid& f) const {
  CGrid s = forward(f);
  for (int q = 0; q < n_; ++q) {
    for (int p = 0; p < n_; ++p) {
      s(p, q) *= is_nyquist(p, q) ? 0.0 : -(wx_(p, q) * wx_(p, q) + wy_(p, q) * wy_(p, q));
    }
  }
  return inverse_real(s);
}

Grid SpectralGrid::inverse_laplacian(const Grid& f) const {
  CGrid s = forward(f);
  for (int q = 0; q < n_; ++q) {
    for (int p = 0; p < n_; ++p) {
      const double w2 = wx_(p, q) * wx_(p, q) + wy_(p, q) * wy_(p, q);
      s(p, q) = (is_nyquist(p, q) || (p == 0 && q == 0)) ? Complex(0.0) : s(p, q) / (-w2);
    }
  }
  return inverse_real(s);
}

double SpectralGrid::interpolate(const CGrid& spectrum, const Vec2& x) const {
  const Vec2 st = lattice_.to_lattice(x);
  // Separable evaluation: rows first, then the remaining 1D sum.
  Eigen::VectorXcd e1(n_), e2(n_);
  for (int p = 0; p < n_; ++p) {
    const bool nyq = n_ % 2 == 0 && p == n_ / 2;
    // The Nyquist mode is split evenly between +N/2 and -N/2 so that real data
    // interpolates to real values.
    e1(p) = nyq ? Complex(std::cos(M_PI * n_ * st.x()), 0.0)
                : std::exp(Complex(0.0, 2.0 * M_PI * frequency(p) * st.x()));
    e2(p) = nyq ? Complex(std::cos(M_PI * n_ * st.y()), 0.0)
                : std::exp(Complex(0.0, 2.0 * M_PI * frequency(p) * st.y()));
  }
  const Eigen::MatrixXcd& s = spectrum.matrix();
  return (e1.transpose() * s * e2).value().real();
}

MetricGrid::MetricGrid(const ConformalFactor& cf, int n)
    : cf_(cf), grid_(std::make_shared<SpectralGrid>(cf.lattice(), n)) {
  Grid* fields[] = {&mu, &mu_x, &mu_y, &mu_xx, &mu_xy, &mu_yy,
                    &mu_xxx, &mu_xxy, &mu_xyy, &mu_yyy, &lambda, &K, &K_x, &K_y};
  for (Grid* g : fields) g->resize(n, n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const MetricJet jt = cf.jet(grid_->point(i, j));
      mu(i, j) = jt.mu;
      mu_x(i, j) = jt.mu_x;
      mu_y(i, j) = jt.mu_y;
      mu_xx(i, j) = jt.mu_xx;
      mu_xy(i, j) = jt.mu_xy;
      mu_yy(i, j) = jt.mu_yy;
      mu_xxx(i, j) = jt.mu_xxx;
      mu_xxy(i, j) = jt.mu_xxy;
      mu_xyy(i, j) = jt.mu_xyy;
      mu_yyy(i, j) = jt.mu_yyy;
      lambda(i, j) = std::exp(2.0 * jt.mu);
      K(i, j) = gaussian_curvature(jt);
      const Vec2 gk = curvature_gradient(jt);
      K_x(i, j) = gk.x();
      K_y(i, j) = gk.y();
    }
  }
}

}  // namespace kt
