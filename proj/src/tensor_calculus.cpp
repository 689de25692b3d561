#include "ktorus/tensor_calculus.hpp"

#include <cmath>

namespace kt {

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

namespace {

void require_same(const MetricGridPtr& a, const MetricGridPtr& b) {
  if (a != b && (a->n() != b->n() || !(a->grid().lattice().basis() == b->grid().lattice().basis()))) {
    throw Error("fields live on different grids");
  }
}

Grid lambda_pow(const MetricGrid& m, int p) { return (2.0 * p * m.mu).exp(); }

// Symmetrised product of constant component vectors.
std::vector<double> flat_product(const std::vector<double>& f, const std::vector<double>& h) {
  const int r = static_cast<int>(f.size()) - 1;
  const int s = static_cast<int>(h.size()) - 1;
  std::vector<double> out(r + s + 1, 0.0);
  for (int k = 0; k <= r + s; ++k) {
    double acc = 0.0;
    for (int a = std::max(0, k - s); a <= std::min(r, k); ++a) {
      acc += binomial(r, a) * binomial(s, k - a) * f[a] * h[k - a];
    }
    out[k] = acc / binomial(r + s, k);
  }
  return out;
}

// Trace-free expansion pattern for slot a (which = 0) or b (which = 1).
std::vector<double> trace_free_pattern(int rank, int which) {
  std::vector<double> e(rank + 1, 0.0);
  for (int k = 0; k <= rank; ++k) {
    if (k % 2 == which) e[k] = ((k / 2) % 2 == 0) ? 1.0 : -1.0;
  }
  return e;
}

struct DecompositionBasis {
  // Column layout: for part index q (rank r_q), the a-slot and (if r_q > 0) the b-slot.
  Eigen::MatrixXd inverse;
  std::vector<int> part_rank;
  std::vector<int> column_part;
  std::vector<int> column_slot;
};

DecompositionBasis decomposition_basis(int m) {
  DecompositionBasis basis;
  Eigen::MatrixXd M(m + 1, m + 1);
  int col = 0;
  for (int r = m % 2; r <= m; r += 2) {
    const int q = static_cast<int>(basis.part_rank.size());
    basis.part_rank.push_back(r);
    std::vector<double> gs{1.0};
    for (int s = 0; s < (m - r) / 2; ++s) gs = flat_product(gs, {1.0, 0.0, 1.0});
    for (int which = 0; which < (r == 0 ? 1 : 2); ++which) {
      const auto column = flat_product(gs, trace_free_pattern(r, which));
      for (int k = 0; k <= m; ++k) M(k, col) = column[k];
      basis.column_part.push_back(q);
      basis.column_slot.push_back(which);
      ++col;
    }
  }
  basis.inverse = M.inverse();
  return basis;
}

double tf_max(const TraceFreeField& f) {
  return f.rank() == 0 ? f.a.abs().maxCoeff() : f.max_norm();
}

}  // namespace

// ---------------------------------------------------------------- SymTensorField

SymTensorField::SymTensorField(MetricGridPtr metric, int rank) : metric_(std::move(metric)) {
  if (rank < 0) throw Error("negative tensor rank");
  comps_.assign(rank + 1, Grid::Zero(metric_->n(), metric_->n()));
}

SymTensorField::SymTensorField(MetricGridPtr metric, std::vector<Grid> components)
    : metric_(std::move(metric)), comps_(std::move(components)) {
  if (comps_.empty()) throw Error("a symmetric field needs at least one component");
  for (const auto& c : comps_) {
    if (c.rows() != metric_->n() || c.cols() != metric_->n()) {
      throw Error("component grid does not match the metric grid");
    }
  }
}

SymTensorField SymTensorField::scalar(MetricGridPtr metric, Grid u) {
  return SymTensorField(std::move(metric), std::vector<Grid>{std::move(u)});
}

SymTensorField SymTensorField::metric_tensor(MetricGridPtr metric) {
  const Grid lam = metric->lambda;
  const Grid zero = Grid::Zero(metric->n(), metric->n());
  return SymTensorField(std::move(metric), {lam, zero, lam});
}

double SymTensorField::max_norm() const {
  double m = 0.0;
  for (const auto& c : comps_) m = std::max(m, c.abs().maxCoeff());
  return m;
}

SymTensorField& SymTensorField::operator+=(const SymTensorField& o) {
  require_same(metric_, o.metric_);
  if (o.rank() != rank()) throw Error("rank mismatch in field sum");
  for (size_t k = 0; k < comps_.size(); ++k) comps_[k] += o.comps_[k];
  return *this;
}

SymTensorField& SymTensorField::operator-=(const SymTensorField& o) {
  require_same(metric_, o.metric_);
  if (o.rank() != rank()) throw Error("rank mismatch in field difference");
  for (size_t k = 0; k < comps_.size(); ++k) comps_[k] -= o.comps_[k];
  return *this;
}

SymTensorField& SymTensorField::operator*=(double s) {
  for (auto& c : comps_) c *= s;
  return *this;
}

SymTensorField operator+(SymTensorField a, const SymTensorField& b) { return a += b; }
SymTensorField operator-(SymTensorField a, const SymTensorField& b) { return a -= b; }
SymTensorField operator*(double s, SymTensorField a) { return a *= s; }

// ---------------------------------------------------------------- TraceFreeField

TraceFreeField::TraceFreeField(MetricGridPtr metric, int rank)
    : a(Grid::Zero(metric->n(), metric->n())),
      b(Grid::Zero(metric->n(), metric->n())),
      metric_(std::move(metric)),
      rank_(rank) {
  if (rank < 0) throw Error("negative tensor rank");
}

TraceFreeField::TraceFreeField(MetricGridPtr metric, int rank, Grid a_, Grid b_)
    : a(std::move(a_)), b(std::move(b_)), metric_(std::move(metric)), rank_(rank) {
  if (rank < 0) throw Error("negative tensor rank");
  if (a.rows() != metric_->n() || b.rows() != metric_->n()) {
    throw Error("component grid does not match the metric grid");
  }
}

SymTensorField TraceFreeField::expand() const {
  if (rank_ == 0) return SymTensorField::scalar(metric_, a);
  std::vector<Grid> comps(rank_ + 1);
  for (int k = 0; k <= rank_; ++k) {
    const double sign = ((k / 2) % 2 == 0) ? 1.0 : -1.0;
    comps[k] = sign * (k % 2 == 0 ? a : b);
  }
  return SymTensorField(metric_, std::move(comps));
}

CGrid TraceFreeField::complex() const {
  CGrid phi(a.rows(), a.cols());
  phi.real() = a;
  phi.imag() = -b;
  return phi;
}

TraceFreeField TraceFreeField::from_complex(MetricGridPtr metric, int rank, const CGrid& phi) {
  Grid re = phi.real();
  Grid im = -phi.imag();
  return TraceFreeField(std::move(metric), rank, std::move(re), std::move(im));
}

double TraceFreeField::max_norm() const {
  return std::max(a.abs().maxCoeff(), b.abs().maxCoeff());
}

TraceFreeField& TraceFreeField::operator+=(const TraceFreeField& o) {
  require_same(metric_, o.metric_);
  if (o.rank_ != rank_) throw Error("rank mismatch in field sum");
  a += o.a;
  b += o.b;
  return *this;
}

TraceFreeField& TraceFreeField::operator-=(const TraceFreeField& o) {
  require_same(metric_, o.metric_);
  if (o.rank_ != rank_) throw Error("rank mismatch in field difference");
  a -= o.a;
  b -= o.b;
  return *this;
}

TraceFreeField& TraceFreeField::operator*=(double s) {
  a *= s;
  b *= s;
  return *this;
}

TraceFreeField operator+(TraceFreeField a, const TraceFreeField& b) { return a += b; }
TraceFreeField operator-(TraceFreeField a, const TraceFreeField& b) { return a -= b; }
TraceFreeField operator*(double s, TraceFreeField a) { return a *= s; }

// ---------------------------------------------------------------- algebra

SymTensorField sym_product(const SymTensorField& f, const SymTensorField& h) {
  require_same(f.metric(), h.metric());
  const int r = f.rank();
  const int s = h.rank();
  SymTensorField out(f.metric(), r + s);
  for (int k = 0; k <= r + s; ++k) {
    Grid acc = Grid::Zero(f.n(), f.n());
    for (int a = std::max(0, k - s); a <= std::min(r, k); ++a) {
      acc += (binomial(r, a) * binomial(s, k - a)) * f[a] * h[k - a];
    }
    out[k] = acc / binomial(r + s, k);
  }
  return out;
}

SymTensorField op_i(const SymTensorField& f) {
  return sym_product(SymTensorField::metric_tensor(f.metric()), f);
}

SymTensorField op_j(const SymTensorField& f) {
  if (f.rank() < 2) throw Error("trace needs rank >= 2");
  const Grid inv = 1.0 / f.metric()->lambda;
  SymTensorField out(f.metric(), f.rank() - 2);
  for (int k = 0; k <= f.rank() - 2; ++k) out[k] = inv * (f[k] + f[k + 2]);
  return out;
}

TraceFreeField trace_free_part(const SymTensorField& f) {
  const int r = f.rank();
  if (r == 0) return TraceFreeField(f.metric(), 0, f[0], Grid::Zero(f.n(), f.n()));
  // The trace-free part is the top angular harmonic of the polynomial; its
  // coefficients are signed binomial sums of the components.
  Grid a = Grid::Zero(f.n(), f.n());
  Grid b = Grid::Zero(f.n(), f.n());
  for (int k = 0; k <= r; ++k) {
    if (k % 2 == 0) {
      a += (binomial(r, k) * ((k / 2) % 2 == 0 ? 1.0 : -1.0)) * f[k];
    } else {
      b += (binomial(r, k) * (((k - 1) / 2) % 2 == 0 ? 1.0 : -1.0)) * f[k];
    }
  }
  const double scale = std::ldexp(1.0, -(r - 1));
  return TraceFreeField(f.metric(), r, a * scale, b * scale);
}

SymTensorField op_p(const SymTensorField& f) { return trace_free_part(f).expand(); }

Grid fiber_inner(const SymTensorField& f, const SymTensorField& h) {
  require_same(f.metric(), h.metric());
  if (f.rank() != h.rank()) throw Error("rank mismatch in inner product");
  const int r = f.rank();
  Grid acc = Grid::Zero(f.n(), f.n());
  for (int k = 0; k <= r; ++k) acc += binomial(r, k) * f[k] * h[k];
  return acc * (-2.0 * r * f.metric()->mu).exp();
}

double l2_inner(const SymTensorField& f, const SymTensorField& h) {
  return f.metric()->integrate_area(fiber_inner(f, h));
}

double l2_norm(const SymTensorField& f) { return std::sqrt(std::max(0.0, l2_inner(f, f))); }

// ---------------------------------------------------------------- calculus

std::array<SymTensorField, 2> covariant_derivative(const SymTensorField& f) {
  const MetricGrid& m = *f.metric();
  const SpectralGrid& g = m.grid();
  const int r = f.rank();
  SymTensorField d1(f.metric(), r), d2(f.metric(), r);
  // Gamma^1_{11}=mu_x, Gamma^2_{11}=-mu_y, Gamma^1_{12}=mu_y, Gamma^2_{12}=mu_x,
  // Gamma^1_{22}=-mu_x, Gamma^2_{22}=mu_y.
  for (int k = 0; k <= r; ++k) {
    const Grid& fk = f[k];
    const Grid fkp = k + 1 <= r ? f[k + 1] : Grid::Zero(f.n(), f.n());
    const Grid fkm = k - 1 >= 0 ? f[k - 1] : Grid::Zero(f.n(), f.n());
    const double ones = r - k;
    const double twos = k;
    d1[k] = g.dx(fk) - ones * (m.mu_x * fk - m.mu_y * fkp) - twos * (m.mu_y * fkm + m.mu_x * fk);
    d2[k] = g.dy(fk) - ones * (m.mu_y * fk + m.mu_x * fkp) - twos * (-m.mu_x * fkm + m.mu_y * fk);
  }
  return {std::move(d1), std::move(d2)};
}

SymTensorField inner_derivative(const SymTensorField& f) {
  const int r = f.rank();
  auto nab = covariant_derivative(f);
  SymTensorField out(f.metric(), r + 1);
  for (int k = 0; k <= r + 1; ++k) {
    Grid acc = Grid::Zero(f.n(), f.n());
    if (k <= r) acc += (r + 1 - k) * nab[0][k];
    if (k >= 1) acc += k * nab[1][k - 1];
    out[k] = acc / (r + 1);
  }
  return out;
}

SymTensorField divergence(const SymTensorField& f) {
  if (f.rank() < 1) throw Error("divergence needs rank >= 1");
  const int r = f.rank();
  auto nab = covariant_derivative(f);
  const Grid inv = 1.0 / f.metric()->lambda;
  SymTensorField out(f.metric(), r - 1);
  for (int k = 0; k <= r - 1; ++k) out[k] = inv * (nab[0][k] + nab[1][k + 1]);
  return out;
}

TraceFreeField divergence(const TraceFreeField& f) {
  if (f.rank() < 1) throw Error("divergence needs rank >= 1");
  const SpectralGrid& g = f.grid();
  const Grid inv = 1.0 / f.metric()->lambda;
  Grid A = inv * (g.dx(f.a) + g.dy(f.b));
  Grid B = inv * (g.dx(f.b) - g.dy(f.a));
  return TraceFreeField(f.metric(), f.rank() - 1, std::move(A), std::move(B));
}

TraceFreeField pd(const TraceFreeField& f) {
  const SpectralGrid& g = f.grid();
  const int m = f.rank();
  if (m == 0) {
    return TraceFreeField(f.metric(), 1, g.dx(f.a), g.dy(f.a));
  }
  const Grid lm = lambda_pow(*f.metric(), m);
  const CGrid phi = f.complex() / lm.cast<Complex>();
  const CGrid psi = g.dz(phi) * lm.cast<Complex>();
  return TraceFreeField::from_complex(f.metric(), m + 1, psi);
}

TraceFreeField delta_pd(const TraceFreeField& f) { return divergence(pd(f)); }

bool is_killing(const SymTensorField& f, double rel_tol) {
  return inner_derivative(f).max_norm() <= rel_tol * f.max_norm();
}

// ---------------------------------------------------------------- decomposition

std::optional<Grid> HarmonicDecomposition::scalar() const {
  if (rank % 2 == 0 && !parts.empty()) return parts.front().a;
  return std::nullopt;
}

SymTensorField HarmonicDecomposition::reconstruct() const {
  if (parts.empty()) throw Error("empty decomposition");
  const MetricGridPtr& metric = parts.front().metric();
  SymTensorField acc(metric, rank);
  for (const auto& part : parts) {
    SymTensorField term = part.expand();
    for (int s = 0; s < (rank - part.rank()) / 2; ++s) term = op_i(term);
    acc += term;
  }
  return acc;
}

HarmonicDecomposition harmonic_decompose(const SymTensorField& f) {
  const int m = f.rank();
  const MetricGrid& metric = *f.metric();
  const DecompositionBasis basis = decomposition_basis(m);
  HarmonicDecomposition out;
  out.rank = m;
  for (int r : basis.part_rank) out.parts.emplace_back(f.metric(), r);
  const int n = f.n();
  Eigen::VectorXd rhs(m + 1);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k <= m; ++k) rhs(k) = f[k](i, j);
      const Eigen::VectorXd c = basis.inverse * rhs;
      const double lam = metric.lambda(i, j);
      for (int col = 0; col <= m; ++col) {
        TraceFreeField& part = out.parts[basis.column_part[col]];
        const double value = c(col) / std::pow(lam, (m - part.rank()) / 2);
        (basis.column_slot[col] == 0 ? part.a : part.b)(i, j) = value;
      }
    }
  }
  return out;
}

double chain_coefficient_even(int k, int n) {
  return static_cast<double>(2 * k + 2) / static_cast<double>(n + 4 * k + 2);
}

double chain_coefficient_odd(int k, int n) {
  return static_cast<double>(2 * k + 3) / static_cast<double>(n + 4 * k + 4);
}

std::vector<double> chain_residuals(const SymTensorField& f) {
  const HarmonicDecomposition h = harmonic_decompose(f);
  const int count = static_cast<int>(h.parts.size());
  const bool odd = f.rank() % 2 == 1;
  std::vector<double> out;
  if (odd) out.push_back(tf_max(divergence(h.parts[0])));
  for (int k = 0; k < count; ++k) {
    TraceFreeField eq = pd(h.parts[k]);
    if (k + 1 < count) {
      const double coeff = odd ? chain_coefficient_odd(k) : chain_coefficient_even(k);
      eq += coeff * divergence(h.parts[k + 1]);
    }
    out.push_back(tf_max(eq));
  }
  return out;
}

// ---------------------------------------------------------------- polynomials

double to_polynomial(const TraceFreeField& f, int i, int j, double theta) {
  const int m = f.rank();
  const double mu = f.metric()->mu(i, j);
  return std::exp(-m * mu) * (f.a(i, j) * std::cos(m * theta) + f.b(i, j) * std::sin(m * theta));
}

double to_polynomial(const TraceFreeField& f, const Vec2& point, double theta) {
  const int m = f.rank();
  const SpectralGrid& g = f.grid();
  const double a = g.interpolate(g.forward(f.a), point);
  const double b = g.interpolate(g.forward(f.b), point);
  const double mu = f.metric()->factor().mu(point);
  return std::exp(-m * mu) * (a * std::cos(m * theta) + b * std::sin(m * theta));
}

double polynomial_value(const SymTensorField& f, int i, int j, const Vec2& xi) {
  const int r = f.rank();
  double acc = 0.0;
  for (int k = 0; k <= r; ++k) {
    acc += binomial(r, k) * f[k](i, j) * std::pow(xi.x(), r - k) * std::pow(xi.y(), k);
  }
  return acc;
}

std::pair<Grid, Grid> cauchy_riemann_residual(const TraceFreeField& f) {
  if (f.rank() < 1) throw Error("Cauchy-Riemann residual needs rank >= 1");
  const SpectralGrid& g = f.grid();
  const Grid w = lambda_pow(*f.metric(), -f.rank());
  const Grid u = w * f.a;
  const Grid v = w * f.b;
  return {g.dx(u) - g.dy(v), g.dy(u) + g.dx(v)};
}

}  // namespace kt
