#include "ktorus/spectral_solver.hpp"

#include <cmath>
#include <random>

#include <Eigen/SVD>

namespace kt {

// ---------------------------------------------------------------- pseudo objects

Complex PseudoVector::transformed_complex(Complex a) const {
  return complex() * std::pow(a, -weight);
}

PseudoVector PseudoVector::transformed(Complex a) const {
  const Complex c = transformed_complex(a);
  return {weight, c.real(), c.imag()};
}

PseudoForm PseudoForm::transformed(Complex a) const {
  const Complex factor = std::pow(std::conj(a), weight);
  PseudoForm out;
  out.weight = weight;
  out.w1 = factor.real() * w1 - factor.imag() * w2;
  out.w2 = factor.imag() * w1 + factor.real() * w2;
  return out;
}

Grid PseudoForm::pair(const PseudoVector& c) const {
  if (c.weight != weight) throw Error("pseudovector and pseudoform weights differ");
  return c.c1 * w1 + c.c2 * w2;
}

// ---------------------------------------------------------------- kernel

namespace {

Grid lambda_pow(const MetricGrid& m, int p) { return (2.0 * p * m.mu).exp(); }

Eigen::VectorXd stack(const Grid& a, const Grid& b) {
  const Eigen::Index n2 = a.size();
  Eigen::VectorXd v(2 * n2);
  v.head(n2) = Eigen::Map<const Eigen::VectorXd>(a.data(), n2);
  v.tail(n2) = Eigen::Map<const Eigen::VectorXd>(b.data(), n2);
  return v;
}

}  // namespace

TraceFreeField kernel_field(int m, const PseudoVector& c, const MetricGridPtr& metric) {
  const Grid lm = lambda_pow(*metric, m);
  return TraceFreeField(metric, m, c.c1 * lm, c.c2 * lm);
}

Eigen::MatrixXd delta_pd_matrix(int m, const MetricGridPtr& metric) {
  const int n = metric->n();
  const Eigen::Index n2 = static_cast<Eigen::Index>(n) * n;
  Eigen::MatrixXd M(2 * n2, 2 * n2);
  TraceFreeField e(metric, m);
  for (Eigen::Index col = 0; col < 2 * n2; ++col) {
    e.a.setZero();
    e.b.setZero();
    Grid& target = col < n2 ? e.a : e.b;
    target.data()[col % n2] = 1.0;
    const TraceFreeField out = delta_pd(e);
    M.col(col) = stack(out.a, out.b);
  }
  return M;
}

KernelReport kernel_delta_pd(int m, const MetricGridPtr& metric, int svd_n) {
  if (m < 1) throw Error("kernel of delta p d needs m >= 1");
  KernelReport rep{m, kernel_field(m, {m, 1.0, 0.0}, metric),
                   kernel_field(m, {m, 0.0, 1.0}, metric), 0.0, {}, 0, 1e-10, 0.0, 0.0, 0};
  rep.pd_residual = std::max(pd(rep.k1).max_norm(), pd(rep.k2).max_norm());
  rep.svd_n = svd_n;

  const auto coarse = MetricGrid::make(metric->factor(), svd_n);
  const Eigen::MatrixXd M = delta_pd_matrix(m, coarse);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeFullV);
  const Eigen::VectorXd& s = svd.singularValues();
  const Eigen::Index total = s.size();
  for (Eigen::Index k = total - 1; k >= std::max<Eigen::Index>(0, total - 6); --k) {
    rep.singular_values.push_back(s(k));
  }
  rep.null_dim = 0;
  for (Eigen::Index k = 0; k < total; ++k) rep.null_dim += s(k) <= rep.null_tol ? 1 : 0;

  const Eigen::MatrixXd V = svd.matrixV().rightCols(2);
  Eigen::MatrixXd K(M.rows(), 2);
  const TraceFreeField c1 = kernel_field(m, {m, 1.0, 0.0}, coarse);
  const TraceFreeField c2 = kernel_field(m, {m, 0.0, 1.0}, coarse);
  K.col(0) = stack(c1.a, c1.b);
  K.col(1) = stack(c2.a, c2.b);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(K);
  const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(K.rows(), 2);
  const Eigen::MatrixXd resid = Q - V * (V.transpose() * Q);
  Eigen::JacobiSVD<Eigen::MatrixXd> small(resid);
  rep.subspace_error = small.singularValues()(0);

  double wmin = std::numeric_limits<double>::infinity();
  const SpectralGrid& g = coarse->grid();
  for (int q = 0; q < svd_n; ++q) {
    for (int p = 0; p < svd_n; ++p) {
      if ((p == 0 && q == 0) || g.is_nyquist(p, q)) continue;
      wmin = std::min(wmin, g.wave_vector(p, q).squaredNorm());
    }
  }
  rep.gap_reference = 0.5 * wmin;
  return rep;
}

// ---------------------------------------------------------------- range

RangeReport range_membership(const TraceFreeField& f) {
  const MetricGrid& m = *f.metric();
  RangeReport r;
  r.mean_a = m.integrate_area(f.a);
  r.mean_b = m.integrate_area(f.b);
  r.tolerance = 1e-9 * m.total_area() * std::max(f.max_norm(), 1e-300);
  r.in_range = std::abs(r.mean_a) <= r.tolerance &&
               (f.rank() == 0 || std::abs(r.mean_b) <= r.tolerance);
  return r;
}

// ---------------------------------------------------------------- j split

JSplit j_split(const TraceFreeField& f, const JSplitOptions& opts) {
  const int m = f.rank();
  if (m < 1) throw Error("j-split needs rank >= 1");
  const MetricGridPtr& metric = f.metric();
  const MetricGrid& mg = *metric;
  const SpectralGrid& g = mg.grid();
  const int n = g.n();
  const TraceFreeField df = divergence(f);

  JSplit out{f, f, TraceFreeField(metric, m - 1), {}, 0.0};
  if (m == 1) {
    // v scalar: the Laplace-Beltrami equation reduces to the flat Poisson problem.
    Grid v = g.inverse_laplacian(mg.lambda * df.a);
    v -= mg.integrate_area(v) / mg.total_area();
    out.v = TraceFreeField(metric, 0, v, Grid::Zero(n, n));
    out.stats.converged = true;
  } else {
    // delta p d v = 2 lambda^{-1} d_zbar(w d_z psi) with psi = lambda^{1-m} phi_v and
    // w = lambda^{m-1}; the operator -d_zbar w d_z is Hermitian and semidefinite.
    const Grid w = lambda_pow(mg, m - 1);
    const CGrid wc = w.cast<Complex>();
    const double wbar = w.mean();
    const Eigen::Index n2 = static_cast<Eigen::Index>(n) * n;
    auto to_grid = [n](const Eigen::VectorXcd& v) {
      return CGrid(Eigen::Map<const Eigen::ArrayXXcd>(v.data(), n, n));
    };
    auto to_vec = [n2](const CGrid& c) {
      return Eigen::VectorXcd(Eigen::Map<const Eigen::VectorXcd>(c.data(), n2));
    };
    auto op = [&](const Eigen::VectorXcd& x) {
      return to_vec(-g.dzbar(wc * g.dz(to_grid(x))));
    };
    auto precond = [&](const Eigen::VectorXcd& r) {
      CGrid s = g.forward(to_grid(r));
      for (int q = 0; q < n; ++q) {
        for (int p = 0; p < n; ++p) {
          const double w2 = g.wave_vector(p, q).squaredNorm();
          s(p, q) = ((p == 0 && q == 0) || g.is_nyquist(p, q)) ? Complex(0.0)
                                                               : s(p, q) / (0.25 * wbar * w2);
        }
      }
      return to_vec(g.inverse(s));
    };
    const CGrid rhs = -0.5 * mg.lambda.cast<Complex>() * df.complex();
    Eigen::VectorXcd x = Eigen::VectorXcd::Zero(n2);
    if (opts.seed != 0) {
      std::mt19937_64 rng(opts.seed);
      std::normal_distribution<double> normal(0.0, 1.0);
      for (Eigen::Index i = 0; i < n2; ++i) x(i) = Complex(normal(rng), normal(rng));
      // Smooth the guess so it stays a resolved field.
      x = precond(x);
    }
    out.stats = pcg(std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>(op),
                    std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>(precond),
                    to_vec(rhs), x, opts.tol, opts.max_iter);
    CGrid psi = to_grid(x);
    // Drop the Nyquist content and the kernel component (L2-orthogonal projection).
    CGrid s = g.forward(psi);
    for (int q = 0; q < n; ++q) {
      for (int p = 0; p < n; ++p) {
        if (g.is_nyquist(p, q)) s(p, q) = 0.0;
      }
    }
    psi = g.inverse(s);
    const Grid lm = lambda_pow(mg, m);
    const Complex shift = Complex(g.integrate(lm * psi.real()), g.integrate(lm * psi.imag())) /
                          g.integrate(lm);
    psi -= shift;
    out.v = TraceFreeField::from_complex(metric, m - 1, psi * wc);
  }
  out.potential = pd(out.v);
  out.solenoidal = f - out.potential;
  const TraceFreeField ds = divergence(out.solenoidal);
  const double dn = m - 1 == 0 ? ds.a.abs().maxCoeff() : ds.max_norm();
  out.divergence_residual = dn / std::max(f.max_norm(), 1e-300);
  return out;
}

// ---------------------------------------------------------------- Z fields

TraceFreeField make_Z(int m, const PseudoVector& c, const MetricGridPtr& metric) {
  if (m < 0) throw Error("Z needs m >= 0");
  if (c.weight != m + 1) {
    throw Error("Z^{m,c} needs a pseudovector of weight m + 1 (got weight " +
                std::to_string(c.weight) + " for m = " + std::to_string(m) + ")");
  }
  const MetricGrid& mg = *metric;
  const Grid lm = lambda_pow(mg, m);
  return TraceFreeField(metric, m, lm * (c.c1 * mg.mu_x + c.c2 * mg.mu_y),
                        lm * (c.c2 * mg.mu_x - c.c1 * mg.mu_y));
}

// ---------------------------------------------------------------- weighted d

namespace {

enum class TermKind { Dx, Dy, Mx, My };

struct Term {
  int out;
  int in;
  double coef;
  TermKind kind;
};

// Explicit term list of d on S^s (output rank s + 1) through the Christoffel symbols.
std::vector<Term> d_terms(int s) {
  std::vector<Term> terms;
  auto nabla = [&](int dir, int out_k, int j, double scale) {
    const double ones = s - j;
    const double twos = j;
    if (dir == 1) {
      terms.push_back({out_k, j, scale, TermKind::Dx});
      terms.push_back({out_k, j, -scale * (ones + twos), TermKind::Mx});
      if (j + 1 <= s) terms.push_back({out_k, j + 1, scale * ones, TermKind::My});
      if (j - 1 >= 0) terms.push_back({out_k, j - 1, -scale * twos, TermKind::My});
    } else {
      terms.push_back({out_k, j, scale, TermKind::Dy});
      terms.push_back({out_k, j, -scale * (ones + twos), TermKind::My});
      if (j + 1 <= s) terms.push_back({out_k, j + 1, -scale * ones, TermKind::Mx});
      if (j - 1 >= 0) terms.push_back({out_k, j - 1, scale * twos, TermKind::Mx});
    }
  };
  for (int k = 0; k <= s + 1; ++k) {
    if (k <= s) nabla(1, k, k, static_cast<double>(s + 1 - k) / (s + 1));
    if (k >= 1) nabla(2, k, k - 1, static_cast<double>(k) / (s + 1));
  }
  return terms;
}

std::vector<Grid> d_weights(const MetricGrid& mg, int s) {
  const int r = s + 1;
  std::vector<Grid> w;
  const Grid base = (mg.mu * (1.0 - r)).exp();  // sqrt(lambda^{1-r})
  for (int k = 0; k <= r; ++k) w.push_back(std::sqrt(binomial(r, k)) * base);
  return w;
}

Grid apply_kind(const MetricGrid& mg, TermKind kind, const Grid& x, bool transpose) {
  const SpectralGrid& g = mg.grid();
  switch (kind) {
    case TermKind::Dx: return transpose ? Grid(-g.dx(x)) : g.dx(x);
    case TermKind::Dy: return transpose ? Grid(-g.dy(x)) : g.dy(x);
    case TermKind::Mx: return mg.mu_x * x;
    case TermKind::My: return mg.mu_y * x;
  }
  return x;
}

std::vector<Grid> unstack(const Eigen::VectorXd& v, int count, int n) {
  std::vector<Grid> out;
  const Eigen::Index n2 = static_cast<Eigen::Index>(n) * n;
  for (int k = 0; k < count; ++k) {
    out.emplace_back(Eigen::Map<const Eigen::ArrayXXd>(v.data() + k * n2, n, n));
  }
  return out;
}

Eigen::VectorXd restack(const std::vector<Grid>& g) {
  const Eigen::Index n2 = g.front().size();
  Eigen::VectorXd v(n2 * static_cast<Eigen::Index>(g.size()));
  for (size_t k = 0; k < g.size(); ++k) {
    v.segment(static_cast<Eigen::Index>(k) * n2, n2) =
        Eigen::Map<const Eigen::VectorXd>(g[k].data(), n2);
  }
  return v;
}

}  // namespace

Eigen::VectorXd weighted_d_apply(const MetricGrid& mg, int s, const Eigen::VectorXd& v) {
  const int n = mg.n();
  const auto in = unstack(v, s + 1, n);
  std::vector<Grid> out(s + 2, Grid::Zero(n, n));
  for (const Term& t : d_terms(s)) out[t.out] += t.coef * apply_kind(mg, t.kind, in[t.in], false);
  const auto w = d_weights(mg, s);
  for (int k = 0; k <= s + 1; ++k) out[k] *= w[k];
  return restack(out);
}

Eigen::VectorXd weighted_d_transpose(const MetricGrid& mg, int s, const Eigen::VectorXd& y) {
  const int n = mg.n();
  auto in = unstack(y, s + 2, n);
  const auto w = d_weights(mg, s);
  for (int k = 0; k <= s + 1; ++k) in[k] *= w[k];
  std::vector<Grid> out(s + 1, Grid::Zero(n, n));
  for (const Term& t : d_terms(s)) out[t.in] += t.coef * apply_kind(mg, t.kind, in[t.out], true);
  return restack(out);
}

// ---------------------------------------------------------------- potentiality

PotentialTestResult potentiality_test(int m, const MetricGridPtr& metric,
                                      const PotentialOptions& opts) {
  if (m < 1) throw Error("potentiality test needs m >= 1");
  const MetricGrid& mg = *metric;
  const SpectralGrid& g = mg.grid();
  const int n = g.n();
  PotentialTestResult res;
  res.m = m;
  res.grid_n = n;

  const TraceFreeField z1 = make_Z(m - 1, {m, 1.0, 0.0}, metric);
  const TraceFreeField z2 = make_Z(m - 1, {m, 0.0, 1.0}, metric);

  if (m == 1) {
    // A rank-0 potential field vanishes identically, so the test is whether
    // c1 mu_x + c2 mu_y = 0 for some unit c.
    Eigen::Matrix2d G;
    G(0, 0) = mg.integrate_area(z1.a * z1.a);
    G(0, 1) = G(1, 0) = mg.integrate_area(z1.a * z2.a);
    G(1, 1) = mg.integrate_area(z2.a * z2.a);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(G);
    const double lmax = std::max(es.eigenvalues()(1), 0.0);
    if (lmax <= 1e-28) {
      res.degenerate = true;
      res.residual_rel = 0.0;
      return res;
    }
    const Eigen::Vector2d c = es.eigenvectors().col(0);
    // The residual is evaluated directly: sqrt(lmin) loses half the digits near zero.
    const double rmin = std::sqrt(mg.integrate_area((c(0) * z1.a + c(1) * z2.a).square()));
    res.residual_rel = rmin / std::sqrt(lmax);
    res.singular_values = {rmin, std::sqrt(lmax)};
    res.best_c = PseudoVector{1, c(0), c(1)};
    if (res.residual_rel <= opts.eps_pot) {
      res.solution_v = SymTensorField(metric, 0);
      res.solution_residual = res.residual_rel;
    }
    return res;
  }

  const int s = m - 2;  // rank of v
  const auto weights = d_weights(mg, s);
  const Eigen::Index n2 = static_cast<Eigen::Index>(n) * n;

  auto precond = [&](const Eigen::VectorXd& y) {
    auto comps = unstack(y, s + 1, n);
    for (auto& c : comps) {
      c = g.apply_multiplier(c, [](const Vec2& w) { return Complex(1.0 / std::sqrt(1.0 + w.squaredNorm())); });
    }
    return restack(comps);
  };
  auto A = [&](const Eigen::VectorXd& y) { return weighted_d_apply(mg, s, precond(y)); };
  auto At = [&](const Eigen::VectorXd& r) { return precond(weighted_d_transpose(mg, s, r)); };

  auto weighted_target = [&](const TraceFreeField& z) {
    const SymTensorField full = z.expand();
    std::vector<Grid> comps;
    for (int k = 0; k <= s + 1; ++k) comps.push_back(weights[k] * full[k]);
    return restack(comps);
  };

  std::array<Eigen::VectorXd, 2> b{weighted_target(z1), weighted_target(z2)};
  std::array<Eigen::VectorXd, 2> v;
  std::array<Eigen::VectorXd, 2> r;
  for (int i = 0; i < 2; ++i) {
    Eigen::VectorXd y;
    const SolveStats st = lsqr(A, At, b[i], y, opts.tol, opts.tol, opts.max_iter);
    res.converged = res.converged && st.converged;
    res.iterations = std::max(res.iterations, st.iterations);
    v[i] = precond(y);
    r[i] = b[i] - weighted_d_apply(mg, s, v[i]);
  }
  // Quadrature weight area / N^2 is common to every entry and cancels in ratios.
  Eigen::Matrix2d GR, GZ;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      GR(i, j) = r[i].dot(r[j]);
      GZ(i, j) = b[i].dot(b[j]);
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> ez(GZ);
  if (ez.eigenvalues()(1) <= 1e-28 * n2) {
    res.degenerate = true;
    res.residual_rel = 0.0;
    return res;
  }
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::Matrix2d> ge(GR, GZ);
  const Eigen::Vector2d ev = ge.eigenvalues().cwiseMax(0.0);
  Eigen::Vector2d c = ge.eigenvectors().col(0);
  c.normalize();
  res.best_c = PseudoVector{m, c(0), c(1)};
  const Eigen::VectorXd vbest = c(0) * v[0] + c(1) * v[1];
  const Eigen::VectorXd rbest = c(0) * r[0] + c(1) * r[1];
  const Eigen::VectorXd bbest = c(0) * b[0] + c(1) * b[1];
  res.solution_residual = rbest.norm() / std::max(bbest.norm(), 1e-300);
  // Direct evaluation at the minimiser: sqrt(ev(0)) loses half the digits near zero.
  res.residual_rel = res.solution_residual;
  res.singular_values = {res.solution_residual, std::sqrt(ev(1))};
  if (res.residual_rel <= opts.eps_pot) {
    res.solution_v = SymTensorField(metric, unstack(vbest, s + 1, n));
  }
  return res;
}

// ---------------------------------------------------------------- m = 2 cross-check

RotationCheck liouville_rotation_check(const PseudoVector& c, const MetricGrid& mg) {
  const SpectralGrid& g = mg.grid();
  RotationCheck out;
  out.angle = 0.5 * std::atan2(c.c2, c.c1);
  const double cs = std::cos(out.angle);
  const double sn = std::sin(out.angle);
  const Grid lxx = g.derivative(mg.lambda, 2, 0);
  const Grid lxy = g.derivative(mg.lambda, 1, 1);
  const Grid lyy = g.derivative(mg.lambda, 0, 2);
  const Grid mixed = -sn * cs * lxx + (cs * cs - sn * sn) * lxy + sn * cs * lyy;
  const double scale = std::max({lxx.abs().maxCoeff(), lxy.abs().maxCoeff(), lyy.abs().maxCoeff(), 1e-300});
  out.residual = mixed.abs().maxCoeff() / scale;
  return out;
}

}  // namespace kt
