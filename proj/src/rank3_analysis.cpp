#include "ktorus/rank3_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include <boost/numeric/odeint.hpp>

#include "ktorus/parallel.hpp"

namespace kt {

namespace {

namespace ode = boost::numeric::odeint;

MetricJet jet_at(const MetricGrid& m, int i, int j) {
  MetricJet jt;
  jt.mu = m.mu(i, j);
  jt.mu_x = m.mu_x(i, j);
  jt.mu_y = m.mu_y(i, j);
  jt.mu_xx = m.mu_xx(i, j);
  jt.mu_xy = m.mu_xy(i, j);
  jt.mu_yy = m.mu_yy(i, j);
  jt.mu_xxx = m.mu_xxx(i, j);
  jt.mu_xxy = m.mu_xxy(i, j);
  jt.mu_xyy = m.mu_xyy(i, j);
  jt.mu_yyy = m.mu_yyy(i, j);
  return jt;
}

Vec2 lambda_real(const MetricJet& j) {
  const double mx = j.mu_x, my = j.mu_y;
  const double l1 = j.mu_xxx - 3.0 * j.mu_xyy + 10.0 * mx * j.mu_xx - 20.0 * my * j.mu_xy -
                    10.0 * mx * j.mu_yy + 8.0 * mx * mx * mx - 24.0 * mx * my * my;
  const double l2 = 3.0 * j.mu_xxy - j.mu_yyy + 10.0 * my * j.mu_xx + 20.0 * mx * j.mu_xy -
                    10.0 * my * j.mu_yy + 24.0 * mx * mx * my - 8.0 * my * my * my;
  return {l1, l2};
}

// Complex route: the three parts as complex pairs, with the z and zbar derivatives of
// lambda computed separately so that the imaginary residue is a genuine check.
struct ComplexParts {
  std::array<std::array<Complex, 2>, 3> part;
};

ComplexParts lambda_parts(const MetricJet& j) {
  const double mx = j.mu_x, my = j.mu_y;
  // Derivatives of lambda divided by lambda.
  const double lx = 2.0 * mx, ly = 2.0 * my;
  const double lxx = 2.0 * j.mu_xx + 4.0 * mx * mx;
  const double lxy = 2.0 * j.mu_xy + 4.0 * mx * my;
  const double lyy = 2.0 * j.mu_yy + 4.0 * my * my;
  const double lxxx = 2.0 * j.mu_xxx + 12.0 * mx * j.mu_xx + 8.0 * mx * mx * mx;
  const double lxxy = 2.0 * j.mu_xxy + 4.0 * my * j.mu_xx + 8.0 * mx * mx * my + 8.0 * mx * j.mu_xy;
  const double lxyy = 2.0 * j.mu_xyy + 8.0 * my * j.mu_xy + 8.0 * mx * my * my + 4.0 * mx * j.mu_yy;
  const double lyyy = 2.0 * j.mu_yyy + 12.0 * my * j.mu_yy + 8.0 * my * my * my;
  const Complex I(0.0, 1.0);
  const Complex z1 = 0.5 * (lx - I * ly);
  const Complex zb1 = 0.5 * (lx + I * ly);
  const Complex z2 = 0.25 * (lxx - 2.0 * I * lxy - lyy);
  const Complex zb2 = 0.25 * (lxx + 2.0 * I * lxy - lyy);
  const Complex z3 = 0.125 * (lxxx - 3.0 * I * lxxy - 3.0 * lxyy + I * lyyy);
  const Complex zb3 = 0.125 * (lxxx + 3.0 * I * lxxy - 3.0 * lxyy - I * lyyy);
  ComplexParts p;
  p.part[0] = {z3 + zb3, I * (z3 - zb3)};
  const Complex a2 = z1 * z2, b2 = zb1 * zb2;
  p.part[1] = {a2 + b2, I * (a2 - b2)};
  const Complex a3 = z1 * z1 * z1, b3 = zb1 * zb1 * zb1;
  p.part[2] = {a3 + b3, I * (a3 - b3)};
  return p;
}

std::array<Complex, 2> combine(const ComplexParts& p) {
  std::array<Complex, 2> out;
  for (int c = 0; c < 2; ++c) out[c] = 2.0 * p.part[0][c] + 4.0 * p.part[1][c] - 2.0 * p.part[2][c];
  return out;
}

double max_abs(const Grid& g) { return g.abs().maxCoeff(); }

void require_weight(const PseudoVector& c, int w) {
  if (c.weight != w) throw Error("pseudovector has weight " + std::to_string(c.weight) +
                                 ", expected " + std::to_string(w));
}

Eigen::VectorXd flat(const Grid& g) { return Eigen::Map<const Eigen::VectorXd>(g.data(), g.size()); }

Grid unflat(const Eigen::VectorXd& v, int n) { return Eigen::Map<const Grid>(v.data(), n, n); }

// 1/2 Delta0(lambda^{-1} Delta0 w) + div0(K grad0 w), the fourth-order operator times lambda.
// Relative rank cut for the alpha fit. When grad K has a fixed direction the two
// columns coincide up to solver noise, which must not be fitted.
constexpr double kAlphaRankTol = 1e-8;

Grid scaled_operator(const MetricGrid& m, const Grid& w) {
  const SpectralGrid& g = m.grid();
  const Grid lap = g.laplacian(w);
  const Grid bi = g.laplacian(lap / m.lambda);
  const Grid flux = g.dx(m.K * g.dx(w)) + g.dy(m.K * g.dy(w));
  return 0.5 * bi + flux;
}

// Removes the mean and the Nyquist content, which the operator cannot reach.
Grid project_range(const SpectralGrid& g, const Grid& f, double* mean) {
  CGrid s = g.forward(f);
  if (mean) *mean = s(0, 0).real();
  s(0, 0) = 0.0;
  const int n = g.n();
  for (int p = 0; p < n; ++p)
    for (int q = 0; q < n; ++q)
      if (g.is_nyquist(p, q)) s(p, q) = 0.0;
  return g.inverse_real(s);
}

}  // namespace

// ---------------------------------------------------------------- Lambda

LambdaForm lambda_form(const MetricGrid& metric) {
  const int n = metric.n();
  LambdaForm out;
  out.L1 = Grid::Zero(n, n);
  out.L2 = Grid::Zero(n, n);
  out.L1_complex = Grid::Zero(n, n);
  out.L2_complex = Grid::Zero(n, n);
  for (auto& p : out.parts) p = {Grid::Zero(n, n), Grid::Zero(n, n)};
  double imag = 0.0, scale = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const MetricJet jt = jet_at(metric, i, j);
      const Vec2 r = lambda_real(jt);
      out.L1(i, j) = r(0);
      out.L2(i, j) = r(1);
      const ComplexParts p = lambda_parts(jt);
      for (int k = 0; k < 3; ++k) {
        out.parts[k][0](i, j) = p.part[k][0].real();
        out.parts[k][1](i, j) = p.part[k][1].real();
        for (int c = 0; c < 2; ++c) {
          imag = std::max(imag, std::abs(p.part[k][c].imag()));
          scale = std::max(scale, std::abs(p.part[k][c]));
        }
      }
      const auto L = combine(p);
      out.L1_complex(i, j) = L[0].real();
      out.L2_complex(i, j) = L[1].real();
      imag = std::max({imag, std::abs(L[0].imag()), std::abs(L[1].imag())});
    }
  }
  out.imag_residue = imag / std::max(scale, 1.0);
  out.route_discrepancy =
      std::max(max_abs(out.L1 - out.L1_complex), max_abs(out.L2 - out.L2_complex));
  out.norm = std::max(max_abs(out.L1), max_abs(out.L2));
  double parts = 0.0;
  for (int c = 0; c < 2; ++c) {
    const Grid comb = 2.0 * out.parts[0][c] + 4.0 * out.parts[1][c] - 2.0 * out.parts[2][c];
    parts = std::max(parts, max_abs(comb - (c == 0 ? out.L1 : out.L2)));
  }
  out.parts_residual = parts;
  return out;
}

Vec2 lambda_at(const ConformalFactor& cf, const Vec2& x) { return lambda_real(cf.jet(x)); }

Vec2 lambda_complex_at(const ConformalFactor& cf, const Vec2& x, double* imag) {
  const auto L = combine(lambda_parts(cf.jet(x)));
  if (imag) *imag = std::max(std::abs(L[0].imag()), std::abs(L[1].imag()));
  return {L[0].real(), L[1].real()};
}

// ---------------------------------------------------------------- T^c and Phi^c

TraceFreeField make_T(const PseudoVector& c, const MetricGridPtr& metric) {
  require_weight(c, 3);
  return make_Z(2, c.perp(), metric);
}

Vec2 delta_T_at(const PseudoVector& c, const ConformalFactor& cf, const Vec2& x) {
  require_weight(c, 3);
  const MetricJet j = cf.jet(x);
  const double e = std::exp(2.0 * j.mu);
  const double c1 = c.c1, c2 = c.c2;
  const double mx = j.mu_x, my = j.mu_y;
  const double t1 = -c2 * j.mu_xx + 2.0 * c1 * j.mu_xy + c2 * j.mu_yy - 4.0 * c2 * mx * mx +
                    8.0 * c1 * mx * my + 4.0 * c2 * my * my;
  const double t2 = c1 * j.mu_xx + 2.0 * c2 * j.mu_xy - c1 * j.mu_yy + 4.0 * c1 * mx * mx +
                    8.0 * c2 * mx * my - 4.0 * c1 * my * my;
  return {e * t1, e * t2};
}

PhiReport phi_c(const PseudoVector& c, const MetricGridPtr& metric) {
  require_weight(c, 3);
  const SymTensorField dT = divergence(make_T(c, metric).expand());
  const auto nab = covariant_derivative(dT);
  PhiReport out;
  out.covariant = (nab[0][1] - nab[1][0]) / metric->lambda;
  const LambdaForm L = lambda_form(*metric);
  out.paired = c.c1 * L.L1 + c.c2 * L.L2;
  out.discrepancy = max_abs(out.covariant - out.paired);
  return out;
}

Delta2Report delta2_T(const PseudoVector& c, const MetricGridPtr& metric) {
  require_weight(c, 3);
  const SymTensorField d2 = divergence(divergence(make_T(c, metric).expand()));
  const LambdaForm L = lambda_form(*metric);
  Delta2Report out;
  out.general = d2[0];
  out.closed_form = -c.c2 * L.L1 + c.c1 * L.L2;
  out.discrepancy = max_abs(out.general - out.closed_form);
  return out;
}

// ---------------------------------------------------------------- fourth-order equation

double CohomologySolution::pairing(const Lattice& lattice, const std::array<int, 2>& cls) const {
  return alpha.dot(lattice.translation(cls[0], cls[1]));
}

std::array<Grid, 2> gradient(const MetricGrid& metric, const CohomologySolution& u) {
  const SpectralGrid& g = metric.grid();
  return {g.dx(u.w) + u.alpha(0), g.dy(u.w) + u.alpha(1)};
}

Grid fourth_order_apply(const MetricGrid& metric, const CohomologySolution& u) {
  const Grid affine = u.alpha(0) * metric.K_x + u.alpha(1) * metric.K_y;
  return (scaled_operator(metric, u.w) + affine) / metric.lambda;
}

Grid transport_apply(const MetricGrid& metric, const CohomologySolution& u) {
  const auto du = gradient(metric, u);
  return (-metric.K_y * du[0] + metric.K_x * du[1]) / metric.lambda;
}

FourthOrderSolve solve_fourth_order_rhs(const MetricGrid& metric, const Grid& rhs,
                                        const Vec2& alpha, const FourthOrderOptions& opts) {
  const SpectralGrid& g = metric.grid();
  const int n = g.n();
  FourthOrderSolve out;
  const Grid target = metric.lambda * rhs - alpha(0) * metric.K_x - alpha(1) * metric.K_y;
  double mean = 0.0;
  const Grid b = project_range(g, target, &mean);
  out.mean_removed = mean;
  const double hbar = (1.0 / metric.lambda).mean();
  auto A = [&](const Eigen::VectorXd& v) { return flat(scaled_operator(metric, unflat(v, n))); };
  auto M = [&](const Eigen::VectorXd& v) {
    const Grid f = unflat(v, n);
    CGrid s = g.forward(f);
    for (int p = 0; p < n; ++p) {
      for (int q = 0; q < n; ++q) {
        const double w2 = g.wave_vector(p, q).squaredNorm();
        s(p, q) = (w2 == 0.0 || g.is_nyquist(p, q)) ? Complex(0.0) : s(p, q) / (0.5 * hbar * w2 * w2);
      }
    }
    return flat(g.inverse_real(s));
  };
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n * n);
  out.stats = pcg(A, M, flat(b), x, opts.tol, opts.max_iter);
  out.w = unflat(x, n);
  CohomologySolution u{out.w, alpha};
  const double scale = std::max(max_abs(rhs), std::numeric_limits<double>::min());
  out.forward_residual = max_abs(fourth_order_apply(metric, u) - rhs) / scale;
  return out;
}

FourthOrderReport solve_fourth_order(const PseudoVector& c, const MetricGridPtr& metric,
                                     const FourthOrderOptions& opts) {
  require_weight(c, 3);
  const MetricGrid& m = *metric;
  const LambdaForm L = lambda_form(m);
  FourthOrderReport out;
  out.u.w = m.grid().zeros();
  if (L.norm <= 1e-13) {
    out.degenerate = true;
    return out;
  }
  const Grid rhs = -c.c2 * L.L1 + c.c1 * L.L2;
  const Grid phi = c.c1 * L.L1 + c.c2 * L.L2;
  const Grid zero = m.grid().zeros();
  // w = w0 + alpha_1 w1 + alpha_2 w2.
  const FourthOrderSolve s0 = solve_fourth_order_rhs(m, rhs, Vec2::Zero(), opts);
  const FourthOrderSolve s1 = solve_fourth_order_rhs(m, zero, Vec2(1.0, 0.0), opts);
  const FourthOrderSolve s2 = solve_fourth_order_rhs(m, zero, Vec2(0.0, 1.0), opts);
  out.converged = s0.stats.converged && s1.stats.converged && s2.stats.converged;
  out.iterations = s0.stats.iterations + s1.stats.iterations + s2.stats.iterations;
  out.mean_removed = s0.mean_removed;
  const Grid r0 = transport_apply(m, {s0.w, Vec2::Zero()}) - phi;
  const Grid r1 = transport_apply(m, {s1.w, Vec2(1.0, 0.0)});
  const Grid r2 = transport_apply(m, {s2.w, Vec2(0.0, 1.0)});
  const Grid sw = m.lambda.sqrt();
  Eigen::MatrixXd A(r0.size(), 2);
  A.col(0) = flat(r1 * sw);
  A.col(1) = flat(r2 * sw);
  const Eigen::VectorXd b = -flat(r0 * sw);
  auto cod = A.completeOrthogonalDecomposition();
  cod.setThreshold(kAlphaRankTol);
  const Vec2 alpha = cod.solve(b);
  out.u.alpha = alpha;
  out.u.w = s0.w + alpha(0) * s1.w + alpha(1) * s2.w;
  const Grid res = transport_apply(m, out.u) - phi;
  // |c|^2 |Lambda|^2 = |c.Lambda|^2 + |c-perp.Lambda|^2; the first alone vanishes
  // along Killing directions.
  const double pn = c.norm() * std::sqrt(m.integrate_area(L.L1 * L.L1 + L.L2 * L.L2));
  const double rn = std::sqrt(m.integrate_area(res * res));
  out.transport_residual = pn > 0.0 ? rn / pn : rn;
  out.forward_residual = max_abs(fourth_order_apply(m, out.u) - rhs) / std::max(max_abs(rhs), 1e-300);
  return out;
}

TransportMinimum transport_minimum(const MetricGridPtr& metric, const FourthOrderOptions& opts) {
  const MetricGrid& m = *metric;
  const LambdaForm L = lambda_form(m);
  TransportMinimum out;
  if (L.norm <= 1e-13) {
    out.degenerate = true;
    return out;
  }
  const Grid zero = m.grid().zeros();
  // c = (1, 0): rhs Lambda_2, phi Lambda_1. c = (0, 1): rhs -Lambda_1, phi Lambda_2.
  const std::array<Grid, 2> rhs{L.L2, Grid(-L.L1)};
  const std::array<const Grid*, 2> phi{&L.L1, &L.L2};
  std::array<FourthOrderSolve, 4> s;
  parallel_for(4, [&](std::size_t k) {
    if (k < 2) s[k] = solve_fourth_order_rhs(m, rhs[k], Vec2::Zero(), opts);
    else s[k] = solve_fourth_order_rhs(m, zero, k == 2 ? Vec2(1.0, 0.0) : Vec2(0.0, 1.0), opts);
  });
  const Grid sw = m.lambda.sqrt();
  Eigen::MatrixXd A(zero.size(), 2);
  A.col(0) = flat(transport_apply(m, {s[2].w, Vec2(1.0, 0.0)}) * sw);
  A.col(1) = flat(transport_apply(m, {s[3].w, Vec2(0.0, 1.0)}) * sw);
  auto cod = A.completeOrthogonalDecomposition();
  cod.setThreshold(kAlphaRankTol);
  Eigen::MatrixXd R(zero.size(), 2), P(zero.size(), 2);
  for (int k = 0; k < 2; ++k) {
    const Eigen::VectorXd r0 = flat((transport_apply(m, {s[k].w, Vec2::Zero()}) - *phi[k]) * sw);
    R.col(k) = r0 - A * cod.solve(r0);
    P.col(k) = flat(*phi[k] * sw);
    out.forward_residual = std::max(out.forward_residual, s[k].forward_residual);
  }
  for (const auto& sk : s) out.converged = out.converged && sk.stats.converged;
  // Isotropic scale, as in solve_fourth_order.
  const Eigen::Matrix2d N = R.transpose() * R;
  const double D = P.squaredNorm();
  for (int k = 0; k < 2; ++k) out.basis_residuals[k] = std::sqrt(N(k, k) / D);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(N);
  out.residual = std::sqrt(std::max(es.eigenvalues()(0), 0.0) / D);
  Vec2 c = es.eigenvectors().col(0).normalized();
  if (c(0) < 0.0 || (c(0) == 0.0 && c(1) < 0.0)) c = -c;
  out.best_c = {3, c(0), c(1)};
  return out;
}

SymTensorField hessian(const MetricGridPtr& metric, const CohomologySolution& u) {
  const MetricGrid& m = *metric;
  const SpectralGrid& g = m.grid();
  const auto du = gradient(m, u);
  const Grid& ux = du[0];
  const Grid& uy = du[1];
  Grid h11 = g.derivative(u.w, 2, 0) - m.mu_x * ux + m.mu_y * uy;
  Grid h12 = g.derivative(u.w, 1, 1) - m.mu_y * ux - m.mu_x * uy;
  Grid h22 = g.derivative(u.w, 0, 2) + m.mu_x * ux - m.mu_y * uy;
  return SymTensorField(metric, {std::move(h11), std::move(h12), std::move(h22)});
}

ThirdDerivativeReport third_derivative_residual(const CohomologySolution& u, const PseudoVector& c,
                                                const MetricGridPtr& metric) {
  require_weight(c, 3);
  const MetricGrid& m = *metric;
  const auto nabH = covariant_derivative(hessian(metric, u));
  const SymTensorField T = make_T(c, metric).expand();
  const auto nabT = covariant_derivative(T);
  const SymTensorField dT = divergence(T);
  const auto du = gradient(m, u);
  ThirdDerivativeReport out;
  for (int i = 0; i < 2; ++i) {
    const Grid trace = -m.K * du[i] + dT[i];
    for (int k = 0; k < 3; ++k) {
      Grid expected = nabT[i][k];
      if (k != 1) expected += m.lambda * trace;
      out.residual = std::max(out.residual, max_abs(nabH[i][k] - expected));
      out.scale = std::max(out.scale, max_abs(nabH[i][k]));
    }
  }
  return out;
}

SystemResiduals system_residuals(const CohomologySolution& u, const PseudoVector& c,
                                 const MetricGridPtr& metric) {
  require_weight(c, 3);
  const MetricGrid& m = *metric;
  const SymTensorField H = hessian(metric, u);
  const TraceFreeField T = make_T(c, metric);
  SystemResiduals out;
  out.reduced = {0.5 * (H[0] - H[2]) - T.a, H[1] - T.b};
  const Grid half_lap = 0.5 * (H[0] + H[2]) / m.lambda;
  out.invariant = {H[0] - half_lap * m.lambda - T.a, H[1] - T.b, H[2] - half_lap * m.lambda + T.a};
  out.difference = std::max({max_abs(out.reduced[0] - out.invariant[0]),
                             max_abs(out.reduced[1] - out.invariant[1]),
                             max_abs(out.reduced[0] + out.invariant[2])});
  return out;
}

// ---------------------------------------------------------------- isolines

namespace {

using State2 = std::array<double, 2>;
using State3 = std::array<double, 3>;

struct IsolineField {
  const ConformalFactor& cf;
  Vec2 velocity(const Vec2& x, double* grad_norm = nullptr) const {
    const MetricJet j = cf.jet(x);
    const Vec2 gk = curvature_gradient(j);
    if (grad_norm) *grad_norm = std::exp(-j.mu) * gk.norm();
    return std::exp(-2.0 * j.mu) * Vec2(-gk(1), gk(0));
  }
};

Vec2 project_to_level(const ConformalFactor& cf, Vec2 x, double level) {
  for (int it = 0; it < 30; ++it) {
    const MetricJet j = cf.jet(x);
    const double dk = gaussian_curvature(j) - level;
    const Vec2 gk = curvature_gradient(j);
    const double g2 = gk.squaredNorm();
    if (g2 == 0.0) break;
    const Vec2 step = dk * gk / g2;
    x -= step;
    if (step.norm() < 1e-15 * (1.0 + x.norm())) break;
  }
  return x;
}

Vec2 nearest_lattice_vector(const Lattice& lat, const Vec2& d, std::array<int, 2>* cls = nullptr) {
  const Vec2 st = lat.to_lattice(d);
  const long p = std::lround(st(0)), q = std::lround(st(1));
  if (cls) *cls = {static_cast<int>(p), static_cast<int>(q)};
  return lat.translation(p, q);
}

double periodic_trapezoid(const std::vector<IsolineSample>& s, const std::function<double(const Vec2&)>& f,
                          int stride) {
  const int S = static_cast<int>(s.size()) - 1;
  const double T = s.back().t - s.front().t;
  double sum = 0.0;
  int count = 0;
  for (int k = 0; k < S; k += stride) {
    sum += f({s[k].x, s[k].y});
    ++count;
  }
  return T * sum / count;
}

}  // namespace

IsolineCurve trace_isoline(const ConformalFactor& cf, const Vec2& seed, double level,
                           double tol_crit, const IsolineOptions& opts, double cell) {
  const IsolineField field{cf};
  const Lattice& lat = cf.lattice();
  IsolineCurve curve;
  curve.level = level;
  const Vec2 x0 = project_to_level(cf, seed, level);
  double g0 = 0.0;
  const Vec2 v0 = field.velocity(x0, &g0);
  curve.min_grad = g0;
  if (g0 < tol_crit || v0.norm() == 0.0) {
    curve.clipped = true;
    curve.samples.push_back({0.0, x0(0), x0(1)});
    return curve;
  }
  const Vec2 dir = v0.normalized();
  auto rhs = [&field](const State2& s, State2& d, double) {
    const Vec2 v = field.velocity({s[0], s[1]});
    d = {v(0), v(1)};
  };
  auto stepper = ode::make_dense_output(opts.tol, opts.tol, ode::runge_kutta_dopri5<State2>());
  State2 st{x0(0), x0(1)};
  stepper.initialize(st, 0.0, 0.1 * cell / v0.norm());
  // Steps longer than a few cells are redone shorter, so the return test below cannot
  // jump over a passage through the seed (straight isolines give no error signal).
  const double max_move = 4.0 * cell;
  const double leave = 0.5 * cell;
  const double arc_limit = 100.0 * (lat.e1().norm() + lat.e2().norm());
  double arc = 0.0, vmax = v0.norm(), t_end = 0.0;
  bool closed = false;
  Vec2 prev = x0;
  for (int steps = 0; steps < 2000000; ++steps) {
    const State2 saved = stepper.current_state();
    const double t_saved = stepper.current_time();
    stepper.do_step(rhs);
    const double t1 = stepper.current_time();
    const Vec2 x1(stepper.current_state()[0], stepper.current_state()[1]);
    const double move = (x1 - prev).norm();
    if (move > max_move) {
      stepper.initialize(saved, t_saved, 0.5 * (t1 - t_saved) * max_move / move);
      continue;
    }
    double gn = 0.0;
    const Vec2 v1 = field.velocity(x1, &gn);
    curve.min_grad = std::min(curve.min_grad, gn);
    vmax = std::max(vmax, v1.norm());
    arc += (x1 - prev).norm();
    if (gn < tol_crit) {
      // Critical zone: stop at the step where the gradient became too small.
      curve.clipped = true;
      t_end = t1;
      break;
    }
    const Vec2 L = nearest_lattice_vector(lat, x1 - x0);
    const Vec2 r1 = x1 - x0 - L;
    const Vec2 r0 = prev - x0 - L;
    // Return plane through the seed crossed in the seed direction; accept when the
    // crossing point lies next to a lattice translate of the seed. The curve leaves
    // the seed forward, so this cannot fire before a full turn.
    if (dir.dot(r0) < 0.0 && dir.dot(r1) >= 0.0) {
      double lo = stepper.previous_time(), hi = t1;
      State2 tmp;
      for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        stepper.calc_state(mid, tmp);
        const Vec2 r = Vec2(tmp[0], tmp[1]) - x0 - L;
        (dir.dot(r) < 0.0 ? lo : hi) = mid;
      }
      stepper.calc_state(0.5 * (lo + hi), tmp);
      if ((Vec2(tmp[0], tmp[1]) - x0 - L).norm() < leave) {
        t_end = 0.5 * (lo + hi);
        closed = true;
        break;
      }
    }
    prev = x1;
    if (arc > arc_limit) {
      t_end = t1;
      break;
    }
  }
  curve.closed = closed;
  curve.period = t_end;
  const int S = std::max(opts.min_samples,
                         2 * static_cast<int>(std::ceil(0.5 * std::min(t_end * vmax / (0.25 * cell), 2e5))));
  std::vector<double> times(S + 1);
  for (int k = 0; k <= S; ++k) times[k] = t_end * k / S;
  State2 s{x0(0), x0(1)};
  auto dense = ode::make_dense_output(opts.tol, opts.tol, ode::runge_kutta_dopri5<State2>());
  curve.samples.reserve(S + 1);
  ode::integrate_times(dense, rhs, s, times.begin(), times.end(), 0.1 * cell / v0.norm(),
                       [&curve](const State2& p, double t) { curve.samples.push_back({t, p[0], p[1]}); },
                       ode::max_step_checker(1000000));
  if (closed) {
    const auto& e = curve.samples.back();
    nearest_lattice_vector(lat, Vec2(e.x, e.y) - x0, &curve.lift);
  }
  for (const auto& p : curve.samples)
    curve.level_error = std::max(curve.level_error, std::abs(gaussian_curvature(cf, {p.x, p.y}) - level));
  return curve;
}

IsolineSet extract_isolines(const MetricGrid& metric, double level, const IsolineOptions& opts) {
  const int n = metric.n();
  const ConformalFactor& cf = metric.factor();
  const Lattice& lat = cf.lattice();
  IsolineSet out;
  const double gmax = (metric.K_x.square() + metric.K_y.square()).sqrt().cwiseProduct((-metric.mu).exp()).maxCoeff();
  if (gmax <= 1e-14) {
    out.degenerate = true;
    return out;
  }
  out.tol_crit = opts.crit_rel * gmax;
  const double cell = std::min(lat.e1().norm(), lat.e2().norm()) / n;
  struct Crossing {
    Vec2 x;
    std::array<int, 2> cell_a, cell_b;
    bool used = false;
  };
  std::vector<Crossing> cross;
  auto wrap = [n](int i) { return ((i % n) + n) % n; };
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double k0 = metric.K(i, j) - level;
      const double ks = metric.K(wrap(i + 1), j) - level;
      const double kt = metric.K(i, wrap(j + 1)) - level;
      if ((k0 < 0.0) != (ks < 0.0)) {
        const double f = k0 / (k0 - ks);
        cross.push_back({lat.to_physical(Vec2((i + f) / n, double(j) / n)), {i, j}, {i, wrap(j - 1)}});
      }
      if ((k0 < 0.0) != (kt < 0.0)) {
        const double f = k0 / (k0 - kt);
        cross.push_back({lat.to_physical(Vec2(double(i) / n, (j + f) / n)), {i, j}, {wrap(i - 1), j}});
      }
    }
  }
  std::vector<char> visited(static_cast<std::size_t>(n) * n, 0);
  for (auto& c : cross) {
    if (c.used) continue;
    std::fill(visited.begin(), visited.end(), 0);
    IsolineCurve curve = trace_isoline(cf, c.x, level, out.tol_crit, opts, cell);
    for (const auto& s : curve.samples) {
      const Vec2 st = lat.to_lattice({s.x, s.y});
      const int i = wrap(static_cast<int>(std::floor(st(0) * n)));
      const int j = wrap(static_cast<int>(std::floor(st(1) * n)));
      visited[static_cast<std::size_t>(i) * n + j] = 1;
    }
    for (auto& d : cross) {
      if (d.used) continue;
      if (visited[static_cast<std::size_t>(d.cell_a[0]) * n + d.cell_a[1]] ||
          visited[static_cast<std::size_t>(d.cell_b[0]) * n + d.cell_b[1]])
        d.used = true;
    }
    c.used = true;
    out.curves.push_back(std::move(curve));
    if (out.curves.size() >= 256) break;
  }
  return out;
}

double isoline_arc_integral(const ConformalFactor& cf, const Vec2& start, double t_end,
                            const std::function<double(const Vec2&)>& phi, double tol, Vec2* end) {
  const IsolineField field{cf};
  auto rhs = [&](const State3& s, State3& d, double) {
    const Vec2 x(s[0], s[1]);
    const Vec2 v = field.velocity(x);
    d = {v(0), v(1), phi(x)};
  };
  State3 st{start(0), start(1), 0.0};
  const double speed = std::max(field.velocity(start).norm(), 1e-300);
  ode::integrate_adaptive(ode::make_controlled(tol, tol, ode::runge_kutta_dopri5<State3>()), rhs, st,
                          0.0, t_end, std::min(1e-3 / speed, t_end / 16.0));
  if (end) *end = Vec2(st[0], st[1]);
  return st[2];
}

IsolineIntegral isoline_integral(const IsolineCurve& curve, const PseudoVector& c,
                                 const ConformalFactor& cf, const CohomologySolution* u,
                                 const MetricGrid* grid) {
  require_weight(c, 3);
  if (curve.samples.size() < 2) throw Error("isoline has no samples");
  auto f = [&](const Vec2& x) {
    const Vec2 L = lambda_at(cf, x);
    return c.c1 * L(0) + c.c2 * L(1);
  };
  IsolineIntegral out;
  const auto& a = curve.samples.front();
  const auto& b = curve.samples.back();
  if (curve.closed && (curve.samples.size() - 1) % 2 == 0) {
    out.value = periodic_trapezoid(curve.samples, f, 1);
    out.error = std::abs(out.value - periodic_trapezoid(curve.samples, f, 2));
    if (u) out.expected = u->pairing(cf.lattice(), curve.lift);
  } else {
    out.value = isoline_arc_integral(cf, {a.x, a.y}, b.t - a.t, f);
    out.error = 1e-9 * std::abs(b.t - a.t);
    if (u && grid) {
      const SpectralGrid& g = grid->grid();
      const CGrid coeffs = g.forward(u->w);
      auto uval = [&](const Vec2& x) { return g.interpolate(coeffs, x) + u->alpha.dot(x); };
      out.expected = uval({b.x, b.y}) - uval({a.x, a.y});
    }
  }
  if (out.expected) out.mismatch = std::abs(out.value - *out.expected);
  return out;
}

CohomologyFit fit_cohomology(const std::vector<IsolineCurve>& curves, const PseudoVector& c,
                             const ConformalFactor& cf) {
  std::vector<Vec2> rows;
  std::vector<double> vals;
  double mag2 = 0.0, err2 = 0.0;
  auto abs_f = [&](const Vec2& x) {
    const Vec2 L = lambda_at(cf, x);
    return std::abs(c.c1 * L(0) + c.c2 * L(1));
  };
  for (const auto& cv : curves) {
    if (!cv.closed || cv.clipped) continue;
    rows.push_back(cf.lattice().translation(cv.lift[0], cv.lift[1]));
    const IsolineIntegral I = isoline_integral(cv, c, cf);
    vals.push_back(I.value);
    err2 += I.error * I.error;
    const double mag = (cv.samples.size() - 1) % 2 == 0 ? periodic_trapezoid(cv.samples, abs_f, 1) : 0.0;
    mag2 += mag * mag;
  }
  CohomologyFit fit;
  fit.curves = static_cast<int>(rows.size());
  if (rows.empty()) return fit;
  Eigen::MatrixXd A(rows.size(), 2);
  Eigen::VectorXd b(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    A.row(k) = rows[k].transpose();
    b(k) = vals[k];
  }
  fit.alpha = A.completeOrthogonalDecomposition().solve(b);
  fit.residual = std::sqrt((A * fit.alpha - b).squaredNorm() / rows.size());
  fit.scale = std::sqrt(b.squaredNorm() / rows.size());
  fit.magnitude = std::sqrt(mag2 / rows.size());
  fit.error = std::sqrt(err2 / rows.size());
  return fit;
}

// ---------------------------------------------------------------- critical points

std::vector<CriticalPoint> critical_points(const MetricGrid& metric) {
  const SpectralGrid& g = metric.grid();
  const int n = g.n();
  const Lattice& lat = g.lattice();
  std::vector<CriticalPoint> out;
  const Grid gn = (metric.K_x.square() + metric.K_y.square()).sqrt();
  const double gmax = gn.maxCoeff();
  if (gmax <= 1e-14) return out;
  const CGrid sx = g.forward(metric.K_x), sy = g.forward(metric.K_y);
  const CGrid sxx = g.forward(g.dx(metric.K_x)), sxy = g.forward(g.dy(metric.K_x)),
              syy = g.forward(g.dy(metric.K_y)), sk = g.forward(metric.K);
  auto wrap = [n](int i) { return ((i % n) + n) % n; };
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      bool local_min = true;
      for (int di = -1; di <= 1 && local_min; ++di)
        for (int dj = -1; dj <= 1; ++dj)
          if ((di || dj) && gn(wrap(i + di), wrap(j + dj)) <= gn(i, j)) {
            local_min = false;
            break;
          }
      if (!local_min) continue;
      Vec2 x = g.point(i, j);
      bool ok = false;
      Eigen::Matrix2d H;
      for (int it = 0; it < 50; ++it) {
        const Vec2 grad(g.interpolate(sx, x), g.interpolate(sy, x));
        H << g.interpolate(sxx, x), g.interpolate(sxy, x), g.interpolate(sxy, x), g.interpolate(syy, x);
        if (grad.norm() < 1e-11 * gmax) {
          ok = true;
          break;
        }
        const Vec2 step = H.fullPivLu().solve(grad);
        if (!step.allFinite()) break;
        x -= step;
      }
      if (!ok) continue;
      const double det = H.determinant();
      if (std::abs(det) < 1e-10 * gmax * gmax) continue;
      // Canonical representative in the fundamental domain.
      Vec2 st = lat.to_lattice(x);
      st = st.array() - st.array().floor();
      x = lat.to_physical(st);
      bool dup = false;
      for (const auto& c : out) {
        Vec2 d = c.x - x;
        d -= nearest_lattice_vector(lat, d);
        if (d.norm() < 1e-6) dup = true;
      }
      if (dup) continue;
      CriticalPoint cp;
      cp.x = x;
      cp.K = g.interpolate(sk, x);
      cp.hessian_det = det;
      cp.index = det < 0.0 ? 1 : (H.trace() > 0.0 ? 0 : 2);
      out.push_back(cp);
    }
  }
  return out;
}

// ---------------------------------------------------------------- disk and annulus integrals

namespace {

// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.resize(n);
  w.resize(n);
  for (int i = 0; i < n; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[i] = z;
    w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
}

// Point on the ray from centre in direction dir where K crosses level.
std::optional<Vec2> ray_seed(const ConformalFactor& cf, const Vec2& centre, const Vec2& dir,
                             double level, double step, double reach) {
  const double k0 = gaussian_curvature(cf, centre) - level;
  double prev_s = 0.0;
  for (double s = step; s <= reach; s += step) {
    const double k = gaussian_curvature(cf, centre + s * dir) - level;
    if ((k < 0.0) != (k0 < 0.0)) {
      double lo = prev_s, hi = s;
      for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double km = gaussian_curvature(cf, centre + mid * dir) - level;
        ((km < 0.0) == (k0 < 0.0) ? lo : hi) = mid;
      }
      return centre + 0.5 * (lo + hi) * dir;
    }
    prev_s = s;
  }
  return std::nullopt;
}

struct LoopData {
  bool ok = false;
  double phi = 0.0;   // integral of c . Lambda dt
  double period = 0.0;
  double flux = 0.0;  // integral of lambda^{-1} v . grad0 K dt, v = (-(delta T)_2, (delta T)_1)
  IsolineCurve curve;
};

LoopData loop_data(const ConformalFactor& cf, const PseudoVector& c, const Vec2& seed,
                   double level, double tol_crit, double cell, bool want_flux,
                   const IsolineOptions& opts) {
  LoopData d;
  d.curve = trace_isoline(cf, seed, level, tol_crit, opts, cell);
  if (!d.curve.closed || d.curve.clipped) return d;
  d.ok = true;
  d.period = d.curve.period;
  d.phi = isoline_integral(d.curve, c, cf).value;
  if (want_flux) {
    auto fl = [&](const Vec2& x) {
      const MetricJet j = cf.jet(x);
      const Vec2 w = delta_T_at(c, cf, x);
      const Vec2 v(-w(1), w(0));
      return std::exp(-2.0 * j.mu) * v.dot(curvature_gradient(j));
    };
    d.flux = periodic_trapezoid(d.curve.samples, fl, 1);
  }
  return d;
}

}  // namespace

DomainReport domain_integral_checks(const MetricGridPtr& metric, const PseudoVector& c, int levels) {
  require_weight(c, 3);
  const MetricGrid& m = *metric;
  const ConformalFactor& cf = m.factor();
  const Lattice& lat = cf.lattice();
  DomainReport rep;
  const double gmax = (m.K_x.square() + m.K_y.square()).sqrt().cwiseProduct((-m.mu).exp()).maxCoeff();
  if (gmax <= 1e-14) {
    rep.note = "curvature is constant; no isolines";
    return rep;
  }
  const double tol_crit = 1e-6 * gmax;
  const double cell = std::min(lat.e1().norm(), lat.e2().norm()) / m.n();
  const double reach = 0.5 * std::max(lat.e1().norm(), lat.e2().norm());
  const auto crit = critical_points(m);
  const IsolineOptions iso;
  std::vector<double> gx, gw;
  gauss_legendre(12, gx, gw);

  for (const auto& p : crit) {
    if (p.index == 1) continue;
    double gap = std::numeric_limits<double>::infinity();
    // Symmetric copies of the same extremum share its value and are skipped.
    const double twin = 1e-9 * (1.0 + std::abs(p.K));
    for (const auto& q : crit)
      if (std::abs(q.K - p.K) > twin) gap = std::min(gap, std::abs(q.K - p.K));
    if (!std::isfinite(gap)) gap = m.K.maxCoeff() - m.K.minCoeff();
    const double sign = p.index == 2 ? 1.0 : -1.0;
    const double k0 = p.K - sign * 0.3 * gap;
    const double khalf = p.K - sign * 0.15 * gap;
    const Vec2 dir(1.0, 0.0);
    auto seed_for = [&](double level) { return ray_seed(cf, p.x, dir, level, 0.25 * cell, reach); };
    const auto s0 = seed_for(k0);
    if (!s0) continue;
    const LoopData outer = loop_data(cf, c, *s0, k0, tol_crit, cell, true, iso);
    if (!outer.ok || outer.curve.lift != std::array<int, 2>{0, 0}) continue;
    // Coarea over [k0, K_p] and over [k0, khalf].
    auto coarea = [&](double a, double b, double* area) -> std::optional<double> {
      const double lo = std::min(a, b), hi = std::max(a, b);
      double total = 0.0, ar = 0.0;
      for (std::size_t k = 0; k < gx.size(); ++k) {
        const double s = 0.5 * (lo + hi) + 0.5 * (hi - lo) * gx[k];
        const auto sd = seed_for(s);
        if (!sd) return std::nullopt;
        const LoopData d = loop_data(cf, c, *sd, s, tol_crit, cell, false, iso);
        if (!d.ok) return std::nullopt;
        total += 0.5 * (hi - lo) * gw[k] * d.phi;
        ar += 0.5 * (hi - lo) * gw[k] * d.period;
      }
      if (area) *area = ar;
      return total;
    };
    double area = 0.0;
    const auto full = coarea(k0, p.K, &area);
    const auto ann = coarea(k0, khalf, nullptr);
    const auto sh = seed_for(khalf);
    if (!full || !ann || !sh) continue;
    const LoopData inner = loop_data(cf, c, *sh, khalf, tol_crit, cell, true, iso);
    if (!inner.ok) continue;
    DiskCheck dc;
    dc.center = p;
    dc.level = k0;
    dc.coarea = *full;
    dc.flux = sign * outer.flux;
    dc.area = area;
    dc.collapse_mismatch = std::abs(*ann + sign * inner.flux - dc.flux);
    rep.disks.push_back(dc);
  }

  // Closed isolines over a range of regular levels, then annuli between neighbours.
  const double kmin = m.K.minCoeff(), kmax = m.K.maxCoeff();
  std::vector<double> lv;
  for (int k = 1; k <= levels; ++k) lv.push_back(kmin + (kmax - kmin) * k / (levels + 1.0));
  std::vector<IsolineCurve> all;
  std::vector<std::vector<IsolineCurve>> per_level;
  for (double l : lv) {
    IsolineSet set = extract_isolines(m, l, iso);
    per_level.push_back(set.curves);
    all.insert(all.end(), set.curves.begin(), set.curves.end());
  }
  rep.fit = fit_cohomology(all, c, cf);
  auto critical_between = [&](double a, double b) {
    for (const auto& q : crit)
      if (q.K > std::min(a, b) && q.K < std::max(a, b)) return true;
    return false;
  };
  for (std::size_t k = 0; k + 1 < lv.size(); ++k) {
    if (critical_between(lv[k], lv[k + 1])) continue;
    for (const auto& cv : per_level[k]) {
      if (!cv.closed || cv.clipped || cv.lift == std::array<int, 2>{0, 0}) continue;
      const Vec2 start(cv.samples.front().x, cv.samples.front().y);
      AnnulusCheck an;
      an.level0 = lv[k];
      an.level1 = lv[k + 1];
      an.lift = cv.lift;
      double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0.0;
      bool ok = true;
      for (std::size_t q = 0; q < gx.size() && ok; ++q) {
        const double s = 0.5 * (an.level0 + an.level1) + 0.5 * (an.level1 - an.level0) * gx[q];
        const Vec2 seed = project_to_level(cf, start, s);
        const LoopData d = loop_data(cf, c, seed, s, tol_crit, cell, false, iso);
        if (!d.ok || d.curve.lift != cv.lift) {
          ok = false;
          break;
        }
        an.integral += 0.5 * (an.level1 - an.level0) * gw[q] * d.phi;
        lo = std::min(lo, d.phi);
        hi = std::max(hi, d.phi);
        sum += d.phi;
      }
      if (!ok) continue;
      an.loop_spread = hi - lo;
      an.loop_mean = sum / gx.size();
      an.predicted = rep.fit.alpha.dot(lat.translation(cv.lift[0], cv.lift[1])) * (an.level1 - an.level0);
      rep.annuli.push_back(an);
    }
  }
  if (rep.disks.empty() && rep.annuli.empty()) rep.note = "no regular disks or annuli found";
  return rep;
}

Vec2 mean_value_check(const MetricGrid& metric) {
  const LambdaForm L = lambda_form(metric);
  return {metric.integrate_area(L.L1), metric.integrate_area(L.L2)};
}

void write_isolines_csv(const std::vector<IsolineCurve>& curves, std::ostream& out) {
  out << "curve,level,closed,t,x,y\n";
  char buf[160];
  for (std::size_t k = 0; k < curves.size(); ++k) {
    for (const auto& s : curves[k].samples) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%d,%.17g,%.17g,%.17g\n", k, curves[k].level,
                    curves[k].closed ? 1 : 0, s.t, s.x, s.y);
      out << buf;
    }
  }
}

}  // namespace kt
