#include "ktorus/geodesic_engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

#include <boost/numeric/odeint.hpp>

#include "ktorus/parallel.hpp"

namespace kt {

namespace {

namespace ode = boost::numeric::odeint;
using State = std::array<double, 3>;

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * M_PI);
  return a;
}

Vec2 class_vector(const Lattice& lattice, const std::array<int, 2>& cls) {
  return lattice.translation(cls[0], cls[1]);
}

}  // namespace

BundlePoint spray(const ConformalFactor& cf, const BundlePoint& p) {
  const MetricJet j = cf.jet(p.head<2>());
  const double e = std::exp(-j.mu);
  const double c = std::cos(p(2));
  const double s = std::sin(p(2));
  return {e * c, e * s, e * (-j.mu_x * s + j.mu_y * c)};
}

GeodesicOrbit integrate_flow(const ConformalFactor& cf, const BundlePoint& start, double t_end,
                             double tol, int samples) {
  if (!(tol > 0.0)) throw Error("integration tolerance must be positive");
  if (samples < 1) throw Error("need at least one sample interval");
  GeodesicOrbit orbit;
  orbit.tol = tol;
  orbit.period = t_end;
  orbit.samples.reserve(samples + 1);
  auto rhs = [&cf](const State& s, State& d, double) {
    const BundlePoint h = spray(cf, {s[0], s[1], s[2]});
    d = {h(0), h(1), h(2)};
  };
  State state{start(0), start(1), start(2)};
  if (t_end == 0.0) {
    orbit.samples.push_back({0.0, state[0], state[1], state[2]});
    return orbit;
  }
  std::vector<double> times(samples + 1);
  for (int k = 0; k <= samples; ++k) times[k] = t_end * k / samples;
  auto stepper = ode::make_dense_output(tol, tol, ode::runge_kutta_dopri5<State>());
  const double dt0 = std::copysign(std::min(1e-3, std::abs(t_end) / samples), t_end);
  try {
    ode::integrate_times(stepper, rhs, state, times.begin(), times.end(), dt0,
                         [&orbit](const State& s, double t) {
                           orbit.samples.push_back({t, s[0], s[1], s[2]});
                         },
                         ode::max_step_checker(100000));
  } catch (const std::exception& e) {
    throw Error(std::string("geodesic integration failed: ") + e.what());
  }
  return orbit;
}

double closure_residual(const GeodesicOrbit& orbit, const Lattice& lattice,
                        const std::array<int, 2>& cls) {
  const OrbitSample& a = orbit.samples.front();
  const OrbitSample& b = orbit.samples.back();
  const Vec2 d = Vec2(b.x - a.x, b.y - a.y) - class_vector(lattice, cls);
  const double length = std::abs(b.t - a.t);
  const double dth = length / (2.0 * M_PI) * wrap_angle(b.theta - a.theta);
  return std::sqrt(d.squaredNorm() + dth * dth);
}

std::array<int, 2> lift_class(const GeodesicOrbit& orbit, const Lattice& lattice) {
  const OrbitSample& a = orbit.samples.front();
  const OrbitSample& b = orbit.samples.back();
  const Vec2 st = lattice.to_lattice(Vec2(b.x - a.x, b.y - a.y));
  return {static_cast<int>(std::lround(st(0))), static_cast<int>(std::lround(st(1)))};
}

// ---------------------------------------------------------------- closed geodesics

namespace {

struct Polygon {
  std::vector<Vec2> pts;  // vertices 0..K-1; vertex K is pts[0] + shift
  Vec2 shift;
  double energy = 0.0;
};

double polygon_energy(const ConformalFactor& cf, const Polygon& poly,
                      std::vector<Vec2>* grad) {
  const int K = static_cast<int>(poly.pts.size());
  double e = 0.0;
  if (grad) grad->assign(K, Vec2::Zero());
  for (int k = 0; k < K; ++k) {
    const Vec2 a = poly.pts[k];
    const Vec2 b = k + 1 < K ? poly.pts[k + 1] : Vec2(poly.pts[0] + poly.shift);
    const Vec2 d = b - a;
    const MetricJet j = cf.jet(0.5 * (a + b));
    const double lam = std::exp(2.0 * j.mu);
    e += K * lam * d.squaredNorm();
    if (grad) {
      const Vec2 glam = 2.0 * lam * Vec2(j.mu_x, j.mu_y);
      const Vec2 common = 0.5 * K * d.squaredNorm() * glam;
      (*grad)[k] += -2.0 * K * lam * d + common;
      (*grad)[(k + 1) % K] += 2.0 * K * lam * d + common;
    }
  }
  return e;
}

// Preconditioned descent with the periodic graph Laplacian as a Sobolev metric.
Polygon minimise_polygon(const ConformalFactor& cf, Polygon poly, int iterations) {
  const int K = static_cast<int>(poly.pts.size());
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(K, K);
  for (int k = 0; k < K; ++k) {
    H(k, k) += 2.0;
    H(k, (k + 1) % K) -= 1.0;
    H((k + 1) % K, k) -= 1.0;
  }
  std::vector<Vec2> grad;
  poly.energy = polygon_energy(cf, poly, &grad);
  // E is about lambda_bar |P|^2 for a straight loop.
  const double lam_bar = poly.energy / poly.shift.squaredNorm();
  H *= 2.0 * K * lam_bar;
  H += Eigen::MatrixXd::Identity(K, K) * (2.0 * K * lam_bar * 2.0 * (1.0 - std::cos(2.0 * M_PI / K)));
  const Eigen::LDLT<Eigen::MatrixXd> solver(H);
  for (int it = 0; it < iterations; ++it) {
    Eigen::MatrixXd g(K, 2);
    for (int k = 0; k < K; ++k) g.row(k) = grad[k].transpose();
    const Eigen::MatrixXd dir = solver.solve(g);
    double slope = 0.0;
    for (int k = 0; k < K; ++k) slope += g.row(k).dot(dir.row(k));
    if (slope <= 1e-28 * poly.energy) break;
    double step = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 40; ++ls) {
      Polygon trial = poly;
      for (int k = 0; k < K; ++k) trial.pts[k] -= step * dir.row(k).transpose();
      std::vector<Vec2> tg;
      trial.energy = polygon_energy(cf, trial, &tg);
      if (trial.energy <= poly.energy - 1e-4 * step * slope) {
        const double drop = poly.energy - trial.energy;
        poly = std::move(trial);
        grad = std::move(tg);
        moved = drop > 1e-15 * poly.energy;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  return poly;
}

}  // namespace

GeodesicOrbit find_closed_geodesic(const ConformalFactor& cf, int p, int q,
                                   const ClosedGeodesicOptions& opts) {
  if (p == 0 && q == 0) throw Error("closed geodesic class must be nonzero");
  const Lattice& lat = cf.lattice();
  const std::array<int, 2> cls{p, q};
  const Vec2 P = lat.translation(p, q);
  const int K = std::max(8, opts.polygon_vertices);
  const Vec2 nrm = Vec2(-P.y(), P.x()).normalized();
  const double width = lat.area() / P.norm();

  std::vector<Polygon> candidates;
  for (int s = 0; s < std::max(1, opts.starts); ++s) {
    Polygon poly;
    poly.shift = P;
    const Vec2 base = nrm * (width * s / std::max(1, opts.starts));
    for (int k = 0; k < K; ++k) poly.pts.push_back(base + P * (static_cast<double>(k) / K));
    candidates.push_back(minimise_polygon(cf, std::move(poly), opts.descent_iterations));
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const Polygon& a, const Polygon& b) { return a.energy < b.energy; });

  // Shooting noise has to sit well below the closure target.
  const double ode_tol = std::min(opts.ode_tol, 0.01 * opts.tol_close);
  GeodesicOrbit best;
  best.closure_residual = std::numeric_limits<double>::infinity();
  for (const Polygon& poly : candidates) {
    const Vec2 x0 = poly.pts[0];
    const Vec2 tangent = poly.pts[1] - (poly.pts[K - 1] - P);
    const double th0 = std::atan2(tangent.y(), tangent.x());
    const Vec2 n0(-std::sin(th0), std::cos(th0));
    double length = 0.0;
    for (int k = 0; k < K; ++k) {
      const Vec2 a = poly.pts[k];
      const Vec2 b = k + 1 < K ? poly.pts[k + 1] : Vec2(poly.pts[0] + P);
      length += std::exp(cf.mu(0.5 * (a + b))) * (b - a).norm();
    }

    auto shoot = [&](const Eigen::Vector3d& u) {
      const Vec2 xs = x0 + u(0) * n0;
      const GeodesicOrbit o = integrate_flow(cf, {xs.x(), xs.y(), th0 + u(1)}, u(2), ode_tol, 1);
      const OrbitSample& e = o.samples.back();
      Eigen::Vector3d r;
      r.head<2>() = Vec2(e.x, e.y) - xs - P;
      r(2) = u(2) / (2.0 * M_PI) * wrap_angle(e.theta - (th0 + u(1)));
      return r;
    };

    Eigen::Vector3d u(0.0, 0.0, length);
    Eigen::Vector3d r = shoot(u);
    int it = 0;
    for (; it < opts.newton_iterations && r.norm() > 0.25 * opts.tol_close; ++it) {
      Eigen::Matrix3d J;
      const Eigen::Vector3d h(1e-6, 1e-6, 1e-6 * u(2));
      for (int c = 0; c < 3; ++c) {
        Eigen::Vector3d up = u, um = u;
        up(c) += h(c);
        um(c) -= h(c);
        J.col(c) = (shoot(up) - shoot(um)) / (2.0 * h(c));
      }
      const Eigen::Vector3d du = -J.completeOrthogonalDecomposition().solve(r);
      double step = 1.0;
      bool improved = false;
      for (int ls = 0; ls < 12; ++ls) {
        const Eigen::Vector3d un = u + step * du;
        if (un(2) > 0.0) {
          const Eigen::Vector3d rn = shoot(un);
          if (rn.norm() < r.norm()) {
            u = un;
            r = rn;
            improved = true;
            break;
          }
        }
        step *= 0.5;
      }
      if (!improved) break;
    }

    const Vec2 xs = x0 + u(0) * n0;
    GeodesicOrbit orbit = integrate_flow(cf, {xs.x(), xs.y(), th0 + u(1)}, u(2), ode_tol,
                                         std::max(2, opts.samples + opts.samples % 2));
    orbit.homotopy_class = cls;
    orbit.period = u(2);
    orbit.closure_residual = closure_residual(orbit, lat, cls);
    orbit.newton_iterations = it;
    orbit.closed = orbit.closure_residual <= opts.tol_close && lift_class(orbit, lat) == cls;
    if (orbit.closed) return orbit;
    if (orbit.closure_residual < best.closure_residual) best = std::move(orbit);
  }
  return best;
}

std::vector<std::array<int, 2>> default_orbit_menu() { return {{1, 0}, {0, 1}, {1, 1}, {1, -1}}; }

std::vector<GeodesicOrbit> find_orbit_menu(const ConformalFactor& cf,
                                           const std::vector<std::array<int, 2>>& classes,
                                           const ClosedGeodesicOptions& opts) {
  std::vector<GeodesicOrbit> out(classes.size());
  parallel_for(classes.size(), [&](std::size_t i) {
    out[i] = find_closed_geodesic(cf, classes[i][0], classes[i][1], opts);
  });
  return out;
}

// ---------------------------------------------------------------- ray integrals

namespace {

RayIntegral closed_trapezoid(const GeodesicOrbit& orbit, const std::function<double(const OrbitSample&)>& f) {
  if (!orbit.closed) throw Error("ray integral needs a closed orbit");
  const int S = static_cast<int>(orbit.samples.size()) - 1;
  if (S < 2 || S % 2 != 0) throw Error("ray integral needs an even number of sample intervals");
  const double h = orbit.period / S;
  double full = 0.0, half = 0.0, peak = 0.0;
  for (int k = 0; k < S; ++k) {
    const double v = f(orbit.samples[k]);
    full += v;
    if (k % 2 == 0) half += v;
    peak = std::max(peak, std::abs(v));
  }
  RayIntegral r;
  r.value = h * full;
  r.error = std::abs(h * full - 2.0 * h * half) +
            (orbit.tol + orbit.closure_residual) * orbit.period * peak;
  return r;
}

void check_weight(int m, const PseudoVector& c) {
  if (m < 0) throw Error("ray integral needs m >= 0");
  if (c.weight != m + 1) throw Error("ray integral of Z^{m,c} needs weight(c) = m + 1");
}

}  // namespace

RayIntegral ray_integral_Z(const GeodesicOrbit& orbit, const ConformalFactor& cf, int m,
                           const PseudoVector& c) {
  check_weight(m, c);
  return closed_trapezoid(orbit, [&](const OrbitSample& s) {
    const MetricJet j = cf.jet({s.x, s.y});
    const double A = c.c1 * j.mu_x + c.c2 * j.mu_y;
    const double B = c.c2 * j.mu_x - c.c1 * j.mu_y;
    return std::exp(m * j.mu) * (A * std::cos(m * s.theta) + B * std::sin(m * s.theta));
  });
}

RayIntegral ray_integral_Z_components(const GeodesicOrbit& orbit, const ConformalFactor& cf,
                                      int m, const PseudoVector& c) {
  check_weight(m, c);
  return closed_trapezoid(orbit, [&](const OrbitSample& s) {
    const MetricJet j = cf.jet({s.x, s.y});
    const double lm = std::exp(2.0 * m * j.mu);
    const double a = lm * (c.c1 * j.mu_x + c.c2 * j.mu_y);
    const double b = lm * (c.c2 * j.mu_x - c.c1 * j.mu_y);
    const double e = std::exp(-j.mu);
    const double v1 = e * std::cos(s.theta);
    const double v2 = e * std::sin(s.theta);
    double acc = 0.0;
    for (int k = 0; k <= m; ++k) {
      // Trace-free pattern f_k = a, b, -a, -b, ...
      const double fk = (k % 2 == 0 ? a : b) * ((k / 2) % 2 == 0 ? 1.0 : -1.0);
      acc += binomial(m, k) * fk * std::pow(v1, m - k) * std::pow(v2, k);
    }
    return acc;
  });
}

const char* to_string(RatioStatus s) {
  return s == RatioStatus::Obstructed ? "OBSTRUCTED" : "INCONCLUSIVE";
}

RatioVerdict ratio_test(const std::vector<GeodesicOrbit>& orbits, const ConformalFactor& cf, int m,
                        double margin) {
  if (orbits.size() < 2) throw Error("ratio test needs at least two closed orbits");
  std::vector<RayIntegralPair> pairs;
  for (const GeodesicOrbit& o : orbits) {
    RayIntegralPair pr;
    pr.homotopy_class = o.homotopy_class;
    if (o.closed) {
      const RayIntegral a = ray_integral_Z(o, cf, m, {m + 1, 1.0, 0.0});
      const RayIntegral b = ray_integral_Z(o, cf, m, {m + 1, 0.0, 1.0});
      pr.I_num = a.value;
      pr.I_den = b.value;
      pr.err_num = a.error;
      pr.err_den = b.error;
    }
    pairs.push_back(pr);
  }
  return ratio_verdict(std::move(pairs), m, margin);
}

RatioVerdict ratio_verdict(std::vector<RayIntegralPair> pairs, int m, double margin) {
  RatioVerdict v;
  v.m = m;
  v.pairs = std::move(pairs);
  for (RayIntegralPair& pr : v.pairs) {
    const double size = std::hypot(pr.I_num, pr.I_den);
    pr.informative = size > 1e-12 && size > margin * (pr.err_num + pr.err_den);
    v.informative += pr.informative ? 1 : 0;
  }
  if (v.informative < 2) {
    v.note = "fewer than two informative orbits";
    return v;
  }
  double best_ratio = -1.0;
  for (size_t i = 0; i < v.pairs.size(); ++i) {
    for (size_t k = i + 1; k < v.pairs.size(); ++k) {
      const RayIntegralPair& a = v.pairs[i];
      const RayIntegralPair& b = v.pairs[k];
      if (!a.informative || !b.informative) continue;
      const double na = std::hypot(a.I_num, a.I_den);
      const double nb = std::hypot(b.I_num, b.I_den);
      const double d = std::abs(a.I_num * b.I_den - a.I_den * b.I_num) / (na * nb);
      const double err = std::max((a.err_num + a.err_den) / na + (b.err_num + b.err_den) / nb,
                                  std::numeric_limits<double>::epsilon());
      const double ratio = d / err;
      if (ratio > best_ratio) {
        best_ratio = ratio;
        v.max_distance = d;
        v.error_estimate = err;
        v.separation = ratio;
      }
    }
  }
  v.status = v.separation > margin ? RatioStatus::Obstructed : RatioStatus::Inconclusive;
  v.note = v.status == RatioStatus::Obstructed ? "pairs are not proportional on the orbit menu"
                                               : "pairs proportional within the error estimate";
  return v;
}

// ---------------------------------------------------------------- first integrals

FirstIntegral::FirstIntegral(const SymTensorField& f)
    : rank_(f.rank()), metric_(f.metric().get()), keep_(f.metric()) {
  for (int k = 0; k <= rank_; ++k) spectra_.push_back(metric_->grid().forward(f[k]));
}

double FirstIntegral::operator()(const Vec2& x, double theta) const {
  const double e = std::exp(-metric_->factor().mu(x));
  const double v1 = e * std::cos(theta);
  const double v2 = e * std::sin(theta);
  double acc = 0.0;
  for (int k = 0; k <= rank_; ++k) {
    acc += binomial(rank_, k) * metric_->grid().interpolate(spectra_[k], x) *
           std::pow(v1, rank_ - k) * std::pow(v2, k);
  }
  return acc;
}

double clairaut_integral(const ConformalFactor& cf, const OrbitSample& s) {
  return std::exp(cf.mu({s.x, s.y})) * std::cos(s.theta);
}

std::vector<Grid> circle_bundle_function(const SymTensorField& f, int n_theta) {
  const MetricGrid& mg = *f.metric();
  const int m = f.rank();
  const Grid e = (-mg.mu).exp();
  std::vector<Grid> out;
  for (int j = 0; j < n_theta; ++j) {
    const double th = 2.0 * M_PI * j / n_theta;
    Grid acc = Grid::Zero(mg.n(), mg.n());
    for (int k = 0; k <= m; ++k) {
      acc += binomial(m, k) * std::pow(std::cos(th), m - k) * std::pow(std::sin(th), k) * f[k];
    }
    out.push_back(acc * e.pow(m));
  }
  return out;
}

std::vector<Grid> spray_apply(const MetricGrid& mg, const std::vector<Grid>& F) {
  const int nt = static_cast<int>(F.size());
  const double h = 2.0 * M_PI / nt;
  const SpectralGrid& g = mg.grid();
  const Grid e = (-mg.mu).exp();
  std::vector<Grid> out;
  for (int j = 0; j < nt; ++j) {
    const double th = j * h;
    Grid dth = Grid::Zero(mg.n(), mg.n());
    for (int l = 0; l < nt; ++l) {
      if (l == j) continue;
      const double x = 0.5 * (j - l) * h;
      const double sign = (j - l) % 2 == 0 ? 1.0 : -1.0;
      const double w = nt % 2 == 0 ? 0.5 * sign / std::tan(x) : 0.5 * sign / std::sin(x);
      dth += w * F[l];
    }
    const double c = std::cos(th);
    const double s = std::sin(th);
    out.push_back(e * (c * g.dx(F[j]) + s * g.dy(F[j]) + (-mg.mu_x * s + mg.mu_y * c) * dth));
  }
  return out;
}

void write_orbit_csv(const GeodesicOrbit& orbit, std::ostream& out) {
  out << "t,x,y,theta\n";
  char buf[128];
  for (const OrbitSample& s : orbit.samples) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g\n", s.t, s.x, s.y, s.theta);
    out << buf;
  }
}

}  // namespace kt
