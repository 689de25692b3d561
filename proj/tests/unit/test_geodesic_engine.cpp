#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "ktorus/geodesic_engine.hpp"
#include "ktorus/known_metrics.hpp"
#include "ktorus/random_fields.hpp"

using namespace kt;

TEST_CASE("flat torus flow is a straight line") {
  const auto cf = metrics::flat();
  const GeodesicOrbit o = integrate_flow(cf, {0.0, 0.0, 0.0}, 1.0, 1e-11, 10);
  REQUIRE(o.samples.size() == 11);
  for (const auto& s : o.samples) {
    CHECK(std::abs(s.x - s.t) <= 1e-13);
    CHECK(std::abs(s.y) <= 1e-14);
    CHECK(std::abs(s.theta) <= 1e-14);
  }
}

TEST_CASE("unit speed and reversibility") {
  // The generic flow separates nearby orbits quickly; t = 2 keeps the round trip
  // inside the integration accuracy.
  const auto cf = metrics::generic();
  const GeodesicOrbit fw = integrate_flow(cf, {0.1, 0.2, 0.7}, 2.0, 1e-11, 200);
  for (const auto& s : fw.samples) {
    const BundlePoint h = spray(cf, {s.x, s.y, s.theta});
    const double speed2 = std::exp(2.0 * cf.mu({s.x, s.y})) * (h(0) * h(0) + h(1) * h(1));
    CHECK(std::abs(speed2 - 1.0) <= 1e-13);
  }
  const auto& e = fw.samples.back();
  const GeodesicOrbit bw = integrate_flow(cf, {e.x, e.y, e.theta}, -2.0, 1e-11, 10);
  const auto& b = bw.samples.back();
  CHECK(std::abs(b.x - 0.1) <= 1e-9);
  CHECK(std::abs(b.y - 0.2) <= 1e-9);
  CHECK(std::abs(b.theta - 0.7) <= 1e-9);
}

TEST_CASE("Clairaut integral is conserved on the rotation metric") {
  const auto cf = metrics::rotation();
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 3; ++trial) {
    const BundlePoint start(u(rng), u(rng), 2.0 * M_PI * u(rng));
    const GeodesicOrbit o = integrate_flow(cf, start, 50.0, 1e-11, 500);
    const double c0 = clairaut_integral(cf, o.samples.front());
    double drift = 0.0;
    for (const auto& s : o.samples) drift = std::max(drift, std::abs(clairaut_integral(cf, s) - c0));
    CHECK(drift <= 1e-7);
  }
}

TEST_CASE("Killing vector first integral through grid interpolation") {
  const auto cf = metrics::rotation();
  const auto mg = MetricGrid::make(cf, 32);
  // d/dx lowered by the metric: f = (lambda, 0).
  const SymTensorField f(mg, {mg->lambda, mg->grid().zeros()});
  CHECK(is_killing(f));
  const FirstIntegral F(f);
  const GeodesicOrbit o = integrate_flow(cf, {0.3, 0.1, 1.1}, 50.0, 1e-11, 400);
  const double f0 = F({o.samples[0].x, o.samples[0].y}, o.samples[0].theta);
  double drift = 0.0;
  for (const auto& s : o.samples) drift = std::max(drift, std::abs(F({s.x, s.y}, s.theta) - f0));
  CHECK(drift <= 1e-7);
  CHECK(std::abs(f0 - clairaut_integral(cf, o.samples[0])) <= 1e-12);
}

TEST_CASE("flat torus constant fields are conserved") {
  const auto cf = metrics::flat();
  const auto mg = MetricGrid::make(cf, 16);
  const SymTensorField f(mg, {mg->grid().constant(0.3), mg->grid().constant(-0.2), mg->grid().constant(1.0)});
  const FirstIntegral F(f);
  const GeodesicOrbit o = integrate_flow(cf, {0.0, 0.0, 0.4}, 50.0, 1e-11, 100);
  for (const auto& s : o.samples) CHECK(std::abs(F({s.x, s.y}, s.theta) - F({0.0, 0.0}, 0.4)) <= 1e-12);
}

TEST_CASE("H F equals the polynomial of d f on the circle bundle") {
  const auto cf = metrics::generic();
  const auto mg = MetricGrid::make(cf, 48);
  for (int m = 0; m <= 3; ++m) {
    CAPTURE(m);
    const SymTensorField f = random::sym_field(mg, m, 4, 300 + m);
    const int nt = 2 * m + 5;
    const auto HF = spray_apply(*mg, circle_bundle_function(f, nt));
    const auto ref = circle_bundle_function(inner_derivative(f), nt);
    double err = 0.0, scale = 0.0;
    for (int j = 0; j < nt; ++j) {
      err = std::max(err, (HF[j] - ref[j]).abs().maxCoeff());
      scale = std::max(scale, ref[j].abs().maxCoeff());
    }
    CHECK(err <= 1e-8 * std::max(1.0, scale));
  }
}

TEST_CASE("closed geodesics on flat and rotation metrics") {
  {
    const GeodesicOrbit o = find_closed_geodesic(metrics::flat(), 1, 0);
    CHECK(o.closed);
    CHECK(o.period == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(o.homotopy_class == std::array<int, 2>{1, 0});
  }
  {
    const auto cf = metrics::rotation();
    const GeodesicOrbit o = find_closed_geodesic(cf, 1, 0);
    REQUIRE(o.closed);
    CHECK(o.closure_residual <= 1e-10);
    // Critical circles of mu = 0.1 cos 2 pi y sit at y = 0 and y = 1/2.
    const double y = o.samples.front().y;
    const double ystar = std::round(2.0 * y) / 2.0;
    CHECK(std::abs(y - ystar) <= 1e-8);
    CHECK(o.period == doctest::Approx(std::exp(0.1 * std::cos(2 * M_PI * ystar))).epsilon(1e-9));
    CHECK(lift_class(o, cf.lattice()) == std::array<int, 2>{1, 0});
  }
}

TEST_CASE("closed geodesic on a generic metric survives tighter re-integration") {
  const auto cf = metrics::generic();
  for (auto cls : default_orbit_menu()) {
    CAPTURE(cls[0]);
    CAPTURE(cls[1]);
    const GeodesicOrbit o = find_closed_geodesic(cf, cls[0], cls[1]);
    REQUIRE(o.closed);
    CHECK(lift_class(o, cf.lattice()) == cls);
    const auto& s = o.samples.front();
    const GeodesicOrbit fine = integrate_flow(cf, {s.x, s.y, s.theta}, o.period, 1e-12, 10);
    CHECK(closure_residual(fine, cf.lattice(), cls) <= 1e-9);
  }
}

TEST_CASE("ray integrals: two routes, flat zero, quadrature convergence") {
  const auto cf = metrics::generic();
  ClosedGeodesicOptions opts;
  const GeodesicOrbit o = find_closed_geodesic(cf, 1, 1, opts);
  REQUIRE(o.closed);
  for (int m = 0; m <= 3; ++m) {
    for (const PseudoVector& c : {PseudoVector{m + 1, 1.0, 0.0}, PseudoVector{m + 1, 0.3, -0.8}}) {
      const RayIntegral a = ray_integral_Z(o, cf, m, c);
      const RayIntegral b = ray_integral_Z_components(o, cf, m, c);
      CHECK(std::abs(a.value - b.value) <= 1e-9);
    }
  }
  opts.samples = 2048;
  const GeodesicOrbit o2 = find_closed_geodesic(cf, 1, 1, opts);
  REQUIRE(o2.closed);
  CHECK(std::abs(ray_integral_Z(o, cf, 2, {3, 1.0, 0.0}).value -
                 ray_integral_Z(o2, cf, 2, {3, 1.0, 0.0}).value) <= 1e-9);
  CHECK_THROWS_AS(ray_integral_Z(o, cf, 2, {2, 1.0, 0.0}), Error);

  const GeodesicOrbit flat = find_closed_geodesic(metrics::flat(), 0, 1);
  REQUIRE(flat.closed);
  CHECK(ray_integral_Z(flat, metrics::flat(), 1, {2, 1.0, 0.0}).value == 0.0);

  const auto rot = metrics::rotation();
  const GeodesicOrbit crit = find_closed_geodesic(rot, 1, 0);
  REQUIRE(crit.closed);
  CHECK(std::abs(ray_integral_Z(crit, rot, 1, {2, 1.0, 0.0}).value) <= 1e-12);
}

TEST_CASE("ratio test verdicts") {
  {
    const auto cf = metrics::flat();
    const auto orbits = find_orbit_menu(cf, {{1, 0}, {0, 1}});
    CHECK(ratio_test(orbits, cf, 2).status == RatioStatus::Inconclusive);
  }
  {
    const auto cf = metrics::rotation();
    const auto orbits = find_orbit_menu(cf, default_orbit_menu());
    for (int m = 1; m <= 3; ++m) CHECK(ratio_test(orbits, cf, m).status == RatioStatus::Inconclusive);
  }
  CHECK_THROWS_AS(ratio_test({}, metrics::flat(), 1), Error);
}

TEST_CASE("ratio verdict on synthetic pairs") {
  std::vector<RayIntegralPair> pairs(3);
  pairs[0].I_num = 1.0;
  pairs[0].I_den = 0.5;
  pairs[1].I_num = -2.0;
  pairs[1].I_den = -1.0;
  pairs[2].I_num = 1e-13;  // below the noise floor
  for (auto& p : pairs) p.err_num = p.err_den = 1e-12;
  RatioVerdict v = ratio_verdict(pairs, 2);
  CHECK(v.informative == 2);
  CHECK(v.status == RatioStatus::Inconclusive);
  pairs[1].I_den = -1.0 + 1e-6;
  v = ratio_verdict(pairs, 2);
  CHECK(v.status == RatioStatus::Obstructed);
  CHECK(v.separation > 10.0);
  pairs[1].err_num = 1e-6;
  CHECK(ratio_verdict(pairs, 2).status == RatioStatus::Inconclusive);
}

TEST_CASE("ray integrals of Z vanish on closed geodesics of any metric") {
  // Z^{m,c} is a multiple of the divergence of the kernel field e^{2(m+1)mu} c, so
  // its polynomial is H applied to a function on the circle bundle and integrates to
  // zero over every closed orbit.
  for (const auto& cf : {metrics::generic(), metrics::generic_alt(), metrics::random(5, 3, 0.1)}) {
    const auto orbits = find_orbit_menu(cf, {{1, 0}, {0, 1}});
    for (const auto& o : orbits) {
      REQUIRE(o.closed);
      for (int m = 0; m <= 3; ++m) {
        double scale = 0.0;
        for (size_t k = 0; k + 1 < o.samples.size(); ++k) {
          const auto& s = o.samples[k];
          const MetricJet j = cf.jet({s.x, s.y});
          scale += std::exp(m * j.mu) * std::hypot(j.mu_x, j.mu_y) * o.period / (o.samples.size() - 1);
        }
        const RayIntegral r = ray_integral_Z(o, cf, m, {m + 1, 0.6, 0.8});
        CHECK(std::abs(r.value) <= 1e-9 * scale);
      }
    }
  }
}

TEST_CASE("H applied to the kernel-field integral is a multiple of Z") {
  const auto mg = MetricGrid::make(metrics::generic(), 48);
  for (int m = 0; m <= 2; ++m) {
    const TraceFreeField k = kernel_field(m + 1, {m + 1, 0.6, 0.8}, mg);
    const TraceFreeField z = make_Z(m, {m + 1, 0.6, 0.8}, mg);
    const int nt = 2 * m + 7;
    const auto HF = spray_apply(*mg, circle_bundle_function(k.expand(), nt));
    const auto Zp = circle_bundle_function(z.expand(), nt);
    // Ratio from one sample, then checked everywhere.
    Eigen::Index i0, j0;
    Zp[1].abs().maxCoeff(&i0, &j0);
    const double ratio = HF[1](i0, j0) / Zp[1](i0, j0);
    double err = 0.0, scale = 0.0;
    for (int t = 0; t < nt; ++t) {
      err = std::max(err, (HF[t] - ratio * Zp[t]).abs().maxCoeff());
      scale = std::max(scale, HF[t].abs().maxCoeff());
    }
    CAPTURE(m);
    CAPTURE(ratio);
    CHECK(err <= 1e-9 * scale);
  }
}

TEST_CASE("orbit CSV layout") {
  const GeodesicOrbit o = integrate_flow(metrics::flat(), {0.0, 0.0, 0.0}, 1.0, 1e-11, 2);
  std::ostringstream os;
  write_orbit_csv(o, os);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "t,x,y,theta");
  int rows = 0;
  while (std::getline(is, line)) {
    double t, x, y, th;
    CHECK(std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &t, &x, &y, &th) == 4);
    CHECK(std::abs(x - t) <= 1e-13);
    ++rows;
  }
  CHECK(rows == 3);
}
