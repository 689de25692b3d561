#include "ktorus/known_metrics.hpp"

#include <cmath>
#include <random>

#include "ktorus/spectral_grid.hpp"

namespace kt::metrics {

namespace {
ConformalFactor on_unit_square(std::vector<FourierMode> modes) {
  return ConformalFactor(Lattice::unit_square(), modes);
}
}  // namespace

ConformalFactor flat() { return ConformalFactor(Lattice::unit_square()); }

ConformalFactor rotation() { return on_unit_square({{0, 1, {0.05, 0.0}}}); }

ConformalFactor liouville(int band) {
  const int n = 64;
  SpectralGrid grid(Lattice::unit_square(), n);
  const Grid mu = grid.sample([](const Vec2& p) {
    const double lam = 1.2 + 0.2 * std::cos(2.0 * M_PI * p.x()) + 0.3 * std::cos(2.0 * M_PI * p.y());
    return 0.5 * std::log(lam);
  });
  const CGrid s = grid.forward(mu);
  std::vector<FourierMode> modes;
  for (int q = 0; q < n; ++q) {
    for (int p = 0; p < n; ++p) {
      const int k1 = grid.frequency(p);
      const int k2 = grid.frequency(q);
      if (std::abs(k1) > band || std::abs(k2) > band) continue;
      // Keep one representative of each conjugate pair; closure restores the rest.
      if (k1 < 0 || (k1 == 0 && k2 < 0)) continue;
      if (std::abs(s(p, q)) < 1e-18) continue;
      modes.push_back({k1, k2, s(p, q)});
    }
  }
  return on_unit_square(modes);
}

ConformalFactor generic() { return on_unit_square({{1, 0, {0.1, 0.0}}, {1, 2, {0.075, 0.0}}}); }

ConformalFactor generic_alt() {
  // cos(2 pi x) cos(2 pi y) = (cos(2 pi (x+y)) + cos(2 pi (x-y))) / 2 and
  // sin(t) = Re(-i e^{it}).
  return on_unit_square({{1, 1, {0.025, 0.0}}, {1, -1, {0.025, 0.0}}, {2, -1, {0.0, -0.025}}});
}

ConformalFactor diagonal_rotation() { return on_unit_square({{1, 1, {0.05, 0.0}}}); }

ConformalFactor random(std::uint64_t seed, int degree, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<FourierMode> modes;
  for (int k1 = 0; k1 <= degree; ++k1) {
    for (int k2 = -degree; k2 <= degree; ++k2) {
      if (k1 == 0 && k2 <= 0) continue;
      const double s = scale / (1.0 + k1 * k1 + k2 * k2);
      modes.push_back({k1, k2, {s * normal(rng), s * normal(rng)}});
    }
  }
  return on_unit_square(modes);
}

ConformalFactor by_name(const std::string& name) {
  if (name == "flat") return flat();
  if (name == "rotation") return rotation();
  if (name == "liouville") return liouville();
  if (name == "generic") return generic();
  if (name == "generic_alt") return generic_alt();
  if (name == "diagonal_rotation") return diagonal_rotation();
  throw Error("unknown metric name '" + name + "'");
}

}  // namespace kt::metrics
