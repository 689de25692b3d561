#include "ktorus/random_fields.hpp"

#include <random>

namespace kt::random {

Grid band_limited(const SpectralGrid& grid, int band, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = grid.n();
  if (2 * band >= n) throw Error("band too wide for the grid");
  CGrid s = CGrid::Zero(n, n);
  for (int k1 = -band; k1 <= band; ++k1) {
    for (int k2 = -band; k2 <= band; ++k2) {
      const double damp = 1.0 / (1.0 + k1 * k1 + k2 * k2);
      s((k1 + n) % n, (k2 + n) % n) = damp * Complex(normal(rng), normal(rng));
    }
  }
  return grid.inverse(s).real();
}

SymTensorField sym_field(const MetricGridPtr& metric, int rank, int band, std::uint64_t seed) {
  SymTensorField f(metric, rank);
  for (int k = 0; k <= rank; ++k) f[k] = band_limited(metric->grid(), band, seed * 1000003ULL + k);
  return f;
}

TraceFreeField trace_free(const MetricGridPtr& metric, int rank, int band, std::uint64_t seed) {
  return TraceFreeField(metric, rank, band_limited(metric->grid(), band, seed * 1000003ULL),
                        band_limited(metric->grid(), band, seed * 1000003ULL + 1));
}

}  // namespace kt::random
