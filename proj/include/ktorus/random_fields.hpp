#pragma once

#include <cstdint>

#include "ktorus/tensor_calculus.hpp"

namespace kt::random {

/// Real trigonometric polynomial with |k1|, |k2| <= band and N(0, 1) coefficients
/// damped by 1 / (1 + |k|^2), sampled on the metric grid.
Grid band_limited(const SpectralGrid& grid, int band, std::uint64_t seed);

SymTensorField sym_field(const MetricGridPtr& metric, int rank, int band, std::uint64_t seed);
TraceFreeField trace_free(const MetricGridPtr& metric, int rank, int band, std::uint64_t seed);

}  // namespace kt::random
