#pragma once

#include <cstdint>
#include <string>

#include "ktorus/lattice_metric.hpp"

namespace kt::metrics {

/// mu = 0 on the unit square lattice.
ConformalFactor flat();
/// mu = 0.1 cos(2 pi y).
ConformalFactor rotation();
/// e^{2 mu} = 1.2 + 0.2 cos(2 pi x) + 0.3 cos(2 pi y); mu = log(lambda) / 2 is fitted
/// by FFT and truncated to |k1|, |k2| <= band.
ConformalFactor liouville(int band = 16);
/// mu = 0.2 cos(2 pi x) + 0.15 cos(2 pi (x + 2y)).
ConformalFactor generic();
/// mu = 0.1 cos(2 pi x) cos(2 pi y) + 0.05 sin(2 pi (2x - y)).
ConformalFactor generic_alt();
/// mu = 0.1 cos(2 pi (x + y)): depends on x + y only.
ConformalFactor diagonal_rotation();
/// Random band-limited mu with |k1|, |k2| <= degree and amplitudes ~ scale / (1 + |k|^2).
ConformalFactor random(std::uint64_t seed, int degree = 3, double scale = 0.1);

/// Looks up flat, rotation, liouville, generic, generic_alt, diagonal_rotation.
ConformalFactor by_name(const std::string& name);

}  // namespace kt::metrics
