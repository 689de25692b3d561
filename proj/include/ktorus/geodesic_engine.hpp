#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "ktorus/spectral_solver.hpp"

namespace kt {

/// Point (x, y, theta) of the unit circle bundle; theta is the angle between the
/// velocity and the line y = const.
using BundlePoint = Eigen::Vector3d;

/// Geodesic spray H = e^{-mu}(cos th d_x + sin th d_y + (-mu_x sin th + mu_y cos th) d_th).
BundlePoint spray(const ConformalFactor& cf, const BundlePoint& p);

struct OrbitSample {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
};

/// Unit-speed geodesic sampled at uniform t on the lift to R^2 (no wrapping), with
/// theta unwrapped.
struct GeodesicOrbit {
  std::vector<OrbitSample> samples;
  std::array<int, 2> homotopy_class{0, 0};
  double period = 0.0;
  /// Weighted distance between start and end modulo Gamma, see closure_residual.
  double closure_residual = 0.0;
  bool closed = false;
  /// Integration tolerance the samples were produced with.
  double tol = 0.0;
  int newton_iterations = 0;
};

/// Adaptive Dormand-Prince 5(4) integration of the spray with dense output at
/// samples + 1 uniform times in [0, t_end].
GeodesicOrbit integrate_flow(const ConformalFactor& cf, const BundlePoint& start, double t_end,
                             double tol = 1e-11, int samples = 1000);

/// sqrt(|dx|^2 + (L / 2 pi * dtheta)^2) with dx the end-minus-start displacement
/// minus p e1 + q e2 and dtheta wrapped to (-pi, pi].
double closure_residual(const GeodesicOrbit& orbit, const Lattice& lattice,
                        const std::array<int, 2>& cls);

/// Lattice class of the lift displacement, rounded to the nearest integers.
std::array<int, 2> lift_class(const GeodesicOrbit& orbit, const Lattice& lattice);

struct ClosedGeodesicOptions {
  int polygon_vertices = 64;
  int descent_iterations = 400;
  /// Transverse offsets tried for the initial straight loop.
  int starts = 4;
  int newton_iterations = 40;
  double tol_close = 1e-10;
  /// Integration tolerance, capped at 0.01 * tol_close during shooting.
  double ode_tol = 1e-11;
  /// Quadrature samples of the returned orbit.
  int samples = 1024;
};

/// Energy-minimising polygon in the class (p, q), then Gauss-Newton shooting on
/// (normal offset, angle, period). On failure the best orbit is returned with
/// closed = false.
GeodesicOrbit find_closed_geodesic(const ConformalFactor& cf, int p, int q,
                                   const ClosedGeodesicOptions& opts = {});

/// Default orbit menu (1,0), (0,1), (1,1), (1,-1), searched in parallel.
std::vector<std::array<int, 2>> default_orbit_menu();
std::vector<GeodesicOrbit> find_orbit_menu(const ConformalFactor& cf,
                                           const std::vector<std::array<int, 2>>& classes,
                                           const ClosedGeodesicOptions& opts = {});

struct RayIntegral {
  double value = 0.0;
  /// Richardson difference between S and S / 2 samples plus orbit-error propagation.
  double error = 0.0;
};

/// Closed-curve integral of e^{m mu}[(c1 mu_x + c2 mu_y) cos m th + (c2 mu_x - c1 mu_y) sin m th]
/// with the periodic trapezoid rule. Requires weight(c) = m + 1 and a closed orbit.
RayIntegral ray_integral_Z(const GeodesicOrbit& orbit, const ConformalFactor& cf, int m,
                           const PseudoVector& c);

/// Same integral through the index contraction Z_{i..} gamma'^i .. of the full components.
RayIntegral ray_integral_Z_components(const GeodesicOrbit& orbit, const ConformalFactor& cf,
                                      int m, const PseudoVector& c);

struct RayIntegralPair {
  double I_num = 0.0;  // c = (1, 0)
  double I_den = 0.0;  // c = (0, 1)
  double err_num = 0.0;
  double err_den = 0.0;
  std::array<int, 2> homotopy_class{0, 0};
  bool informative = false;
};

enum class RatioStatus { Obstructed, Inconclusive };

struct RatioVerdict {
  RatioStatus status = RatioStatus::Inconclusive;
  int m = 0;
  std::vector<RayIntegralPair> pairs;
  /// Largest projective distance |I1 J2 - I2 J1| / (|P1| |P2|) over informative pairs.
  double max_distance = 0.0;
  /// Combined error estimate of the pair attaining max_distance.
  double error_estimate = 0.0;
  /// max_distance / error_estimate.
  double separation = 0.0;
  int informative = 0;
  std::string note;
};

/// Projective comparison of the ray-integral pairs over closed orbits. OBSTRUCTED (for
/// rank m + 1) when some separation exceeds margin times the error estimate.
RatioVerdict ratio_test(const std::vector<GeodesicOrbit>& orbits, const ConformalFactor& cf, int m,
                        double margin = 10.0);

/// Verdict from precomputed pairs; marks each pair informative when its size exceeds
/// 1e-12 and margin times its error estimate.
RatioVerdict ratio_verdict(std::vector<RayIntegralPair> pairs, int m, double margin = 10.0);

const char* to_string(RatioStatus s);

/// Point evaluation of F(x, xi) = f(xi, .., xi) for unit xi at angle theta, using the
/// trigonometric interpolant of the components and the analytic mu.
class FirstIntegral {
 public:
  explicit FirstIntegral(const SymTensorField& f);
  double operator()(const Vec2& x, double theta) const;

 private:
  int rank_;
  const MetricGrid* metric_;
  MetricGridPtr keep_;
  std::vector<CGrid> spectra_;
};

/// e^{mu} cos theta, conserved on metrics with mu = mu(y).
double clairaut_integral(const ConformalFactor& cf, const OrbitSample& s);

/// F sampled on the circle bundle: entry j is F(., theta_j) with theta_j = 2 pi j / n_theta.
std::vector<Grid> circle_bundle_function(const SymTensorField& f, int n_theta);

/// H F on the grid x theta-grid with spectral x, y and theta derivatives.
std::vector<Grid> spray_apply(const MetricGrid& metric, const std::vector<Grid>& F);

/// CSV with header t,x,y,theta.
void write_orbit_csv(const GeodesicOrbit& orbit, std::ostream& out);

}  // namespace kt
