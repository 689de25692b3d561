#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ktorus/lattice_metric.hpp"
#include "ktorus/obstruction_pipeline.hpp"

namespace kt::cli {

/// Malformed config: the message names the line (syntax) or the field (schema).
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct ToleranceOverrides {
  std::optional<double> pass_tol;
  std::optional<double> identity_tol;
  std::optional<double> margin;
  std::optional<double> eps_pot;
  std::optional<double> ode_tol;
  std::optional<double> tol_close;
  std::optional<double> fourth_order_tol;
};

struct MetricConfig {
  std::string metric_id;
  Lattice lattice = Lattice::unit_square();
  /// Modes as listed; the conjugate partners are added by ConformalFactor.
  std::vector<FourierMode> modes;
  int grid_n = 0;
  ToleranceOverrides tolerances;
  std::vector<std::string> warnings;

  ConformalFactor factor() const { return ConformalFactor(lattice, modes); }
  /// grid_n, or max(64, 4 * max degree) when it is 0.
  int grid() const;
  PipelineOptions pipeline_options() const;
};

/// Schema: {metric_id?, lattice: {e1: [x, y], e2: [x, y]}, mu_fourier: [{k: [k1, k2],
/// re, im?}], grid_n?, tolerances?}. grid_n below 4 * max degree (or odd) is raised
/// with a warning; 0 or absent picks max(64, 4 * max degree).
MetricConfig parse_config(const std::string& text, const std::string& default_id = "metric");
MetricConfig load_config(const std::string& path);

}  // namespace kt::cli
