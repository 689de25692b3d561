#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ktorus/geodesic_engine.hpp"
#include "ktorus/rank3_analysis.hpp"

namespace kt {

enum class TestStatus { Pass, Violated, Degenerate, Inconclusive };

const char* to_string(TestStatus s);

struct Residual {
  std::string name;
  double value = 0.0;
};

struct TestResult {
  std::string name;
  TestStatus status = TestStatus::Inconclusive;
  /// Necessary conditions drive the rank verdict; identity checks only guard the
  /// numerics.
  bool necessary = true;
  std::vector<Residual> residuals;
  /// Residual changed by at most the stability factor under grid doubling.
  bool resolution_stability = true;
  std::string detail;

  double residual(const std::string& name) const;
};

struct RankReport {
  int m = 0;
  std::vector<TestResult> tests;
  std::string verdict;

  const TestResult* find(const std::string& name) const;
};

struct ObstructionReport {
  static constexpr int kSchemaVersion = 1;
  std::string metric_id;
  int grid_n = 0;
  int grid_n_fine = 0;
  std::map<int, RankReport> per_rank;
  std::string summary;
};

/// Status of a residual measured at two resolutions with error estimates. PASS when
/// both residuals are at most pass_tol; VIOLATED only when both exceed margin times
/// their error estimate and differ by at most the stability factor.
TestStatus gate_status(double r, double r_fine, double err, double err_fine, double pass_tol,
                       double margin, double stability_factor, bool* stable = nullptr);

struct ClassicalCheck {
  TestStatus status = TestStatus::Inconclusive;
  /// Aligning rotation z = a z' with a = exp(i angle), angle in (-pi/2, pi/2].
  double angle = 0.0;
  double residual = 0.0;
  double residual_fine = 0.0;
  double error_estimate = 0.0;
  bool stable = true;
  /// max |d f| and max |d f| / max |f| of the constructed Killing field (PASS only).
  std::optional<double> killing_df;
  std::optional<double> killing_df_rel;
  /// Rank 2: exactness of the trace equation grad v = -delta phi / 2.
  std::optional<double> trace_exactness;
};

struct ClassicalReport {
  /// Some rotation makes mu independent of x'.
  ClassicalCheck m1;
  /// Some rotation makes d^2 lambda / dx' dy' vanish.
  ClassicalCheck m2;
};

/// grid_n = 0 picks max(64, 4 * max_degree); the fine grid doubles it.
ClassicalReport classify_classical(const ConformalFactor& cf, int grid_n = 0,
                                   double pass_tol = 1e-8, double margin = 10.0);

struct ClassicalField {
  SymTensorField f;
  /// max |grad v + delta phi / 2| / max |delta phi / 2| (rank 2 only).
  double exactness = 0.0;
  double df = 0.0;
  double df_rel = 0.0;
};

/// Killing vector candidate: the kernel field for a weight-1 c, a = lambda c1,
/// b = lambda c2.
ClassicalField rank1_killing_field(const PseudoVector& c, const MetricGridPtr& metric);

/// Rank-2 candidate phi + v g with phi the kernel field for a weight-2 c. The trace of
/// d(phi + v g) = 0 forces grad v = -delta phi / 2; v comes from the flat Poisson
/// equation and the remainder of d f measures the classical condition.
ClassicalField rank2_killing_field(const PseudoVector& c, const MetricGridPtr& metric);

struct PipelineOptions {
  /// Base resolution; 0 picks max(64, 4 * max_degree) rounded up to even.
  int grid_n = 0;
  double margin = 10.0;
  double stability_factor = 2.0;
  /// Residual at or below which a necessary condition counts as holding.
  double pass_tol = 1e-8;
  /// Relative tolerance of the identity checks.
  double identity_tol = 1e-10;
  PotentialOptions potential;
  ClosedGeodesicOptions geodesic;
  FourthOrderOptions fourth_order;
  bool domain_checks = true;
  int domain_levels = 9;
};

/// Per rank: classical checks (m <= 2), potentiality of Z^{m-1,c}, the ratio test over
/// the orbit menu, and for m = 3 the rank-3 battery; each at grid_n and 2 grid_n.
ObstructionReport run_full(const ConformalFactor& cf, const std::vector<int>& ranks,
                           const PipelineOptions& opts = {}, const std::string& metric_id = "");

/// Canonical JSON: fixed key order, numbers with 17 significant digits, non-finite
/// numbers as null, no timestamps.
std::string to_json(const ObstructionReport& report);
void write_report_json(const ObstructionReport& report, std::ostream& out);

}  // namespace kt
