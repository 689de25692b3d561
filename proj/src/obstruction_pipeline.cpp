#include "ktorus/obstruction_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "ktorus/canonical_json.hpp"

namespace kt {

namespace {

// Rounding floor added to every internal error estimate.
constexpr double kFloor = 1e-12;

double max_abs(const Grid& g) { return g.abs().maxCoeff(); }

int base_grid(const ConformalFactor& cf, int requested) {
  int n = requested > 0 ? requested : std::max(64, 4 * cf.max_degree());
  return n + n % 2;
}

double wrap_half_turn(double a) {
  while (a <= -M_PI / 2) a += M_PI;
  while (a > M_PI / 2) a -= M_PI;
  return a;
}

// Smallest eigenvector of sum_k weight_k q_k q_k^T.
Vec2 quiet_direction(const std::vector<std::pair<Vec2, double>>& rows) {
  Eigen::Matrix2d M = Eigen::Matrix2d::Zero();
  for (const auto& [q, w] : rows) M += w * q * q.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(M);
  return es.eigenvectors().col(0).normalized();
}

struct AxisResult {
  double angle = 0.0;
  double residual = 0.0;
  bool degenerate = false;
};

// m = 1: direction v with d_v mu = 0. The spectrum of mu has to lie on the line
// orthogonal to v.
AxisResult rotation_axis(const MetricGrid& m) {
  AxisResult r;
  const double scale = std::max(max_abs(m.mu_x), max_abs(m.mu_y));
  if (scale <= 1e-14) {
    r.degenerate = true;
    return r;
  }
  const SpectralGrid& g = m.grid();
  const CGrid s = g.forward(m.mu);
  std::vector<std::pair<Vec2, double>> rows;
  for (int p = 0; p < g.n(); ++p) {
    for (int q = 0; q < g.n(); ++q) {
      if ((p == 0 && q == 0) || g.is_nyquist(p, q)) continue;
      rows.emplace_back(g.wave_vector(p, q), std::norm(s(p, q)));
    }
  }
  const Vec2 v = quiet_direction(rows);
  r.angle = wrap_half_turn(std::atan2(v.y(), v.x()));
  const Vec2 d(std::cos(r.angle), std::sin(r.angle));
  r.residual = max_abs(d.x() * m.mu_x + d.y() * m.mu_y) / scale;
  return r;
}

// m = 2: angle with (lambda_yy - lambda_xx) sin 2a / 2 + lambda_xy cos 2a = 0.
AxisResult liouville_axis(const MetricGrid& m) {
  AxisResult r;
  const SpectralGrid& g = m.grid();
  const Grid lxx = g.derivative(m.lambda, 2, 0);
  const Grid lxy = g.derivative(m.lambda, 1, 1);
  const Grid lyy = g.derivative(m.lambda, 0, 2);
  const double scale = std::max({max_abs(lxx), max_abs(lxy), max_abs(lyy)});
  if (scale <= 1e-13 * max_abs(m.lambda)) {
    r.degenerate = true;
    return r;
  }
  const CGrid s = g.forward(m.lambda);
  std::vector<std::pair<Vec2, double>> rows;
  for (int p = 0; p < g.n(); ++p) {
    for (int q = 0; q < g.n(); ++q) {
      if ((p == 0 && q == 0) || g.is_nyquist(p, q)) continue;
      const Vec2 w = g.wave_vector(p, q);
      rows.emplace_back(Vec2(w.x() * w.y(), 0.5 * (w.y() * w.y() - w.x() * w.x())), std::norm(s(p, q)));
    }
  }
  const Vec2 u = quiet_direction(rows);
  r.angle = wrap_half_turn(0.5 * std::atan2(u.y(), u.x()));
  const double s2 = std::sin(2.0 * r.angle), c2 = std::cos(2.0 * r.angle);
  r.residual = max_abs(0.5 * (lyy - lxx) * s2 + lxy * c2) / scale;
  return r;
}

ClassicalCheck classical_check(const AxisResult& a, const AxisResult& b, double pass_tol,
                               double margin) {
  ClassicalCheck c;
  if (a.degenerate || b.degenerate) {
    c.status = TestStatus::Degenerate;
    return c;
  }
  c.angle = a.angle;
  c.residual = a.residual;
  c.residual_fine = b.residual;
  c.error_estimate = std::abs(a.residual - b.residual) + kFloor;
  c.status = gate_status(a.residual, b.residual, c.error_estimate, c.error_estimate, pass_tol, margin,
                         2.0, &c.stable);
  return c;
}

SymTensorField times(const Grid& v, SymTensorField f) {
  for (int k = 0; k <= f.rank(); ++k) f[k] = f[k] * v;
  return f;
}

void finish_field(ClassicalField& out) {
  const SymTensorField df = inner_derivative(out.f);
  out.df = df.max_norm();
  out.df_rel = out.df / std::max(out.f.max_norm(), 1e-300);
}

TestResult make_test(std::string name, bool necessary) {
  TestResult t;
  t.name = std::move(name);
  t.necessary = necessary;
  return t;
}

// Residual pair plus error estimates through the gate, recorded under fixed names.
void gate_into(TestResult& t, double r, double r_fine, double err, double err_fine, double pass_tol,
               const PipelineOptions& opts) {
  t.status = gate_status(r, r_fine, err, err_fine, pass_tol, opts.margin, opts.stability_factor,
                         &t.resolution_stability);
  t.residuals.push_back({"residual", r});
  t.residuals.push_back({"residual_fine", r_fine});
  t.residuals.push_back({"error_estimate", err});
  t.residuals.push_back({"error_estimate_fine", err_fine});
}

TestResult classical_test(int m, const ClassicalCheck& c) {
  TestResult t = make_test(m == 1 ? "classical_rotation" : "classical_liouville", true);
  t.status = c.status;
  t.resolution_stability = c.stable;
  if (c.status == TestStatus::Degenerate) {
    t.detail = "constant metric";
    return t;
  }
  t.residuals = {{"residual", c.residual},
                 {"residual_fine", c.residual_fine},
                 {"error_estimate", c.error_estimate},
                 {"error_estimate_fine", c.error_estimate},
                 {"angle", c.angle}};
  if (c.killing_df) t.residuals.push_back({"killing_df", *c.killing_df});
  if (c.killing_df_rel) t.residuals.push_back({"killing_df_rel", *c.killing_df_rel});
  if (c.trace_exactness) t.residuals.push_back({"trace_exactness", *c.trace_exactness});
  char buf[96];
  std::snprintf(buf, sizeof buf, "aligning rotation a = exp(i %.6f)", c.angle);
  t.detail = buf;
  return t;
}

TestResult potential_test(int m, const MetricGridPtr& coarse, const MetricGridPtr& fine,
                          const PipelineOptions& opts) {
  TestResult t = make_test("potentiality", true);
  const PotentialTestResult a = potentiality_test(m, coarse, opts.potential);
  const PotentialTestResult b = potentiality_test(m, fine, opts.potential);
  if (a.degenerate || b.degenerate) {
    t.status = TestStatus::Degenerate;
    t.detail = "Z vanishes for every c";
    return t;
  }
  const double d = std::abs(a.residual_rel - b.residual_rel);
  gate_into(t, a.residual_rel, b.residual_rel, d + kFloor, d + kFloor, opts.potential.eps_pot, opts);
  if (b.best_c) {
    t.residuals.push_back({"best_c1", b.best_c->c1});
    t.residuals.push_back({"best_c2", b.best_c->c2});
  }
  if (!a.converged || !b.converged) {
    t.status = TestStatus::Inconclusive;
    t.detail = "least-squares solve did not converge";
  }
  return t;
}

TestResult ratio_result(int m, const std::vector<GeodesicOrbit>& orbits,
                        const std::vector<GeodesicOrbit>& refined, const ConformalFactor& cf,
                        const PipelineOptions& opts) {
  TestResult t = make_test("ratio_test", true);
  std::vector<GeodesicOrbit> closed, closed_refined;
  for (std::size_t k = 0; k < orbits.size(); ++k) {
    if (!orbits[k].closed) continue;
    closed.push_back(orbits[k]);
    closed_refined.push_back(refined[k]);
  }
  t.residuals.push_back({"closed_orbits", static_cast<double>(closed.size())});
  if (closed.size() < 2) {
    t.detail = "fewer than 2 closed orbits";
    return t;
  }
  const RatioVerdict v = ratio_test(closed, cf, m - 1, opts.margin);
  const RatioVerdict w = ratio_test(closed_refined, cf, m - 1, opts.margin);
  t.status = v.status == RatioStatus::Obstructed ? TestStatus::Violated : TestStatus::Inconclusive;
  t.resolution_stability = v.status == w.status;
  if (!t.resolution_stability) t.status = TestStatus::Inconclusive;
  t.residuals.push_back({"informative", static_cast<double>(v.informative)});
  t.residuals.push_back({"max_distance", v.max_distance});
  t.residuals.push_back({"error_estimate", v.error_estimate});
  t.residuals.push_back({"separation", v.separation});
  t.residuals.push_back({"separation_refined", w.separation});
  t.detail = v.note;
  return t;
}

// Orbits re-integrated from the same start at a tenth of the tolerance and twice the
// samples.
std::vector<GeodesicOrbit> refine_orbits(const std::vector<GeodesicOrbit>& orbits,
                                         const ConformalFactor& cf) {
  std::vector<GeodesicOrbit> out;
  for (const GeodesicOrbit& o : orbits) {
    if (!o.closed) {
      out.push_back(o);
      continue;
    }
    const OrbitSample& s = o.samples.front();
    const int S = 2 * (static_cast<int>(o.samples.size()) - 1);
    GeodesicOrbit r = integrate_flow(cf, {s.x, s.y, s.theta}, o.period, 0.1 * o.tol, S);
    r.homotopy_class = o.homotopy_class;
    r.period = o.period;
    r.closure_residual = closure_residual(r, cf.lattice(), o.homotopy_class);
    r.closed = true;
    out.push_back(std::move(r));
  }
  return out;
}

struct Rank3Data {
  LambdaForm L;
  double d2 = 0.0;
  Vec2 means = Vec2::Zero();
  TransportMinimum tm;
  std::optional<ThirdDerivativeReport> third;
  std::optional<DomainReport> domain;
};

Rank3Data rank3_data(const MetricGridPtr& metric, const PipelineOptions& opts, bool third) {
  Rank3Data d;
  d.L = lambda_form(*metric);
  if (d.L.norm <= 1e-13) return d;
  for (const PseudoVector c : {PseudoVector{3, 1.0, 0.0}, PseudoVector{3, 0.0, 1.0}}) {
    d.d2 = std::max(d.d2, delta2_T(c, metric).discrepancy);
  }
  d.means = mean_value_check(*metric);
  d.tm = transport_minimum(metric, opts.fourth_order);
  if (third) {
    const FourthOrderReport r = solve_fourth_order(d.tm.best_c, metric, opts.fourth_order);
    d.third = third_derivative_residual(r.u, d.tm.best_c, metric);
  }
  if (opts.domain_checks) d.domain = domain_integral_checks(metric, d.tm.best_c, opts.domain_levels);
  return d;
}

std::vector<TestResult> rank3_tests(const MetricGridPtr& coarse, const MetricGridPtr& fine,
                                    const PipelineOptions& opts) {
  const Rank3Data a = rank3_data(coarse, opts, true);
  const Rank3Data b = rank3_data(fine, opts, false);
  std::vector<TestResult> out;
  const std::array<const char*, 6> names{"lambda_routes",      "delta2_identity",   "mean_values",
                                         "transport_equation", "disk_integrals",    "isoline_cohomology"};
  if (a.L.norm <= 1e-13 || b.L.norm <= 1e-13) {
    for (int k = 0; k < 6; ++k) {
      TestResult t = make_test(names[k], k >= 3);
      t.status = TestStatus::Degenerate;
      t.detail = "Lambda vanishes identically";
      out.push_back(std::move(t));
    }
    return out;
  }
  auto identity = [&](const char* name, double ra, double rb) {
    TestResult t = make_test(name, false);
    gate_into(t, ra, rb, kFloor, kFloor, opts.identity_tol, opts);
    out.push_back(std::move(t));
  };
  identity(names[0], a.L.route_discrepancy / (1.0 + a.L.norm), b.L.route_discrepancy / (1.0 + b.L.norm));
  identity(names[1], a.d2 / (1.0 + a.L.norm), b.d2 / (1.0 + b.L.norm));
  const double area_a = coarse->total_area(), area_b = fine->total_area();
  identity(names[2], a.means.cwiseAbs().maxCoeff() / (area_a * a.L.norm),
           b.means.cwiseAbs().maxCoeff() / (area_b * b.L.norm));

  {
    TestResult t = make_test(names[3], true);
    const double d = std::abs(a.tm.residual - b.tm.residual);
    gate_into(t, a.tm.residual, b.tm.residual, d + a.tm.forward_residual + kFloor,
              d + b.tm.forward_residual + kFloor, opts.pass_tol, opts);
    t.residuals.push_back({"best_c1", a.tm.best_c.c1});
    t.residuals.push_back({"best_c2", a.tm.best_c.c2});
    t.residuals.push_back({"forward_residual", a.tm.forward_residual});
    if (a.third) {
      t.residuals.push_back({"third_derivative", a.third->residual});
      t.residuals.push_back({"third_derivative_scale", a.third->scale});
    }
    if (!a.tm.converged || !b.tm.converged) {
      t.status = TestStatus::Inconclusive;
      t.detail = "fourth-order solve did not converge";
    }
    out.push_back(std::move(t));
  }

  auto disk_measure = [](const DomainReport& d, double lnorm, double* err) {
    double top = 0.0, area = 0.0, e = 0.0;
    for (const DiskCheck& k : d.disks) {
      top = std::max(top, std::abs(k.coarea));
      area = std::max(area, k.area);
      e = std::max(e, std::abs(k.coarea - k.flux) + k.collapse_mismatch);
    }
    const double s = std::max(area * lnorm, 1e-300);
    *err = e / s + kFloor;
    return top / s;
  };
  {
    TestResult t = make_test(names[4], true);
    if (!a.domain || !b.domain) {
      t.detail = "domain checks disabled";
    } else if (a.domain->disks.empty() || b.domain->disks.empty()) {
      t.detail = "no nondegenerate extremum disks";
    } else {
      double ea = 0.0, eb = 0.0;
      const double ra = disk_measure(*a.domain, a.L.norm, &ea);
      const double rb = disk_measure(*b.domain, b.L.norm, &eb);
      gate_into(t, ra, rb, ea, eb, opts.pass_tol, opts);
      t.residuals.push_back({"disks", static_cast<double>(a.domain->disks.size())});
      double top = 0.0;
      for (const DiskCheck& k : a.domain->disks) top = std::max(top, std::abs(k.coarea));
      t.residuals.push_back({"max_disk_integral", top});
    }
    out.push_back(std::move(t));
  }
  {
    TestResult t = make_test(names[5], true);
    if (!a.domain || !b.domain) {
      t.detail = "domain checks disabled";
    } else if (a.domain->fit.curves < 3 || b.domain->fit.curves < 3) {
      t.detail = "fewer than 3 closed regular isolines";
    } else {
      const CohomologyFit& fa = a.domain->fit;
      const CohomologyFit& fb = b.domain->fit;
      const double sa = std::max(fa.magnitude, 1e-300), sb = std::max(fb.magnitude, 1e-300);
      gate_into(t, fa.residual / sa, fb.residual / sb, fa.error / sa + kFloor, fb.error / sb + kFloor,
                opts.pass_tol, opts);
      t.residuals.push_back({"curves", static_cast<double>(fa.curves)});
      t.residuals.push_back({"alpha1", fa.alpha(0)});
      t.residuals.push_back({"alpha2", fa.alpha(1)});
      double annulus = 0.0;
      for (const AnnulusCheck& k : a.domain->annuli) annulus = std::max(annulus, std::abs(k.integral - k.predicted));
      t.residuals.push_back({"max_annulus_mismatch", annulus});
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::string rank_verdict(const RankReport& r, bool flat) {
  bool violated = false, classical_pass = false;
  for (const TestResult& t : r.tests) {
    if (t.necessary && t.status == TestStatus::Violated) violated = true;
    if (t.name.rfind("classical_", 0) == 0 && t.status == TestStatus::Pass) classical_pass = true;
  }
  if (flat) return "degenerate: flat metric, Killing fields of this rank exist (reducible)";
  if (violated) return "no irreducible rank " + std::to_string(r.m) + " Killing field (evidence)";
  if (r.m == 1 && classical_pass) return "Killing vector field exists (evidence)";
  if (r.m == 2 && classical_pass) return "rank 2 Killing field exists (evidence)";
  return "necessary conditions hold; inconclusive (evidence)";
}

}  // namespace

const char* to_string(TestStatus s) {
  switch (s) {
    case TestStatus::Pass: return "PASS";
    case TestStatus::Violated: return "VIOLATED";
    case TestStatus::Degenerate: return "DEGENERATE";
    case TestStatus::Inconclusive: return "INCONCLUSIVE";
  }
  return "?";
}

double TestResult::residual(const std::string& key) const {
  for (const Residual& r : residuals) {
    if (r.name == key) return r.value;
  }
  throw Error("test " + name + " has no residual " + key);
}

const TestResult* RankReport::find(const std::string& name) const {
  for (const TestResult& t : tests) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

TestStatus gate_status(double r, double r_fine, double err, double err_fine, double pass_tol,
                       double margin, double stability_factor, bool* stable) {
  const double lo = std::min(r, r_fine), hi = std::max(r, r_fine);
  const bool both_small = hi <= pass_tol;
  const bool st = both_small || (lo > 0.0 && hi <= stability_factor * lo);
  if (stable) *stable = st;
  if (both_small) return TestStatus::Pass;
  if (st && r > margin * err && r_fine > margin * err_fine) return TestStatus::Violated;
  return TestStatus::Inconclusive;
}

ClassicalReport classify_classical(const ConformalFactor& cf, int grid_n, double pass_tol,
                                   double margin) {
  const int n = base_grid(cf, grid_n);
  const auto metric = MetricGrid::make(cf, n);
  const MetricGrid fine(cf, 2 * n);
  ClassicalReport out;
  out.m1 = classical_check(rotation_axis(*metric), rotation_axis(fine), pass_tol, margin);
  out.m2 = classical_check(liouville_axis(*metric), liouville_axis(fine), pass_tol, margin);
  if (out.m1.status == TestStatus::Pass) {
    const ClassicalField f =
        rank1_killing_field({1, std::cos(out.m1.angle), std::sin(out.m1.angle)}, metric);
    out.m1.killing_df = f.df;
    out.m1.killing_df_rel = f.df_rel;
  }
  if (out.m2.status == TestStatus::Pass) {
    const ClassicalField f =
        rank2_killing_field({2, std::cos(2.0 * out.m2.angle), std::sin(2.0 * out.m2.angle)}, metric);
    out.m2.killing_df = f.df;
    out.m2.killing_df_rel = f.df_rel;
    out.m2.trace_exactness = f.exactness;
  }
  return out;
}

ClassicalField rank1_killing_field(const PseudoVector& c, const MetricGridPtr& metric) {
  if (c.weight != 1) throw Error("rank-1 Killing field needs a weight-1 pseudovector");
  ClassicalField out{kernel_field(1, c, metric).expand()};
  finish_field(out);
  return out;
}

ClassicalField rank2_killing_field(const PseudoVector& c, const MetricGridPtr& metric) {
  if (c.weight != 2) throw Error("rank-2 Killing field needs a weight-2 pseudovector");
  const SpectralGrid& g = metric->grid();
  const SymTensorField phi = kernel_field(2, c, metric).expand();
  const SymTensorField dphi = divergence(phi);
  const Grid w1 = -0.5 * dphi[0], w2 = -0.5 * dphi[1];
  const Grid v = g.inverse_laplacian(g.dx(w1) + g.dy(w2));
  const double wn = std::max({max_abs(w1), max_abs(w2), 1e-300});
  ClassicalField out{phi + times(v, SymTensorField::metric_tensor(metric))};
  out.exactness = std::max(max_abs(g.dx(v) - w1), max_abs(g.dy(v) - w2)) / wn;
  finish_field(out);
  return out;
}

ObstructionReport run_full(const ConformalFactor& cf, const std::vector<int>& ranks,
                           const PipelineOptions& opts, const std::string& metric_id) {
  ObstructionReport report;
  report.metric_id = metric_id;
  report.grid_n = base_grid(cf, opts.grid_n);
  report.grid_n_fine = 2 * report.grid_n;
  const auto coarse = MetricGrid::make(cf, report.grid_n);
  const auto fine = MetricGrid::make(cf, report.grid_n_fine);
  const bool flat = cf.is_constant();

  bool need_classical = false, need_orbits = false;
  for (int m : ranks) {
    if (m < 1) throw Error("ranks start at 1");
    need_classical = need_classical || m <= 2;
  }
  need_orbits = !ranks.empty();
  std::optional<ClassicalReport> classical;
  if (need_classical) classical = classify_classical(cf, report.grid_n, opts.pass_tol, opts.margin);
  std::vector<GeodesicOrbit> orbits, refined;
  if (need_orbits) {
    orbits = find_orbit_menu(cf, default_orbit_menu(), opts.geodesic);
    refined = refine_orbits(orbits, cf);
  }

  for (int m : ranks) {
    RankReport r;
    r.m = m;
    if (m <= 2) {
      r.tests.push_back(classical_test(m, m == 1 ? classical->m1 : classical->m2));
    }
    r.tests.push_back(potential_test(m, coarse, fine, opts));
    r.tests.push_back(ratio_result(m, orbits, refined, cf, opts));
    if (m == 3) {
      for (TestResult& t : rank3_tests(coarse, fine, opts)) r.tests.push_back(std::move(t));
    }
    r.verdict = rank_verdict(r, flat);
    report.per_rank[m] = std::move(r);
  }

  if (flat) {
    report.summary = "trivially integrable; Killing fields of all ranks exist (reducible)";
  } else {
    std::ostringstream s;
    bool first = true;
    for (const auto& [m, r] : report.per_rank) {
      s << (first ? "" : "; ") << "m=" << m << ": " << r.verdict;
      first = false;
    }
    report.summary = s.str();
  }
  return report;
}

std::string to_json(const ObstructionReport& report) {
  nlohmann::ordered_json j;
  j["schema_version"] = ObstructionReport::kSchemaVersion;
  j["metric_id"] = report.metric_id;
  j["grid_n"] = report.grid_n;
  j["grid_n_fine"] = report.grid_n_fine;
  nlohmann::ordered_json ranks = nlohmann::ordered_json::object();
  for (const auto& [m, r] : report.per_rank) {
    nlohmann::ordered_json jr;
    jr["verdict"] = r.verdict;
    nlohmann::ordered_json tests = nlohmann::ordered_json::array();
    for (const TestResult& t : r.tests) {
      nlohmann::ordered_json jt;
      jt["name"] = t.name;
      jt["status"] = to_string(t.status);
      jt["necessary"] = t.necessary;
      nlohmann::ordered_json res = nlohmann::ordered_json::object();
      for (const Residual& x : t.residuals) res[x.name] = x.value;
      jt["residuals"] = res;
      jt["resolution_stability"] = t.resolution_stability;
      jt["detail"] = t.detail;
      tests.push_back(jt);
    }
    jr["tests"] = tests;
    ranks[std::to_string(m)] = jr;
  }
  j["per_rank"] = ranks;
  j["summary"] = report.summary;
  return canonical_json(j);
}

void write_report_json(const ObstructionReport& report, std::ostream& out) { out << to_json(report); }

}  // namespace kt
