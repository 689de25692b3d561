#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "ktorus/canonical_json.hpp"
#include "ktorus/geodesic_engine.hpp"
#include "ktorus/rank3_analysis.hpp"
#include "ktorus/spectral_solver.hpp"

namespace kt::cli {

namespace {

namespace fs = std::filesystem;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

fs::path prepare_dir(const std::string& out) {
  if (out.empty()) throw Error("--out is required");
  const fs::path dir(out);
  fs::create_directories(dir);
  return dir;
}

std::ofstream open_file(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  return f;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f = open_file(path);
  f << text;
}

void report_warnings(const MetricConfig& cfg, std::ostream& log) {
  for (const std::string& w : cfg.warnings) log << "warning: " << w << "\n";
}

// One row per grid point: i,j,x,y followed by the named grids.
void write_grids_csv(const fs::path& path, const SpectralGrid& g, const std::vector<std::string>& names,
                     const std::vector<const Grid*>& grids) {
  std::ofstream f = open_file(path);
  f << "i,j,x,y";
  for (const std::string& n : names) f << "," << n;
  f << "\n";
  for (int i = 0; i < g.n(); ++i) {
    for (int j = 0; j < g.n(); ++j) {
      const Vec2 p = g.point(i, j);
      f << i << "," << j << "," << num(p.x()) << "," << num(p.y());
      for (const Grid* v : grids) f << "," << num((*v)(i, j));
      f << "\n";
    }
  }
}

}  // namespace

void cmd_analyze(const MetricConfig& cfg, const std::vector<int>& ranks, const std::string& out,
                 std::ostream& log) {
  if (ranks.empty()) throw Error("--ranks needs at least one rank");
  for (int m : ranks) {
    if (m < 1) throw Error("--ranks entries must be >= 1");
  }
  report_warnings(cfg, log);
  std::vector<int> sorted = ranks;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  const ObstructionReport report = run_full(cfg.factor(), sorted, cfg.pipeline_options(), cfg.metric_id);
  const std::string text = to_json(report);
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    const fs::path p(out);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    write_text(p, text);
  }
  log << report.summary << "\n";
}

void cmd_geodesics(const MetricConfig& cfg, const std::array<int, 2>& cls, const std::string& out,
                   std::ostream& log) {
  if (cls[0] == 0 && cls[1] == 0) throw Error("--class must be a nonzero lattice class");
  report_warnings(cfg, log);
  const fs::path dir = prepare_dir(out);
  const ConformalFactor cf = cfg.factor();
  ClosedGeodesicOptions opts;
  const PipelineOptions po = cfg.pipeline_options();
  opts.ode_tol = po.geodesic.ode_tol;
  opts.tol_close = po.geodesic.tol_close;
  const GeodesicOrbit orbit = find_closed_geodesic(cf, cls[0], cls[1], opts);
  {
    std::ofstream f = open_file(dir / "orbit.csv");
    write_orbit_csv(orbit, f);
  }
  if (!orbit.closed) {
    throw Error("no closed geodesic found in class (" + std::to_string(cls[0]) + "," + std::to_string(cls[1]) +
                "); best closure residual " + num(orbit.closure_residual) + " written to orbit.csv");
  }
  std::ofstream f = open_file(dir / "integrals.csv");
  f << "m,c1,c2,value,error,value_components\n";
  std::ofstream r = open_file(dir / "ratio.csv");
  r << "m,I_num,err_num,I_den,err_den\n";
  for (int m = 0; m <= 3; ++m) {
    std::array<RayIntegral, 2> I;
    for (int k = 0; k < 2; ++k) {
      const PseudoVector c{m + 1, k == 0 ? 1.0 : 0.0, k == 0 ? 0.0 : 1.0};
      I[k] = ray_integral_Z(orbit, cf, m, c);
      const RayIntegral J = ray_integral_Z_components(orbit, cf, m, c);
      f << m << "," << num(c.c1) << "," << num(c.c2) << "," << num(I[k].value) << "," << num(I[k].error) << ","
        << num(J.value) << "\n";
    }
    r << m << "," << num(I[0].value) << "," << num(I[0].error) << "," << num(I[1].value) << ","
      << num(I[1].error) << "\n";
  }
  log << "closed geodesic in class (" << cls[0] << "," << cls[1] << "): period " << num(orbit.period)
      << ", closure residual " << num(orbit.closure_residual) << "\n";
}

void cmd_kernel(const MetricConfig& cfg, int rank, const std::string& out, std::ostream& log) {
  if (rank < 1) throw Error("--rank must be >= 1");
  report_warnings(cfg, log);
  const fs::path dir = prepare_dir(out);
  const auto metric = MetricGrid::make(cfg.factor(), cfg.grid());
  const KernelReport k = kernel_delta_pd(rank, metric);
  const SpectralGrid& g = metric->grid();
  write_grids_csv(dir / "kernel_c1.csv", g, {"a", "b"}, {&k.k1.a, &k.k1.b});
  write_grids_csv(dir / "kernel_c2.csv", g, {"a", "b"}, {&k.k2.a, &k.k2.b});
  nlohmann::ordered_json j;
  j["metric_id"] = cfg.metric_id;
  j["rank"] = rank;
  j["grid_n"] = metric->n();
  j["svd_n"] = k.svd_n;
  j["null_tol"] = k.null_tol;
  j["null_dim"] = k.null_dim;
  j["singular_values"] = k.singular_values;
  j["subspace_error"] = k.subspace_error;
  j["pd_residual"] = k.pd_residual;
  j["gap_reference"] = k.gap_reference;
  write_text(dir / "kernel_report.json", canonical_json(j));
  log << "rank " << rank << ": null dimension " << k.null_dim << ", subspace error " << num(k.subspace_error)
      << "\n";
}

void cmd_isolines(const MetricConfig& cfg, const std::optional<std::vector<double>>& levels,
                  const std::array<double, 2>& c, const std::string& out, std::ostream& log) {
  if (c[0] == 0.0 && c[1] == 0.0) throw Error("--c must be nonzero");
  if (levels && levels->empty()) throw Error("--levels needs at least one value");
  report_warnings(cfg, log);
  const fs::path dir = prepare_dir(out);
  const ConformalFactor cf = cfg.factor();
  const auto metric = MetricGrid::make(cf, cfg.grid());
  std::vector<double> lv;
  if (levels) {
    lv = *levels;
  } else {
    const double lo = metric->K.minCoeff(), hi = metric->K.maxCoeff();
    for (int k = 1; k <= 5; ++k) lv.push_back(lo + (hi - lo) * k / 6.0);
  }
  std::vector<IsolineCurve> curves;
  for (double level : lv) {
    const IsolineSet s = extract_isolines(*metric, level);
    if (s.degenerate) throw Error("curvature is constant; there are no isolines");
    for (const IsolineCurve& cv : s.curves) curves.push_back(cv);
  }
  {
    std::ofstream f = open_file(dir / "isolines.csv");
    write_isolines_csv(curves, f);
  }
  const PseudoVector pc{3, c[0], c[1]};
  std::ofstream f = open_file(dir / "isoline_integrals.csv");
  f << "curve,level,closed,lift_p,lift_q,period,integral,error,min_grad,level_error\n";
  for (std::size_t k = 0; k < curves.size(); ++k) {
    const IsolineCurve& cv = curves[k];
    const IsolineIntegral I = isoline_integral(cv, pc, cf);
    f << k << "," << num(cv.level) << "," << (cv.closed ? 1 : 0) << "," << cv.lift[0] << "," << cv.lift[1] << ","
      << num(cv.period) << "," << num(I.value) << "," << num(I.error) << "," << num(cv.min_grad) << ","
      << num(cv.level_error) << "\n";
  }
  log << curves.size() << " isoline components on " << lv.size() << " levels\n";
}

void cmd_lambda(const MetricConfig& cfg, const std::string& out, std::ostream& log) {
  report_warnings(cfg, log);
  const fs::path dir = prepare_dir(out);
  const auto metric = MetricGrid::make(cfg.factor(), cfg.grid());
  const LambdaForm L = lambda_form(*metric);
  write_grids_csv(dir / "lambda.csv", metric->grid(), {"L1", "L2", "L1_complex", "L2_complex"},
                  {&L.L1, &L.L2, &L.L1_complex, &L.L2_complex});
  const Vec2 means = mean_value_check(*metric);
  nlohmann::ordered_json j;
  j["metric_id"] = cfg.metric_id;
  j["grid_n"] = metric->n();
  j["norm"] = L.norm;
  j["route_discrepancy"] = L.route_discrepancy;
  j["imag_residue"] = L.imag_residue;
  j["parts_residual"] = L.parts_residual;
  j["area"] = metric->total_area();
  j["mean_L1"] = means(0);
  j["mean_L2"] = means(1);
  write_text(dir / "lambda_report.json", canonical_json(j));
  log << "max |Lambda| " << num(L.norm) << ", route discrepancy " << num(L.route_discrepancy)
      << ", integrals (" << num(means(0)) << ", " << num(means(1)) << ")\n";
}

}  // namespace kt::cli
