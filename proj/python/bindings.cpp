#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "commands.hpp"
#include "ktorus/geodesic_engine.hpp"
#include "ktorus/known_metrics.hpp"
#include "ktorus/obstruction_pipeline.hpp"
#include "ktorus/rank3_analysis.hpp"
#include "ktorus/spectral_solver.hpp"

namespace py = pybind11;
using namespace kt;

namespace {

ConformalFactor make_factor(const Vec2& e1, const Vec2& e2, const std::vector<std::tuple<int, int, Complex>>& modes) {
  std::vector<FourierMode> fm;
  for (const auto& [k1, k2, amp] : modes) fm.push_back({k1, k2, amp});
  return ConformalFactor(Lattice(e1, e2), fm);
}

int grid_or_default(const ConformalFactor& cf, int n) {
  if (n > 0) return n;
  const int d = std::max(64, 4 * cf.max_degree());
  return d + d % 2;
}

}  // namespace

PYBIND11_MODULE(_ktorus, m) {
  m.doc() = "Killing tensor analysis on conformal 2-tori";
  py::register_exception<Error>(m, "Error", PyExc_ValueError);

  py::class_<ConformalFactor>(m, "ConformalFactor")
      .def(py::init(&make_factor), py::arg("e1") = Vec2(1.0, 0.0), py::arg("e2") = Vec2(0.0, 1.0),
           py::arg("modes") = std::vector<std::tuple<int, int, Complex>>{},
           "mu = sum of amplitude * exp(2 pi i <k, x>) over the listed modes and their conjugate partners")
      .def("mu", [](const ConformalFactor& cf, double x, double y) { return cf.jet({x, y}).mu; })
      .def("curvature", [](const ConformalFactor& cf, double x, double y) { return gaussian_curvature(cf, {x, y}); })
      .def("max_degree", &ConformalFactor::max_degree)
      .def("transformed", &ConformalFactor::transformed, py::arg("a"))
      .def_property_readonly("e1", [](const ConformalFactor& cf) { return Vec2(cf.lattice().e1()); })
      .def_property_readonly("e2", [](const ConformalFactor& cf) { return Vec2(cf.lattice().e2()); });

  m.def("known_metric", &metrics::by_name, py::arg("name"),
        "flat, rotation, liouville, generic, generic_alt or diagonal_rotation");

  m.def(
      "lambda_form",
      [](const ConformalFactor& cf, int n) {
        const auto mg = MetricGrid::make(cf, grid_or_default(cf, n));
        const LambdaForm L = lambda_form(*mg);
        const Vec2 means = mean_value_check(*mg);
        py::dict d;
        d["L1"] = L.L1;
        d["L2"] = L.L2;
        d["route_discrepancy"] = L.route_discrepancy;
        d["norm"] = L.norm;
        d["means"] = means;
        d["area"] = mg->total_area();
        return d;
      },
      py::arg("cf"), py::arg("n") = 0);

  m.def(
      "kernel",
      [](const ConformalFactor& cf, int rank, int n) {
        const auto mg = MetricGrid::make(cf, grid_or_default(cf, n));
        const KernelReport k = kernel_delta_pd(rank, mg);
        py::dict d;
        d["a1"] = k.k1.a;
        d["b1"] = k.k1.b;
        d["a2"] = k.k2.a;
        d["b2"] = k.k2.b;
        d["null_dim"] = k.null_dim;
        d["singular_values"] = k.singular_values;
        d["subspace_error"] = k.subspace_error;
        return d;
      },
      py::arg("cf"), py::arg("rank"), py::arg("n") = 0);

  m.def(
      "potentiality",
      [](const ConformalFactor& cf, int rank, int n) {
        const auto mg = MetricGrid::make(cf, grid_or_default(cf, n));
        const PotentialTestResult r = potentiality_test(rank, mg);
        py::dict d;
        d["residual"] = r.residual_rel;
        d["degenerate"] = r.degenerate;
        d["best_c"] = r.best_c ? py::make_tuple(r.best_c->c1, r.best_c->c2) : py::object(py::none());
        return d;
      },
      py::arg("cf"), py::arg("rank"), py::arg("n") = 0);

  m.def(
      "closed_geodesic",
      [](const ConformalFactor& cf, int p, int q) {
        const GeodesicOrbit o = find_closed_geodesic(cf, p, q);
        Eigen::MatrixXd s(static_cast<Eigen::Index>(o.samples.size()), 4);
        for (std::size_t k = 0; k < o.samples.size(); ++k) {
          const auto& v = o.samples[k];
          s.row(static_cast<Eigen::Index>(k)) << v.t, v.x, v.y, v.theta;
        }
        py::dict d;
        d["samples"] = s;
        d["period"] = o.period;
        d["closed"] = o.closed;
        d["closure_residual"] = o.closure_residual;
        return d;
      },
      py::arg("cf"), py::arg("p"), py::arg("q"), "Samples as rows (t, x, y, theta)");

  m.def(
      "analyze_config",
      [](const std::string& text, const std::vector<int>& ranks, const std::string& metric_id) {
        const cli::MetricConfig cfg = cli::parse_config(text, metric_id);
        py::gil_scoped_release release;
        return to_json(run_full(cfg.factor(), ranks, cfg.pipeline_options(), cfg.metric_id));
      },
      py::arg("config_json"), py::arg("ranks") = std::vector<int>{1, 2, 3, 4}, py::arg("metric_id") = "metric",
      "Canonical ObstructionReport JSON for a config document");
}
