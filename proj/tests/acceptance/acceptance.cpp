// Acceptance checks 1 to 12, one PASS/FAIL line each.
// Usage: ktorus_acceptance [N ...] [--fixtures DIR] [--write-ratio-fixture PATH]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "commands.hpp"
#include "ktorus/canonical_json.hpp"
#include "ktorus/geodesic_engine.hpp"
#include "ktorus/known_metrics.hpp"
#include "ktorus/obstruction_pipeline.hpp"
#include "ktorus/random_fields.hpp"
#include "ktorus/rank3_analysis.hpp"
#include "ktorus/spectral_solver.hpp"

using namespace kt;

namespace {

namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string sci(double v) { return fmt("%.3g", v); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fixture_dir = KTORUS_FIXTURE_DIR;
std::string ratio_fixture = KTORUS_RATIO_FIXTURE;

// 1. <d f, h> + <f, delta h> = 0 for random pairs of ranks r and r + 1 <= 4 at 128^2.
Outcome adjointness() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  int bad = 0;
  for (int k = 0; k < 50; ++k) {
    const int r = k % 4;
    const auto mg = MetricGrid::make(metrics::random(1000 + k, 3, 0.1), 128);
    const auto f = random::sym_field(mg, r, 6, 2 * k + 1);
    const auto h = random::sym_field(mg, r + 1, 6, 2 * k + 2);
    const double defect = std::abs(l2_inner(inner_derivative(f), h) + l2_inner(f, divergence(h)));
    const double rel = defect / (l2_norm(f) * l2_norm(h));
    worst = std::max(worst, rel);
    if (rel > 1e-9) ++bad;
  }
  const double t = seconds_since(t0);
  return {bad == 0 && t < 30.0, "50 pairs, worst relative defect " + sci(worst) + " (<= 1e-9), " + fmt("%.1f", t) +
                                    " s (< 30 s)"};
}

// 2. Chain residuals vanish exactly when d f does.
Outcome chain_equivalence() {
  struct Case {
    SymTensorField f;
    std::string label;
  };
  std::vector<Case> cases;
  std::mt19937_64 rng(77);
  std::normal_distribution<double> gauss;
  for (int k = 0; k < 20; ++k) {
    const auto mg = MetricGrid::make(metrics::random(300 + k, 3, 0.1), 48);
    cases.push_back({random::sym_field(mg, 1 + k % 4, 4, 400 + k), "random"});
  }
  // Killing fields: constants on the flat torus; combinations of xi = lambda dx and g
  // on the rotation metric.
  const auto flat = MetricGrid::make(metrics::flat(), 48);
  for (int r = 1; r <= 4; ++r) {
    std::vector<Grid> comps;
    for (int s = 0; s <= r; ++s) comps.push_back(Grid::Constant(48, 48, gauss(rng)));
    cases.push_back({SymTensorField(flat, comps), "flat constant"});
  }
  const auto rot = MetricGrid::make(metrics::rotation(), 48);
  const SymTensorField xi(rot, {rot->lambda, rot->grid().zeros()});
  const SymTensorField g = SymTensorField::metric_tensor(rot);
  std::vector<std::vector<SymTensorField>> by_rank(5);
  by_rank[1] = {xi};
  by_rank[2] = {sym_product(xi, xi), g};
  for (int r = 3; r <= 4; ++r) {
    for (const auto& p : by_rank[r - 1]) by_rank[r].push_back(sym_product(p, xi));
    for (const auto& p : by_rank[r - 2]) by_rank[r].push_back(sym_product(p, g));
  }
  for (int r = 1; r <= 4; ++r) {
    SymTensorField f = gauss(rng) * by_rank[r][0];
    for (std::size_t s = 1; s < by_rank[r].size(); ++s) f = f + gauss(rng) * by_rank[r][s];
    cases.push_back({f, "rotation Killing"});
  }
  int agree = 0, killing = 0;
  double killing_chain = 0.0, killing_df = 0.0, other_chain = 1e300, other_df = 1e300;
  for (const Case& c : cases) {
    const double scale = c.f.max_norm();
    const auto res = chain_residuals(c.f);
    const double chain = *std::max_element(res.begin(), res.end()) / scale;
    const double df = inner_derivative(c.f).max_norm() / scale;
    const bool chain_zero = chain <= 1e-9, df_zero = df <= 1e-8;
    if (chain_zero == df_zero) ++agree;
    if (df_zero) {
      ++killing;
      killing_chain = std::max(killing_chain, chain);
      killing_df = std::max(killing_df, df);
    } else {
      other_chain = std::min(other_chain, chain);
      other_df = std::min(other_df, df);
    }
  }
  const int total = static_cast<int>(cases.size());
  return {agree == total && killing == 8,
          std::to_string(agree) + "/" + std::to_string(total) + " agree; Killing: chain " + sci(killing_chain) +
              ", df " + sci(killing_df) + "; random: smallest chain " + sci(other_chain) + ", df " +
              sci(other_df)};
}

// 3. Two-dimensional kernel of delta p d spanned by the weighted constants.
Outcome kernel_dimension() {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  double worst_sub = 0.0, worst_null = 0.0, smallest_gap = 1e300;
  std::string failures;
  for (const char* name : {"flat", "rotation", "liouville", "generic", "generic_alt"}) {
    const ConformalFactor cf = metrics::by_name(name);
    const auto mg = MetricGrid::make(cf, std::max(64, 4 * cf.max_degree()));
    for (int m = 1; m <= 4; ++m) {
      const KernelReport rep = kernel_delta_pd(m, mg, std::max(21, 2 * cf.max_degree() + 1));
      const bool good = rep.null_dim == 2 && rep.subspace_error <= 1e-8;
      if (!good) {
        ok = false;
        failures += std::string(" ") + name + " m=" + std::to_string(m) + " (dim " + std::to_string(rep.null_dim) +
                    ", err " + sci(rep.subspace_error) + ")";
      }
      worst_sub = std::max(worst_sub, rep.subspace_error);
      worst_null = std::max(worst_null, rep.singular_values[1]);
      smallest_gap = std::min(smallest_gap, rep.singular_values[2]);
    }
  }
  const double t = seconds_since(t0);
  return {ok && t < 120.0, "5 metrics x m=1..4: null singular values <= " + sci(worst_null) + ", third >= " +
                               sci(smallest_gap) + ", subspace error " + sci(worst_sub) + ", " + fmt("%.1f", t) +
                               " s (< 120 s)" + failures};
}

// 4. Clairaut integral e^mu cos(theta) on mu = 0.1 cos(2 pi y).
Outcome clairaut() {
  const ConformalFactor cf = metrics::rotation();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const BundlePoint start(u(rng), u(rng), 2.0 * M_PI * u(rng));
    const GeodesicOrbit o = integrate_flow(cf, start, 50.0, 1e-11, 2000);
    const double c0 = clairaut_integral(cf, o.samples.front());
    for (const auto& s : o.samples) worst = std::max(worst, std::abs(clairaut_integral(cf, s) - c0));
  }
  return {worst <= 1e-7, "10 geodesics, t in [0, 50]: max drift " + sci(worst) + " (<= 1e-7)"};
}

// 5. Rank-2 Killing field of lambda = 1.2 + 0.2 cos(2 pi x) + 0.3 cos(2 pi y).
Outcome liouville_rank2() {
  const ConformalFactor cf = metrics::liouville();
  const auto mg = MetricGrid::make(cf, 64);
  const ClassicalField f = rank2_killing_field({2, 1.0, 0.0}, mg);
  // Oracle: f = 2 lambda (b dx^2 - a dy^2) + C g with a = 0.6 + 0.2 cos(2 pi x).
  const SpectralGrid& g = mg->grid();
  const Grid lam = g.sample(
      [](const Vec2& x) { return 1.2 + 0.2 * std::cos(2 * M_PI * x.x()) + 0.3 * std::cos(2 * M_PI * x.y()); });
  const Grid a = g.sample([](const Vec2& x) { return 0.6 + 0.2 * std::cos(2 * M_PI * x.x()); });
  const Grid C11 = (f.f[0] - 2.0 * lam * (lam - a)) / lam;
  const Grid C22 = (f.f[2] + 2.0 * lam * a) / lam;
  const double C = C11(0, 0);
  const double oracle = std::max({(C11 - C).abs().maxCoeff(), (C22 - C).abs().maxCoeff(), f.f[1].abs().maxCoeff()});
  const FirstIntegral F(f.f);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double drift = 0.0;
  for (int k = 0; k < 5; ++k) {
    const GeodesicOrbit o = integrate_flow(cf, {u(rng), u(rng), 2 * M_PI * u(rng)}, 20.0, 1e-12, 400);
    const double F0 = F({o.samples[0].x, o.samples[0].y}, o.samples[0].theta);
    for (const auto& s : o.samples) drift = std::max(drift, std::abs(F({s.x, s.y}, s.theta) - F0));
  }
  return {f.df <= 1e-8 && drift <= 1e-7 && oracle <= 1e-8,
          "||df||_inf " + sci(f.df) + " (<= 1e-8), F drift over 5 geodesics " + sci(drift) +
              " (<= 1e-7), distance to explicit field " + sci(oracle)};
}

std::vector<MetricGridPtr> random_metrics(int n) {
  std::vector<MetricGridPtr> out;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) out.push_back(MetricGrid::make(metrics::random(seed, 3, 0.1), n));
  return out;
}

// 6. Lambda from the complex route against the real route.
Outcome lambda_routes() {
  double worst = 0.0;
  for (const auto& mg : random_metrics(64)) {
    const LambdaForm L = lambda_form(*mg);
    worst = std::max(worst, L.route_discrepancy / (1.0 + L.norm));
  }
  return {worst <= 1e-10, "10 random metrics: max |difference| / (1 + ||Lambda||) " + sci(worst) + " (<= 1e-10)"};
}

// 7. delta^2 T^c = -c2 Lambda_1 + c1 Lambda_2, absolute.
Outcome delta2_identity() {
  double worst = 0.0, lam = 0.0;
  int pass = 0;
  for (const auto& mg : random_metrics(128)) {
    double local = 0.0;
    for (const PseudoVector c : {PseudoVector{3, 1.0, 0.0}, PseudoVector{3, 0.0, 1.0}}) {
      local = std::max(local, delta2_T(c, mg).discrepancy);
    }
    if (local <= 1e-9) ++pass;
    worst = std::max(worst, local);
    lam = std::max(lam, lambda_form(*mg).norm);
  }
  return {pass == 10, std::to_string(pass) + "/10 metrics within 1e-9 at 128^2; max " + sci(worst) +
                          " with ||Lambda||_inf up to " + sci(lam) + " (relative " + sci(worst / lam) + ")"};
}

// 8. Integrals of Lambda over the torus vanish.
Outcome mean_values() {
  double worst = 0.0;
  for (const auto& mg : random_metrics(64)) {
    const Vec2 mv = mean_value_check(*mg);
    const double scale = mg->total_area() * lambda_form(*mg).norm;
    worst = std::max(worst, std::max(std::abs(mv(0)), std::abs(mv(1))) / scale);
  }
  return {worst <= 1e-9, "10 random metrics: max |integral| / (area ||Lambda||_inf) " + sci(worst) + " (<= 1e-9)"};
}

// 9. Line integral of Phi = grad-perp K . grad u along isolines equals u(end) - u(start).
Outcome transport_forward() {
  const ConformalFactor cf = metrics::generic();
  const auto m = MetricGrid::make(cf, 128);
  const auto small = MetricGrid::make(cf, 24);
  const SpectralGrid& g = small->grid();
  const Grid w = random::band_limited(g, 3, 17);
  const Vec2 alpha(0.4, -0.7);
  const CGrid sw = g.forward(w), sx = g.forward(g.dx(w)), sy = g.forward(g.dy(w));
  auto uval = [&](const Vec2& x) { return g.interpolate(sw, x) + alpha.dot(x); };
  auto phi = [&](const Vec2& x) {
    const MetricJet j = cf.jet(x);
    const Vec2 gk = curvature_gradient(j);
    const double ux = g.interpolate(sx, x) + alpha(0);
    const double uy = g.interpolate(sy, x) + alpha(1);
    return std::exp(-2.0 * j.mu) * (-gk(1) * ux + gk(0) * uy);
  };
  double worst = 0.0;
  int checked = 0;
  const double lo = m->K.minCoeff(), hi = m->K.maxCoeff();
  for (int k = 1; k <= 5; ++k) {
    const IsolineSet set = extract_isolines(*m, lo + (hi - lo) * k / 6.0);
    if (set.curves.empty()) continue;
    const IsolineCurve& c = set.curves.front();
    const Vec2 start(c.samples.front().x, c.samples.front().y);
    Vec2 end;
    const double I = isoline_arc_integral(cf, start, 0.43 * c.period, phi, 1e-11, &end);
    worst = std::max(worst, std::abs(I - (uval(end) - uval(start))));
    ++checked;
  }
  return {checked == 5 && worst <= 1e-6,
          std::to_string(checked) + " isolines: max |integral - (u(end) - u(start))| " + sci(worst) + " (<= 1e-6)"};
}

// 10. Projective separation of ray-integral pairs on two closed geodesics.
struct RatioRun {
  std::vector<RatioVerdict> verdicts;  // m = 0..3
  std::vector<GeodesicOrbit> orbits;
};

RatioRun ratio_run(const ConformalFactor& cf, double ode_tol, int samples) {
  ClosedGeodesicOptions o;
  o.ode_tol = ode_tol;
  o.samples = samples;
  RatioRun run;
  run.orbits = find_orbit_menu(cf, {{1, 0}, {0, 1}}, o);
  for (int m = 0; m <= 3; ++m) run.verdicts.push_back(ratio_test(run.orbits, cf, m));
  return run;
}

nlohmann::ordered_json ratio_json(const RatioRun& run) {
  nlohmann::ordered_json j;
  j["metric_id"] = "generic";
  j["classes"] = {{1, 0}, {0, 1}};
  nlohmann::ordered_json orbits = nlohmann::ordered_json::array();
  for (const auto& o : run.orbits) {
    orbits.push_back({{"class", {o.homotopy_class[0], o.homotopy_class[1]}},
                      {"closed", o.closed},
                      {"period", o.period},
                      {"closure_residual", o.closure_residual}});
  }
  j["orbits"] = orbits;
  nlohmann::ordered_json per_m = nlohmann::ordered_json::array();
  for (const auto& v : run.verdicts) {
    nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
    for (const auto& p : v.pairs) {
      pairs.push_back({{"class", {p.homotopy_class[0], p.homotopy_class[1]}},
                       {"I_num", p.I_num},
                       {"err_num", p.err_num},
                       {"I_den", p.I_den},
                       {"err_den", p.err_den}});
    }
    per_m.push_back({{"m", v.m},
                     {"verdict", to_string(v.status)},
                     {"max_distance", v.max_distance},
                     {"error_estimate", v.error_estimate},
                     {"separation", v.separation},
                     {"informative", v.informative},
                     {"pairs", pairs}});
  }
  j["ratio"] = per_m;
  return j;
}

Outcome ratio_obstruction() {
  const ConformalFactor cf = metrics::generic();
  const RatioRun base = ratio_run(cf, 1e-11, 1024);
  const RatioRun fine = ratio_run(cf, 1e-12, 2048);
  bool closed = true;
  for (const auto& o : base.orbits) closed = closed && o.closed;
  int obstructed = -1;
  double best_sep = 0.0, largest = 0.0, largest_err = 0.0;
  for (int m = 0; m <= 3; ++m) {
    const RatioVerdict& a = base.verdicts[m];
    const RatioVerdict& b = fine.verdicts[m];
    best_sep = std::max(best_sep, a.separation);
    for (const auto& p : a.pairs) {
      largest = std::max({largest, std::abs(p.I_num), std::abs(p.I_den)});
      largest_err = std::max({largest_err, p.err_num, p.err_den});
    }
    const bool stable = b.max_distance > 0.0 && a.max_distance <= 2.0 * b.max_distance &&
                        b.max_distance <= 2.0 * a.max_distance;
    if (obstructed < 0 && a.status == RatioStatus::Obstructed && b.status == RatioStatus::Obstructed && stable) {
      obstructed = m;
    }
  }
  // Regression against the frozen record.
  std::string regression = "no frozen record";
  {
    std::ifstream in(ratio_fixture);
    if (in) {
      const auto frozen = nlohmann::json::parse(in);
      double dev = 0.0;
      bool same_verdicts = true;
      for (int m = 0; m <= 3; ++m) {
        const auto& fm = frozen["ratio"][m];
        same_verdicts = same_verdicts && fm["verdict"] == to_string(base.verdicts[m].status);
        for (std::size_t k = 0; k < base.verdicts[m].pairs.size(); ++k) {
          const auto& p = base.verdicts[m].pairs[k];
          dev = std::max({dev, std::abs(p.I_num - fm["pairs"][k]["I_num"].get<double>()),
                          std::abs(p.I_den - fm["pairs"][k]["I_den"].get<double>())});
        }
      }
      regression = std::string("frozen record ") + (same_verdicts ? "reproduced" : "CHANGED") + " (max deviation " +
                   sci(dev) + ")";
    }
  }
  const std::string verdict = obstructed >= 0 ? "OBSTRUCTED at m=" + std::to_string(obstructed) : "INCONCLUSIVE";
  return {closed && obstructed >= 0,
          "classes (1,0),(0,1) " + std::string(closed ? "closed" : "NOT closed") + "; verdict " + verdict +
              "; best separation " + sci(best_sep) + "x error (needs > 10x); largest |I| " + sci(largest) +
              " against error " + sci(largest_err) + " (the integrals of Z vanish on closed geodesics); " +
              regression};
}

// 11. Invariance under z = a z' with a = 0.8 + 0.6 i.
Outcome covariance() {
  const Complex a(0.8, 0.6);
  double pairing = 0.0, pot = 0.0;
  for (const char* name : {"generic", "generic_alt", "rotation"}) {
    const ConformalFactor cf = metrics::by_name(name);
    const ConformalFactor cfp = cf.transformed(a);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int k = 0; k < 10; ++k) {
      const PseudoVector c{3, u(rng), u(rng)};
      const PseudoVector cp = c.transformed(a);
      const Vec2 x(u(rng), u(rng));
      const Complex zp = Complex(x(0), x(1)) / a;
      const Vec2 L = lambda_at(cf, x);
      const Vec2 Lp = lambda_at(cfp, {zp.real(), zp.imag()});
      pairing = std::max(pairing, std::abs(c.c1 * L(0) + c.c2 * L(1) - (cp.c1 * Lp(0) + cp.c2 * Lp(1))));
    }
    const auto mg = MetricGrid::make(cf, 32);
    const auto mgp = MetricGrid::make(cfp, 32);
    for (int m = 1; m <= 3; ++m) {
      const double r = potentiality_test(m, mg).residual_rel;
      const double rp = potentiality_test(m, mgp).residual_rel;
      pot = std::max(pot, std::abs(r - rp));
    }
  }
  return {pairing <= 1e-10 && pot <= 1e-9, "max |c.Lambda - c'.Lambda'| " + sci(pairing) +
                                               " (<= 1e-10); max potentiality residual change " + sci(pot) +
                                               " (<= 1e-9)"};
}

// 12. Byte-identical analyze reports.
Outcome determinism() {
  const fs::path tmp = fs::temp_directory_path() / "ktorus_acceptance_determinism";
  fs::create_directories(tmp);
  int identical = 0, total = 0;
  std::string detail;
  for (const char* name : {"flat", "rotation", "liouville", "generic"}) {
    const cli::MetricConfig cfg = cli::load_config(fixture_dir + "/" + name + ".json");
    std::ostringstream log;
    std::string text[2];
    for (int run = 0; run < 2; ++run) {
      const fs::path p = tmp / (std::string(name) + "_" + std::to_string(run) + ".json");
      cli::cmd_analyze(cfg, {1, 2, 3, 4}, p.string(), log);
      std::ifstream in(p);
      std::stringstream s;
      s << in.rdbuf();
      text[run] = s.str();
    }
    ++total;
    if (!text[0].empty() && text[0] == text[1]) ++identical;
    detail += std::string(" ") + name + " " + std::to_string(text[0].size()) + " B";
  }
  fs::remove_all(tmp);
  return {identical == total, std::to_string(identical) + "/" + std::to_string(total) + " fixtures identical:" + detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<const char*, std::function<Outcome()>>> criteria{
      {1, {"adjointness", adjointness}},
      {2, {"chain equivalence", chain_equivalence}},
      {3, {"kernel of delta p d", kernel_dimension}},
      {4, {"Clairaut conservation", clairaut}},
      {5, {"Liouville rank-2 Killing field", liouville_rank2}},
      {6, {"Lambda cross-check", lambda_routes}},
      {7, {"delta^2 T identity", delta2_identity}},
      {8, {"mean-value identity", mean_values}},
      {9, {"transport forward check", transport_forward}},
      {10, {"ratio-test obstruction", ratio_obstruction}},
      {11, {"pseudo-weight covariance", covariance}},
      {12, {"end-to-end determinism", determinism}},
  };
  std::vector<int> selected;
  for (int k = 1; k < argc; ++k) {
    const std::string arg = argv[k];
    if (arg == "--fixtures" && k + 1 < argc) {
      fixture_dir = argv[++k];
    } else if (arg == "--write-ratio-fixture" && k + 1 < argc) {
      const std::string path = argv[++k];
      std::ofstream(path) << canonical_json(ratio_json(ratio_run(metrics::generic(), 1e-11, 1024)));
      std::printf("wrote %s\n", path.c_str());
      return 0;
    } else {
      const int n = std::atoi(arg.c_str());
      if (!criteria.count(n)) {
        std::fprintf(stderr, "unknown criterion '%s'\n", arg.c_str());
        return 2;
      }
      selected.push_back(n);
    }
  }
  if (selected.empty()) {
    for (const auto& [n, _] : criteria) selected.push_back(n);
  }
  int failed = 0;
  for (int n : selected) {
    const auto& [name, run] = criteria.at(n);
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %2d %-32s %s  %s [%.1f s]\n", n, name, o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
