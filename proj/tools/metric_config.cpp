#include "metric_config.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace kt::cli {

namespace {

using json = nlohmann::json;

constexpr int kMaxGrid = 2048;

[[noreturn]] void field_error(const std::string& field, const std::string& what) {
  throw ConfigError("config field " + field + ": " + what);
}

double number(const json& j, const std::string& field) {
  if (!j.is_number()) field_error(field, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) field_error(field, "expected a finite number");
  return v;
}

int integer(const json& j, const std::string& field) {
  if (!j.is_number_integer()) field_error(field, "expected an integer");
  return j.get<int>();
}

Vec2 pair_of_numbers(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 2) field_error(field, "expected an array of 2 numbers");
  return {number(j[0], field + "[0]"), number(j[1], field + "[1]")};
}

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!known.count(it.key())) field_error(where + it.key(), "unknown key");
  }
}

// Line and column of a byte offset.
std::pair<int, int> locate(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t k = 0; k < std::min(byte, text.size()); ++k) {
    if (text[k] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

int MetricConfig::grid() const {
  if (grid_n > 0) return grid_n;
  const int n = std::max(64, 4 * factor().max_degree());
  return n + n % 2;
}

PipelineOptions MetricConfig::pipeline_options() const {
  PipelineOptions o;
  o.grid_n = grid_n;
  const ToleranceOverrides& t = tolerances;
  if (t.pass_tol) o.pass_tol = *t.pass_tol;
  if (t.identity_tol) o.identity_tol = *t.identity_tol;
  if (t.margin) o.margin = *t.margin;
  if (t.eps_pot) o.potential.eps_pot = *t.eps_pot;
  if (t.ode_tol) o.geodesic.ode_tol = *t.ode_tol;
  if (t.tol_close) o.geodesic.tol_close = *t.tol_close;
  if (t.fourth_order_tol) o.fourth_order.tol = *t.fourth_order_tol;
  return o;
}

MetricConfig parse_config(const std::string& text, const std::string& default_id) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = locate(text, e.byte > 0 ? e.byte - 1 : 0);
    std::string what = e.what();
    const auto cut = what.find("syntax error");
    if (cut != std::string::npos) what = what.substr(cut);
    throw ConfigError("config line " + std::to_string(line) + ", column " + std::to_string(col) + ": " +
                      what);
  }
  if (!root.is_object()) throw ConfigError("config line 1: top level must be an object");
  if (root.contains("g12")) {
    field_error("g12", "only conformal metrics e^{2 mu}(dx^2 + dy^2) are supported; remove g12");
  }
  reject_unknown(root, {"metric_id", "lattice", "mu_fourier", "grid_n", "tolerances"}, "");

  MetricConfig cfg;
  cfg.metric_id = default_id;
  if (root.contains("metric_id")) {
    if (!root["metric_id"].is_string()) field_error("metric_id", "expected a string");
    cfg.metric_id = root["metric_id"].get<std::string>();
  }

  if (!root.contains("lattice")) field_error("lattice", "missing");
  const json& lat = root["lattice"];
  if (!lat.is_object()) field_error("lattice", "expected an object with e1 and e2");
  reject_unknown(lat, {"e1", "e2"}, "lattice.");
  if (!lat.contains("e1")) field_error("lattice.e1", "missing");
  if (!lat.contains("e2")) field_error("lattice.e2", "missing");
  const Vec2 e1 = pair_of_numbers(lat["e1"], "lattice.e1");
  const Vec2 e2 = pair_of_numbers(lat["e2"], "lattice.e2");
  try {
    cfg.lattice = Lattice(e1, e2);
  } catch (const Error& e) {
    field_error("lattice", e.what());
  }

  if (!root.contains("mu_fourier")) field_error("mu_fourier", "missing");
  const json& modes = root["mu_fourier"];
  if (!modes.is_array()) field_error("mu_fourier", "expected an array");
  std::set<std::pair<int, int>> seen;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const std::string f = "mu_fourier[" + std::to_string(i) + "]";
    const json& m = modes[i];
    if (!m.is_object()) field_error(f, "expected an object {k, re, im}");
    reject_unknown(m, {"k", "re", "im"}, f + ".");
    if (!m.contains("k")) field_error(f + ".k", "missing");
    const json& k = m["k"];
    if (!k.is_array() || k.size() != 2) field_error(f + ".k", "expected an array of 2 integers");
    FourierMode mode;
    mode.k1 = integer(k[0], f + ".k[0]");
    mode.k2 = integer(k[1], f + ".k[1]");
    if (!m.contains("re")) field_error(f + ".re", "missing");
    const double re = number(m["re"], f + ".re");
    const double im = m.contains("im") ? number(m["im"], f + ".im") : 0.0;
    if (mode.k1 == 0 && mode.k2 == 0 && im != 0.0) field_error(f + ".im", "the k = (0, 0) mode must be real");
    if (!seen.insert({mode.k1, mode.k2}).second) field_error(f + ".k", "duplicate frequency");
    mode.amplitude = Complex(re, im);
    cfg.modes.push_back(mode);
  }
  // Listed partners must be conjugate; ConformalFactor checks, the field is named here.
  try {
    (void)cfg.factor();
  } catch (const Error& e) {
    field_error("mu_fourier", e.what());
  }

  int degree = 0;
  for (const FourierMode& m : cfg.modes) {
    if (std::abs(m.amplitude) > 0.0) degree = std::max({degree, std::abs(m.k1), std::abs(m.k2)});
  }
  if (root.contains("grid_n")) {
    cfg.grid_n = integer(root["grid_n"], "grid_n");
    if (cfg.grid_n < 0) field_error("grid_n", "must be positive (or 0 for automatic)");
    if (cfg.grid_n > kMaxGrid) field_error("grid_n", "must be at most " + std::to_string(kMaxGrid));
  }
  if (cfg.grid_n > 0) {
    int n = std::max(cfg.grid_n, 4 * degree);
    n += n % 2;
    if (n != cfg.grid_n) {
      cfg.warnings.push_back("grid_n " + std::to_string(cfg.grid_n) + " raised to " + std::to_string(n) +
                             " (needs an even value >= 4 * max degree = " + std::to_string(4 * degree) + ")");
      cfg.grid_n = n;
    }
  }

  if (root.contains("tolerances")) {
    const json& t = root["tolerances"];
    if (!t.is_object()) field_error("tolerances", "expected an object");
    reject_unknown(t,
                   {"pass_tol", "identity_tol", "margin", "eps_pot", "ode_tol", "tol_close", "fourth_order_tol"},
                   "tolerances.");
    auto read = [&](const char* key, std::optional<double>& slot) {
      if (!t.contains(key)) return;
      const double v = number(t[key], std::string("tolerances.") + key);
      if (!(v > 0.0)) field_error(std::string("tolerances.") + key, "must be positive");
      slot = v;
    };
    ToleranceOverrides& o = cfg.tolerances;
    read("pass_tol", o.pass_tol);
    read("identity_tol", o.identity_tol);
    read("margin", o.margin);
    read("eps_pot", o.eps_pot);
    read("ode_tol", o.ode_tol);
    read("tol_close", o.tol_close);
    read("fourth_order_tol", o.fourth_order_tol);
  }
  return cfg;
}

MetricConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), std::filesystem::path(path).stem().string());
}

}  // namespace kt::cli
