#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "commands.hpp"

namespace {

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = s.find(',', start);
    out.push_back(s.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
std::vector<T> parse_list(const std::string& s, const char* flag) {
  std::vector<T> out;
  for (const std::string& item : split(s)) {
    try {
      std::size_t used = 0;
      if constexpr (std::is_same_v<T, int>) {
        out.push_back(std::stoi(item, &used));
      } else {
        out.push_back(std::stod(item, &used));
      }
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw kt::Error(std::string(flag) + ": cannot parse '" + item + "'");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Killing tensor analysis on conformal 2-tori. KT_THREADS caps worker threads."};
  app.require_subcommand(1);

  std::string config, out, ranks = "1,2,3,4", cls, levels, cvec = "1,0";
  int rank = 2;

  auto* analyze = app.add_subcommand("analyze", "Per-rank obstruction report as JSON");
  analyze->add_option("config", config, "Metric config (JSON)")->required();
  analyze->add_option("--ranks", ranks, "Comma-separated Killing ranks")->capture_default_str();
  analyze->add_option("--out", out, "Report path, '-' for stdout")->required();

  auto* geodesics = app.add_subcommand("geodesics", "Closed geodesic in a class plus ray integrals");
  geodesics->add_option("config", config, "Metric config (JSON)")->required();
  geodesics->add_option("--class", cls, "Homotopy class p,q")->required();
  geodesics->add_option("--out", out, "Output directory")->required();

  auto* kernel = app.add_subcommand("kernel", "Kernel fields of delta p d and the SVD report");
  kernel->add_option("config", config, "Metric config (JSON)")->required();
  kernel->add_option("--rank", rank, "Tensor rank m")->capture_default_str();
  kernel->add_option("--out", out, "Output directory")->required();

  auto* isolines = app.add_subcommand("isolines", "Curvature isolines and their Lambda integrals");
  isolines->add_option("config", config, "Metric config (JSON)")->required();
  isolines->add_option("--levels", levels, "Comma-separated levels of K (default: 5 inside its range)");
  isolines->add_option("--c", cvec, "Weight-3 pseudovector c1,c2")->capture_default_str();
  isolines->add_option("--out", out, "Output directory")->required();

  auto* lambda = app.add_subcommand("lambda", "Lambda grids by both routes and the mean values");
  lambda->add_option("config", config, "Metric config (JSON)")->required();
  lambda->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const kt::cli::MetricConfig cfg = kt::cli::load_config(config);
    if (analyze->parsed()) {
      kt::cli::cmd_analyze(cfg, parse_list<int>(ranks, "--ranks"), out, std::cerr);
    } else if (geodesics->parsed()) {
      const auto pq = parse_list<int>(cls, "--class");
      if (pq.size() != 2) throw kt::Error("--class needs exactly two integers p,q");
      kt::cli::cmd_geodesics(cfg, {pq[0], pq[1]}, out, std::cerr);
    } else if (kernel->parsed()) {
      kt::cli::cmd_kernel(cfg, rank, out, std::cerr);
    } else if (isolines->parsed()) {
      const auto c = parse_list<double>(cvec, "--c");
      if (c.size() != 2) throw kt::Error("--c needs exactly two numbers c1,c2");
      std::optional<std::vector<double>> lv;
      if (!levels.empty()) lv = parse_list<double>(levels, "--levels");
      kt::cli::cmd_isolines(cfg, lv, {c[0], c[1]}, out, std::cerr);
    } else if (lambda->parsed()) {
      kt::cli::cmd_lambda(cfg, out, std::cerr);
    }
  } catch (const kt::cli::ConfigError& e) {
    std::cerr << "error: " << config << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
