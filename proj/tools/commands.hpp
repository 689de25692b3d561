#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "metric_config.hpp"

namespace kt::cli {

/// Writes the ObstructionReport JSON to out ("-" for stdout).
void cmd_analyze(const MetricConfig& cfg, const std::vector<int>& ranks, const std::string& out,
                 std::ostream& log);

/// out/orbit.csv (t,x,y,theta), out/integrals.csv (m,c1,c2,value,error,value_components)
/// and out/ratio.csv (m,I_num,err_num,I_den,err_den).
void cmd_geodesics(const MetricConfig& cfg, const std::array<int, 2>& cls, const std::string& out,
                   std::ostream& log);

/// out/kernel_c1.csv and out/kernel_c2.csv (i,j,x,y,a,b) plus out/kernel_report.json.
void cmd_kernel(const MetricConfig& cfg, int rank, const std::string& out, std::ostream& log);

/// out/isolines.csv (curve,level,closed,t,x,y) and out/isoline_integrals.csv
/// (curve,level,closed,lift_p,lift_q,period,integral,error,min_grad,level_error).
/// Without levels, five levels evenly inside the range of K.
void cmd_isolines(const MetricConfig& cfg, const std::optional<std::vector<double>>& levels,
                  const std::array<double, 2>& c, const std::string& out, std::ostream& log);

/// out/lambda.csv (i,j,x,y,L1,L2,L1_complex,L2_complex) plus out/lambda_report.json.
void cmd_lambda(const MetricConfig& cfg, const std::string& out, std::ostream& log);

}  // namespace kt::cli
