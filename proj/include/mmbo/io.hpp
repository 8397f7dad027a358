#pragma once

#include <optional>
#include <string>

#include "mmbo/model.hpp"
#include "mmbo/stationarity.hpp"

// JSON (de)serialization for problems, sets, points, and reports, plus the
// problem-source resolver used by the CLI. Schemas are documented in the
// README; matrices are row-major arrays of rows.
namespace mmbo::io {

std::string set_to_json_text(const ConvexSet& set);
ConvexSet set_from_json_text(const std::string& text);

void save_linear_problem(const LinearProblemData& data, const std::string& path);
LinearProblemData load_linear_problem(const std::string& path);

// "builtin:ex61|ex62|ex63|dispatch" or a path to a linear-problem JSON file.
MinimaxBilevelProblem load_problem(const std::string& source);

struct PointData {
  Vector x, y, lambda;
  std::optional<Vector> z;
};
PointData load_point(const std::string& path);

MpccCertificate load_certificate(const std::string& path);

std::string kkt_report_to_json_text(const KktReport& report);
std::string mpcc_report_to_json_text(const MpccResidualReport& report);

}  // namespace mmbo::io
