#include "mmbo/io.hpp"

#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "mmbo/harness.hpp"

namespace mmbo::io {

namespace {

using nlohmann::json;

json vector_to_json(const Vector& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Vector vector_from_json(const json& arr, const char* what) {
  if (!arr.is_array()) throw std::runtime_error(std::string(what) + " must be an array");
  Vector v(static_cast<int>(arr.size()));
  for (int i = 0; i < v.size(); ++i) v[i] = arr[i].get<double>();
  return v;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) rows.push_back(vector_to_json(m.row(i).transpose()));
  return rows;
}

Matrix matrix_from_json(const json& rows, const char* what) {
  if (!rows.is_array()) throw std::runtime_error(std::string(what) + " must be an array of rows");
  const int r = static_cast<int>(rows.size());
  if (r == 0) return Matrix(0, 0);
  const int c = static_cast<int>(rows[0].size());
  Matrix m(r, c);
  for (int i = 0; i < r; ++i) {
    if (static_cast<int>(rows[i].size()) != c)
      throw std::runtime_error(std::string(what) + " has ragged rows");
    for (int j = 0; j < c; ++j) m(i, j) = rows[i][j].get<double>();
  }
  return m;
}

json set_to_json(const ConvexSet& set) {
  const Box& box = bounding_box(set);
  json out;
  out["box"] = {{"lb", vector_to_json(box.lb)}, {"ub", vector_to_json(box.ub)}};
  if (const Polyhedron* poly = std::get_if<Polyhedron>(&set)) {
    if (poly->H1.rows() > 0)
      out["ineq"] = {{"H", matrix_to_json(poly->H1)}, {"h", vector_to_json(poly->h1)}};
    if (poly->H2.rows() > 0)
      out["eq"] = {{"H", matrix_to_json(poly->H2)}, {"h", vector_to_json(poly->h2)}};
  }
  return out;
}

ConvexSet set_from_json(const json& obj) {
  if (!obj.contains("box")) throw std::runtime_error("set object requires a box");
  Box box;
  box.lb = vector_from_json(obj["box"]["lb"], "box.lb");
  box.ub = vector_from_json(obj["box"]["ub"], "box.ub");
  if (box.lb.size() != box.ub.size()) throw std::runtime_error("box bound lengths differ");
  if (!obj.contains("ineq") && !obj.contains("eq")) return box;
  Polyhedron poly;
  poly.box = std::move(box);
  const int n = poly.box.dim();
  if (obj.contains("ineq")) {
    poly.H1 = matrix_from_json(obj["ineq"]["H"], "ineq.H");
    poly.h1 = vector_from_json(obj["ineq"]["h"], "ineq.h");
  } else {
    poly.H1.resize(0, n);
    poly.h1.resize(0);
  }
  if (obj.contains("eq")) {
    poly.H2 = matrix_from_json(obj["eq"]["H"], "eq.H");
    poly.h2 = vector_from_json(obj["eq"]["h"], "eq.h");
  } else {
    poly.H2.resize(0, n);
    poly.h2.resize(0);
  }
  if (poly.H1.rows() != poly.h1.size() || (poly.H1.rows() > 0 && poly.H1.cols() != n) ||
      poly.H2.rows() != poly.h2.size() || (poly.H2.rows() > 0 && poly.H2.cols() != n))
    throw std::runtime_error("set constraint shapes are inconsistent");
  return poly;
}

json parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json obj;
  in >> obj;
  return obj;
}

}  // namespace

std::string set_to_json_text(const ConvexSet& set) { return set_to_json(set).dump(); }

ConvexSet set_from_json_text(const std::string& text) {
  return set_from_json(json::parse(text));
}

void save_linear_problem(const LinearProblemData& data, const std::string& path) {
  json out;
  out["type"] = "linear";
  out["dims"] = {{"dx", data.dims.dx}, {"dy", data.dims.dy}, {"dl", data.dims.dl}};
  out["c1"] = vector_to_json(data.c1);
  out["c2"] = vector_to_json(data.c2);
  out["A"] = matrix_to_json(data.A);
  out["B"] = matrix_to_json(data.B);
  out["b"] = vector_to_json(data.b);
  out["setX"] = set_to_json(data.setX);
  out["setY"] = set_to_json(data.setY);
  out["setLambda"] = set_to_json(data.setLambda);
  std::ofstream file(path);
  if (!file) throw std::runtime_error("cannot open " + path + " for writing");
  file << out.dump(2) << "\n";
  if (!file) throw std::runtime_error("failed writing " + path);
}

LinearProblemData load_linear_problem(const std::string& path) {
  const json obj = parse_file(path);
  if (obj.value("type", "") != "linear")
    throw std::runtime_error(path + ": expected a problem with type \"linear\"");
  LinearProblemData data;
  data.dims.dx = obj.at("dims").at("dx").get<int>();
  data.dims.dy = obj.at("dims").at("dy").get<int>();
  data.dims.dl = obj.at("dims").at("dl").get<int>();
  data.c1 = vector_from_json(obj.at("c1"), "c1");
  data.c2 = vector_from_json(obj.at("c2"), "c2");
  data.A = matrix_from_json(obj.at("A"), "A");
  data.B = matrix_from_json(obj.at("B"), "B");
  data.b = vector_from_json(obj.at("b"), "b");
  data.setX = set_from_json(obj.at("setX"));
  data.setY = set_from_json(obj.at("setY"));
  data.setLambda = set_from_json(obj.at("setLambda"));
  return data;
}

MinimaxBilevelProblem load_problem(const std::string& source) {
  if (source.rfind("builtin:", 0) == 0) {
    const std::string id = source.substr(8);
    if (id == "dispatch") return dispatch_lite(0);
    return builtin_example(id);
  }
  return build_linear_problem(load_linear_problem(source));
}

PointData load_point(const std::string& path) {
  const json obj = parse_file(path);
  PointData pt;
  pt.x = vector_from_json(obj.at("x"), "x");
  pt.y = vector_from_json(obj.at("y"), "y");
  pt.lambda = vector_from_json(obj.at("lambda"), "lambda");
  if (obj.contains("z")) pt.z = vector_from_json(obj["z"], "z");
  return pt;
}

MpccCertificate load_certificate(const std::string& path) {
  const json obj = parse_file(path);
  MpccCertificate cert;
  cert.mu_x = vector_from_json(obj.at("mu_x"), "mu_x");
  cert.mu_y = vector_from_json(obj.at("mu_y"), "mu_y");
  cert.mu_lambda = vector_from_json(obj.at("mu_lambda"), "mu_lambda");
  cert.mu_m = vector_from_json(obj.at("mu_m"), "mu_m");
  cert.mu_h = vector_from_json(obj.at("mu_h"), "mu_h");
  cert.mu_c = obj.at("mu_c").get<double>();
  cert.mu_l = vector_from_json(obj.at("mu_l"), "mu_l");
  return cert;
}

std::string kkt_report_to_json_text(const KktReport& report) {
  json out;
  out["epsilon"] = report.epsilon;
  out["verdict"] = report.verdict;
  out["lower_gap"] = report.lower_gap;
  out["gaps"] = {{"x", report.gaps.norm_x},
                 {"y", report.gaps.norm_y},
                 {"lambda", report.gaps.norm_lambda},
                 {"z", report.gaps.norm_z}};
  out["error"] = composite_error(report.gaps);
  out["scales"] = {{"x", report.gaps.scales.x},
                   {"y", report.gaps.scales.y},
                   {"lambda", report.gaps.scales.lambda},
                   {"z", report.gaps.scales.z}};
  return out.dump(2);
}

std::string mpcc_report_to_json_text(const MpccResidualReport& report) {
  json out;
  out["max_residual"] = report.max_residual;
  json conditions;
  for (const auto& [name, value] : report.conditions) conditions[name] = value;
  out["conditions"] = conditions;
  out["index_sets"] = {{"alpha", report.sets.alpha},
                       {"beta", report.sets.beta},
                       {"gamma", report.sets.gamma},
                       {"errors", report.sets.errors}};
  return out.dump(2);
}

}  // namespace mmbo::io
