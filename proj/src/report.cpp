#include "gradbasis/report.hpp"

#include <cstdio>
#include <fstream>

namespace gradbasis {

using nlohmann::json;

bool VerificationReport::pass() const {
  for (const CheckResult& c : checks)
    if (!c.pass) return false;
  return true;
}

void VerificationReport::add_check(const std::string& name, bool ok, double value,
                                   double tolerance) {
  checks.push_back({name, ok, value, tolerance});
}

namespace {

// JSON has no inf/nan literals; encode them as strings so reports round-trip.
json num_to_json(double v) {
  if (std::isnan(v)) return json("nan");
  if (std::isinf(v)) return json(v > 0 ? "inf" : "-inf");
  return json(v);
}

double num_from_json(const json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw InvalidInput("report: bad numeric string " + s);
  }
  return j.get<double>();
}

}  // namespace

json report_to_json(const VerificationReport& r) {
  json checks = json::array();
  for (const CheckResult& c : r.checks)
    checks.push_back({{"name", c.name},
                      {"pass", c.pass},
                      {"value", num_to_json(c.value)},
                      {"tolerance", num_to_json(c.tolerance)}});
  json perturbed = json::array();
  for (const FamilyValue& f : r.perturbed)
    perturbed.push_back({{"epsilon", num_to_json(f.epsilon)},
                         {"family", f.family},
                         {"directions", f.directions},
                         {"solver", f.solve.solver},
                         {"value", num_to_json(f.solve.value)},
                         {"grad_residual", num_to_json(f.solve.grad_residual)},
                         {"iterations", f.solve.iterations},
                         {"attained", f.solve.attained}});
  return json{{"scenario_id", r.scenario_id},
              {"theorem", r.theorem},
              {"model_kind", r.model_kind},
              {"loss_kind", r.loss_kind},
              {"loss_value", num_to_json(r.loss_value)},
              {"grad_inf_norm", num_to_json(r.grad_inf_norm)},
              {"hessian_min_eig", num_to_json(r.hessian_min_eig)},
              {"kink_distance", num_to_json(r.kink_distance)},
              {"inf_L_theta", num_to_json(r.inf_L_theta)},
              {"gap", num_to_json(r.gap)},
              {"kappa", num_to_json(r.kappa)},
              {"tol_thm", num_to_json(r.tol_thm)},
              {"perturbed", perturbed},
              {"checks", checks},
              {"pass", r.pass()},
              {"wall_clock_sec", num_to_json(r.wall_clock_sec)}};
}

VerificationReport report_from_json(const json& j) {
  VerificationReport r;
  r.scenario_id = j.at("scenario_id").get<std::string>();
  r.theorem = j.at("theorem").get<std::string>();
  r.model_kind = j.at("model_kind").get<std::string>();
  r.loss_kind = j.at("loss_kind").get<std::string>();
  r.loss_value = num_from_json(j.at("loss_value"));
  r.grad_inf_norm = num_from_json(j.at("grad_inf_norm"));
  r.hessian_min_eig = num_from_json(j.at("hessian_min_eig"));
  r.kink_distance = num_from_json(j.at("kink_distance"));
  r.inf_L_theta = num_from_json(j.at("inf_L_theta"));
  r.gap = num_from_json(j.at("gap"));
  r.kappa = num_from_json(j.at("kappa"));
  r.tol_thm = num_from_json(j.at("tol_thm"));
  for (const json& f : j.at("perturbed")) {
    FamilyValue fv;
    fv.epsilon = num_from_json(f.at("epsilon"));
    fv.family = f.at("family").get<std::string>();
    fv.directions = f.at("directions").get<int>();
    fv.solve.solver = f.at("solver").get<std::string>();
    fv.solve.value = num_from_json(f.at("value"));
    fv.solve.grad_residual = num_from_json(f.at("grad_residual"));
    fv.solve.iterations = f.at("iterations").get<int>();
    fv.solve.attained = f.at("attained").get<bool>();
    r.perturbed.push_back(fv);
  }
  for (const json& c : j.at("checks")) {
    CheckResult cr;
    cr.name = c.at("name").get<std::string>();
    cr.pass = c.at("pass").get<bool>();
    cr.value = num_from_json(c.at("value"));
    cr.tolerance = num_from_json(c.at("tolerance"));
    r.checks.push_back(cr);
  }
  r.wall_clock_sec = num_from_json(j.at("wall_clock_sec"));
  return r;
}

void write_report(const VerificationReport& rep, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InvalidInput("cannot open report file for writing: " + path);
  out << report_to_json(rep).dump(2) << "\n";
}

VerificationReport read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open report file: " + path);
  json j;
  in >> j;
  return report_from_json(j);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string report_csv_header() {
  return "scenario_id,theorem,model,loss,loss_value,grad_inf_norm,hessian_min_eig,"
         "kink_distance,inf_L_theta,best_perturbed,gap,tol_thm,checks_passed,checks_total,"
         "pass";
}

std::string report_csv_row(const VerificationReport& r) {
  double best = std::numeric_limits<double>::quiet_NaN();
  for (const FamilyValue& f : r.perturbed)
    if (std::isnan(best) || f.solve.value < best) best = f.solve.value;
  int passed = 0;
  for (const CheckResult& c : r.checks) passed += c.pass ? 1 : 0;
  std::string row;
  row += r.scenario_id + "," + r.theorem + "," + r.model_kind + "," + r.loss_kind + ",";
  row += format_double(r.loss_value) + "," + format_double(r.grad_inf_norm) + ",";
  row += format_double(r.hessian_min_eig) + "," + format_double(r.kink_distance) + ",";
  row += format_double(r.inf_L_theta) + "," + format_double(best) + ",";
  row += format_double(r.gap) + "," + format_double(r.tol_thm) + ",";
  row += std::to_string(passed) + "," + std::to_string(static_cast<int>(r.checks.size())) + ",";
  row += r.pass() ? "1" : "0";
  return row;
}

}  // namespace gradbasis
