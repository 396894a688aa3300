#pragma once

#include "gradbasis/common.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace gradbasis {

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double tolerance = 0.0;
};

struct SolveInfo {
  std::string solver;  // "closed_form" | "iterative_convex"
  double value = 0.0;
  double grad_residual = 0.0;
  int iterations = 0;
  bool attained = false;
};

/// One perturbed-basis optimum: inf L~ for a family at one epsilon.
struct FamilyValue {
  double epsilon = 0.0;
  std::string family;
  int directions = 0;
  SolveInfo solve;
};

struct VerificationReport {
  std::string scenario_id;
  std::string theorem;
  std::string model_kind;
  std::string loss_kind;

  double loss_value = 0.0;
  double grad_inf_norm = 0.0;
  double hessian_min_eig = std::numeric_limits<double>::quiet_NaN();
  double kink_distance = std::numeric_limits<double>::infinity();

  double inf_L_theta = std::numeric_limits<double>::quiet_NaN();
  double gap = std::numeric_limits<double>::quiet_NaN();
  double kappa = std::numeric_limits<double>::quiet_NaN();
  double tol_thm = std::numeric_limits<double>::quiet_NaN();

  std::vector<FamilyValue> perturbed;
  std::vector<CheckResult> checks;

  double wall_clock_sec = 0.0;  // excluded from the CSV summary

  bool pass() const;
  void add_check(const std::string& name, bool ok, double value, double tolerance);
};

nlohmann::json report_to_json(const VerificationReport& rep);
VerificationReport report_from_json(const nlohmann::json& j);

void write_report(const VerificationReport& rep, const std::string& path);
VerificationReport read_report(const std::string& path);

/// Flat summary for plotting. Deterministic: fixed %.17g formatting and no
/// timing fields, so identical runs produce byte-identical files.
std::string report_csv_header();
std::string report_csv_row(const VerificationReport& rep);

/// %.17g with inf/nan spelled out; shared by the CSV writers.
std::string format_double(double v);

}  // namespace gradbasis
