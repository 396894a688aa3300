#pragma once

#include "gradbasis/perturbation.hpp"
#include "gradbasis/report.hpp"

#include <optional>

namespace gradbasis {

struct GeneratorSpec {
  std::string kind = "gaussian";  // gaussian | planted_linear_teacher |
                                  // planted_probe_teacher | normalized_sphere
  Eigen::Index m = 8;
  Eigen::Index d_x = 4;
  Eigen::Index d_y = 1;
  double delta = 0.2;  // separation for normalized_sphere
  double noise = 0.1;  // target noise for the planted teacher
};

struct ScenarioConfig {
  std::string scenario = "custom";
  std::vector<std::uint64_t> seeds = {0};
  LossKind loss = LossKind::squared();
  std::optional<ModelSpec> model;
  GeneratorSpec generator;
  std::string data_csv;  // overrides the generator when set
  OptimizerConfig optimizer;
  std::vector<double> epsilons = {1e-3, 1e-2, 1e-1};
  std::optional<Vector> lambda_override;
  std::string perturbation_csv;
  std::string out_dir = ".";
};

ScenarioConfig config_from_json(const nlohmann::json& j);
ScenarioConfig load_config(const std::string& path);

nlohmann::json model_to_json(const ModelSpec& spec);
ModelSpec model_from_json(const nlohmann::json& j);

/// Deterministic synthetic datasets. planted_probe_teacher produces inputs
/// only (zero targets); the owning scenario plants targets from its model.
Dataset synth_data(const GeneratorSpec& gen, std::uint64_t seed);

/// Header row, one sample per row, targets in the trailing d_y columns.
Dataset load_csv_dataset(const std::string& path, Eigen::Index d_y);
/// Headerless numeric CSV (a leading non-numeric row is skipped).
Matrix load_csv_matrix(const std::string& path);

struct ScenarioResult {
  std::vector<VerificationReport> reports;
  bool pass = true;
};

/// A feedforward ReLU instance with an induced partial linear structure built
/// in: selected channels with strict kink margins, zero cross-blocks, a
/// rank-one selected block, and targets planted on the last hidden layer.
struct StructuredInstance {
  ModelSpec spec;
  ParamVector theta;
  Dataset data;
};

StructuredInstance make_structured_relu_instance(std::uint64_t seed, Eigen::Index m);

/// Exact stationary point over a block the model is linear in (a last-layer
/// or skip-output block): solves the convex problem in closed form for the
/// squared loss (iteratively otherwise) and writes the block back. The
/// returned point is stationary with respect to that block up to solver
/// residuals; plain gradient descent on the same subproblem can need millions
/// of iterations when the feature Gram is ill conditioned.
ParamVector fit_linear_block(const ModelSpec& spec, const ParamVector& theta,
                             const Dataset& data, const LossKind& loss,
                             const std::string& block);

/// data -> train -> classify -> verify, with reports persisted to
/// out_dir/<id>.report.json and a summary.csv. Deterministic per config.
ScenarioResult run_scenario(const ScenarioConfig& config);

/// Runs every *.json config in the directory (sorted); scenario-level
/// parallelism is capped by GRADBASIS_THREADS. Writes suite_summary.csv under
/// out_dir. Returns true iff every verdict passed.
bool run_suite(const std::string& config_dir, const std::string& out_dir);

/// Merges all *.report.json under `in_dir` (sorted) into one CSV.
void merge_reports_csv(const std::string& in_dir, const std::string& csv_path);

void write_summary_csv(const std::vector<VerificationReport>& reports,
                       const std::string& path);

}  // namespace gradbasis
