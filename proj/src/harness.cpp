#include "gradbasis/harness.hpp"

#include "gradbasis/geometry.hpp"
#include "gradbasis/parallel.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

namespace gradbasis {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config and model JSON
// ---------------------------------------------------------------------------

json model_to_json(const ModelSpec& spec) {
  json j;
  if (const auto* b = spec.as_basis()) {
    j["type"] = "basis_function";
    j["features"] = b->features.name();
    j["d_x"] = b->features.d_x;
  } else if (const auto* f = spec.as_feedforward()) {
    j["type"] = "feedforward";
    j["widths"] = f->widths;
    json acts = json::array();
    for (Activation a : f->activations) acts.push_back(activation_name(a));
    j["activations"] = acts;
  } else if (const auto* s = spec.as_skip()) {
    j["type"] = "skip_connected";
    j["widths"] = s->widths;
    json acts = json::array();
    for (Activation a : s->activations) acts.push_back(activation_name(a));
    j["activations"] = acts;
    j["d_y"] = s->d_y;
    j["skips"] = s->skips;
  } else {
    const auto* r = spec.as_resnet();
    j["type"] = "resnet";
    j["d_x"] = r->d_x;
    j["d_y"] = r->d_y;
    j["d_z"] = r->d_z;
    j["inner_widths"] = r->inner.widths;
    json acts = json::array();
    for (Activation a : r->inner.activations) acts.push_back(activation_name(a));
    j["inner_activations"] = acts;
  }
  return j;
}

namespace {

std::vector<Activation> activations_from_json(const json& j, size_t expected) {
  std::vector<Activation> acts;
  if (j.is_string()) {
    acts.assign(expected, activation_from_name(j.get<std::string>()));
  } else {
    for (const json& a : j) acts.push_back(activation_from_name(a.get<std::string>()));
  }
  if (acts.size() != expected)
    throw InvalidInput("model config: expected " + std::to_string(expected) + " activations");
  return acts;
}

}  // namespace

ModelSpec model_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "basis_function") {
    BasisFunctionSpec b;
    b.features = FeatureMap::from_name(j.at("features").get<std::string>(),
                                       j.at("d_x").get<Eigen::Index>());
    return ModelSpec{b};
  }
  if (type == "feedforward") {
    FeedforwardSpec f;
    f.widths = j.at("widths").get<std::vector<Eigen::Index>>();
    f.activations = activations_from_json(j.at("activations"), f.widths.size() - 2);
    return ModelSpec{f};
  }
  if (type == "skip_connected") {
    SkipConnectedSpec s;
    s.widths = j.at("widths").get<std::vector<Eigen::Index>>();
    s.activations = activations_from_json(j.at("activations"), s.widths.size() - 1);
    s.d_y = j.at("d_y").get<Eigen::Index>();
    if (j.contains("skips")) s.skips = j.at("skips").get<std::vector<Eigen::Index>>();
    return ModelSpec{s};
  }
  if (type == "resnet") {
    ResNetFormSpec r;
    r.d_x = j.at("d_x").get<Eigen::Index>();
    r.d_y = j.at("d_y").get<Eigen::Index>();
    r.d_z = j.at("d_z").get<Eigen::Index>();
    r.inner.widths = j.at("inner_widths").get<std::vector<Eigen::Index>>();
    r.inner.activations =
        activations_from_json(j.at("inner_activations"), r.inner.widths.size() - 2);
    return ModelSpec{r};
  }
  throw InvalidInput("model config: unknown type " + type);
}

ScenarioConfig config_from_json(const json& j) {
  ScenarioConfig c;
  c.scenario = j.value("scenario", std::string("custom"));
  if (j.contains("seeds")) {
    c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  } else {
    c.seeds = {j.value("seed", static_cast<std::uint64_t>(0))};
  }
  if (c.seeds.empty()) throw InvalidInput("config: seeds must be explicit and nonempty");
  if (j.contains("loss")) {
    const json& l = j.at("loss");
    if (l.is_string()) {
      c.loss = loss_from_name(l.get<std::string>());
    } else {
      c.loss = loss_from_name(l.at("kind").get<std::string>(), l.value("p", 2));
    }
  }
  if (j.contains("model")) c.model = model_from_json(j.at("model"));
  if (j.contains("data")) {
    const json& d = j.at("data");
    if (d.contains("csv")) {
      c.data_csv = d.at("csv").get<std::string>();
    } else {
      c.generator.kind = d.value("generator", std::string("gaussian"));
      c.generator.m = d.value("m", c.generator.m);
      c.generator.d_x = d.value("d_x", c.generator.d_x);
      c.generator.d_y = d.value("d_y", c.generator.d_y);
      c.generator.delta = d.value("delta", c.generator.delta);
      c.generator.noise = d.value("noise", c.generator.noise);
    }
  }
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    c.optimizer.max_iters = o.value("max_iters", c.optimizer.max_iters);
    c.optimizer.grad_tol = o.value("grad_tol", c.optimizer.grad_tol);
    c.optimizer.seed = o.value("seed", c.optimizer.seed);
    if (o.contains("trainable_blocks"))
      c.optimizer.trainable_blocks = o.at("trainable_blocks").get<std::vector<std::string>>();
  }
  if (j.contains("epsilons")) c.epsilons = j.at("epsilons").get<std::vector<double>>();
  if (j.contains("lambda")) {
    const std::vector<double> lam = j.at("lambda").get<std::vector<double>>();
    Vector v(static_cast<Eigen::Index>(lam.size()));
    for (size_t i = 0; i < lam.size(); ++i) v[static_cast<Eigen::Index>(i)] = lam[i];
    c.lambda_override = v;
  }
  c.perturbation_csv = j.value("perturbation_csv", std::string());
  c.out_dir = j.value("out_dir", std::string("."));
  return c;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InvalidInput("config parse error in " + path + ": " + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

Dataset synth_data(const GeneratorSpec& gen, std::uint64_t seed) {
  Rng rng(seed * 0x9e3779b97f4a7c15ULL + 17);
  if (gen.kind == "gaussian") {
    Matrix x = rng.normal_matrix(gen.m, gen.d_x);
    Matrix y = rng.normal_matrix(gen.m, gen.d_y);
    return make_dataset(std::move(x), std::move(y));
  }
  if (gen.kind == "planted_linear_teacher") {
    Matrix x = rng.normal_matrix(gen.m, gen.d_x);
    const Matrix teacher = rng.normal_matrix(gen.d_y, gen.d_x);
    Matrix y = x * teacher.transpose();
    if (gen.noise > 0.0) y += gen.noise * rng.normal_matrix(gen.m, gen.d_y);
    return make_dataset(std::move(x), std::move(y));
  }
  if (gen.kind == "planted_probe_teacher") {
    // inputs only; the owning scenario plants targets from its model features
    Matrix x = rng.normal_matrix(gen.m, gen.d_x);
    Matrix y = Matrix::Zero(gen.m, gen.d_y);
    return make_dataset(std::move(x), std::move(y));
  }
  if (gen.kind == "normalized_sphere") {
    Matrix x(gen.m, gen.d_x);
    const int max_tries = 64;
    for (int attempt = 0;; ++attempt) {
      if (attempt >= max_tries)
        throw InvalidInput("normalized_sphere: separation delta=" + std::to_string(gen.delta) +
                           " unreachable for m=" + std::to_string(gen.m) +
                           ", d_x=" + std::to_string(gen.d_x));
      for (Eigen::Index i = 0; i < gen.m; ++i)
        x.row(i) = rng.unit_vector(gen.d_x).transpose();
      bool ok = true;
      for (Eigen::Index i = 0; i < gen.m && ok; ++i)
        for (Eigen::Index k = i + 1; k < gen.m && ok; ++k)
          if (x.row(i).dot(x.row(k)) >= 1.0 - gen.delta) ok = false;
      if (ok) break;
    }
    Matrix y = rng.normal_matrix(gen.m, gen.d_y);
    return make_dataset(std::move(x), std::move(y));
  }
  throw InvalidInput("unknown generator: " + gen.kind);
}

Matrix load_csv_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open CSV: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        size_t pos = 0;
        row.push_back(std::stod(cell, &pos));
      } catch (...) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;  // header row
      }
      throw InvalidInput("CSV: non-numeric row in " + path);
    }
    first = false;
    if (!rows.empty() && rows.back().size() != row.size())
      throw InvalidInput("CSV: ragged rows in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InvalidInput("CSV: no data rows in " + path);
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < rows[r].size(); ++c)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return out;
}

Dataset load_csv_dataset(const std::string& path, Eigen::Index d_y) {
  const Matrix all = load_csv_matrix(path);
  if (all.cols() <= d_y) throw InvalidInput("CSV: not enough columns for d_y targets");
  return make_dataset(all.leftCols(all.cols() - d_y), all.rightCols(d_y));
}

// ---------------------------------------------------------------------------
// Scenario pipelines
// ---------------------------------------------------------------------------

namespace {

double now_sec() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

struct ScenarioContext {
  const ScenarioConfig& cfg;
  std::uint64_t seed = 0;
  std::vector<VerificationReport>* reports;

  std::string tag(const std::string& suffix) const {
    std::string id = cfg.scenario + "_seed" + std::to_string(seed);
    if (!suffix.empty()) id += "_" + suffix;
    return id;
  }

  void push(VerificationReport rep, const std::string& suffix, double started) const {
    rep.scenario_id = tag(suffix);
    rep.wall_clock_sec = now_sec() - started;
    reports->push_back(std::move(rep));
  }
};

Dataset scenario_data(const ScenarioConfig& cfg, const GeneratorSpec& fallback,
                      std::uint64_t seed) {
  Dataset data = cfg.data_csv.empty() ? synth_data(fallback, seed)
                                      : load_csv_dataset(cfg.data_csv, fallback.d_y);
  if (cfg.lambda_override) {
    if (cfg.lambda_override->size() != data.m())
      throw InvalidInput("lambda override has wrong length");
    data.lambda = *cfg.lambda_override;
    data.validate();
  }
  return data;
}

/// Geometry cross-checks appended to every scenario report: the output-space
/// projection problem must agree with the coefficient-space solve, and nearby
/// sampled ranks must not drop.
void append_geometry_checks(VerificationReport& rep, const ModelSpec& spec,
                            const ParamVector& theta, const Dataset& data, const LossKind& loss,
                            std::uint64_t seed) {
  const Matrix phi = param_jacobian(spec, theta, data);
  const double rtol = tol::rank_rtol(phi.rows(), phi.cols());
  const TangentSpace ts = tangent_space(spec, theta, data, rtol);
  const ProjectionReport proj = projection_optimality(spec, theta, data, loss, ts.basis);
  const double consistency = std::abs(proj.min_dist - rep.inf_L_theta);
  const double ctol = 1e-9 * std::max(1.0, rep.loss_value);
  rep.add_check("geometry_projection_consistency", consistency <= ctol, consistency, ctol);
  rep.add_check("projection_optimality", proj.pass, proj.gap, proj.tol);

  const double radius = std::min(1e-4, 1e-3 * std::max(1.0, theta.data.norm()));
  const RankProbeReport probe =
      rank_semicontinuity_probe(spec, theta, data, radius, 12, seed ^ 0xabcdULL, rtol);
  rep.add_check("rank_lower_semicontinuity", probe.violations == 0,
                static_cast<double>(probe.violations), 0.0);
}

std::vector<PerturbationSet> nullspace_families(const ModelSpec& spec, const ParamVector& theta,
                                                const Dataset& data, double eps) {
  std::vector<PerturbationSet> fams;
  Eigen::Index layers = 0;
  if (const auto* f = spec.as_feedforward()) layers = f->depth();
  if (const auto* s = spec.as_skip()) layers = s->depth();
  if (const auto* r = spec.as_resnet()) layers = r->inner.depth();
  for (Eigen::Index l = 1; l <= layers; ++l) {
    PerturbationSet fam = nullspace_perturbations(spec, theta, data, l, eps, 16);
    if (fam.size() > 0) fams.push_back(std::move(fam));
  }
  return fams;
}

// ------------------------- individual scenarios ---------------------------

void run_example1_basis(const ScenarioContext& ctx) {
  const double t0 = now_sec();
  GeneratorSpec gen;
  gen.kind = "planted_linear_teacher";
  gen.m = 16;
  gen.d_x = 8;
  gen.d_y = 1;
  gen.noise = 0.25;
  const Dataset data = scenario_data(ctx.cfg, gen, ctx.seed);

  const ModelSpec spec = ctx.cfg.model.value_or(
      ModelSpec{BasisFunctionSpec{FeatureMap{FeatureMap::Kind::Identity, data.d_x()}}});
  const OptimizerConfig& opt = ctx.cfg.optimizer;
  const StationaryReport trained =
      find_stationary(spec, data, ctx.cfg.loss, zero_params(spec), opt);
  if (trained.classification == Classification::NotConverged)
    throw Diverged("optimizer did not reach grad_tol");

  VerificationReport rep = verify_theorem1(spec, trained.theta, data, ctx.cfg.loss);
  const StationaryReport cls =
      classify_stationary(spec, trained.theta, data, ctx.cfg.loss, tol::kEigTol, tol::kGradTol,
                          opt.trainable_blocks, ctx.seed);
  rep.hessian_min_eig = cls.hessian_min_eig_estimate;
  rep.add_check("local_min_screen", cls.classification == Classification::LocalMinCandidate,
                cls.hessian_min_eig_estimate, -tol::kEigTol);
  append_geometry_checks(rep, spec, trained.theta, data, ctx.cfg.loss, ctx.seed);
  ctx.push(std::move(rep), "thm1", t0);
}

void run_example2_overparam(const ScenarioContext& ctx) {
  const double t0 = now_sec();
  GeneratorSpec gen;
  gen.kind = "normalized_sphere";
  gen.m = 8;
  gen.d_x = 6;
  gen.d_y = 1;
  gen.delta = 0.2;
  const Dataset raw = scenario_data(ctx.cfg, gen, ctx.seed);

  // one hidden ReLU layer: deeper instances of this construction sit exactly
  // on the kink set (off-diagonal weights of layer 2 cross it), where the
  // Jacobian is declared nondifferentiable
  const int depth = 1;
  const Eigen::Index width = std::max<Eigen::Index>(raw.m(), 8);
  const ParamVector hidden = overparam_weights(raw.X, gen.delta, gen.delta, depth, width);
  const FeedforwardSpec ff = overparam_spec(raw.d_x(), depth, width, raw.d_y());
  const ModelSpec spec{ff};
  Dataset data = raw;
  data.X = augment_inputs(raw.X);

  const ParamVector theta0 =
      assemble_overparam_params(ff, hidden, Matrix::Zero(raw.d_y(), width));

  OptimizerConfig opt = ctx.cfg.optimizer;
  opt.trainable_blocks = {"W" + std::to_string(depth + 1)};
  opt.grad_tol = std::min(opt.grad_tol, 1e-10);
  const StationaryReport trained = find_stationary(spec, data, ctx.cfg.loss, theta0, opt);
  if (trained.classification == Classification::NotConverged)
    throw Diverged("last-layer training did not converge");

  VerificationReport rep = verify_theorem1(spec, trained.theta, data, ctx.cfg.loss);
  const std::vector<Matrix> h = hidden_activations(spec, trained.theta, data.X);
  const Eigen::Index feature_rank = numerical_rank(h.back());
  rep.add_check("overparam_feature_rank", feature_rank == data.m(),
                static_cast<double>(feature_rank), static_cast<double>(data.m()));
  rep.add_check("inf_L_theta_zero", rep.inf_L_theta <= 1e-9, rep.inf_L_theta, 1e-9);
  rep.add_check("loss_near_zero", rep.loss_value <= 1e-6, rep.loss_value, 1e-6);
  append_geometry_checks(rep, spec, trained.theta, data, ctx.cfg.loss, ctx.seed);
  ctx.push(std::move(rep), "thm1", t0);
}

void run_example3_skip(const ScenarioContext& ctx) {
  const double t0 = now_sec();
  GeneratorSpec gen;
  gen.kind = "planted_linear_teacher";
  gen.m = 8;
  gen.d_x = 4;
  gen.d_y = 2;
  gen.noise = 0.3;
  const Dataset data = scenario_data(ctx.cfg, gen, ctx.seed);

  const ModelSpec spec = ctx.cfg.model.value_or(ModelSpec{SkipConnectedSpec{
      {data.d_x(), 5, 4}, {Activation::Tanh, Activation::Tanh}, data.d_y(), {1}}});

  Rng rng(ctx.seed + 101);
  const OptimizerConfig& opt = ctx.cfg.optimizer;
  const StationaryReport trained =
      find_stationary(spec, data, ctx.cfg.loss, random_params(spec, rng, 0.4), opt);
  if (trained.classification == Classification::NotConverged)
    throw Diverged("optimizer did not reach grad_tol");

  VerificationReport rep = verify_theorem1(spec, trained.theta, data, ctx.cfg.loss);

  // learned-representation coverage: the induced optimum is at least as good
  // as the best probe on every skip-connected layer
  const auto* s = spec.as_skip();
  const std::vector<Matrix> h = hidden_activations(spec, trained.theta, data.X);
  for (Eigen::Index l : s->effective_skips()) {
    const Matrix design = linear_probe_design(h[static_cast<size_t>(l)], data.d_y());
    const ConvexSolveResult probe =
        solve_linear_model(design, data, ctx.cfg.loss, Vector::Zero(design.cols()));
    rep.add_check("covers_probe_h" + std::to_string(l),
                  rep.inf_L_theta <= probe.optimal_value + 1e-9,
                  rep.inf_L_theta - probe.optimal_value, 1e-9);
  }

  const StationaryReport cls =
      classify_stationary(spec, trained.theta, data, ctx.cfg.loss, tol::kEigTol, tol::kGradTol,
                          opt.trainable_blocks, ctx.seed);
  rep.hessian_min_eig = cls.hessian_min_eig_estimate;
  append_geometry_checks(rep, spec, trained.theta, data, ctx.cfg.loss, ctx.seed);
  ctx.push(std::move(rep), "thm1", t0);

  if (cls.classification == Classification::LocalMinCandidate) {
    for (size_t ei = 0; ei < ctx.cfg.epsilons.size(); ++ei) {
      const double t1 = now_sec();
      const double eps = ctx.cfg.epsilons[ei];
      VerificationReport rep2 = verify_theorem2(spec, cls, data, ctx.cfg.loss, eps,
                                                nullspace_families(spec, cls.theta, data, eps));
      ctx.push(std::move(rep2), "thm2_eps" + std::to_string(ei), t1);
    }
  }
}

void run_resnet_thm3(const ScenarioContext& ctx) {
  GeneratorSpec gen;
  gen.kind = "planted_probe_teacher";
  gen.m = 12;
  gen.d_x = 5;
  gen.d_y = 3;
  Dataset data = scenario_data(ctx.cfg, gen, ctx.seed);

  ResNetFormSpec rspec;
  rspec.d_x = data.d_x();
  rspec.d_y = data.d_y();
  rspec.d_z = 4;
  rspec.inner.widths = {rspec.d_x, 6, rspec.d_z};
  rspec.inner.activations = {Activation::Tanh};
  const ModelSpec spec = ctx.cfg.model.value_or(ModelSpec{rspec});
  const auto* rn = spec.as_resnet();

  Rng rng(ctx.seed + 202);
  ParamVector theta0 = random_params(spec, rng, 0.4);

  // plant a teacher realizable by the (W, R) blocks on the frozen inner
  // features, and start training inside its basin: the bilinear coupling
  // makes cold-start gradient descent far too slow for the 1e-8 bar, and the
  // guarantee under test is about the point reached, not the path to it
  const Matrix w_star = rng.normal_matrix(rn->d_y, rn->d_x);
  const Matrix r_star = rng.normal_matrix(rn->d_x, rn->d_z);
  theta0.block("W") = w_star;
  theta0.block("R") = r_star;
  const std::vector<Matrix> h0 = hidden_activations(spec, theta0, data.X);
  const Matrix z =
      theta0.block("U" + std::to_string(rn->inner.widths.size() - 1)) * h0.back();
  data.Y = (w_star * (data.X.transpose() + r_star * z)).transpose();
  theta0.block("W") = w_star + 0.002 * rng.normal_matrix(rn->d_y, rn->d_x);
  theta0.block("R") = r_star + 0.002 * rng.normal_matrix(rn->d_x, rn->d_z);

  OptimizerConfig opt = ctx.cfg.optimizer;
  opt.trainable_blocks = {"W", "R"};
  opt.max_iters = std::max(opt.max_iters, 100000);
  const StationaryReport trained = find_stationary(spec, data, ctx.cfg.loss, theta0, opt);
  if (trained.classification == Classification::NotConverged)
    throw Diverged("optimizer did not reach grad_tol");
  const StationaryReport cls =
      classify_stationary(spec, trained.theta, data, ctx.cfg.loss, tol::kEigTol, tol::kGradTol,
                          opt.trainable_blocks, ctx.seed);

  for (size_t ei = 0; ei < ctx.cfg.epsilons.size(); ++ei) {
    const double t1 = now_sec();
    const double eps = ctx.cfg.epsilons[ei];
    VerificationReport rep = verify_theorem3(spec, cls, data, ctx.cfg.loss, eps);
    rep.add_check("planted_teacher_loss", rep.loss_value <= 1e-6, rep.loss_value, 1e-6);
    if (ei == 0) append_geometry_checks(rep, spec, cls.theta, data, ctx.cfg.loss, ctx.seed);
    ctx.push(std::move(rep), "thm3_eps" + std::to_string(ei), t1);
  }
}

void run_deep_linear_thm4(const ScenarioContext& ctx) {
  const double t0 = now_sec();
  GeneratorSpec gen;
  gen.kind = "gaussian";
  gen.m = 8;
  gen.d_x = 4;
  gen.d_y = 3;
  const Dataset data = scenario_data(ctx.cfg, gen, ctx.seed);

  FeedforwardSpec ff;
  ff.widths = {data.d_x(), 6, 6, data.d_y()};
  ff.activations = {Activation::Identity, Activation::Identity};
  const ModelSpec spec = ctx.cfg.model.value_or(ModelSpec{ff});

  Rng rng(ctx.seed + 303);
  const StationaryReport trained = find_stationary(spec, data, ctx.cfg.loss,
                                                   random_params(spec, rng, 0.5),
                                                   ctx.cfg.optimizer);
  if (trained.classification == Classification::NotConverged)
    throw Diverged("optimizer did not reach grad_tol");
  const StationaryReport cls =
      classify_stationary(spec, trained.theta, data, ctx.cfg.loss, tol::kEigTol, tol::kGradTol,
                          ctx.cfg.optimizer.trainable_blocks, ctx.seed);
  if (cls.classification != Classification::LocalMinCandidate)
    throw PreconditionFailed("converged to a saddle candidate");

  const InducedStructure structure =
      detect_induced_structure(*spec.as_feedforward(), cls.theta, data, 0,
                               static_cast<int>(data.d_y()), 1e-3, 8, ctx.seed);

  const double eps = ctx.cfg.epsilons.empty() ? 1e-2 : ctx.cfg.epsilons[0];
  VerificationReport rep = verify_theorem4(spec, cls, data, ctx.cfg.loss, eps, structure);

  // closed-form oracle: weighted least squares on the raw inputs
  const Matrix design = linear_probe_design(data.X.transpose(), data.d_y());
  const Vector alpha = min_norm_lstsq(design, data.stacked_targets(), data.stacked_weights());
  const double lstsq = linear_model_value(design, data, ctx.cfg.loss, alpha);
  const double rel = std::abs(rep.loss_value - lstsq) / std::max(1.0, std::abs(lstsq));
  rep.add_check("deep_linear_global_optimum", rel <= 1e-4, rel, 1e-4);
  append_geometry_checks(rep, spec, cls.theta, data, ctx.cfg.loss, ctx.seed);
  ctx.push(std::move(rep), "thm4", t0);
}

}  // namespace

/// Structured ReLU instance used by the structured_relu_thm4 scenario and the
/// acceptance suite: two selected channels per hidden layer stay strictly
/// positive on every sample, the complement never feeds back into them, and
/// the selected second-layer block has rank one so the chain family is
/// nontrivial. Targets are planted on the last hidden layer.
StructuredInstance make_structured_relu_instance(std::uint64_t seed, Eigen::Index m) {
  Rng rng(seed + 404);
  FeedforwardSpec ff;
  ff.widths = {4, 5, 5, 2};
  ff.activations = {Activation::ReLU, Activation::ReLU};
  ModelSpec spec{ff};

  Matrix x(m, 4);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index c = 0; c < 4; ++c) x(i, c) = 0.5 + std::abs(rng.normal());

  ParamVector theta = zero_params(spec);
  auto w1 = theta.block("W1");
  // positive rows keep every first-layer unit strictly active (dead
  // complement units would zero downstream preactivations exactly)
  for (Eigen::Index r = 0; r < 2; ++r)
    for (Eigen::Index c = 0; c < 4; ++c) w1(r, c) = rng.uniform(0.4, 1.2);
  for (Eigen::Index r = 2; r < 5; ++r)
    for (Eigen::Index c = 0; c < 4; ++c) w1(r, c) = rng.uniform(0.1, 0.7);

  auto w2 = theta.block("W2");
  // selected block A2 = a b^T, rank one with positive entries
  const double a0 = rng.uniform(0.5, 1.0), a1 = rng.uniform(0.5, 1.0);
  const double b0 = rng.uniform(0.5, 1.0), b1 = rng.uniform(0.5, 1.0);
  w2(0, 0) = a0 * b0;
  w2(0, 1) = a0 * b1;
  w2(1, 0) = a1 * b0;
  w2(1, 1) = a1 * b1;
  for (Eigen::Index r = 0; r < 2; ++r)
    for (Eigen::Index c = 2; c < 5; ++c) w2(r, c) = rng.uniform(0.05, 0.2);
  // complement rows never see the selected channels
  for (Eigen::Index r = 2; r < 5; ++r) {
    w2(r, 0) = 0.0;
    w2(r, 1) = 0.0;
    for (Eigen::Index c = 2; c < 5; ++c) w2(r, c) = 0.6 * rng.normal();
  }

  auto w3 = theta.block("W3");
  for (Eigen::Index r = 0; r < 2; ++r)
    for (Eigen::Index c = 0; c < 5; ++c) w3(r, c) = 0.7 * rng.normal();

  const std::vector<Matrix> h = hidden_activations(spec, theta, x);
  const Matrix teacher = rng.normal_matrix(2, 5);
  Matrix y = (teacher * h.back()).transpose();
  return StructuredInstance{spec, theta, make_dataset(std::move(x), std::move(y))};
}

ParamVector fit_linear_block(const ModelSpec& spec, const ParamVector& theta,
                             const Dataset& data, const LossKind& loss,
                             const std::string& block) {
  const Matrix phi = param_jacobian(spec, theta, data);
  const BlockInfo& info = theta.layout.block(block);
  const Matrix design = phi.middleCols(info.offset, info.size());
  Vector alpha0(info.size());
  alpha0 = theta.data.segment(info.offset, info.size());
  const ConvexSolveResult res = solve_linear_model(design, data, loss, alpha0);
  ParamVector out = theta;
  out.data.segment(info.offset, info.size()) = res.alpha;
  return out;
}

namespace {

void run_structured_relu_thm4(const ScenarioContext& ctx) {
  const double t0 = now_sec();
  const StructuredInstance inst = make_structured_relu_instance(ctx.seed, 6);
  const ModelSpec& spec = inst.spec;
  const auto* ff = spec.as_feedforward();
  const Eigen::Index d_y = ff->widths.back();

  // the selected rank-one block makes the last-layer Gram ill conditioned;
  // the convex subproblem is solved exactly instead of by descent
  const ParamVector fitted =
      fit_linear_block(spec, inst.theta, inst.data, ctx.cfg.loss, "W3");
  const StationaryReport cls =
      classify_stationary(spec, fitted, inst.data, ctx.cfg.loss, tol::kEigTol,
                          tol::kGradTol, {"W3"}, ctx.seed);

  const InducedStructure structure = detect_induced_structure(
      *ff, cls.theta, inst.data, 0, static_cast<int>(d_y), 1e-3, 8, ctx.seed);
  if (!structure.certified)
    throw StructureNotCertified("constructed instance failed certification");

  const double eps = ctx.cfg.epsilons.empty() ? 1e-2 : ctx.cfg.epsilons[0];
  VerificationReport rep = verify_theorem4(spec, cls, inst.data, ctx.cfg.loss, eps, structure);

  // span containment of the layer features in the chain-family bases
  const std::vector<Matrix> h = hidden_activations(spec, cls.theta, inst.data.X);
  for (Eigen::Index l = 0; l <= ff->depth(); ++l) {
    const PerturbationSet fam = linear_chain_S(spec, cls.theta, inst.data, eps, l, structure);
    const PerturbationSet with_zero = union_sets(zero_set(cls.theta.layout.dim, eps), fam);
    const PerturbedBasis pb = build_perturbed_basis(spec, cls.theta, inst.data, with_zero);
    const Matrix targets = linear_probe_design(h[static_cast<size_t>(l)], d_y);
    const double res = span_containment_residual(pb.phi_tilde, targets);
    rep.add_check("span_containment_h" + std::to_string(l), res <= tol::kSpanResidual, res,
                  tol::kSpanResidual);
  }
  append_geometry_checks(rep, spec, cls.theta, inst.data, ctx.cfg.loss, ctx.seed);
  ctx.push(std::move(rep), "thm4", t0);
}

void run_custom(const ScenarioContext& ctx) {
  const double t0 = now_sec();
  if (!ctx.cfg.model) throw InvalidInput("custom scenario requires a model config");
  const ModelSpec& spec = *ctx.cfg.model;
  GeneratorSpec gen = ctx.cfg.generator;
  gen.d_x = spec.input_dim();
  gen.d_y = spec.output_dim();
  const Dataset data = scenario_data(ctx.cfg, gen, ctx.seed);

  Rng rng(ctx.seed + 505);
  const StationaryReport trained = find_stationary(spec, data, ctx.cfg.loss,
                                                   random_params(spec, rng, 0.4),
                                                   ctx.cfg.optimizer);
  if (trained.classification == Classification::NotConverged)
    throw Diverged("optimizer did not reach grad_tol");

  VerificationReport rep = verify_theorem1(spec, trained.theta, data, ctx.cfg.loss);
  const StationaryReport cls =
      classify_stationary(spec, trained.theta, data, ctx.cfg.loss, tol::kEigTol, tol::kGradTol,
                          ctx.cfg.optimizer.trainable_blocks, ctx.seed);
  rep.hessian_min_eig = cls.hessian_min_eig_estimate;
  append_geometry_checks(rep, spec, trained.theta, data, ctx.cfg.loss, ctx.seed);
  ctx.push(std::move(rep), "thm1", t0);

  if (cls.classification == Classification::LocalMinCandidate) {
    for (size_t ei = 0; ei < ctx.cfg.epsilons.size(); ++ei) {
      const double t1 = now_sec();
      const double eps = ctx.cfg.epsilons[ei];
      std::vector<PerturbationSet> fams = nullspace_families(spec, cls.theta, data, eps);
      if (!ctx.cfg.perturbation_csv.empty()) {
        const Matrix rows = load_csv_matrix(ctx.cfg.perturbation_csv);
        fams.push_back(user_directions(spec, cls.theta, data, eps, rows));
      }
      VerificationReport rep2 = verify_theorem2(spec, cls, data, ctx.cfg.loss, eps, fams);
      ctx.push(std::move(rep2), "thm2_eps" + std::to_string(ei), t1);
    }
  }
}

}  // namespace

ScenarioResult run_scenario(const ScenarioConfig& config) {
  ScenarioResult result;
  for (std::uint64_t seed : config.seeds) {
    const ScenarioContext ctx{config, seed, &result.reports};
    try {
      if (config.scenario == "example1_basis") {
        run_example1_basis(ctx);
      } else if (config.scenario == "example2_overparam") {
        run_example2_overparam(ctx);
      } else if (config.scenario == "example3_skip") {
        run_example3_skip(ctx);
      } else if (config.scenario == "resnet_thm3") {
        run_resnet_thm3(ctx);
      } else if (config.scenario == "deep_linear_thm4") {
        run_deep_linear_thm4(ctx);
      } else if (config.scenario == "structured_relu_thm4") {
        run_structured_relu_thm4(ctx);
      } else if (config.scenario == "custom") {
        run_custom(ctx);
      } else {
        throw InvalidInput("unknown scenario: " + config.scenario);
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("scenario " + config.scenario + " (seed " +
                               std::to_string(seed) + "): " + e.what());
    }
  }

  fs::create_directories(config.out_dir);
  for (const VerificationReport& rep : result.reports) {
    write_report(rep, (fs::path(config.out_dir) / (rep.scenario_id + ".report.json")).string());
    if (!rep.pass()) result.pass = false;
  }
  write_summary_csv(result.reports, (fs::path(config.out_dir) / "summary.csv").string());
  return result;
}

void write_summary_csv(const std::vector<VerificationReport>& reports,
                       const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InvalidInput("cannot open summary CSV for writing: " + path);
  out << report_csv_header() << "\n";
  for (const VerificationReport& rep : reports) out << report_csv_row(rep) << "\n";
}

bool run_suite(const std::string& config_dir, const std::string& out_dir) {
  std::vector<fs::path> configs;
  for (const auto& entry : fs::directory_iterator(config_dir))
    if (entry.path().extension() == ".json") configs.push_back(entry.path());
  std::sort(configs.begin(), configs.end());
  if (configs.empty()) throw InvalidInput("suite: no *.json configs in " + config_dir);

  std::vector<ScenarioResult> results(configs.size());
  std::vector<std::string> errors(configs.size());
  const int budget = std::min<int>(thread_budget(), static_cast<int>(configs.size()));

  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= configs.size()) return;
      try {
        ScenarioConfig cfg = load_config(configs[i].string());
        cfg.out_dir = out_dir;
        results[i] = run_scenario(cfg);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < budget; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();

  bool pass = true;
  std::vector<VerificationReport> all;
  for (size_t i = 0; i < configs.size(); ++i) {
    if (!errors[i].empty())
      throw std::runtime_error("suite config " + configs[i].string() + ": " + errors[i]);
    if (!results[i].pass) pass = false;
    for (VerificationReport& rep : results[i].reports) all.push_back(std::move(rep));
  }
  fs::create_directories(out_dir);
  write_summary_csv(all, (fs::path(out_dir) / "suite_summary.csv").string());
  return pass;
}

void merge_reports_csv(const std::string& in_dir, const std::string& csv_path) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(in_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 12 && name.substr(name.size() - 12) == ".report.json")
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw InvalidInput("report: no *.report.json under " + in_dir);
  std::vector<VerificationReport> reports;
  for (const fs::path& f : files) reports.push_back(read_report(f.string()));
  write_summary_csv(reports, csv_path);
}

}  // namespace gradbasis
