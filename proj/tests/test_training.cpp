#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gradbasis/linalg.hpp"
#include "gradbasis/training.hpp"
#include "oracles.hpp"

using namespace gradbasis;

namespace {

ModelSpec linear_basis(Eigen::Index d) {
  return ModelSpec{BasisFunctionSpec{FeatureMap{FeatureMap::Kind::Identity, d}}};
}

Dataset gaussian_data(Eigen::Index m, Eigen::Index d_x, Eigen::Index d_y, std::uint64_t seed) {
  Rng rng(seed);
  return make_dataset(rng.normal_matrix(m, d_x), rng.normal_matrix(m, d_y));
}

}  // namespace

TEST_CASE("grad_L is exact") {
  SUBCASE("zero residual kills every term") {
    const ModelSpec spec = linear_basis(3);
    Rng rng(40);
    const ParamVector theta = random_params(spec, rng);
    Dataset data = gaussian_data(5, 3, 1, 41);
    data.Y = data.X * theta.data;  // f_X(theta) = Y exactly
    CHECK(grad_L(spec, theta, data, LossKind::squared()).cwiseAbs().maxCoeff() <= 1e-14);
  }
  SUBCASE("vanishes at the least-squares solution") {
    const ModelSpec spec = linear_basis(4);
    const Dataset data = gaussian_data(9, 4, 1, 42);
    ParamVector theta = zero_params(spec);
    theta.data = min_norm_lstsq(data.X, data.Y.col(0), data.lambda);
    CHECK(grad_L(spec, theta, data, LossKind::squared()).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
  SUBCASE("matches finite differences of L") {
    FeedforwardSpec f;
    f.widths = {3, 4, 2};
    f.activations = {Activation::Tanh};
    const ModelSpec spec{f};
    Rng rng(43);
    const Dataset data = gaussian_data(5, 3, 2, 44);
    for (const LossKind& loss : {LossKind::squared(), LossKind::cross_entropy()}) {
      const ParamVector theta = random_params(spec, rng, 0.5);
      const Vector got = grad_L(spec, theta, data, loss);
      Dataset ce_data = data;
      if (loss.variant == LossKind::Variant::CrossEntropyWithSoftmax) {
        // probability targets
        for (Eigen::Index i = 0; i < ce_data.m(); ++i) {
          Vector y = ce_data.Y.row(i).cwiseAbs().transpose();
          y.array() += 0.1;
          ce_data.Y.row(i) = (y / y.sum()).transpose();
        }
      }
      const Dataset& d = loss.variant == LossKind::Variant::CrossEntropyWithSoftmax ? ce_data
                                                                                    : data;
      const Vector got2 = grad_L(spec, theta, d, loss);
      const Vector want = oracle::fd_gradient(
          [&](const Vector& p) {
            ParamVector q = theta;
            q.data = p;
            return loss_L(spec, q, d, loss);
          },
          theta.data);
      for (Eigen::Index k = 0; k < got.size(); ++k)
        CHECK(oracle::rel_err(got2[k], want[k]) <= 1e-5);
    }
  }
}

TEST_CASE("find_stationary") {
  SUBCASE("linear least squares converges to the closed-form optimum") {
    const ModelSpec spec = linear_basis(4);
    const Dataset data = gaussian_data(10, 4, 1, 45);
    OptimizerConfig cfg;
    cfg.max_iters = 20000;
    const StationaryReport rep =
        find_stationary(spec, data, LossKind::squared(), zero_params(spec), cfg);
    CHECK(rep.classification == Classification::CriticalPoint);
    const Vector star = min_norm_lstsq(data.X, data.Y.col(0), data.lambda);
    const double best = oracle::weighted_lstsq_value(data.X, data.Y.col(0), data.lambda, star);
    CHECK(rep.loss <= best + 1e-8);
    CHECK(rep.loss >= best - 1e-12);
  }
  SUBCASE("a stationary start returns immediately") {
    const ModelSpec spec = linear_basis(3);
    const Dataset data = gaussian_data(6, 3, 1, 46);
    ParamVector theta = zero_params(spec);
    theta.data = min_norm_lstsq(data.X, data.Y.col(0), data.lambda);
    OptimizerConfig cfg;
    const StationaryReport rep = find_stationary(spec, data, LossKind::squared(), theta, cfg);
    CHECK(rep.iterations == 0);
    CHECK(rep.classification == Classification::CriticalPoint);
  }
  SUBCASE("deep linear training reaches grad_tol and never increases the loss") {
    FeedforwardSpec f;
    f.widths = {3, 5, 5, 2};
    f.activations = {Activation::Identity, Activation::Identity};
    const ModelSpec spec{f};
    const Dataset data = gaussian_data(6, 3, 2, 47);
    Rng rng(48);
    const ParamVector theta0 = random_params(spec, rng, 0.5);
    OptimizerConfig cfg;
    cfg.max_iters = 200000;
    const double start = loss_L(spec, theta0, data, LossKind::squared());
    const StationaryReport rep = find_stationary(spec, data, LossKind::squared(), theta0, cfg);
    CHECK(rep.grad_inf_norm <= 1e-8);
    CHECK(rep.loss <= start);
  }
  SUBCASE("identical configs produce bit-identical runs") {
    FeedforwardSpec f;
    f.widths = {3, 4, 1};
    f.activations = {Activation::Tanh};
    const ModelSpec spec{f};
    const Dataset data = gaussian_data(5, 3, 1, 49);
    Rng rng(50);
    const ParamVector theta0 = random_params(spec, rng, 0.5);
    OptimizerConfig cfg;
    cfg.max_iters = 500;
    const StationaryReport a = find_stationary(spec, data, LossKind::squared(), theta0, cfg);
    const StationaryReport b = find_stationary(spec, data, LossKind::squared(), theta0, cfg);
    CHECK(a.theta.data == b.theta.data);
    CHECK(a.loss == b.loss);
    CHECK(a.iterations == b.iterations);
  }
  SUBCASE("trainable_blocks freezes everything else") {
    FeedforwardSpec f;
    f.widths = {3, 4, 2};
    f.activations = {Activation::Tanh};
    const ModelSpec spec{f};
    const Dataset data = gaussian_data(6, 3, 2, 51);
    Rng rng(52);
    const ParamVector theta0 = random_params(spec, rng, 0.5);
    OptimizerConfig cfg;
    cfg.trainable_blocks = {"W2"};
    cfg.max_iters = 5000;
    const StationaryReport rep = find_stationary(spec, data, LossKind::squared(), theta0, cfg);
    CHECK(rep.theta.block("W1") == theta0.block("W1"));  // frozen bits untouched
    CHECK((rep.theta.block("W2") - theta0.block("W2")).cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("classify_stationary") {
  SUBCASE("convex quadratic optimum is a local-min candidate") {
    const ModelSpec spec = linear_basis(4);
    const Dataset data = gaussian_data(9, 4, 1, 53);
    ParamVector theta = zero_params(spec);
    theta.data = min_norm_lstsq(data.X, data.Y.col(0), data.lambda);
    const StationaryReport rep =
        classify_stationary(spec, theta, data, LossKind::squared());
    CHECK(rep.classification == Classification::LocalMinCandidate);
    CHECK(rep.hessian_min_eig_estimate >= -tol::kEigTol);
  }
  SUBCASE("two-layer linear net at zero is a saddle candidate") {
    FeedforwardSpec f;
    f.widths = {3, 4, 1};
    f.activations = {Activation::Identity};
    const ModelSpec spec{f};
    Rng rng(54);
    Dataset data = gaussian_data(8, 3, 1, 55);
    data.Y = data.X.col(0) + data.X.col(1);  // nonzero input-target correlation
    const ParamVector theta = zero_params(spec);
    CHECK(grad_L(spec, theta, data, LossKind::squared()).lpNorm<Eigen::Infinity>() <= 1e-15);
    const StationaryReport rep =
        classify_stationary(spec, theta, data, LossKind::squared());
    CHECK(rep.classification == Classification::SaddleCandidate);
    const Matrix hess = finite_difference_hessian(spec, theta, data, LossKind::squared());
    CHECK(oracle::min_eigenvalue(hess) < -tol::kEigTol);
  }
  SUBCASE("estimate agrees with the dense finite-difference oracle") {
    FeedforwardSpec f;
    f.widths = {3, 4, 1};
    f.activations = {Activation::Identity};
    const ModelSpec spec{f};
    Dataset data = gaussian_data(8, 3, 1, 56);
    data.Y = 0.7 * data.X.col(2) - 0.2 * data.X.col(0);
    const ParamVector theta = zero_params(spec);  // exact critical point
    const StationaryReport rep =
        classify_stationary(spec, theta, data, LossKind::squared());
    const Matrix hess = finite_difference_hessian(spec, theta, data, LossKind::squared());
    CHECK(std::abs(rep.hessian_min_eig_estimate - oracle::min_eigenvalue(hess)) <= 1e-4);
  }
  SUBCASE("non-stationary points are rejected") {
    const ModelSpec spec = linear_basis(3);
    const Dataset data = gaussian_data(5, 3, 1, 57);
    ParamVector theta = zero_params(spec);
    theta.data.setConstant(1.0);
    CHECK_THROWS_AS(classify_stationary(spec, theta, data, LossKind::squared()),
                    PreconditionFailed);
  }
}

TEST_CASE("classification soundness on 40 random stationary points") {
  int agreements = 0;
  int tested = 0;
  for (std::uint64_t s = 0; s < 40; ++s) {
    const Eigen::Index d = 3 + static_cast<Eigen::Index>(s % 4);
    const ModelSpec spec = linear_basis(d);
    const Dataset data = gaussian_data(d + 3 + static_cast<Eigen::Index>(s % 3), d, 1,
                                       1000 + s);
    ParamVector theta = zero_params(spec);
    theta.data = min_norm_lstsq(data.X, data.Y.col(0), data.lambda);
    const StationaryReport rep =
        classify_stationary(spec, theta, data, LossKind::squared(), tol::kEigTol,
                            tol::kGradTol, {}, s);
    const Matrix hess = finite_difference_hessian(spec, theta, data, LossKind::squared());
    const double dense_min = oracle::min_eigenvalue(hess);
    const bool dense_says_min = dense_min >= -tol::kEigTol;
    const bool screen_says_min = rep.classification == Classification::LocalMinCandidate;
    ++tested;
    if (dense_says_min == screen_says_min) {
      ++agreements;
    } else {
      // disagreements may only straddle zero within the eig tolerance
      CHECK(std::abs(dense_min) <= tol::kEigTol);
      CHECK(std::abs(rep.hessian_min_eig_estimate) <= 2.0 * tol::kEigTol);
    }
  }
  CHECK(tested == 40);
  CHECK(agreements >= 38);  // >= 95%
}

TEST_CASE("dense Hessian kernels are bit-identical serial vs parallel") {
  FeedforwardSpec f;
  f.widths = {3, 4, 2};
  f.activations = {Activation::Tanh};
  const ModelSpec spec{f};
  Rng rng(58);
  const ParamVector theta = random_params(spec, rng, 0.4);
  const Dataset data = gaussian_data(5, 3, 2, 59);
  CHECK(finite_difference_hessian(spec, theta, data, LossKind::squared()) ==
        finite_difference_hessian_serial(spec, theta, data, LossKind::squared()));
}

TEST_CASE("divergence surfaces as Diverged") {
  const ModelSpec spec = linear_basis(2);
  Dataset data = gaussian_data(4, 2, 1, 60);
  ParamVector theta = zero_params(spec);
  theta.data.setConstant(std::numeric_limits<double>::infinity());
  OptimizerConfig cfg;
  CHECK_THROWS_AS(find_stationary(spec, data, LossKind::squared(), theta, cfg), Diverged);
}
