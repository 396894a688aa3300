#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gradbasis/constructions.hpp"
#include "gradbasis/gradient_basis.hpp"
#include "gradbasis/harness.hpp"
#include "oracles.hpp"

using namespace gradbasis;

TEST_CASE("overparam_weights") {
  SUBCASE("two orthogonal inputs pin the first-layer preactivations") {
    Matrix raw(2, 2);
    raw << 1.0, 0.0, 0.0, 1.0;
    const double eps = 0.5, delta = 0.5;
    const ParamVector u = overparam_weights(raw, delta, eps, 1, 2);
    const Matrix x = augment_inputs(raw);
    const auto w1 = u.block("W1");
    for (Eigen::Index i = 0; i < 2; ++i) {
      const Vector pre = w1 * x.row(i).transpose();
      CHECK(pre[i] == doctest::Approx(eps).epsilon(1e-14));      // own sample fires
      CHECK(pre[1 - i] <= 0.0);                                  // others do not
    }
  }
  SUBCASE("feature matrix reaches rank m for any valid input set") {
    Rng rng(170);
    for (int depth : {1, 2, 3}) {
      const Matrix raw = Matrix(Eigen::HouseholderQR<Matrix>(rng.normal_matrix(6, 4))
                                    .householderQ() *
                                Matrix::Identity(6, 4))
                             .transpose();
      const ParamVector u = overparam_weights(raw, 0.5, 0.3, depth, 6);
      const FeedforwardSpec ff = overparam_spec(6, depth, 6, 1);
      const ParamVector theta =
          assemble_overparam_params(ff, u, Matrix::Zero(1, 6));
      const std::vector<Matrix> h =
          hidden_activations(ModelSpec{ff}, theta, augment_inputs(raw));
      CHECK(numerical_rank(h.back()) >= 4);
    }
  }
  SUBCASE("precondition gates") {
    Matrix dup(2, 3);
    dup << 1.0, 0.0, 0.0, 1.0, 0.0, 0.0;  // duplicated inputs
    CHECK_THROWS_AS(overparam_weights(dup, 0.5, 0.5, 1, 2), InvalidInput);
    Matrix unnorm(2, 3);
    unnorm << 2.0, 0.0, 0.0, 0.0, 1.0, 0.0;
    CHECK_THROWS_AS(overparam_weights(unnorm, 0.5, 0.5, 1, 2), InvalidInput);
    Matrix ok(2, 3);
    ok << 1.0, 0.0, 0.0, 0.0, 1.0, 0.0;
    CHECK_THROWS_AS(overparam_weights(ok, 0.5, 0.6, 1, 2), InvalidInput);  // eps > delta
    CHECK_THROWS_AS(overparam_weights(ok, 0.5, 0.5, 1, 1), InvalidInput);  // width < m
  }
  SUBCASE("combined with any last layer, the induced optimum is zero") {
    Rng rng(171);
    const Matrix raw = Matrix(Eigen::HouseholderQR<Matrix>(rng.normal_matrix(5, 4))
                                  .householderQ() *
                              Matrix::Identity(5, 4))
                           .transpose();
    const ParamVector u = overparam_weights(raw, 0.5, 0.3, 1, 4);
    const FeedforwardSpec ff = overparam_spec(5, 1, 4, 1);
    const ModelSpec spec{ff};
    const ParamVector theta =
        assemble_overparam_params(ff, u, rng.normal_matrix(1, 4));
    const Dataset data = make_dataset(augment_inputs(raw), rng.normal_matrix(4, 1));
    const GradientBasis basis = build_gradient_basis(spec, theta, data);
    CHECK(solve_induced(basis, LossKind::squared()).optimal_value <= 1e-9);
  }
  SUBCASE("deeper instances sit on the kink set and are flagged") {
    Rng rng(172);
    const Matrix raw = Matrix(Eigen::HouseholderQR<Matrix>(rng.normal_matrix(5, 3))
                                  .householderQ() *
                              Matrix::Identity(5, 3))
                           .transpose();
    const ParamVector u = overparam_weights(raw, 0.5, 0.3, 2, 3);
    const FeedforwardSpec ff = overparam_spec(5, 2, 3, 1);
    const ModelSpec spec{ff};
    const ParamVector theta =
        assemble_overparam_params(ff, u, rng.normal_matrix(1, 3));
    const Matrix x = augment_inputs(raw);
    CHECK(kink_distance(spec, theta, x) == 0.0);  // layer-2 off-diagonal zeros
    const Dataset data = make_dataset(x, rng.normal_matrix(3, 1));
    CHECK_THROWS_AS(param_jacobian(spec, theta, data), NondifferentiablePoint);
  }
}

TEST_CASE("detect_induced_structure") {
  SUBCASE("identity-activation networks certify with all units") {
    FeedforwardSpec f;
    f.widths = {3, 5, 4, 2};
    f.activations = {Activation::Identity, Activation::Identity};
    Rng rng(173);
    const ParamVector theta = random_params(ModelSpec{f}, rng, 0.7);
    const Dataset data = make_dataset(rng.normal_matrix(6, 3), rng.normal_matrix(6, 2));
    const InducedStructure s = detect_induced_structure(f, theta, data, 0, 2, 1e-3, 6, 3);
    CHECK(s.certified);
    CHECK(s.layer_set(1).size() == 5);
    CHECK(s.layer_set(2).size() == 4);
    CHECK(s.layer_set(3).size() == 2);
    CHECK(s.violations.empty());
  }
  SUBCASE("the constructed ReLU instance certifies") {
    const StructuredInstance inst = make_structured_relu_instance(174, 6);
    const InducedStructure s = detect_induced_structure(
        *inst.spec.as_feedforward(), inst.theta, inst.data, 0, 2, 1e-3, 8, 4);
    CHECK(s.certified);
    CHECK(s.layer_set(1).size() >= 2);
    CHECK(s.layer_set(2).size() >= 2);
    // the selected channels are the two positive ones
    CHECK(s.selected(1) == std::vector<Eigen::Index>{0, 1});
    CHECK(s.selected(2) == std::vector<Eigen::Index>{0, 1});
  }
  SUBCASE("generic random ReLU nets do not certify") {
    FeedforwardSpec f;
    f.widths = {3, 6, 5, 2};
    f.activations = {Activation::ReLU, Activation::ReLU};
    Rng rng(175);
    const ParamVector theta = random_params(ModelSpec{f}, rng, 0.7);
    const Dataset data = make_dataset(rng.normal_matrix(6, 3), rng.normal_matrix(6, 2));
    const InducedStructure s = detect_induced_structure(f, theta, data, 0, 2, 1e-3, 6, 5);
    CHECK_FALSE(s.certified);
    CHECK_FALSE(s.violations.empty());
  }
  SUBCASE("smooth activations only certify the identity case") {
    FeedforwardSpec f;
    f.widths = {3, 4, 2};
    f.activations = {Activation::Tanh};
    Rng rng(176);
    const ParamVector theta = random_params(ModelSpec{f}, rng, 0.5);
    const Dataset data = make_dataset(rng.normal_matrix(5, 3), rng.normal_matrix(5, 2));
    const InducedStructure s = detect_induced_structure(f, theta, data, 0, 2, 1e-3, 4, 6);
    CHECK_FALSE(s.certified);
  }
}

TEST_CASE("structured forward oracle matches the network inside the tilde ball") {
  const StructuredInstance inst = make_structured_relu_instance(177, 6);
  const auto* ff = inst.spec.as_feedforward();
  const InducedStructure s =
      detect_induced_structure(*ff, inst.theta, inst.data, 0, 2, 1e-3, 6, 7);
  REQUIRE(s.certified);

  SUBCASE("exact at theta") {
    for (Eigen::Index i = 0; i < inst.data.m(); ++i) {
      const Vector x = inst.data.X.row(i).transpose();
      const Vector via_net = forward(inst.spec, inst.theta, x);
      const Vector via_blocks = structured_forward_oracle(*ff, inst.theta, s, x);
      CHECK((via_net - via_blocks).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
  SUBCASE("holds at sampled points that keep the zero blocks") {
    Rng rng(178);
    for (int trial = 0; trial < 6; ++trial) {
      ParamVector probe = inst.theta;
      probe.data += rng.in_ball(probe.layout.dim, 1e-3);
      // the tilde ball preserves the cross-block zeros
      auto w2 = probe.block("W2");
      for (Eigen::Index r = 2; r < 5; ++r) {
        w2(r, 0) = 0.0;
        w2(r, 1) = 0.0;
      }
      for (Eigen::Index i = 0; i < inst.data.m(); ++i) {
        const Vector x = inst.data.X.row(i).transpose();
        const Vector via_net = forward(inst.spec, probe, x);
        const Vector via_blocks = structured_forward_oracle(*ff, probe, s, x);
        CHECK((via_net - via_blocks).cwiseAbs().maxCoeff() <= 1e-10);
      }
    }
  }
  SUBCASE("t = H collapses to the plain forward pass") {
    const InducedStructure sh = detect_induced_structure(
        *ff, inst.theta, inst.data, static_cast<int>(ff->depth()), 2, 1e-3, 4, 8);
    REQUIRE(sh.certified);
    const Vector x = inst.data.X.row(0).transpose();
    CHECK((structured_forward_oracle(*ff, inst.theta, sh, x) -
           forward(inst.spec, inst.theta, x)).cwiseAbs().maxCoeff() == 0.0);
  }
}
