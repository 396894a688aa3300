#pragma once

#include "gradbasis/common.hpp"
#include "gradbasis/rng.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace gradbasis {

enum class Activation { Identity, ReLU, Tanh, Sigmoid };

Activation activation_from_name(const std::string& name);
std::string activation_name(Activation a);

double apply_activation(Activation a, double z);
double activation_derivative(Activation a, double z);

/// Fixed feature maps for the basis-function model (scalar output).
struct FeatureMap {
  enum class Kind { Identity, Affine, SineCos };
  Kind kind = Kind::Identity;
  Eigen::Index d_x = 0;

  Eigen::Index feature_count() const;
  Vector eval(const Vector& x) const;

  static FeatureMap from_name(const std::string& name, Eigen::Index d_x);
  std::string name() const;
};

/// f(x; theta) = sum_k theta_k phi(x)_k, d_y = 1.
struct BasisFunctionSpec {
  FeatureMap features;
};

/// f(x; theta) = W^(H+1) h^(H), h^(l) = act_l(W^(l) h^(l-1)), h^(0) = x.
/// widths = [d_0, d_1, ..., d_H, d_{H+1}]; activations has H entries for the
/// hidden layers; the output layer is linear.
struct FeedforwardSpec {
  std::vector<Eigen::Index> widths;
  std::vector<Activation> activations;

  Eigen::Index depth() const { return static_cast<Eigen::Index>(widths.size()) - 2; }
};

/// f(x; theta) = sum_{l in skips} V_l h^(l), with the hidden chain
/// h^(l) = act_l(W^(l) h^(l-1)) owned by the non-skip parameters. The last
/// hidden layer is always treated as skip-connected.
struct SkipConnectedSpec {
  std::vector<Eigen::Index> widths;  // [d_0, ..., d_H]
  std::vector<Activation> activations;
  Eigen::Index d_y = 1;
  std::vector<Eigen::Index> skips;  // subset of {1..H}; H is implied

  Eigen::Index depth() const { return static_cast<Eigen::Index>(widths.size()) - 1; }
  std::vector<Eigen::Index> effective_skips() const;
};

/// f(x; theta) = W (x + R z(x; u)) with unconstrained W (d_y x d_x) and
/// R (d_x x d_z); z is a user-configured feedforward subnetwork d_x -> d_z.
struct ResNetFormSpec {
  Eigen::Index d_x = 0;
  Eigen::Index d_y = 0;
  Eigen::Index d_z = 0;
  FeedforwardSpec inner;
};

struct ModelSpec {
  std::variant<BasisFunctionSpec, FeedforwardSpec, SkipConnectedSpec, ResNetFormSpec> v;

  Eigen::Index input_dim() const;
  Eigen::Index output_dim() const;
  std::string kind_name() const;

  const FeedforwardSpec* as_feedforward() const { return std::get_if<FeedforwardSpec>(&v); }
  const SkipConnectedSpec* as_skip() const { return std::get_if<SkipConnectedSpec>(&v); }
  const ResNetFormSpec* as_resnet() const { return std::get_if<ResNetFormSpec>(&v); }
  const BasisFunctionSpec* as_basis() const { return std::get_if<BasisFunctionSpec>(&v); }
};

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct BlockInfo {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index offset = 0;

  Eigen::Index size() const { return rows * cols; }
};

struct ParamLayout {
  std::vector<BlockInfo> blocks;
  Eigen::Index dim = 0;

  int index_of(const std::string& name) const;      // -1 if absent
  int index_of_checked(const std::string& name) const;
  const BlockInfo& block(const std::string& name) const;
};

/// Flat parameter vector with a named block layout. Matrix blocks are
/// vectorized column-major, so a block view is a plain Eigen::Map.
struct ParamVector {
  ParamLayout layout;
  Vector data;

  Eigen::Map<const Matrix> block(int i) const {
    const BlockInfo& b = layout.blocks[static_cast<size_t>(i)];
    return Eigen::Map<const Matrix>(data.data() + b.offset, b.rows, b.cols);
  }
  Eigen::Map<Matrix> block(int i) {
    const BlockInfo& b = layout.blocks[static_cast<size_t>(i)];
    return Eigen::Map<Matrix>(data.data() + b.offset, b.rows, b.cols);
  }
  Eigen::Map<const Matrix> block(const std::string& name) const {
    return block(layout.index_of_checked(name));
  }
  Eigen::Map<Matrix> block(const std::string& name) {
    return block(layout.index_of_checked(name));
  }
};

ParamLayout layout_for(const ModelSpec& spec);
ParamVector zero_params(const ModelSpec& spec);
ParamVector random_params(const ModelSpec& spec, Rng& rng, double scale = 0.5);

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

struct Dataset {
  Matrix X;       // m x d_x, one sample per row
  Matrix Y;       // m x d_y, one target per row
  Vector lambda;  // m positive weights

  Eigen::Index m() const { return X.rows(); }
  Eigen::Index d_x() const { return X.cols(); }
  Eigen::Index d_y() const { return Y.cols(); }

  void validate() const;
  /// Targets stacked sample-major into R^{m d_y}.
  Vector stacked_targets() const;
  /// Row weights for the stacked system (lambda_i replicated per coordinate).
  Vector stacked_weights() const;
};

Dataset make_dataset(Matrix X, Matrix Y);  // lambda = 1/m

// ---------------------------------------------------------------------------
// Evaluation and derivatives
// ---------------------------------------------------------------------------

Vector forward(const ModelSpec& spec, const ParamVector& theta, const Vector& x);

/// Outputs for all samples, one column per sample (d_y x m).
Matrix batch_forward(const ModelSpec& spec, const ParamVector& theta, const Matrix& X);
Matrix batch_forward_serial(const ModelSpec& spec, const ParamVector& theta, const Matrix& X);

/// Hidden activation matrices h^(l), l = 0..H, each d_l x m; h^(0) = X^T.
/// For the residual form this is the trace of the inner subnetwork.
/// Throws Unsupported for models without hidden layers.
std::vector<Matrix> hidden_activations(const ModelSpec& spec, const ParamVector& theta,
                                       const Matrix& X);
std::vector<Matrix> hidden_activations_serial(const ModelSpec& spec, const ParamVector& theta,
                                              const Matrix& X);

/// Exact reverse-mode Jacobian of the stacked output map: (m d_y) x d_theta,
/// rows grouped sample-major (row i*d_y + r), column k = d f_X / d theta_k.
/// Throws NondifferentiablePoint if a ReLU preactivation sits on a kink.
Matrix param_jacobian(const ModelSpec& spec, const ParamVector& theta, const Dataset& data);
Matrix param_jacobian_serial(const ModelSpec& spec, const ParamVector& theta,
                             const Dataset& data);

/// Coefficients g with Phi g = f_X(theta): copies the last-layer (and skip
/// output) blocks, zero elsewhere. Exact for every zoo model because they
/// are all linear in those blocks.
Vector assumption2_witness(const ModelSpec& spec, const ParamVector& theta);

/// Minimum |preactivation| over samples, ReLU layers and units; +inf when the
/// model has no ReLU activations.
double kink_distance(const ModelSpec& spec, const ParamVector& theta, const Matrix& X);

}  // namespace gradbasis
