#pragma once

#include "gradbasis/models.hpp"

#include <cstdint>

namespace gradbasis {

/// Index sets J^(t+1)..J^(H+1) of units that act linearly near theta, with
/// the zero cross-blocks that decouple them from the rest of the net.
struct InducedStructure {
  int t = 0;
  int n = 0;
  std::vector<std::vector<Eigen::Index>> J;  // J[i] is the set for layer t+1+i
  double epsilon_probe = 0.0;
  bool certified = false;
  std::vector<std::string> violations;

  const std::vector<Eigen::Index>& layer_set(Eigen::Index l) const {  // l in t+1..H+1
    return J.at(static_cast<size_t>(l - t - 1));
  }
  /// First n indices of J^(l), ascending; the selected channels used by the
  /// chain construction.
  std::vector<Eigen::Index> selected(Eigen::Index l) const;
};

/// Appends the constant-1 coordinate: x_i = [(x_i^raw)^T, 1]^T.
Matrix augment_inputs(const Matrix& X_raw);

/// Hidden-chain spec used with the constructed weights below: widths
/// [d_raw+1, width, ..., width, d_y], ReLU activations.
FeedforwardSpec overparam_spec(Eigen::Index d_raw, int depth, Eigen::Index width,
                               Eigen::Index d_y);

/// Hidden-layer weights that make unit i of every layer fire exactly on
/// sample i: row i of W^(1) is [(x_i^raw)^T, eps-1], deeper layers are
/// diagonal. Guarantees rank([phi(x_i; u)]) >= m. Returns a ParamVector with
/// blocks W1..W<depth>. Requires unit-norm, pairwise-separated inputs.
ParamVector overparam_weights(const Matrix& X_raw, double delta, double eps, int depth,
                              Eigen::Index width);

/// Assembles the full parameter vector for overparam_spec: hidden blocks from
/// `hidden`, last layer set to w_last.
ParamVector assemble_overparam_params(const FeedforwardSpec& spec, const ParamVector& hidden,
                                      const Matrix& w_last);

/// Searches greedily (largest sets first, units in ascending index order) for
/// index sets satisfying the three structure conditions. Condition 2 is
/// checked exactly at theta, by a sound preactivation-margin bound over the
/// probe ball, and at sampled interior points; condition 3 exactly at theta.
/// Identity activations certify trivially with all units; ReLU units certify
/// when they clear the kink by more than the worst-case preactivation drift;
/// other activations only certify as linear when they are Identity.
InducedStructure detect_induced_structure(const FeedforwardSpec& spec, const ParamVector& theta,
                                          const Dataset& data, int t, int n,
                                          double probe_radius, int n_samples,
                                          std::uint64_t seed);

/// Forward pass through the chain decomposition induced by the selected
/// channels (cross-block terms into the complement dropped, as the
/// decomposition prescribes). Agrees with the plain forward pass exactly when
/// the structure's zero blocks hold for the selected channels.
Vector structured_forward_oracle(const FeedforwardSpec& spec, const ParamVector& theta,
                                 const InducedStructure& s, const Vector& x);

}  // namespace gradbasis
