#pragma once

#include "gradbasis/common.hpp"

namespace gradbasis {

/// Convex, differentiable per-sample criteria. Cross-entropy folds the
/// softmax into the loss, so model outputs are pre-softmax logits. The
/// smoothed hinge requires p >= 2 and scalar outputs; p = 1 (the raw hinge)
/// is rejected because it is not differentiable at the margin.
struct LossKind {
  enum class Variant { Squared, CrossEntropyWithSoftmax, SmoothedHinge };
  Variant variant = Variant::Squared;
  int hinge_p = 2;

  static LossKind squared() { return {Variant::Squared, 2}; }
  static LossKind cross_entropy() { return {Variant::CrossEntropyWithSoftmax, 2}; }
  static LossKind smoothed_hinge(int p) {
    if (p < 2) throw InvalidInput("smoothed hinge requires p >= 2");
    return {Variant::SmoothedHinge, p};
  }

  std::string name() const;
};

/// ell_y(q) >= 0.
double loss_value(const LossKind& kind, const Vector& q, const Vector& y);

/// Analytic gradient of ell_y with respect to q (returned as a column
/// vector; the paper's row-vector convention only changes orientation).
Vector loss_grad(const LossKind& kind, const Vector& q, const Vector& y);

/// Numerically stable softmax (max-subtracted).
Vector softmax(const Vector& q);

LossKind loss_from_name(const std::string& name, int hinge_p = 2);

}  // namespace gradbasis
