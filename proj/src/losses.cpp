#include "gradbasis/losses.hpp"

namespace gradbasis {

std::string LossKind::name() const {
  switch (variant) {
    case Variant::Squared:
      return "squared";
    case Variant::CrossEntropyWithSoftmax:
      return "cross_entropy";
    case Variant::SmoothedHinge:
      return "smoothed_hinge_p" + std::to_string(hinge_p);
  }
  return "unknown";
}

Vector softmax(const Vector& q) {
  const double m = q.maxCoeff();
  Vector e = (q.array() - m).exp();
  return e / e.sum();
}

namespace {

void check_dims(const LossKind& kind, const Vector& q, const Vector& y) {
  if (q.size() != y.size()) throw InvalidInput("loss: output/target dimension mismatch");
  if (!q.allFinite()) throw InvalidInput("loss: non-finite model output");
  if (kind.variant == LossKind::Variant::SmoothedHinge && q.size() != 1)
    throw InvalidInput("smoothed hinge requires d_y = 1");
}

}  // namespace

double loss_value(const LossKind& kind, const Vector& q, const Vector& y) {
  check_dims(kind, q, y);
  switch (kind.variant) {
    case LossKind::Variant::Squared:
      return (q - y).squaredNorm();
    case LossKind::Variant::CrossEntropyWithSoftmax: {
      // -sum_k y_k log softmax(q)_k with max-subtracted log-sum-exp
      const double m = q.maxCoeff();
      const double lse = m + std::log((q.array() - m).exp().sum());
      double v = 0.0;
      for (Eigen::Index k = 0; k < q.size(); ++k) {
        if (y[k] != 0.0) v -= y[k] * (q[k] - lse);
      }
      return v;
    }
    case LossKind::Variant::SmoothedHinge: {
      const double margin = std::max(0.0, 1.0 - y[0] * q[0]);
      return std::pow(margin, kind.hinge_p);
    }
  }
  throw InvalidInput("loss_value: unknown variant");
}

Vector loss_grad(const LossKind& kind, const Vector& q, const Vector& y) {
  check_dims(kind, q, y);
  switch (kind.variant) {
    case LossKind::Variant::Squared:
      return 2.0 * (q - y);
    case LossKind::Variant::CrossEntropyWithSoftmax:
      return softmax(q) - y;
    case LossKind::Variant::SmoothedHinge: {
      const double margin = std::max(0.0, 1.0 - y[0] * q[0]);
      Vector g(1);
      g[0] = -static_cast<double>(kind.hinge_p) * y[0] * std::pow(margin, kind.hinge_p - 1);
      return g;
    }
  }
  throw InvalidInput("loss_grad: unknown variant");
}

LossKind loss_from_name(const std::string& name, int hinge_p) {
  if (name == "squared") return LossKind::squared();
  if (name == "cross_entropy") return LossKind::cross_entropy();
  if (name == "smoothed_hinge") return LossKind::smoothed_hinge(hinge_p);
  throw InvalidInput("unknown loss kind: " + name);
}

}  // namespace gradbasis
