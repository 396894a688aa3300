#include "gradbasis/training.hpp"

#include "gradbasis/parallel.hpp"
#include "gradbasis/rng.hpp"

namespace gradbasis {

std::string classification_name(Classification c) {
  switch (c) {
    case Classification::CriticalPoint: return "critical_point";
    case Classification::LocalMinCandidate: return "local_min_candidate";
    case Classification::SaddleCandidate: return "saddle_candidate";
    case Classification::NotConverged: return "not_converged";
  }
  return "unknown";
}

double loss_L(const ModelSpec& spec, const ParamVector& theta, const Dataset& data,
              const LossKind& loss) {
  const Matrix f = batch_forward(spec, theta, data.X);
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.m(); ++i)
    total += data.lambda[i] * loss_value(loss, f.col(i), data.Y.row(i).transpose());
  return total;
}

Vector grad_L(const ModelSpec& spec, const ParamVector& theta, const Dataset& data,
              const LossKind& loss) {
  const Matrix phi = param_jacobian(spec, theta, data);
  const Matrix f = batch_forward(spec, theta, data.X);
  const Eigen::Index d_y = data.d_y();
  Vector r(data.m() * d_y);
  for (Eigen::Index i = 0; i < data.m(); ++i)
    r.segment(i * d_y, d_y) =
        data.lambda[i] * loss_grad(loss, f.col(i), data.Y.row(i).transpose());
  return phi.transpose() * r;
}

std::vector<Eigen::Index> trainable_indices(const ParamLayout& layout,
                                            const std::vector<std::string>& blocks) {
  std::vector<Eigen::Index> idx;
  if (blocks.empty()) {
    idx.resize(static_cast<size_t>(layout.dim));
    for (Eigen::Index k = 0; k < layout.dim; ++k) idx[static_cast<size_t>(k)] = k;
    return idx;
  }
  for (const std::string& name : blocks) {
    const BlockInfo& b = layout.block(name);
    for (Eigen::Index k = 0; k < b.size(); ++k) idx.push_back(b.offset + k);
  }
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  return idx;
}

namespace {

Vector mask_gradient(const Vector& g, const std::vector<Eigen::Index>& idx) {
  if (idx.size() == static_cast<size_t>(g.size())) return g;
  Vector out = Vector::Zero(g.size());
  for (Eigen::Index k : idx) out[k] = g[k];
  return out;
}

}  // namespace

StationaryReport find_stationary(const ModelSpec& spec, const Dataset& data,
                                 const LossKind& loss, const ParamVector& theta0,
                                 const OptimizerConfig& cfg) {
  if (cfg.max_iters < 1) throw InvalidInput("find_stationary: max_iters must be >= 1");
  if (cfg.grad_tol <= 0.0) throw InvalidInput("find_stationary: grad_tol must be positive");
  if (theta0.layout.dim != layout_for(spec).dim)
    throw InvalidInput("find_stationary: theta0 does not match the model layout");

  const std::vector<Eigen::Index> idx = trainable_indices(theta0.layout, cfg.trainable_blocks);

  StationaryReport rep;
  rep.theta = theta0;
  auto eval_loss = [&](const ParamVector& p) {
    // non-finite outputs surface as InvalidInput inside the loss; map them to
    // +inf so the line search backs off
    try {
      return loss_L(spec, p, data, loss);
    } catch (const InvalidInput&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  double value = eval_loss(rep.theta);
  if (!std::isfinite(value)) throw Diverged("find_stationary: non-finite loss at theta0");
  Vector g = mask_gradient(grad_L(spec, rep.theta, data, loss), idx);
  double step = 1.0;

  int it = 0;
  for (; it < cfg.max_iters; ++it) {
    const double gnorm = g.lpNorm<Eigen::Infinity>();
    if (gnorm <= cfg.grad_tol) break;
    if (!g.allFinite()) throw Diverged("find_stationary: non-finite gradient");

    const double gsq = g.squaredNorm();
    double t = step;
    bool accepted = false;
    bool have_next_grad = false;
    Vector next_grad;
    ParamVector trial = rep.theta;
    // pass 1: standard backtracking on the sufficient-decrease condition
    while (t > 1e-20) {
      trial.data = rep.theta.data - t * g;
      const double trial_value = eval_loss(trial);
      // require representable progress; a subtraction that rounds back to
      // `value` would otherwise accept bitwise no-op steps forever
      if (std::isfinite(trial_value) && trial_value < value &&
          trial_value <= value - cfg.sufficient_decrease * t * gsq) {
        rep.theta = trial;
        value = trial_value;
        step = std::min(t / cfg.shrink, 1e6);
        accepted = true;
        break;
      }
      t *= cfg.shrink;
    }
    // pass 2 (end-game): near the optimum the decrease t |g|^2 falls below
    // one ulp of the loss and the Armijo test goes blind, while the gradient
    // itself still carries ~8 more digits. Accept on a strict |grad|_2
    // contraction instead: for steps inside the contraction range the loss
    // decrease is implied (the contraction range t <= 2/lambda_max sits
    // inside the descent range along -g), even when it is not representable.
    if (!accepted) {
      t = 1.0;  // the collapsed Armijo step may be a bitwise no-op; restart
      const double g2 = std::sqrt(gsq);
      while (t > 1e-20) {
        trial.data = rep.theta.data - t * g;
        const double trial_value = eval_loss(trial);
        if (std::isfinite(trial_value)) {
          try {
            next_grad = mask_gradient(grad_L(spec, trial, data, loss), idx);
            if (next_grad.norm() <= g2 * (1.0 - 1e-12)) {
              rep.theta = trial;
              value = trial_value;
              step = std::min(t / cfg.shrink, 1e6);
              accepted = true;
              have_next_grad = true;
              break;
            }
          } catch (const NondifferentiablePoint&) {
          }
        }
        t *= cfg.shrink;
      }
    }
    if (!accepted) break;  // no productive step length left
    g = have_next_grad ? next_grad : mask_gradient(grad_L(spec, rep.theta, data, loss), idx);
  }

  rep.loss = value;
  rep.grad_inf_norm = g.lpNorm<Eigen::Infinity>();
  rep.iterations = it;
  rep.kink_distance = kink_distance(spec, rep.theta, data.X);
  rep.classification = rep.grad_inf_norm <= cfg.grad_tol ? Classification::CriticalPoint
                                                         : Classification::NotConverged;
  return rep;
}

// ---------------------------------------------------------------------------
// Second-order screen
// ---------------------------------------------------------------------------

namespace {

/// Central-difference Hessian-vector product on the trainable subspace.
class HvOperator {
 public:
  HvOperator(const ModelSpec& spec, const ParamVector& theta, const Dataset& data,
             const LossKind& loss, const std::vector<Eigen::Index>& idx, double h)
      : spec_(spec), theta_(theta), data_(data), loss_(loss), idx_(idx), h_(h) {}

  Eigen::Index dim() const { return static_cast<Eigen::Index>(idx_.size()); }

  Vector apply(const Vector& v_unit) const {
    ParamVector p = theta_;
    for (size_t k = 0; k < idx_.size(); ++k)
      p.data[idx_[k]] = theta_.data[idx_[k]] + h_ * v_unit[static_cast<Eigen::Index>(k)];
    const Vector gp = grad_L(spec_, p, data_, loss_);
    for (size_t k = 0; k < idx_.size(); ++k)
      p.data[idx_[k]] = theta_.data[idx_[k]] - h_ * v_unit[static_cast<Eigen::Index>(k)];
    const Vector gm = grad_L(spec_, p, data_, loss_);
    Vector out(dim());
    for (size_t k = 0; k < idx_.size(); ++k)
      out[static_cast<Eigen::Index>(k)] = (gp[idx_[k]] - gm[idx_[k]]) / (2.0 * h_);
    return out;
  }

 private:
  const ModelSpec& spec_;
  const ParamVector& theta_;
  const Dataset& data_;
  const LossKind& loss_;
  const std::vector<Eigen::Index>& idx_;
  double h_;
};

/// Rayleigh-quotient power iteration for op(v) = shift*v + hsign*Hv(v);
/// returns the eigenvalue of the dominant (largest |.|) eigenpair.
double power_iteration(const HvOperator& hv, double shift, double hsign, Rng& rng,
                       int max_iters, double rel_tol) {
  Vector v = rng.unit_vector(hv.dim());
  double lam = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    Vector w = hsign * hv.apply(v);
    if (shift != 0.0) w += shift * v;
    const double next = v.dot(w);
    const double wn = w.norm();
    if (wn <= 1e-300) return next;  // operator annihilates v; eigenvalue ~ 0
    v = w / wn;
    if (it > 8 && std::abs(next - lam) <= rel_tol * std::max(1.0, std::abs(next))) {
      lam = next;
      break;
    }
    lam = next;
  }
  return lam;
}

}  // namespace

StationaryReport classify_stationary(const ModelSpec& spec, const ParamVector& theta,
                                     const Dataset& data, const LossKind& loss, double eig_tol,
                                     double grad_tol,
                                     const std::vector<std::string>& trainable_blocks,
                                     std::uint64_t seed) {
  const std::vector<Eigen::Index> idx = trainable_indices(theta.layout, trainable_blocks);
  const Vector g = mask_gradient(grad_L(spec, theta, data, loss), idx);
  const double gnorm = g.lpNorm<Eigen::Infinity>();
  if (gnorm > grad_tol)
    throw PreconditionFailed("classify_stationary: point is not stationary (|grad|_inf = " +
                             std::to_string(gnorm) + ")");

  const double fd_h = 1e-5;
  HvOperator hv(spec, theta, data, loss, idx, fd_h);
  Rng rng(seed ^ 0x5ca1ab1eULL);

  // Stage 1: dominant |eigenvalue| of the Hessian.
  const double dominant = power_iteration(hv, 0.0, +1.0, rng, 2000, 1e-11);
  const double mu = std::abs(dominant);
  // Stage 2: dominant eigenvalue of (c I - H) is c - lambda_min.
  const double c = mu * 1.01 + 1e-8;
  const double nu = power_iteration(hv, c, -1.0, rng, 4000, 1e-12);
  const double min_eig = c - nu;

  StationaryReport rep;
  rep.theta = theta;
  rep.loss = loss_L(spec, theta, data, loss);
  rep.grad_inf_norm = gnorm;
  rep.hessian_min_eig_estimate = min_eig;
  rep.kink_distance = kink_distance(spec, theta, data.X);
  rep.classification = min_eig >= -eig_tol ? Classification::LocalMinCandidate
                                           : Classification::SaddleCandidate;
  return rep;
}

// ---------------------------------------------------------------------------
// Dense finite-difference Hessian (parallel + serial reference)
// ---------------------------------------------------------------------------

namespace {

template <typename Loop>
Matrix fd_hessian_impl(const ModelSpec& spec, const ParamVector& theta, const Dataset& data,
                       const LossKind& loss, double h,
                       const std::vector<std::string>& trainable_blocks, Loop&& loop) {
  const std::vector<Eigen::Index> idx = trainable_indices(theta.layout, trainable_blocks);
  const int n = static_cast<int>(idx.size());
  Matrix hess(n, n);
  loop(n, [&](int j) {
    ParamVector p = theta;
    p.data[idx[static_cast<size_t>(j)]] += h;
    const Vector gp = grad_L(spec, p, data, loss);
    p.data[idx[static_cast<size_t>(j)]] -= 2.0 * h;
    const Vector gm = grad_L(spec, p, data, loss);
    for (int r = 0; r < n; ++r)
      hess(r, j) = (gp[idx[static_cast<size_t>(r)]] - gm[idx[static_cast<size_t>(r)]]) / (2.0 * h);
  });
  return 0.5 * (hess + hess.transpose());
}

}  // namespace

Matrix finite_difference_hessian(const ModelSpec& spec, const ParamVector& theta,
                                 const Dataset& data, const LossKind& loss, double h,
                                 const std::vector<std::string>& trainable_blocks) {
  return fd_hessian_impl(spec, theta, data, loss, h, trainable_blocks,
                         [](int n, auto&& body) { parallel_for(n, body); });
}

Matrix finite_difference_hessian_serial(const ModelSpec& spec, const ParamVector& theta,
                                        const Dataset& data, const LossKind& loss, double h,
                                        const std::vector<std::string>& trainable_blocks) {
  return fd_hessian_impl(spec, theta, data, loss, h, trainable_blocks,
                         [](int n, auto&& body) { serial_for(n, body); });
}

}  // namespace gradbasis
