#include "gradbasis/constructions.hpp"

#include "gradbasis/rng.hpp"

#include <set>
#include <sstream>

namespace gradbasis {

std::vector<Eigen::Index> InducedStructure::selected(Eigen::Index l) const {
  const std::vector<Eigen::Index>& full = layer_set(l);
  if (static_cast<int>(full.size()) < n)
    throw InvalidInput("induced structure: layer set smaller than n");
  return std::vector<Eigen::Index>(full.begin(), full.begin() + n);
}

Matrix augment_inputs(const Matrix& X_raw) {
  Matrix x(X_raw.rows(), X_raw.cols() + 1);
  x.leftCols(X_raw.cols()) = X_raw;
  x.col(X_raw.cols()).setOnes();
  return x;
}

FeedforwardSpec overparam_spec(Eigen::Index d_raw, int depth, Eigen::Index width,
                               Eigen::Index d_y) {
  FeedforwardSpec f;
  f.widths.push_back(d_raw + 1);
  for (int l = 0; l < depth; ++l) f.widths.push_back(width);
  f.widths.push_back(d_y);
  f.activations.assign(static_cast<size_t>(depth), Activation::ReLU);
  return f;
}

ParamVector overparam_weights(const Matrix& X_raw, double delta, double eps, int depth,
                              Eigen::Index width) {
  const Eigen::Index m = X_raw.rows();
  const Eigen::Index d_raw = X_raw.cols();
  if (depth < 1) throw InvalidInput("overparam_weights: depth must be >= 1");
  if (width < m) throw InvalidInput("overparam_weights: width must be >= m");
  if (delta <= 0.0 || eps <= 0.0 || eps > delta)
    throw InvalidInput("overparam_weights: need 0 < eps <= delta");
  for (Eigen::Index i = 0; i < m; ++i) {
    const double nrm = X_raw.row(i).norm();
    if (std::abs(nrm - 1.0) > 1e-12)
      throw InvalidInput("overparam_weights: input " + std::to_string(i) +
                         " is not unit-norm (|x| = " + std::to_string(nrm) + ")");
  }
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j) {
      const double ip = X_raw.row(i).dot(X_raw.row(j));
      if (ip >= 1.0 - delta)
        throw InvalidInput("overparam_weights: inputs " + std::to_string(i) + " and " +
                           std::to_string(j) + " have inner product " + std::to_string(ip) +
                           " >= 1 - delta");
    }

  ParamVector u;
  u.layout.blocks.push_back({"W1", width, d_raw + 1, 0});
  u.layout.dim = width * (d_raw + 1);
  for (int l = 2; l <= depth; ++l) {
    u.layout.blocks.push_back({"W" + std::to_string(l), width, width, u.layout.dim});
    u.layout.dim += width * width;
  }
  u.data = Vector::Zero(u.layout.dim);

  auto w1 = u.block("W1");
  for (Eigen::Index i = 0; i < m; ++i) {
    w1.row(i).head(d_raw) = X_raw.row(i);
    w1(i, d_raw) = eps - 1.0;
  }
  for (int l = 2; l <= depth; ++l) {
    auto wl = u.block("W" + std::to_string(l));
    for (Eigen::Index j = 0; j < width; ++j) wl(j, j) = 1.0;
  }
  return u;
}

ParamVector assemble_overparam_params(const FeedforwardSpec& spec, const ParamVector& hidden,
                                      const Matrix& w_last) {
  ModelSpec m{spec};
  ParamVector theta = zero_params(m);
  const int layers = static_cast<int>(spec.widths.size()) - 1;
  for (int l = 1; l < layers; ++l) {
    const std::string name = "W" + std::to_string(l);
    const BlockInfo& dst = theta.layout.block(name);
    const BlockInfo& src = hidden.layout.block(name);
    if (dst.rows != src.rows || dst.cols != src.cols)
      throw InvalidInput("assemble_overparam_params: block " + name + " is " +
                         std::to_string(src.rows) + "x" + std::to_string(src.cols) +
                         " but the spec expects " + std::to_string(dst.rows) + "x" +
                         std::to_string(dst.cols));
    theta.block(name) = hidden.block(name);
  }
  const BlockInfo& last = theta.layout.block("W" + std::to_string(layers));
  if (w_last.rows() != last.rows || w_last.cols() != last.cols)
    throw InvalidInput("assemble_overparam_params: last layer has the wrong shape");
  theta.block("W" + std::to_string(layers)) = w_last;
  return theta;
}

// ---------------------------------------------------------------------------
// Structure detection
// ---------------------------------------------------------------------------

namespace {

struct MarginBound {
  // per-sample bound on the preactivation drift of layer l over the probe
  // ball, from the Lipschitz recursion
  //   dz_l <= rho (|h_{l-1}| + dh_{l-1}) + |W_l|_F dh_{l-1},  dh_l <= dz_l.
  std::vector<Vector> dz;  // dz[l-1] has one entry per sample
};

MarginBound margin_bounds(const FeedforwardSpec& spec, const ParamVector& theta,
                          const std::vector<Matrix>& h, double rho) {
  const Eigen::Index depth = spec.depth();
  const Eigen::Index m = h[0].cols();
  MarginBound b;
  b.dz.resize(static_cast<size_t>(depth));
  Vector dh = Vector::Zero(m);
  for (Eigen::Index l = 1; l <= depth; ++l) {
    const double wf = theta.block("W" + std::to_string(l)).norm();
    Vector dz(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double hn = h[static_cast<size_t>(l - 1)].col(i).norm();
      dz[i] = rho * (hn + dh[i]) + wf * dh[i];
    }
    b.dz[static_cast<size_t>(l - 1)] = dz;
    dh = dz;
  }
  return b;
}

}  // namespace

InducedStructure detect_induced_structure(const FeedforwardSpec& spec, const ParamVector& theta,
                                          const Dataset& data, int t, int n,
                                          double probe_radius, int n_samples,
                                          std::uint64_t seed) {
  const Eigen::Index depth = spec.depth();
  if (t < 0 || t > depth) throw InvalidInput("detect_induced_structure: t outside {0..H}");
  if (n < 1) throw InvalidInput("detect_induced_structure: n must be >= 1");
  const Eigen::Index d_y = spec.widths.back();
  const ModelSpec mspec{spec};

  InducedStructure s;
  s.t = t;
  s.n = n;
  s.epsilon_probe = probe_radius;
  s.certified = true;

  const std::vector<Matrix> h = hidden_activations(mspec, theta, data.X);
  // preactivations reconstructed layer by layer
  std::vector<Matrix> pre(static_cast<size_t>(depth));
  for (Eigen::Index l = 1; l <= depth; ++l)
    pre[static_cast<size_t>(l - 1)] =
        theta.block("W" + std::to_string(l)) * h[static_cast<size_t>(l - 1)];
  const MarginBound bound = margin_bounds(spec, theta, h, probe_radius);

  // Condition 2: per-layer candidate units, exact + margin certificate.
  std::vector<std::vector<Eigen::Index>> cand(static_cast<size_t>(depth - t));
  for (Eigen::Index l = t + 1; l <= depth; ++l) {
    const Activation act = spec.activations[static_cast<size_t>(l - 1)];
    std::vector<Eigen::Index>& units = cand[static_cast<size_t>(l - t - 1)];
    if (act == Activation::Identity) {
      for (Eigen::Index u = 0; u < spec.widths[static_cast<size_t>(l)]; ++u)
        units.push_back(u);
      continue;
    }
    if (act != Activation::ReLU) continue;  // no linearity certificate for smooth sigmoids
    for (Eigen::Index u = 0; u < spec.widths[static_cast<size_t>(l)]; ++u) {
      bool ok = true;
      for (Eigen::Index i = 0; i < data.m() && ok; ++i) {
        const double z = pre[static_cast<size_t>(l - 1)](u, i);
        const double drift = bound.dz[static_cast<size_t>(l - 1)][i];
        if (!(z > 0.0 && z > drift)) ok = false;
      }
      if (ok) units.push_back(u);
    }
  }

  // Sampled re-check of condition 2 inside the ball.
  Rng rng(seed);
  for (int sidx = 0; sidx < n_samples; ++sidx) {
    ParamVector probe = theta;
    probe.data += rng.in_ball(theta.layout.dim, probe_radius);
    const std::vector<Matrix> hp = hidden_activations(mspec, probe, data.X);
    for (Eigen::Index l = t + 1; l <= depth; ++l) {
      if (spec.activations[static_cast<size_t>(l - 1)] != Activation::ReLU) continue;
      const Matrix zp = probe.block("W" + std::to_string(l)) * hp[static_cast<size_t>(l - 1)];
      for (Eigen::Index u : cand[static_cast<size_t>(l - t - 1)])
        for (Eigen::Index i = 0; i < data.m(); ++i)
          if (!(zp(u, i) > 0.0)) {
            std::ostringstream msg;
            msg << "sampled point " << sidx << ": unit " << u << " of layer " << l
                << " leaves the linear region on sample " << i;
            s.violations.push_back(msg.str());
            s.certified = false;
          }
    }
  }

  // Condition 3: top-down filtering against the zero blocks of W^(l+1).
  s.J.assign(static_cast<size_t>(depth - t + 1), {});
  std::vector<Eigen::Index> j_above(static_cast<size_t>(d_y));
  for (Eigen::Index r = 0; r < d_y; ++r) j_above[static_cast<size_t>(r)] = r;
  s.J.back() = j_above;  // output layer acts linearly by construction
  for (Eigen::Index l = depth; l >= t + 1; --l) {
    const std::vector<Eigen::Index>& units = cand[static_cast<size_t>(l - t - 1)];
    std::vector<Eigen::Index> keep;
    if (l == depth) {
      keep = units;
    } else {
      const auto w_next = theta.block("W" + std::to_string(l + 1));
      std::set<Eigen::Index> above(j_above.begin(), j_above.end());
      for (Eigen::Index j : units) {
        bool zero_block = true;
        for (Eigen::Index i = 0; i < w_next.rows() && zero_block; ++i)
          if (above.find(i) == above.end() && w_next(i, j) != 0.0) zero_block = false;
        if (zero_block) keep.push_back(j);
      }
    }
    s.J[static_cast<size_t>(l - t - 1)] = keep;
    j_above = keep;
    if (static_cast<int>(keep.size()) < n) {
      std::ostringstream msg;
      msg << "layer " << l << ": only " << keep.size() << " units satisfy conditions 2-3 (need "
          << n << ")";
      s.violations.push_back(msg.str());
      s.certified = false;
    }
  }
  if (d_y < n) {
    s.violations.push_back("output layer narrower than n");
    s.certified = false;
  }
  return s;
}

Vector structured_forward_oracle(const FeedforwardSpec& spec, const ParamVector& theta,
                                 const InducedStructure& s, const Vector& x) {
  const Eigen::Index depth = spec.depth();
  const Eigen::Index t = s.t;
  const ModelSpec mspec{spec};
  if (t >= depth) return forward(mspec, theta, x);  // decomposition collapses

  // plain forward up to layer t
  Vector h = x;
  for (Eigen::Index l = 1; l <= t; ++l) {
    Vector z = theta.block("W" + std::to_string(l)) * h;
    const Activation act = spec.activations[static_cast<size_t>(l - 1)];
    for (Eigen::Index u = 0; u < z.size(); ++u) z[u] = apply_activation(act, z[u]);
    h = z;
  }

  auto split_cols = [&](const Matrix& w, const std::vector<Eigen::Index>& sel) {
    std::vector<Eigen::Index> rest;
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      if (std::find(sel.begin(), sel.end(), c) == sel.end()) rest.push_back(c);
    Matrix a(w.rows(), static_cast<Eigen::Index>(sel.size()));
    Matrix b(w.rows(), static_cast<Eigen::Index>(rest.size()));
    for (size_t c = 0; c < sel.size(); ++c) a.col(static_cast<Eigen::Index>(c)) = w.col(sel[c]);
    for (size_t c = 0; c < rest.size(); ++c) b.col(static_cast<Eigen::Index>(c)) = w.col(rest[c]);
    return std::pair<Matrix, Matrix>(a, b);
  };
  auto take_rows = [&](const Matrix& w, const std::vector<Eigen::Index>& sel, bool complement) {
    std::vector<Eigen::Index> rows;
    if (complement) {
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        if (std::find(sel.begin(), sel.end(), r) == sel.end()) rows.push_back(r);
    } else {
      rows = sel;
    }
    Matrix out(static_cast<Eigen::Index>(rows.size()), w.cols());
    for (size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = w.row(rows[r]);
    return out;
  };

  // boundary layer t+1: selected channels turn linear, the complement keeps
  // its activation
  const auto sel_t1 = s.selected(t + 1);
  const Matrix w_t1 = theta.block("W" + std::to_string(t + 1));
  Vector hj = take_rows(w_t1, sel_t1, false) * h;
  Vector ht;
  {
    const Matrix bres = take_rows(w_t1, sel_t1, true);
    Vector z = bres * h;
    if (t + 1 <= depth) {
      const Activation act = spec.activations[static_cast<size_t>(t)];
      for (Eigen::Index u = 0; u < z.size(); ++u) z[u] = apply_activation(act, z[u]);
    }
    ht = z;
  }

  for (Eigen::Index l = t + 2; l <= depth; ++l) {
    const auto sel = s.selected(l);
    const auto sel_prev = s.selected(l - 1);
    const Matrix w = theta.block("W" + std::to_string(l));
    const Matrix rows_j = take_rows(w, sel, false);
    const Matrix rows_b = take_rows(w, sel, true);
    const auto [a_blk, c_blk] = split_cols(rows_j, sel_prev);
    const auto [xi_blk, b_blk] = split_cols(rows_b, sel_prev);
    (void)xi_blk;  // dropped by the decomposition
    Vector hj_next = a_blk * hj + c_blk * ht;
    Vector z = b_blk * ht;
    const Activation act = spec.activations[static_cast<size_t>(l - 1)];
    for (Eigen::Index u = 0; u < z.size(); ++u) z[u] = apply_activation(act, z[u]);
    hj = hj_next;
    ht = z;
  }

  // output layer: rows are all of {1..d_y}
  const Matrix w_out = theta.block("W" + std::to_string(depth + 1));
  const auto [a_out, c_out] = split_cols(w_out, s.selected(depth));
  return a_out * hj + c_out * ht;
}

}  // namespace gradbasis
