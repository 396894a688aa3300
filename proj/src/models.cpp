#include "gradbasis/models.hpp"

#include "gradbasis/parallel.hpp"

#include <limits>

namespace gradbasis {

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "relu") return Activation::ReLU;
  if (name == "tanh") return Activation::Tanh;
  if (name == "sigmoid") return Activation::Sigmoid;
  throw InvalidInput("unknown activation: " + name);
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::ReLU: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "unknown";
}

namespace {

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

double apply_activation(Activation a, double z) {
  switch (a) {
    case Activation::Identity: return z;
    case Activation::ReLU: return z > 0.0 ? z : 0.0;
    case Activation::Tanh: return std::tanh(z);
    case Activation::Sigmoid: return stable_sigmoid(z);
  }
  return z;
}

double activation_derivative(Activation a, double z) {
  switch (a) {
    case Activation::Identity: return 1.0;
    case Activation::ReLU: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::Sigmoid: {
      const double s = stable_sigmoid(z);
      return s * (1.0 - s);
    }
  }
  return 1.0;
}

// ---------------------------------------------------------------------------
// Feature maps
// ---------------------------------------------------------------------------

Eigen::Index FeatureMap::feature_count() const {
  switch (kind) {
    case Kind::Identity: return d_x;
    case Kind::Affine: return d_x + 1;
    case Kind::SineCos: return 2 * d_x;
  }
  return d_x;
}

Vector FeatureMap::eval(const Vector& x) const {
  if (x.size() != d_x) throw InvalidInput("feature map: input dimension mismatch");
  switch (kind) {
    case Kind::Identity:
      return x;
    case Kind::Affine: {
      Vector phi(d_x + 1);
      phi.head(d_x) = x;
      phi[d_x] = 1.0;
      return phi;
    }
    case Kind::SineCos: {
      Vector phi(2 * d_x);
      for (Eigen::Index j = 0; j < d_x; ++j) {
        phi[2 * j] = std::sin(M_PI * x[j]);
        phi[2 * j + 1] = std::cos(M_PI * x[j]);
      }
      return phi;
    }
  }
  return x;
}

FeatureMap FeatureMap::from_name(const std::string& name, Eigen::Index d_x) {
  if (name == "identity") return {Kind::Identity, d_x};
  if (name == "affine") return {Kind::Affine, d_x};
  if (name == "sincos") return {Kind::SineCos, d_x};
  throw InvalidInput("unknown feature map: " + name);
}

std::string FeatureMap::name() const {
  switch (kind) {
    case Kind::Identity: return "identity";
    case Kind::Affine: return "affine";
    case Kind::SineCos: return "sincos";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Specs and layouts
// ---------------------------------------------------------------------------

std::vector<Eigen::Index> SkipConnectedSpec::effective_skips() const {
  std::vector<Eigen::Index> out = skips;
  const Eigen::Index h = depth();
  if (std::find(out.begin(), out.end(), h) == out.end()) out.push_back(h);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  for (Eigen::Index l : out)
    if (l < 1 || l > h) throw InvalidInput("skip index outside {1..H}");
  return out;
}

Eigen::Index ModelSpec::input_dim() const {
  if (const auto* b = as_basis()) return b->features.d_x;
  if (const auto* f = as_feedforward()) return f->widths.front();
  if (const auto* s = as_skip()) return s->widths.front();
  return as_resnet()->d_x;
}

Eigen::Index ModelSpec::output_dim() const {
  if (as_basis()) return 1;
  if (const auto* f = as_feedforward()) return f->widths.back();
  if (const auto* s = as_skip()) return s->d_y;
  return as_resnet()->d_y;
}

std::string ModelSpec::kind_name() const {
  if (as_basis()) return "basis_function";
  if (as_feedforward()) return "feedforward";
  if (as_skip()) return "skip_connected";
  return "resnet";
}

int ParamLayout::index_of(const std::string& name) const {
  for (size_t i = 0; i < blocks.size(); ++i)
    if (blocks[i].name == name) return static_cast<int>(i);
  return -1;
}

int ParamLayout::index_of_checked(const std::string& name) const {
  const int i = index_of(name);
  if (i < 0) throw InvalidInput("no parameter block named " + name);
  return i;
}

const BlockInfo& ParamLayout::block(const std::string& name) const {
  return blocks[static_cast<size_t>(index_of_checked(name))];
}

namespace {

void push_block(ParamLayout& layout, const std::string& name, Eigen::Index rows,
                Eigen::Index cols) {
  layout.blocks.push_back({name, rows, cols, layout.dim});
  layout.dim += rows * cols;
}

void check_feedforward(const FeedforwardSpec& f) {
  if (f.widths.size() < 2) throw InvalidInput("feedforward needs at least input and output widths");
  for (Eigen::Index w : f.widths)
    if (w < 1) throw InvalidInput("feedforward widths must be >= 1");
  if (static_cast<Eigen::Index>(f.activations.size()) != f.depth())
    throw InvalidInput("feedforward needs one activation per hidden layer");
}

void append_feedforward_layout(ParamLayout& layout, const FeedforwardSpec& f,
                               const std::string& prefix) {
  for (size_t l = 1; l < f.widths.size(); ++l)
    push_block(layout, prefix + std::to_string(l), f.widths[l], f.widths[l - 1]);
}

}  // namespace

ParamLayout layout_for(const ModelSpec& spec) {
  ParamLayout layout;
  if (const auto* b = spec.as_basis()) {
    push_block(layout, "theta", b->features.feature_count(), 1);
  } else if (const auto* f = spec.as_feedforward()) {
    check_feedforward(*f);
    append_feedforward_layout(layout, *f, "W");
  } else if (const auto* s = spec.as_skip()) {
    if (s->widths.size() < 2) throw InvalidInput("skip_connected needs at least one hidden layer");
    if (static_cast<Eigen::Index>(s->activations.size()) != s->depth())
      throw InvalidInput("skip_connected needs one activation per hidden layer");
    for (Eigen::Index l : s->effective_skips())
      push_block(layout, "V" + std::to_string(l), s->d_y, s->widths[static_cast<size_t>(l)]);
    for (size_t l = 1; l < s->widths.size(); ++l)
      push_block(layout, "W" + std::to_string(l), s->widths[l], s->widths[l - 1]);
  } else {
    const auto* r = spec.as_resnet();
    check_feedforward(r->inner);
    if (r->inner.widths.front() != r->d_x || r->inner.widths.back() != r->d_z)
      throw InvalidInput("resnet inner network must map d_x to d_z");
    push_block(layout, "W", r->d_y, r->d_x);
    push_block(layout, "R", r->d_x, r->d_z);
    append_feedforward_layout(layout, r->inner, "U");
  }
  return layout;
}

ParamVector zero_params(const ModelSpec& spec) {
  ParamVector p;
  p.layout = layout_for(spec);
  p.data = Vector::Zero(p.layout.dim);
  return p;
}

ParamVector random_params(const ModelSpec& spec, Rng& rng, double scale) {
  ParamVector p = zero_params(spec);
  for (Eigen::Index k = 0; k < p.data.size(); ++k) p.data[k] = scale * rng.normal();
  return p;
}

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

void Dataset::validate() const {
  if (m() < 1) throw InvalidInput("dataset needs m >= 1");
  if (Y.rows() != m() || lambda.size() != m())
    throw InvalidInput("dataset: inconsistent sample counts");
  if ((lambda.array() <= 0.0).any()) throw InvalidInput("dataset: weights must be positive");
  if (!X.allFinite() || !Y.allFinite()) throw InvalidInput("dataset: non-finite entries");
}

Vector Dataset::stacked_targets() const {
  Vector y(m() * d_y());
  for (Eigen::Index i = 0; i < m(); ++i) y.segment(i * d_y(), d_y()) = Y.row(i).transpose();
  return y;
}

Vector Dataset::stacked_weights() const {
  Vector w(m() * d_y());
  for (Eigen::Index i = 0; i < m(); ++i) w.segment(i * d_y(), d_y()).setConstant(lambda[i]);
  return w;
}

Dataset make_dataset(Matrix X, Matrix Y) {
  Dataset d;
  d.X = std::move(X);
  d.Y = std::move(Y);
  d.lambda = Vector::Constant(d.X.rows(), 1.0 / static_cast<double>(d.X.rows()));
  d.validate();
  return d;
}

// ---------------------------------------------------------------------------
// Forward traces
// ---------------------------------------------------------------------------

namespace {

/// Weight views of a feedforward chain (including the linear output layer).
struct FFView {
  const FeedforwardSpec* spec;
  std::vector<Eigen::Map<const Matrix>> w;  // w[l-1] is W^(l)

  FFView(const FeedforwardSpec& f, const ParamVector& theta, int first_block) : spec(&f) {
    const Eigen::Index layers = static_cast<Eigen::Index>(f.widths.size()) - 1;
    w.reserve(static_cast<size_t>(layers));
    for (Eigen::Index l = 1; l <= layers; ++l)
      w.emplace_back(theta.block(first_block + static_cast<int>(l) - 1));
  }
};

struct SampleTrace {
  std::vector<Vector> h;    // h[0..H]
  std::vector<Vector> pre;  // pre[l-1] is the layer-l preactivation, l = 1..H
};

/// Hidden chain of a feedforward spec; the output layer is not applied here.
/// When `kink_guard` is set, throws on |preactivation| <= kKinkHard for ReLU
/// layers (sample index reported through `sample_id`).
SampleTrace ff_hidden_trace(const FFView& view, const Vector& x, bool kink_guard,
                            int sample_id) {
  const FeedforwardSpec& f = *view.spec;
  const Eigen::Index depth = f.depth();
  SampleTrace t;
  t.h.resize(static_cast<size_t>(depth) + 1);
  t.pre.resize(static_cast<size_t>(depth));
  t.h[0] = x;
  for (Eigen::Index l = 1; l <= depth; ++l) {
    Vector z = view.w[static_cast<size_t>(l - 1)] * t.h[static_cast<size_t>(l - 1)];
    const Activation act = f.activations[static_cast<size_t>(l - 1)];
    if (kink_guard && act == Activation::ReLU) {
      for (Eigen::Index u = 0; u < z.size(); ++u)
        if (std::abs(z[u]) <= tol::kKinkHard)
          throw NondifferentiablePoint("ReLU preactivation on a kink", sample_id,
                                       static_cast<int>(l), static_cast<int>(u));
    }
    t.pre[static_cast<size_t>(l - 1)] = z;
    Vector& h = t.h[static_cast<size_t>(l)];
    h.resize(z.size());
    for (Eigen::Index u = 0; u < z.size(); ++u) h[u] = apply_activation(act, z[u]);
  }
  return t;
}

Vector ff_output(const FFView& view, const SampleTrace& t) {
  return view.w.back() * t.h.back();
}

/// Reverse pass of a feedforward chain. `out_sens` is the sensitivity of the
/// scalar being differentiated with respect to the linear output; gradients
/// are accumulated into jrow at the chain's block offsets.
void ff_backprop(const FFView& view, const SampleTrace& t, const Vector& out_sens,
                 double* jrow, const ParamLayout& layout, int first_block) {
  const FeedforwardSpec& f = *view.spec;
  const Eigen::Index depth = f.depth();

  // output layer: d f / d W^(H+1) = out_sens h^(H)^T
  {
    const BlockInfo& b = layout.blocks[static_cast<size_t>(first_block + depth)];
    Eigen::Map<Matrix> g(jrow + b.offset, b.rows, b.cols);
    g.noalias() = out_sens * t.h[static_cast<size_t>(depth)].transpose();
  }
  Vector s = view.w.back().transpose() * out_sens;  // sensitivity wrt h^(H)
  for (Eigen::Index l = depth; l >= 1; --l) {
    const Activation act = f.activations[static_cast<size_t>(l - 1)];
    const Vector& z = t.pre[static_cast<size_t>(l - 1)];
    Vector g(z.size());
    for (Eigen::Index u = 0; u < z.size(); ++u)
      g[u] = s[u] * activation_derivative(act, z[u]);
    const BlockInfo& b = layout.blocks[static_cast<size_t>(first_block + l - 1)];
    Eigen::Map<Matrix> gw(jrow + b.offset, b.rows, b.cols);
    gw.noalias() = g * t.h[static_cast<size_t>(l - 1)].transpose();
    if (l > 1) s = view.w[static_cast<size_t>(l - 1)].transpose() * g;
  }
}

/// Skip-connected forward state.
struct SkipView {
  const SkipConnectedSpec* spec;
  std::vector<Eigen::Index> skips;
  std::vector<Eigen::Map<const Matrix>> v;  // per skip layer, ascending
  std::vector<Eigen::Map<const Matrix>> w;  // hidden chain

  SkipView(const SkipConnectedSpec& s, const ParamVector& theta) : spec(&s) {
    skips = s.effective_skips();
    for (size_t i = 0; i < skips.size(); ++i) v.emplace_back(theta.block(static_cast<int>(i)));
    const int w_first = static_cast<int>(skips.size());
    for (Eigen::Index l = 1; l <= s.depth(); ++l)
      w.emplace_back(theta.block(w_first + static_cast<int>(l) - 1));
  }
};

SampleTrace skip_hidden_trace(const SkipView& view, const Vector& x, bool kink_guard,
                              int sample_id) {
  const SkipConnectedSpec& s = *view.spec;
  SampleTrace t;
  const Eigen::Index depth = s.depth();
  t.h.resize(static_cast<size_t>(depth) + 1);
  t.pre.resize(static_cast<size_t>(depth));
  t.h[0] = x;
  for (Eigen::Index l = 1; l <= depth; ++l) {
    Vector z = view.w[static_cast<size_t>(l - 1)] * t.h[static_cast<size_t>(l - 1)];
    const Activation act = s.activations[static_cast<size_t>(l - 1)];
    if (kink_guard && act == Activation::ReLU) {
      for (Eigen::Index u = 0; u < z.size(); ++u)
        if (std::abs(z[u]) <= tol::kKinkHard)
          throw NondifferentiablePoint("ReLU preactivation on a kink", sample_id,
                                       static_cast<int>(l), static_cast<int>(u));
    }
    t.pre[static_cast<size_t>(l - 1)] = z;
    Vector& h = t.h[static_cast<size_t>(l)];
    h.resize(z.size());
    for (Eigen::Index u = 0; u < z.size(); ++u) h[u] = apply_activation(act, z[u]);
  }
  return t;
}

Vector skip_output(const SkipView& view, const SampleTrace& t) {
  Vector f = Vector::Zero(view.spec->d_y);
  for (size_t i = 0; i < view.skips.size(); ++i)
    f.noalias() += view.v[i] * t.h[static_cast<size_t>(view.skips[i])];
  return f;
}

}  // namespace

// ---------------------------------------------------------------------------
// forward / batch kernels
// ---------------------------------------------------------------------------

Vector forward(const ModelSpec& spec, const ParamVector& theta, const Vector& x) {
  if (theta.layout.dim != layout_for(spec).dim)
    throw InvalidInput("forward: parameter layout does not match model spec");
  if (x.size() != spec.input_dim()) throw InvalidInput("forward: input dimension mismatch");

  if (const auto* b = spec.as_basis()) {
    Vector out(1);
    out[0] = theta.data.dot(b->features.eval(x));
    return out;
  }
  if (const auto* f = spec.as_feedforward()) {
    FFView view(*f, theta, 0);
    return ff_output(view, ff_hidden_trace(view, x, false, -1));
  }
  if (const auto* s = spec.as_skip()) {
    SkipView view(*s, theta);
    return skip_output(view, skip_hidden_trace(view, x, false, -1));
  }
  const auto* r = spec.as_resnet();
  FFView inner(r->inner, theta, 2);
  const Vector z = ff_output(inner, ff_hidden_trace(inner, x, false, -1));
  return theta.block("W") * (x + theta.block("R") * z);
}

namespace {

template <typename Loop>
Matrix batch_forward_impl(const ModelSpec& spec, const ParamVector& theta, const Matrix& X,
                          Loop&& loop) {
  Matrix out(spec.output_dim(), X.rows());
  loop(static_cast<int>(X.rows()), [&](int i) {
    out.col(i) = forward(spec, theta, X.row(i).transpose());
  });
  return out;
}

}  // namespace

Matrix batch_forward(const ModelSpec& spec, const ParamVector& theta, const Matrix& X) {
  return batch_forward_impl(spec, theta, X, [](int n, auto&& body) { parallel_for(n, body); });
}

Matrix batch_forward_serial(const ModelSpec& spec, const ParamVector& theta, const Matrix& X) {
  return batch_forward_impl(spec, theta, X, [](int n, auto&& body) { serial_for(n, body); });
}

namespace {

template <typename Loop>
std::vector<Matrix> hidden_activations_impl(const ModelSpec& spec, const ParamVector& theta,
                                            const Matrix& X, Loop&& loop) {
  if (X.cols() != spec.input_dim())
    throw InvalidInput("hidden_activations: input dimension mismatch");
  if (theta.layout.dim != layout_for(spec).dim)
    throw InvalidInput("hidden_activations: parameter layout does not match model spec");
  const Eigen::Index m = X.rows();
  const FeedforwardSpec* chain = nullptr;
  bool resnet = false;
  if ((chain = spec.as_feedforward()) != nullptr) {
  } else if (const auto* r = spec.as_resnet()) {
    chain = &r->inner;
    resnet = true;
  } else if (spec.as_skip() == nullptr) {
    throw Unsupported("hidden_activations: model has no hidden layers");
  }

  std::vector<Eigen::Index> widths;
  if (chain != nullptr) {
    widths.assign(chain->widths.begin(), chain->widths.end() - 1);  // h^(0..H)
  } else {
    widths = spec.as_skip()->widths;
  }

  std::vector<Matrix> h(widths.size());
  for (size_t l = 0; l < widths.size(); ++l) h[l] = Matrix(widths[l], m);

  loop(static_cast<int>(m), [&](int i) {
    SampleTrace t;
    if (chain != nullptr) {
      FFView view(*chain, theta, resnet ? 2 : 0);
      t = ff_hidden_trace(view, X.row(i).transpose(), false, i);
    } else {
      SkipView view(*spec.as_skip(), theta);
      t = skip_hidden_trace(view, X.row(i).transpose(), false, i);
    }
    for (size_t l = 0; l < h.size(); ++l) h[l].col(i) = t.h[l];
  });
  return h;
}

}  // namespace

std::vector<Matrix> hidden_activations(const ModelSpec& spec, const ParamVector& theta,
                                       const Matrix& X) {
  return hidden_activations_impl(spec, theta, X,
                                 [](int n, auto&& body) { parallel_for(n, body); });
}

std::vector<Matrix> hidden_activations_serial(const ModelSpec& spec, const ParamVector& theta,
                                              const Matrix& X) {
  return hidden_activations_impl(spec, theta, X,
                                 [](int n, auto&& body) { serial_for(n, body); });
}

// ---------------------------------------------------------------------------
// Jacobian kernels
// ---------------------------------------------------------------------------

namespace {

/// Row-major staging keeps each sample's rows contiguous so parallel writes
/// never share cache lines.
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Fills rows [i d_y, (i+1) d_y) of the Jacobian for one sample.
void sample_jacobian_rows(const ModelSpec& spec, const ParamVector& theta, const Vector& x,
                          int i, RowMajorMatrix& jac) {
  const Eigen::Index d_y = spec.output_dim();
  const Eigen::Index d_theta = theta.layout.dim;
  Vector jrow(d_theta);

  if (const auto* b = spec.as_basis()) {
    jac.row(i) = b->features.eval(x).transpose();
    return;
  }

  if (const auto* f = spec.as_feedforward()) {
    FFView view(*f, theta, 0);
    const SampleTrace t = ff_hidden_trace(view, x, true, i);
    Vector e = Vector::Zero(d_y);
    for (Eigen::Index r = 0; r < d_y; ++r) {
      // every block is fully overwritten by the reverse pass
      e[r] = 1.0;
      ff_backprop(view, t, e, jrow.data(), theta.layout, 0);
      e[r] = 0.0;
      jac.row(i * d_y + r) = jrow.transpose();
    }
    return;
  }

  if (const auto* s = spec.as_skip()) {
    SkipView view(*s, theta);
    const SampleTrace t = skip_hidden_trace(view, x, true, i);
    const Eigen::Index depth = s->depth();
    for (Eigen::Index r = 0; r < d_y; ++r) {
      jrow.setZero();
      // skip output blocks: d f_r / d V_l[r, c] = h^(l)_c
      for (size_t si = 0; si < view.skips.size(); ++si) {
        const BlockInfo& b = theta.layout.blocks[si];
        Eigen::Map<Matrix> g(jrow.data() + b.offset, b.rows, b.cols);
        g.row(r) = t.h[static_cast<size_t>(view.skips[si])].transpose();
      }
      // hidden chain, with skip sensitivities injected on the way down
      Vector sens = Vector::Zero(s->widths.back());
      for (size_t si = 0; si < view.skips.size(); ++si)
        if (view.skips[si] == depth) sens = view.v[si].row(r).transpose();
      for (Eigen::Index l = depth; l >= 1; --l) {
        const Activation act = s->activations[static_cast<size_t>(l - 1)];
        const Vector& z = t.pre[static_cast<size_t>(l - 1)];
        Vector g(z.size());
        for (Eigen::Index u = 0; u < z.size(); ++u)
          g[u] = sens[u] * activation_derivative(act, z[u]);
        const BlockInfo& b =
            theta.layout.blocks[view.skips.size() + static_cast<size_t>(l - 1)];
        Eigen::Map<Matrix> gw(jrow.data() + b.offset, b.rows, b.cols);
        gw.noalias() = g * t.h[static_cast<size_t>(l - 1)].transpose();
        if (l > 1) {
          sens = view.w[static_cast<size_t>(l - 1)].transpose() * g;
          for (size_t si = 0; si < view.skips.size(); ++si)
            if (view.skips[si] == l - 1) sens += view.v[si].row(r).transpose();
        }
      }
      jac.row(i * d_y + r) = jrow.transpose();
    }
    return;
  }

  const auto* rn = spec.as_resnet();
  FFView inner(rn->inner, theta, 2);
  const SampleTrace t = ff_hidden_trace(inner, x, true, i);
  const Vector z = ff_output(inner, t);
  const auto w = theta.block("W");
  const auto rmat = theta.block("R");
  const Vector psi = x + rmat * z;
  for (Eigen::Index r = 0; r < d_y; ++r) {
    jrow.setZero();
    {
      const BlockInfo& b = theta.layout.block("W");
      Eigen::Map<Matrix> g(jrow.data() + b.offset, b.rows, b.cols);
      g.row(r) = psi.transpose();
    }
    {
      const BlockInfo& b = theta.layout.block("R");
      Eigen::Map<Matrix> g(jrow.data() + b.offset, b.rows, b.cols);
      g.noalias() = w.row(r).transpose() * z.transpose();
    }
    const Vector sens_z = rmat.transpose() * w.row(r).transpose();
    ff_backprop(inner, t, sens_z, jrow.data(), theta.layout, 2);
    jac.row(i * d_y + r) = jrow.transpose();
  }
}

template <typename Loop>
Matrix param_jacobian_impl(const ModelSpec& spec, const ParamVector& theta, const Dataset& data,
                           Loop&& loop) {
  data.validate();
  if (theta.layout.dim != layout_for(spec).dim)
    throw InvalidInput("param_jacobian: parameter layout does not match model spec");
  RowMajorMatrix jac(data.m() * spec.output_dim(), theta.layout.dim);
  loop(static_cast<int>(data.m()), [&](int i) {
    sample_jacobian_rows(spec, theta, data.X.row(i).transpose(), i, jac);
  });
  return Matrix(jac);
}

}  // namespace

Matrix param_jacobian(const ModelSpec& spec, const ParamVector& theta, const Dataset& data) {
  return param_jacobian_impl(spec, theta, data,
                             [](int n, auto&& body) { parallel_for(n, body); });
}

Matrix param_jacobian_serial(const ModelSpec& spec, const ParamVector& theta,
                             const Dataset& data) {
  return param_jacobian_impl(spec, theta, data,
                             [](int n, auto&& body) { serial_for(n, body); });
}

// ---------------------------------------------------------------------------
// Witness and kink distance
// ---------------------------------------------------------------------------

Vector assumption2_witness(const ModelSpec& spec, const ParamVector& theta) {
  Vector g = Vector::Zero(theta.layout.dim);
  auto copy_block = [&](const std::string& name) {
    const BlockInfo& b = theta.layout.block(name);
    g.segment(b.offset, b.size()) = theta.data.segment(b.offset, b.size());
  };
  if (spec.as_basis()) {
    g = theta.data;
  } else if (const auto* f = spec.as_feedforward()) {
    copy_block("W" + std::to_string(f->widths.size() - 1));
  } else if (const auto* s = spec.as_skip()) {
    for (Eigen::Index l : s->effective_skips()) copy_block("V" + std::to_string(l));
  } else {
    copy_block("W");
  }
  return g;
}

double kink_distance(const ModelSpec& spec, const ParamVector& theta, const Matrix& X) {
  double dist = std::numeric_limits<double>::infinity();
  auto scan_chain = [&](const FFView& view, const std::vector<Activation>& acts,
                        const Vector& x) {
    const SampleTrace t = ff_hidden_trace(view, x, false, -1);
    for (size_t l = 0; l < t.pre.size(); ++l)
      if (acts[l] == Activation::ReLU)
        dist = std::min(dist, t.pre[l].array().abs().minCoeff());
  };
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Vector x = X.row(i).transpose();
    if (spec.as_basis()) {
      return std::numeric_limits<double>::infinity();
    } else if (const auto* f = spec.as_feedforward()) {
      FFView view(*f, theta, 0);
      scan_chain(view, f->activations, x);
    } else if (const auto* s = spec.as_skip()) {
      SkipView view(*s, theta);
      const SampleTrace t = skip_hidden_trace(view, x, false, -1);
      for (size_t l = 0; l < t.pre.size(); ++l)
        if (s->activations[l] == Activation::ReLU)
          dist = std::min(dist, t.pre[l].array().abs().minCoeff());
    } else {
      const auto* r = spec.as_resnet();
      FFView view(r->inner, theta, 2);
      scan_chain(view, r->inner.activations, x);
    }
  }
  return dist;
}

}  // namespace gradbasis
