// Compares the OpenMP kernels against their serial references: wall time and
// max |difference| (which must be exactly zero, since the parallel loops only
// split disjoint writes).

#include "gradbasis/harness.hpp"
#include "gradbasis/training.hpp"

#include <chrono>
#include <cstdio>

using namespace gradbasis;

namespace {

double seconds(const std::function<void()>& fn, int reps) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count() / reps;
}

void row(const char* name, double serial, double parallel, double diff) {
  std::printf("%-28s %10.4f ms %10.4f ms   x%-5.2f  max|diff| = %g\n", name, serial * 1e3,
              parallel * 1e3, serial / std::max(parallel, 1e-12), diff);
}

}  // namespace

int main() {
  Rng rng(7);
  FeedforwardSpec ff;
  ff.widths = {16, 24, 24, 24, 4};
  ff.activations = {Activation::Tanh, Activation::Tanh, Activation::Tanh};
  const ModelSpec spec{ff};
  const ParamVector theta = random_params(spec, rng, 0.4);

  GeneratorSpec gen;
  gen.m = 64;
  gen.d_x = 16;
  gen.d_y = 4;
  const Dataset data = synth_data(gen, 7);
  const LossKind loss = LossKind::squared();
  const int reps = 20;

  std::printf("%-28s %13s %13s %8s\n", "kernel", "serial", "parallel", "speedup");

  {
    const Matrix a = batch_forward_serial(spec, theta, data.X);
    const Matrix b = batch_forward(spec, theta, data.X);
    row("batch_forward",
        seconds([&] { batch_forward_serial(spec, theta, data.X); }, reps),
        seconds([&] { batch_forward(spec, theta, data.X); }, reps),
        (a - b).cwiseAbs().maxCoeff());
  }
  {
    const Matrix a = param_jacobian_serial(spec, theta, data);
    const Matrix b = param_jacobian(spec, theta, data);
    row("param_jacobian",
        seconds([&] { param_jacobian_serial(spec, theta, data); }, reps),
        seconds([&] { param_jacobian(spec, theta, data); }, reps),
        (a - b).cwiseAbs().maxCoeff());
  }
  {
    // oracle-scale problem (the dense Hessian is a d_theta <= 60 tool)
    FeedforwardSpec small;
    small.widths = {4, 6, 3};
    small.activations = {Activation::Tanh};
    const ModelSpec sspec{small};
    Rng srng(11);
    const ParamVector stheta = random_params(sspec, srng, 0.4);
    GeneratorSpec sgen;
    sgen.m = 32;
    sgen.d_x = 4;
    sgen.d_y = 3;
    const Dataset sdata = synth_data(sgen, 3);
    const Matrix a = finite_difference_hessian_serial(sspec, stheta, sdata, loss);
    const Matrix b = finite_difference_hessian(sspec, stheta, sdata, loss);
    row("finite_difference_hessian",
        seconds([&] { finite_difference_hessian_serial(sspec, stheta, sdata, loss); }, 3),
        seconds([&] { finite_difference_hessian(sspec, stheta, sdata, loss); }, 3),
        (a - b).cwiseAbs().maxCoeff());
  }
  {
    const double eps = 1e-2;
    GeneratorSpec small = gen;
    small.m = 12;
    const Dataset sdata = synth_data(small, 9);
    PerturbationSet fam = nullspace_perturbations(spec, theta, sdata, 1, eps, 8);
    if (fam.size() == 0) fam = zero_set(theta.layout.dim, eps);
    const PerturbedBasis a = build_perturbed_basis_serial(spec, theta, sdata, fam);
    const PerturbedBasis b = build_perturbed_basis(spec, theta, sdata, fam);
    row("build_perturbed_basis",
        seconds([&] { build_perturbed_basis_serial(spec, theta, sdata, fam); }, 5),
        seconds([&] { build_perturbed_basis(spec, theta, sdata, fam); }, 5),
        (a.phi_tilde - b.phi_tilde).cwiseAbs().maxCoeff());
  }
  return 0;
}
