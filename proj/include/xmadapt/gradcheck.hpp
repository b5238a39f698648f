#pragma once

#include <functional>
#include <vector>

#include "xmadapt/tensor.hpp"

namespace xmadapt {

// Compares reverse-mode gradients against central finite differences.
//
// fn must map the given leaf tensors to a scalar, deterministically and
// without internal randomness. Every element of every input is perturbed by
// +/-step (forward passes run without grad recording), and the worst
// relative error max|a - n| / max(|a|, |n|, 1e-6) over all elements is
// returned. Non-finite losses or gradients raise NumericError.
using GradFn = std::function<Tensor(const std::vector<Tensor>&)>;
float gradcheck(const GradFn& fn, std::vector<Tensor> inputs, float step);

// Single-element central difference for large models where full perturbation
// is too slow: evaluates eval() at x +/- step and restores x. eval must not
// record gradients (wrap in NoGradGuard) and must read x through the tensor
// that owns it.
double fd_gradient(const std::function<double()>& eval, float& x, double step);

// Relative error with the gradcheck denominator convention.
double rel_error(double analytic, double numeric);

// One finite-difference sweep of a named op at a fixed small shape.
struct GradcheckCase {
  std::string name;
  float worst_rel = 0.0f;
  float tolerance = 1e-3f;

  bool pass() const { return worst_rel < tolerance; }
};

// Every differentiable op at small fixed shapes, inputs drawn from seed.
// Outputs are folded to a scalar through a fixed random weighting so no
// element's gradient can cancel or vanish by symmetry.
std::vector<GradcheckCase> op_gradcheck_suite(uint64_t seed);

}  // namespace xmadapt
