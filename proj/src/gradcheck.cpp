#include "xmadapt/gradcheck.hpp"

#include <cmath>

#include "xmadapt/error.hpp"

namespace xmadapt {

double rel_error(double analytic, double numeric) {
  double denom = std::max(std::max(std::fabs(analytic), std::fabs(numeric)), 1e-6);
  return std::fabs(analytic - numeric) / denom;
}

double fd_gradient(const std::function<double()>& eval, float& x, double step) {
  float saved = x;
  x = static_cast<float>(saved + step);
  double up = eval();
  x = static_cast<float>(saved - step);
  double down = eval();
  x = saved;
  if (!std::isfinite(up) || !std::isfinite(down))
    throw NumericError("finite-difference probe produced a non-finite loss");
  return (up - down) / (2.0 * step);
}

namespace {

// Fixed elementwise weights with |w| in [0.5, 1.5] and random sign: folding
// an op's output through these keeps every element's contribution O(1) and
// asymmetric, so a wrong gradient cannot hide behind cancellation.
Tensor fold_weights(const Shape& shape, SplitMix64& rng) {
  std::vector<float> w(static_cast<size_t>(shape_numel(shape)));
  for (float& v : w) {
    float sign = rng.uniform() < 0.5 ? -1.0f : 1.0f;
    v = sign * (0.5f + static_cast<float>(rng.uniform()));
  }
  return Tensor::from_data(shape, std::move(w));
}

Tensor uniform_tensor(const Shape& shape, SplitMix64& rng, float lo, float hi) {
  std::vector<float> d(static_cast<size_t>(shape_numel(shape)));
  for (float& v : d) v = static_cast<float>(rng.uniform(lo, hi));
  return Tensor::from_data(shape, std::move(d));
}

// Generic probe input: uniform in [-1, 1]. Bounded draws keep the float32
// difference quotient well conditioned at every seed, which unbounded
// normals do not (occasional tiny variances or near-cancelling sums).
Tensor probe_tensor(const Shape& shape, SplitMix64& rng) {
  return uniform_tensor(shape, rng, -1.0f, 1.0f);
}

// Probe input bounded away from zero: sign * [0.5, 1], for denominators.
Tensor nonzero_probe_tensor(const Shape& shape, SplitMix64& rng) {
  std::vector<float> d(static_cast<size_t>(shape_numel(shape)));
  for (float& v : d) {
    float sign = rng.uniform() < 0.5 ? -1.0f : 1.0f;
    v = sign * static_cast<float>(rng.uniform(0.5, 1.0));
  }
  return Tensor::from_data(shape, std::move(d));
}

}  // namespace

std::vector<GradcheckCase> op_gradcheck_suite(uint64_t seed) {
  std::vector<GradcheckCase> cases;
  uint64_t stream = 0;
  // Each case gets its own stream so adding a case never reshuffles others.
  auto run = [&](const std::string& name, float step,
                 const std::function<void(SplitMix64&, std::vector<Tensor>&, GradFn&)>& build) {
    SplitMix64 rng(seed, stream++);
    std::vector<Tensor> inputs;
    GradFn fn;
    build(rng, inputs, fn);
    GradcheckCase c;
    c.name = name;
    c.worst_rel = gradcheck(fn, std::move(inputs), step);
    cases.push_back(c);
  };
  // Folds an op output to the weighted-mean scalar with weights fixed per case.
  auto folded = [&](SplitMix64& rng, const Shape& out_shape,
                    std::function<Tensor(const std::vector<Tensor>&)> op) -> GradFn {
    Tensor w = fold_weights(out_shape, rng);
    return [w, op](const std::vector<Tensor>& in) { return mean(mul(op(in), w)); };
  };

  run("add", 1e-2f, [&](SplitMix64& rng, std::vector<Tensor>& in, GradFn& fn) {
    in = {probe_tensor({3, 4}, rng), probe_tensor({3, 4}, rng)};
    fn = folded(rng, {3, 4}, [](const std::vector<Tensor>& t) { return add(t[0], t[1]); });
  });
  run("add_broadcast", 1e-2f, [&](SplitMix64& rng, std::vector<Tensor>& in, GradFn& fn) {
    in = {probe_tensor({2, 3, 4}, rng), probe_tensor({4}, rng)};
    fn = folded(rng, {2, 3, 4}, [](const std::vector<Tensor>& t) { return add(t[0], t[1]); });
  });
  run("sub", 1e-2f, [&](SplitMix64& rng, std::vector<Tensor>& in, GradFn& fn) {
    in = {probe_tensor({3, 4}, rng), probe_tensor({3, 4}, rng)};
    fn = folded(rng, {3, 4}, [](const std::vector<Tensor>& t) { return sub(t[0], t[1]); });
  });
  run("mul", 1e-2f, [&](SplitMix64& rng, std::vector<Tensor>& in, GradFn& fn) {
    in = {probe_tensor({3, 4}, rng), probe_tensor({3, 4}, rng)};
    fn = folded(rng, {3, 4}, [](const std::vector<Tensor>& t) { return mul(t[0], t[1]); });
  });
  run("div", 1e-2f, [&](SplitMix64& rng, std::vector<Tensor>& in, GradFn& fn) {
    in = {probe_tensor({3, 4}, rng), nonzero_probe_tensor({3, 4}, rng)};
    fn = folded(rng, {3, 4}, [](const std::vector<Tensor>& t) { return div(t[0], t[1]); });
  });
  run("affine", 1e-2f, [&](SplitMix64& rng, std::vector<Tensor>& in, GradFn& fn) {
    in = {probe_tensor({3, 4}, rng)};
    fn = folded(rng, {3, 4},
                [](const std::vector<Tensor>& t) { return affine(t[0], 1.7f, -0.3f); });
  });
  run("matmul", 1e-1f, [&](SplitMix64& rng, std::vector<Tensor>& in, GradFn& fn) {
    in = {probe_tensor({3, 4}, rng), probe_tensor({4, 2}, rng)};
    fn = folded(rng, {3, 2}, [](const std::vector<Tensor>& t) { return matmul(t[0], t[1]); });
  });
  run("matmul_batched", 1e-1f, [&](SplitMix64& rng, std::vector<Tensor>& in, GradFn& fn) {
    in = {probe_tensor({2, 3, 4}, rng), probe_tensor({2, 4, 2}, rng)};
    fn = folded(rng, {2, 3, 2}, [](const std::vector<Tensor>& t) { return matmul(t[0], t[1]); });
  });
  run("matmul_broadcast", 1e-1f, [&](SplitMix64& rng, std::vector<Tensor>& in, GradFn& fn) {
    in = {probe_tensor({2, 3, 4}, rng), probe_tensor({4, 2}, rng)};
    fn = folded(rng, {2, 3, 2}, [](const std::vector<Tensor>& t) { return matmul(t[0], t[1]); });
  });
  run("conv1x1", 1e-1f, [&](SplitMix64& rng, std::vector<Tensor>& in, GradFn& fn) {
    in = {probe_tensor({2, 3, 4, 4}, rng), probe_tensor({5, 3}, rng), probe_tensor({5}, rng)};
    fn = folded(rng, {2, 5, 4, 4},
                [](const std::vector<Tensor>& t) { return conv1x1(t[0], t[1], t[2]); });
  });
  run("layernorm", 1e-2f, [&](SplitMix64& rng, std::vector<Tensor>& in, GradFn& fn) {
    in = {probe_tensor({2, 3, 8}, rng), uniform_tensor({8}, rng, 0.5f, 1.0f),
          uniform_tensor({8}, rng, -0.1f, 0.1f)};
    fn = folded(rng, {2, 3, 8}, [](const std::vector<Tensor>& t) {
      return layernorm(t[0], t[1], t[2], 1e-5f);
    });
  });
  run("softmax_last", 1e-2f, [&](SplitMix64& rng, std::vector<Tensor>& in, GradFn& fn) {
    in = {probe_tensor({2, 5}, rng)};
    fn = folded(rng, {2, 5}, [](const std::vector<Tensor>& t) { return softmax(t[0], 1); });
  });
  run("softmax_interior", 1e-2f, [&](SplitMix64& rng, std::vector<Tensor>& in, GradFn& fn) {
    in = {probe_tensor({2, 3, 4}, rng)};
    fn = folded(rng, {2, 3, 4}, [](const std::vector<Tensor>& t) { return softmax(t[0], 1); });
  });
  run("gelu", 1e-2f, [&](SplitMix64& rng, std::vector<Tensor>& in, GradFn& fn) {
    // gelu' has a zero near x = -0.75; a draw close to it has a near-zero
    // true gradient that float32 difference quotients cannot resolve, so
    // probe only where the derivative is bounded away from zero.
    in = {uniform_tensor({3, 4}, rng, -0.5f, 1.0f)};
    fn = folded(rng, {3, 4}, [](const std::vector<Tensor>& t) { return gelu(t[0]); });
  });
  run("sigmoid", 1e-2f, [&](SplitMix64& rng, std::vector<Tensor>& in, GradFn& fn) {
    in = {probe_tensor({3, 4}, rng)};
    fn = folded(rng, {3, 4}, [](const std::vector<Tensor>& t) { return sigmoid(t[0]); });
  });
  run("reshape_permute", 1e-2f, [&](SplitMix64& rng, std::vector<Tensor>& in, GradFn& fn) {
    in = {probe_tensor({2, 3, 4}, rng)};
    fn = folded(rng, {4, 6}, [](const std::vector<Tensor>& t) {
      return reshape(permute(t[0], {2, 0, 1}), {4, 6});
    });
  });
  run("concat_slice", 1e-2f, [&](SplitMix64& rng, std::vector<Tensor>& in, GradFn& fn) {
    in = {probe_tensor({2, 3}, rng), probe_tensor({2, 2}, rng)};
    fn = folded(rng, {2, 3}, [](const std::vector<Tensor>& t) {
      return slice(concat({t[0], t[1]}, 1), 1, 1, 3);
    });
  });
  run("sum", 1e-2f, [&](SplitMix64& rng, std::vector<Tensor>& in, GradFn& fn) {
    in = {probe_tensor({3, 4}, rng)};
    fn = [](const std::vector<Tensor>& t) { return sum(t[0]); };
  });
  run("mean", 1e-2f, [&](SplitMix64& rng, std::vector<Tensor>& in, GradFn& fn) {
    in = {probe_tensor({3, 4}, rng)};
    fn = [](const std::vector<Tensor>& t) { return mean(t[0]); };
  });
  run("sum_last", 1e-2f, [&](SplitMix64& rng, std::vector<Tensor>& in, GradFn& fn) {
    in = {probe_tensor({2, 3, 4}, rng)};
    fn = folded(rng, {2, 3}, [](const std::vector<Tensor>& t) { return sum_last(t[0]); });
  });
  run("unfold_patches", 1e-2f, [&](SplitMix64& rng, std::vector<Tensor>& in, GradFn& fn) {
    in = {probe_tensor({1, 2, 4, 4}, rng)};
    fn = folded(rng, {1, 4, 8},
                [](const std::vector<Tensor>& t) { return unfold_patches(t[0], 2); });
  });
  run("depth_to_space2", 1e-2f, [&](SplitMix64& rng, std::vector<Tensor>& in, GradFn& fn) {
    in = {probe_tensor({1, 8, 2, 2}, rng)};
    fn = folded(rng, {1, 2, 4, 4},
                [](const std::vector<Tensor>& t) { return depth_to_space2(t[0]); });
  });
  run("pixel_ce_mean", 3e-2f, [&](SplitMix64& rng, std::vector<Tensor>& in, GradFn& fn) {
    in = {probe_tensor({2, 2, 4, 4}, rng)};
    std::vector<float> tgt(2 * 4 * 4);
    for (float& v : tgt) v = rng.uniform() < 0.5 ? 0.0f : 1.0f;
    Tensor target = Tensor::from_data({2, 4, 4}, std::move(tgt));
    fn = [target](const std::vector<Tensor>& t) { return pixel_ce_mean(t[0], target); };
  });
  return cases;
}

float gradcheck(const GradFn& fn, std::vector<Tensor> inputs, float step) {
  if (step <= 0.0f) throw ContractError("gradcheck: step must be positive");
  for (Tensor& t : inputs) t.set_requires_grad(true);

  Tensor loss = fn(inputs);
  if (loss.numel() != 1)
    throw ContractError("gradcheck: fn must produce a scalar, got " +
                        shape_str(loss.shape()));
  if (!std::isfinite(loss.item()))
    throw NumericError("gradcheck: non-finite loss");
  backward(loss);

  // Snapshot analytic gradients; an input the function ignores simply has a
  // zero gradient.
  std::vector<std::vector<float>> analytic;
  for (const Tensor& t : inputs) {
    if (t.has_grad()) {
      for (float g : t.grad())
        if (!std::isfinite(g)) throw NumericError("gradcheck: non-finite gradient");
      analytic.push_back(t.grad());
    } else {
      analytic.emplace_back(t.numel(), 0.0f);
    }
  }

  double worst = 0.0;
  {
    NoGradGuard ng;
    for (size_t i = 0; i < inputs.size(); ++i) {
      std::vector<float>& data = inputs[i].mutable_data();
      for (size_t j = 0; j < data.size(); ++j) {
        double numeric = fd_gradient([&] { return fn(inputs).item(); }, data[j],
                                     static_cast<double>(step));
        worst = std::max(worst, rel_error(analytic[i][j], numeric));
      }
    }
  }
  return static_cast<float>(worst);
}

}  // namespace xmadapt
