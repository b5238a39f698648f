#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "xmadapt/rng.hpp"

namespace xmadapt {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Global switch for gradient recording. Ops executed while disabled build no
// graph (pure forward), which is what evaluation and finite differences use.
bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
  NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
  ~NoGradGuard() { set_grad_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Graph node. Tensors are immutable after creation except (a) the grad
// buffer, written during backward, and (b) leaf data through mutable_data()
// for initialisation, optimizer updates and finite-difference probes.
struct TensorImpl {
  Shape shape;
  std::shared_ptr<std::vector<float>> data;  // shared so reshape can alias
  bool requires_grad = false;
  std::vector<float> grad;  // empty until backward reaches this node
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> backward_fn;  // unset on leaves
};

// Value-semantic handle to a shared graph node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<float> data, bool requires_grad = false);
  // I.i.d. normal(0, stddev^2) entries drawn in row-major order.
  static Tensor randn(Shape shape, SplitMix64& rng, float stddev = 1.0f,
                      bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int ndim() const;
  int64_t numel() const;
  int64_t dim(int i) const;  // negative indices count from the back

  bool requires_grad() const;
  void set_requires_grad(bool on);  // leaves only

  const std::vector<float>& data() const;
  std::vector<float>& mutable_data();  // leaves only
  bool has_grad() const;
  const std::vector<float>& grad() const;  // contract error when absent
  void zero_grad();

  float item() const;  // single-element tensors only
  bool all_finite() const;

  std::shared_ptr<TensorImpl> impl() const { return impl_; }
  static Tensor wrap(std::shared_ptr<TensorImpl> impl);

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Reverse-mode sweep from a scalar loss: topologically orders the reachable
// graph, seeds d(loss)/d(loss) = 1 and accumulates into every requires_grad
// node. Gradients add across uses and across repeated backward calls (clear
// with zero_grad between steps).
void backward(const Tensor& loss);

// ---- differentiable ops -------------------------------------------------

// add supports equal shapes or suffix broadcast of b (b.shape a trailing
// slice of a.shape); the other elementwise ops require equal shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor affine(const Tensor& x, float alpha, float beta);  // alpha*x + beta

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }

// a: [.., M, K]; b: [K, N] (broadcast over a's batch dims) or [.., K, N]
// with identical leading dims.
Tensor matmul(const Tensor& a, const Tensor& b);

// x: [B, Cin, H, W]; weight: [Cout, Cin]; bias: [Cout].
Tensor conv1x1(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Last-axis layer norm (population variance, eps inside sqrt), then affine.
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps);

Tensor softmax(const Tensor& x, int axis);
Tensor gelu(const Tensor& x);     // exact erf form
Tensor sigmoid(const Tensor& x);

Tensor reshape(const Tensor& x, Shape new_shape);  // one dim may be -1
Tensor permute(const Tensor& x, const std::vector<int>& perm);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, int64_t start, int64_t len);

Tensor sum(const Tensor& x);       // -> shape {1}
Tensor mean(const Tensor& x);      // -> shape {1}
Tensor sum_last(const Tensor& x);  // reduce the last axis

// [B, C, S, S] -> [B, (S/p)^2, C*p*p]; patches row-major over the grid,
// patch columns channel-major.
Tensor unfold_patches(const Tensor& img, int64_t p);

// [B, 4C, H, W] -> [B, C, 2H, 2W] (depth-to-space, factor 2).
Tensor depth_to_space2(const Tensor& x);

// Mean over all pixels of -log softmax(logits)[target class].
// logits: [B, C, H, W]; target: [B, H, W] with integer class values.
Tensor pixel_ce_mean(const Tensor& logits, const Tensor& target);

}  // namespace xmadapt
