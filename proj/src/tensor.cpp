#include "xmadapt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "xmadapt/error.hpp"
#include "xmadapt/kernels.hpp"

namespace xmadapt {

namespace k = kernels;

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

namespace {

thread_local bool g_grad_enabled = true;

void check_shape(const Shape& s) {
  if (s.empty()) throw DimensionError("tensor shape must have at least one dimension");
  for (int64_t d : s)
    if (d <= 0) throw DimensionError("non-positive dimension in shape " + shape_str(s));
}

// Lazily sizes the grad buffer and accumulates g into it.
void accum_grad(TensorImpl& t, const float* g, int64_t n) {
  if (!t.requires_grad) return;
  if (t.grad.empty()) t.grad.assign(static_cast<size_t>(n), 0.0f);
  k::ew_acc(g, t.grad.data(), n);
}

Tensor make_leaf(Shape shape, std::vector<float> data, bool requires_grad) {
  check_shape(shape);
  if (shape_numel(shape) != static_cast<int64_t>(data.size()))
    throw DimensionError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::make_shared<std::vector<float>>(std::move(data));
  impl->requires_grad = requires_grad;
  return Tensor::wrap(std::move(impl));
}

// Builds an op result node. When grad recording is off or no parent needs a
// gradient, the node is emitted as a detached constant (no graph edges).
Tensor make_op(Shape shape, std::vector<float> data,
               std::vector<Tensor> parents,
               std::function<void(TensorImpl&)> backward_fn) {
  bool track = g_grad_enabled;
  if (track) {
    bool any = false;
    for (const Tensor& p : parents) any = any || p.requires_grad();
    track = any;
  }
  Tensor out = make_leaf(std::move(shape), std::move(data), false);
  if (track) {
    TensorImpl& impl = *out.impl();
    impl.requires_grad = true;
    impl.parents.reserve(parents.size());
    for (const Tensor& p : parents) impl.parents.push_back(p.impl());
    impl.backward_fn = std::move(backward_fn);
  }
  return out;
}

// Same-data view with a new shape (reshape aliases instead of copying).
Tensor make_view(const Tensor& src, Shape shape,
                 std::function<void(TensorImpl&)> backward_fn) {
  check_shape(shape);
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = src.impl()->data;
  if (g_grad_enabled && src.requires_grad()) {
    impl->requires_grad = true;
    impl->parents.push_back(src.impl());
    impl->backward_fn = std::move(backward_fn);
  }
  return Tensor::wrap(std::move(impl));
}

int normalize_axis(int axis, int ndim, const char* op) {
  int a = axis < 0 ? axis + ndim : axis;
  if (a < 0 || a >= ndim)
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for rank " + std::to_string(ndim));
  return a;
}

// Generic permutation copy on raw buffers (serial; outputs are data moves,
// not arithmetic, so this is cheap relative to the matmuls around it).
void permute_raw(const float* src, float* dst, const Shape& in_shape,
                 const std::vector<int>& perm) {
  int nd = static_cast<int>(in_shape.size());
  Shape out_shape(nd);
  for (int i = 0; i < nd; ++i) out_shape[i] = in_shape[perm[i]];
  std::vector<int64_t> in_stride(nd, 1), out_stride(nd, 1);
  for (int i = nd - 2; i >= 0; --i) in_stride[i] = in_stride[i + 1] * in_shape[i + 1];
  for (int i = nd - 2; i >= 0; --i) out_stride[i] = out_stride[i + 1] * out_shape[i + 1];
  int64_t total = shape_numel(in_shape);
  std::vector<int64_t> idx(nd, 0);
  for (int64_t flat = 0; flat < total; ++flat) {
    int64_t src_off = 0;
    for (int i = 0; i < nd; ++i) src_off += idx[perm[i]] * in_stride[perm[i]];
    dst[flat] = src[src_off];
    for (int i = nd - 1; i >= 0; --i) {
      if (++idx[perm[i]] < out_shape[i]) break;
      idx[perm[i]] = 0;
    }
  }
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

// ---- Tensor handle -------------------------------------------------------

Tensor Tensor::wrap(std::shared_ptr<TensorImpl> impl) {
  Tensor t;
  t.impl_ = std::move(impl);
  return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  check_shape(shape);
  std::vector<float> d(static_cast<size_t>(shape_numel(shape)), 0.0f);
  return make_leaf(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  check_shape(shape);
  std::vector<float> d(static_cast<size_t>(shape_numel(shape)), value);
  return make_leaf(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data, bool requires_grad) {
  return make_leaf(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::randn(Shape shape, SplitMix64& rng, float stddev, bool requires_grad) {
  check_shape(shape);
  std::vector<float> d(static_cast<size_t>(shape_numel(shape)));
  for (float& v : d) v = static_cast<float>(rng.normal() * stddev);
  return make_leaf(std::move(shape), std::move(d), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->shape;
}

int Tensor::ndim() const { return static_cast<int>(shape().size()); }

int64_t Tensor::numel() const { return shape_numel(shape()); }

int64_t Tensor::dim(int i) const {
  int nd = ndim();
  int a = i < 0 ? i + nd : i;
  if (a < 0 || a >= nd)
    throw DimensionError("dim index " + std::to_string(i) + " out of range for " +
                         shape_str(shape()));
  return impl_->shape[a];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!impl_) throw ContractError("use of undefined tensor");
  if (!impl_->parents.empty())
    throw ContractError("set_requires_grad is only valid on leaf tensors");
  impl_->requires_grad = on;
  if (!on) impl_->grad.clear();
}

const std::vector<float>& Tensor::data() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return *impl_->data;
}

std::vector<float>& Tensor::mutable_data() {
  if (!impl_) throw ContractError("use of undefined tensor");
  if (!impl_->parents.empty())
    throw ContractError("mutable_data is only valid on leaf tensors");
  return *impl_->data;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

const std::vector<float>& Tensor::grad() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  if (impl_->grad.empty())
    throw ContractError("gradient requested but absent; run backward first");
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_) impl_->grad.clear();
}

float Tensor::item() const {
  if (numel() != 1)
    throw ContractError("item() requires a single-element tensor, got " + shape_str(shape()));
  return (*impl_->data)[0];
}

bool Tensor::all_finite() const {
  for (float v : data())
    if (!std::isfinite(v)) return false;
  return true;
}

// ---- backward ------------------------------------------------------------

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ContractError("backward on undefined tensor");
  if (loss.numel() != 1)
    throw ContractError("backward requires a scalar loss, got " + shape_str(loss.shape()));
  if (!loss.requires_grad())
    throw ContractError("backward on a tensor that does not require grad");

  // Iterative post-order DFS over parents; the reversed order is topological
  // from the loss down, so each node's grad is complete before its rule runs.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<TensorImpl*, size_t>> stack;
  stack.emplace_back(loss.impl().get(), 0);
  seen.insert(loss.impl().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorImpl* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  TensorImpl& root = *loss.impl();
  if (root.grad.empty()) root.grad.assign(1, 0.0f);
  root.grad[0] += 1.0f;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

// ---- elementwise ---------------------------------------------------------

namespace {

// True when b's shape is a trailing slice of a's (suffix broadcast).
bool is_suffix(const Shape& a, const Shape& b) {
  if (b.size() > a.size()) return false;
  return std::equal(b.rbegin(), b.rend(), a.rbegin());
}

void require_equal_shapes(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) {
    int64_t n = a.numel();
    std::vector<float> out(static_cast<size_t>(n));
    k::ew_add(a.data().data(), b.data().data(), out.data(), n);
    return make_op(a.shape(), std::move(out), {a, b}, [n](TensorImpl& self) {
      accum_grad(*self.parents[0], self.grad.data(), n);
      accum_grad(*self.parents[1], self.grad.data(), n);
    });
  }
  if (is_suffix(a.shape(), b.shape())) {
    int64_t inner = b.numel();
    int64_t outer = a.numel() / inner;
    std::vector<float> out(static_cast<size_t>(a.numel()));
    k::add_bcast(a.data().data(), b.data().data(), out.data(), outer, inner);
    return make_op(a.shape(), std::move(out), {a, b}, [outer, inner](TensorImpl& self) {
      accum_grad(*self.parents[0], self.grad.data(), outer * inner);
      if (self.parents[1]->requires_grad) {
        std::vector<float> db(static_cast<size_t>(inner));
        k::reduce_outer(self.grad.data(), db.data(), outer, inner);
        accum_grad(*self.parents[1], db.data(), inner);
      }
    });
  }
  throw DimensionError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_equal_shapes(a, b, "sub");
  int64_t n = a.numel();
  std::vector<float> out(static_cast<size_t>(n));
  k::ew_sub(a.data().data(), b.data().data(), out.data(), n);
  return make_op(a.shape(), std::move(out), {a, b}, [n](TensorImpl& self) {
    accum_grad(*self.parents[0], self.grad.data(), n);
    if (self.parents[1]->requires_grad) {
      std::vector<float> neg(static_cast<size_t>(n));
      k::ew_affine(self.grad.data(), neg.data(), n, -1.0f, 0.0f);
      accum_grad(*self.parents[1], neg.data(), n);
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_equal_shapes(a, b, "mul");
  int64_t n = a.numel();
  std::vector<float> out(static_cast<size_t>(n));
  k::ew_mul(a.data().data(), b.data().data(), out.data(), n);
  return make_op(a.shape(), std::move(out), {a, b}, [n, a, b](TensorImpl& self) {
    std::vector<float> tmp(static_cast<size_t>(n));
    if (self.parents[0]->requires_grad) {
      k::ew_mul(self.grad.data(), b.data().data(), tmp.data(), n);
      accum_grad(*self.parents[0], tmp.data(), n);
    }
    if (self.parents[1]->requires_grad) {
      k::ew_mul(self.grad.data(), a.data().data(), tmp.data(), n);
      accum_grad(*self.parents[1], tmp.data(), n);
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_equal_shapes(a, b, "div");
  int64_t n = a.numel();
  std::vector<float> out(static_cast<size_t>(n));
  k::ew_div(a.data().data(), b.data().data(), out.data(), n);
  std::vector<float> saved_out = out;
  return make_op(a.shape(), std::move(out), {a, b},
                 [n, b, saved_out = std::move(saved_out)](TensorImpl& self) {
                   std::vector<float> tmp(static_cast<size_t>(n));
                   k::ew_div(self.grad.data(), b.data().data(), tmp.data(), n);  // g/b
                   if (self.parents[0]->requires_grad)
                     accum_grad(*self.parents[0], tmp.data(), n);
                   if (self.parents[1]->requires_grad) {
                     // db = -g * (a/b) / b = -(g/b) * out
                     std::vector<float> t2(static_cast<size_t>(n));
                     k::ew_mul(tmp.data(), saved_out.data(), t2.data(), n);
                     k::ew_affine(t2.data(), t2.data(), n, -1.0f, 0.0f);
                     accum_grad(*self.parents[1], t2.data(), n);
                   }
                 });
}

Tensor affine(const Tensor& x, float alpha, float beta) {
  int64_t n = x.numel();
  std::vector<float> out(static_cast<size_t>(n));
  k::ew_affine(x.data().data(), out.data(), n, alpha, beta);
  return make_op(x.shape(), std::move(out), {x}, [n, alpha](TensorImpl& self) {
    std::vector<float> tmp(static_cast<size_t>(n));
    k::ew_affine(self.grad.data(), tmp.data(), n, alpha, 0.0f);
    accum_grad(*self.parents[0], tmp.data(), n);
  });
}

// ---- matmul --------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() < 2 || b.ndim() < 2)
    throw DimensionError("matmul: operands must have rank >= 2, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  int64_t m = a.dim(-2), ka = a.dim(-1);
  int64_t kb = b.dim(-2), n = b.dim(-1);
  if (ka != kb)
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  bool b_broadcast = b.ndim() == 2 && a.ndim() > 2;
  if (!b_broadcast && a.ndim() != b.ndim())
    throw DimensionError("matmul: batch ranks disagree, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  Shape out_shape(a.shape().begin(), a.shape().end() - 2);
  if (!b_broadcast) {
    Shape b_lead(b.shape().begin(), b.shape().end() - 2);
    if (b_lead != out_shape)
      throw DimensionError("matmul: batch dimensions disagree, " + shape_str(a.shape()) +
                           " vs " + shape_str(b.shape()));
  }
  int64_t batch = 1;
  for (int64_t d : out_shape) batch *= d;
  out_shape.push_back(m);
  out_shape.push_back(n);

  int64_t a_bs = m * ka;
  int64_t b_bs = b_broadcast ? 0 : ka * n;
  std::vector<float> out(static_cast<size_t>(batch * m * n));
  k::matmul_nn(a.data().data(), b.data().data(), out.data(), batch, m, ka, n, a_bs, b_bs);

  int64_t kk = ka;
  return make_op(std::move(out_shape), std::move(out), {a, b},
                 [batch, m, kk, n, a_bs, b_bs, b_broadcast, a, b](TensorImpl& self) {
                   const float* g = self.grad.data();
                   if (self.parents[0]->requires_grad) {
                     // dA = dC * B^T
                     std::vector<float> da(static_cast<size_t>(batch * m * kk));
                     if (b_broadcast)
                       k::matmul_nt(g, b.data().data(), da.data(), 1, batch * m, n, kk, 0, 0);
                     else
                       k::matmul_nt(g, b.data().data(), da.data(), batch, m, n, kk,
                                    m * n, b_bs);
                     accum_grad(*self.parents[0], da.data(), batch * m * kk);
                   }
                   if (self.parents[1]->requires_grad) {
                     // dB = A^T * dC
                     if (b_broadcast) {
                       std::vector<float> db(static_cast<size_t>(kk * n));
                       k::matmul_tn(a.data().data(), g, db.data(), 1, batch * m, kk, n, 0, 0);
                       accum_grad(*self.parents[1], db.data(), kk * n);
                     } else {
                       std::vector<float> db(static_cast<size_t>(batch * kk * n));
                       k::matmul_tn(a.data().data(), g, db.data(), batch, m, kk, n,
                                    a_bs, m * n);
                       accum_grad(*self.parents[1], db.data(), batch * kk * n);
                     }
                   }
                 });
}

// ---- conv1x1 -------------------------------------------------------------

Tensor conv1x1(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.ndim() != 4)
    throw DimensionError("conv1x1: input must be [B,C,H,W], got " + shape_str(x.shape()));
  if (weight.ndim() != 2)
    throw DimensionError("conv1x1: weight must be [Cout,Cin], got " +
                         shape_str(weight.shape()));
  int64_t bsz = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
  int64_t co = weight.dim(0);
  if (weight.dim(1) != ci)
    throw DimensionError("conv1x1: channel mismatch, input " + shape_str(x.shape()) +
                         " vs weight " + shape_str(weight.shape()));
  if (bias.ndim() != 1 || bias.dim(0) != co)
    throw DimensionError("conv1x1: bias shape " + shape_str(bias.shape()) +
                         " does not match weight " + shape_str(weight.shape()));
  int64_t hw = h * w;
  std::vector<float> out(static_cast<size_t>(bsz * co * hw));
  k::conv1x1_fwd(x.data().data(), weight.data().data(), bias.data().data(), out.data(),
                 bsz, ci, co, hw);
  return make_op({bsz, co, h, w}, std::move(out), {x, weight, bias},
                 [bsz, ci, co, hw, x, weight](TensorImpl& self) {
                   const float* g = self.grad.data();
                   if (self.parents[0]->requires_grad) {
                     std::vector<float> dx(static_cast<size_t>(bsz * ci * hw));
                     k::conv1x1_bwd_x(g, weight.data().data(), dx.data(), bsz, ci, co, hw);
                     accum_grad(*self.parents[0], dx.data(), bsz * ci * hw);
                   }
                   if (self.parents[1]->requires_grad) {
                     std::vector<float> dw(static_cast<size_t>(co * ci));
                     k::conv1x1_bwd_w(g, x.data().data(), dw.data(), bsz, ci, co, hw);
                     accum_grad(*self.parents[1], dw.data(), co * ci);
                   }
                   if (self.parents[2]->requires_grad) {
                     std::vector<float> db(static_cast<size_t>(co));
                     k::conv1x1_bwd_b(g, db.data(), bsz, co, hw);
                     accum_grad(*self.parents[2], db.data(), co);
                   }
                 });
}

// ---- layernorm -----------------------------------------------------------

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  if (eps <= 0.0f) throw ContractError("layernorm: eps must be positive");
  int64_t d = x.dim(-1);
  if (d == 0) throw DimensionError("layernorm: empty last dimension");
  if (gamma.ndim() != 1 || gamma.dim(0) != d || beta.ndim() != 1 || beta.dim(0) != d)
    throw DimensionError("layernorm: gamma " + shape_str(gamma.shape()) + " / beta " +
                         shape_str(beta.shape()) + " do not match last dim of " +
                         shape_str(x.shape()));
  int64_t rows = x.numel() / d;
  std::vector<float> out(static_cast<size_t>(rows * d));
  auto mean_buf = std::make_shared<std::vector<float>>(static_cast<size_t>(rows));
  auto rstd_buf = std::make_shared<std::vector<float>>(static_cast<size_t>(rows));
  k::layernorm_fwd(x.data().data(), gamma.data().data(), beta.data().data(), out.data(),
                   mean_buf->data(), rstd_buf->data(), rows, d, eps);
  return make_op(x.shape(), std::move(out), {x, gamma, beta},
                 [rows, d, x, gamma, mean_buf, rstd_buf](TensorImpl& self) {
                   const float* g = self.grad.data();
                   if (self.parents[0]->requires_grad) {
                     std::vector<float> dx(static_cast<size_t>(rows * d));
                     k::layernorm_bwd_x(g, x.data().data(), gamma.data().data(),
                                        mean_buf->data(), rstd_buf->data(), dx.data(),
                                        rows, d);
                     accum_grad(*self.parents[0], dx.data(), rows * d);
                   }
                   if (self.parents[1]->requires_grad || self.parents[2]->requires_grad) {
                     std::vector<float> dg(static_cast<size_t>(d));
                     std::vector<float> db(static_cast<size_t>(d));
                     k::layernorm_bwd_gb(g, x.data().data(), mean_buf->data(),
                                         rstd_buf->data(), dg.data(), db.data(), rows, d);
                     accum_grad(*self.parents[1], dg.data(), d);
                     accum_grad(*self.parents[2], db.data(), d);
                   }
                 });
}

// ---- softmax -------------------------------------------------------------

Tensor softmax(const Tensor& x, int axis) {
  int nd = x.ndim();
  int a = normalize_axis(axis, nd, "softmax");
  if (a != nd - 1) {
    // Normalise over an interior axis by rotating it to the back; the
    // permute nodes own the corresponding backward bookkeeping.
    std::vector<int> fwd(nd), inv(nd);
    int j = 0;
    for (int i = 0; i < nd; ++i)
      if (i != a) fwd[j++] = i;
    fwd[nd - 1] = a;
    for (int i = 0; i < nd; ++i) inv[fwd[i]] = i;
    return permute(softmax(permute(x, fwd), nd - 1), inv);
  }
  int64_t d = x.dim(-1);
  int64_t rows = x.numel() / d;
  std::vector<float> out(static_cast<size_t>(rows * d));
  k::softmax_fwd(x.data().data(), out.data(), rows, d);
  std::vector<float> saved = out;
  return make_op(x.shape(), std::move(out), {x},
                 [rows, d, saved = std::move(saved)](TensorImpl& self) {
                   std::vector<float> dx(static_cast<size_t>(rows * d));
                   k::softmax_bwd(saved.data(), self.grad.data(), dx.data(), rows, d);
                   accum_grad(*self.parents[0], dx.data(), rows * d);
                 });
}

// ---- pointwise nonlinearities ---------------------------------------------

Tensor gelu(const Tensor& x) {
  int64_t n = x.numel();
  std::vector<float> out(static_cast<size_t>(n));
  k::gelu_fwd(x.data().data(), out.data(), n);
  return make_op(x.shape(), std::move(out), {x}, [n, x](TensorImpl& self) {
    std::vector<float> dx(static_cast<size_t>(n));
    k::gelu_bwd(x.data().data(), self.grad.data(), dx.data(), n);
    accum_grad(*self.parents[0], dx.data(), n);
  });
}

Tensor sigmoid(const Tensor& x) {
  int64_t n = x.numel();
  std::vector<float> out(static_cast<size_t>(n));
  k::sigmoid_fwd(x.data().data(), out.data(), n);
  std::vector<float> saved = out;
  return make_op(x.shape(), std::move(out), {x},
                 [n, saved = std::move(saved)](TensorImpl& self) {
                   std::vector<float> dx(static_cast<size_t>(n));
                   k::sigmoid_bwd(saved.data(), self.grad.data(), dx.data(), n);
                   accum_grad(*self.parents[0], dx.data(), n);
                 });
}

// ---- shape ops -------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape new_shape) {
  int64_t known = 1;
  int infer = -1;
  for (size_t i = 0; i < new_shape.size(); ++i) {
    if (new_shape[i] == -1) {
      if (infer >= 0) throw DimensionError("reshape: more than one -1 in target shape");
      infer = static_cast<int>(i);
    } else {
      known *= new_shape[i];
    }
  }
  if (infer >= 0) {
    if (known == 0 || x.numel() % known != 0)
      throw DimensionError("reshape: cannot infer dimension for " + shape_str(x.shape()));
    new_shape[infer] = x.numel() / known;
  }
  if (shape_numel(new_shape) != x.numel())
    throw DimensionError("reshape: element count mismatch, " + shape_str(x.shape()) +
                         " vs " + shape_str(new_shape));
  int64_t n = x.numel();
  return make_view(x, std::move(new_shape), [n](TensorImpl& self) {
    accum_grad(*self.parents[0], self.grad.data(), n);
  });
}

Tensor permute(const Tensor& x, const std::vector<int>& perm) {
  int nd = x.ndim();
  if (static_cast<int>(perm.size()) != nd)
    throw DimensionError("permute: perm rank " + std::to_string(perm.size()) +
                         " does not match tensor rank " + std::to_string(nd));
  std::vector<bool> used(nd, false);
  for (int p : perm) {
    if (p < 0 || p >= nd || used[p])
      throw DimensionError("permute: invalid permutation for rank " + std::to_string(nd));
    used[p] = true;
  }
  Shape out_shape(nd);
  for (int i = 0; i < nd; ++i) out_shape[i] = x.dim(perm[i]);
  std::vector<float> out(static_cast<size_t>(x.numel()));
  permute_raw(x.data().data(), out.data(), x.shape(), perm);

  std::vector<int> inv(nd);
  for (int i = 0; i < nd; ++i) inv[perm[i]] = i;
  Shape fwd_out = out_shape;
  int64_t n = x.numel();
  return make_op(std::move(out_shape), std::move(out), {x},
                 [inv, fwd_out, n](TensorImpl& self) {
                   std::vector<float> dx(static_cast<size_t>(n));
                   permute_raw(self.grad.data(), dx.data(), fwd_out, inv);
                   accum_grad(*self.parents[0], dx.data(), n);
                 });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  int nd = parts[0].ndim();
  int a = normalize_axis(axis, nd, "concat");
  int64_t axis_total = 0;
  for (const Tensor& t : parts) {
    if (t.ndim() != nd)
      throw DimensionError("concat: rank mismatch " + shape_str(parts[0].shape()) +
                           " vs " + shape_str(t.shape()));
    for (int i = 0; i < nd; ++i)
      if (i != a && t.dim(i) != parts[0].dim(i))
        throw DimensionError("concat: non-axis dims differ, " +
                             shape_str(parts[0].shape()) + " vs " + shape_str(t.shape()));
    axis_total += t.dim(a);
  }
  Shape out_shape = parts[0].shape();
  out_shape[a] = axis_total;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < a; ++i) outer *= out_shape[i];
  for (int i = a + 1; i < nd; ++i) inner *= out_shape[i];

  std::vector<float> out(static_cast<size_t>(shape_numel(out_shape)));
  std::vector<int64_t> offsets;  // element offset of each part within a row
  int64_t off = 0;
  for (const Tensor& t : parts) {
    offsets.push_back(off);
    int64_t len = t.dim(a) * inner;
    const float* src = t.data().data();
    for (int64_t o = 0; o < outer; ++o)
      std::copy(src + o * len, src + (o + 1) * len,
                out.data() + o * axis_total * inner + off);
    off += len;
  }

  std::vector<int64_t> lens;
  for (const Tensor& t : parts) lens.push_back(t.dim(a) * inner);
  int64_t row = axis_total * inner;
  return make_op(std::move(out_shape), std::move(out),
                 std::vector<Tensor>(parts.begin(), parts.end()),
                 [outer, row, offsets, lens](TensorImpl& self) {
                   for (size_t pi = 0; pi < self.parents.size(); ++pi) {
                     TensorImpl& p = *self.parents[pi];
                     if (!p.requires_grad) continue;
                     std::vector<float> dp(static_cast<size_t>(outer * lens[pi]));
                     for (int64_t o = 0; o < outer; ++o)
                       std::copy(self.grad.data() + o * row + offsets[pi],
                                 self.grad.data() + o * row + offsets[pi] + lens[pi],
                                 dp.data() + o * lens[pi]);
                     accum_grad(p, dp.data(), outer * lens[pi]);
                   }
                 });
}

Tensor slice(const Tensor& x, int axis, int64_t start, int64_t len) {
  int nd = x.ndim();
  int a = normalize_axis(axis, nd, "slice");
  if (start < 0 || len <= 0 || start + len > x.dim(a))
    throw DimensionError("slice: range [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") out of bounds for " +
                         shape_str(x.shape()));
  Shape out_shape = x.shape();
  out_shape[a] = len;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < a; ++i) outer *= x.dim(i);
  for (int i = a + 1; i < nd; ++i) inner *= x.dim(i);
  int64_t in_row = x.dim(a) * inner;
  int64_t out_row = len * inner;

  std::vector<float> out(static_cast<size_t>(outer * out_row));
  const float* src = x.data().data();
  for (int64_t o = 0; o < outer; ++o)
    std::copy(src + o * in_row + start * inner, src + o * in_row + start * inner + out_row,
              out.data() + o * out_row);

  int64_t total_in = x.numel();
  return make_op(std::move(out_shape), std::move(out), {x},
                 [outer, in_row, out_row, start, inner, total_in](TensorImpl& self) {
                   std::vector<float> dx(static_cast<size_t>(total_in), 0.0f);
                   for (int64_t o = 0; o < outer; ++o)
                     std::copy(self.grad.data() + o * out_row,
                               self.grad.data() + (o + 1) * out_row,
                               dx.data() + o * in_row + start * inner);
                   accum_grad(*self.parents[0], dx.data(), total_in);
                 });
}

// ---- reductions ------------------------------------------------------------

Tensor sum(const Tensor& x) {
  int64_t n = x.numel();
  float total = k::sum_all(x.data().data(), n);
  return make_op({1}, {total}, {x}, [n](TensorImpl& self) {
    std::vector<float> dx(static_cast<size_t>(n), self.grad[0]);
    accum_grad(*self.parents[0], dx.data(), n);
  });
}

Tensor mean(const Tensor& x) {
  int64_t n = x.numel();
  float total = k::sum_all(x.data().data(), n);
  float inv = 1.0f / static_cast<float>(n);
  return make_op({1}, {total * inv}, {x}, [n, inv](TensorImpl& self) {
    std::vector<float> dx(static_cast<size_t>(n), self.grad[0] * inv);
    accum_grad(*self.parents[0], dx.data(), n);
  });
}

Tensor sum_last(const Tensor& x) {
  if (x.ndim() < 2)
    throw DimensionError("sum_last: needs rank >= 2, got " + shape_str(x.shape()));
  int64_t d = x.dim(-1);
  int64_t rows = x.numel() / d;
  std::vector<float> out(static_cast<size_t>(rows));
  k::sum_rows(x.data().data(), out.data(), rows, d);
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  return make_op(std::move(out_shape), std::move(out), {x}, [rows, d](TensorImpl& self) {
    std::vector<float> dx(static_cast<size_t>(rows * d));
    for (int64_t r = 0; r < rows; ++r)
      std::fill(dx.begin() + r * d, dx.begin() + (r + 1) * d, self.grad[r]);
    accum_grad(*self.parents[0], dx.data(), rows * d);
  });
}

// ---- structured data movement ----------------------------------------------

Tensor unfold_patches(const Tensor& img, int64_t p) {
  if (img.ndim() != 4 || img.dim(2) != img.dim(3))
    throw DimensionError("unfold_patches: input must be [B,C,S,S], got " +
                         shape_str(img.shape()));
  int64_t bsz = img.dim(0), c = img.dim(1), s = img.dim(2);
  if (p <= 0 || s % p != 0)
    throw DimensionError("unfold_patches: patch size " + std::to_string(p) +
                         " does not divide image size " + std::to_string(s));
  int64_t g = s / p;
  int64_t t = g * g;
  std::vector<float> out(static_cast<size_t>(bsz * t * c * p * p));
  k::unfold_fwd(img.data().data(), out.data(), bsz, c, s, p);
  return make_op({bsz, t, c * p * p}, std::move(out), {img},
                 [bsz, c, s, p](TensorImpl& self) {
                   std::vector<float> dimg(static_cast<size_t>(bsz * c * s * s));
                   k::unfold_bwd(self.grad.data(), dimg.data(), bsz, c, s, p);
                   accum_grad(*self.parents[0], dimg.data(), bsz * c * s * s);
                 });
}

Tensor depth_to_space2(const Tensor& x) {
  if (x.ndim() != 4 || x.dim(1) % 4 != 0)
    throw DimensionError("depth_to_space2: input must be [B,4C,H,W], got " +
                         shape_str(x.shape()));
  int64_t bsz = x.dim(0), c4 = x.dim(1), h = x.dim(2), w = x.dim(3);
  int64_t c = c4 / 4;
  std::vector<float> out(static_cast<size_t>(bsz * c4 * h * w));
  k::d2s_fwd(x.data().data(), out.data(), bsz, c, h, w);
  return make_op({bsz, c, 2 * h, 2 * w}, std::move(out), {x},
                 [bsz, c, h, w](TensorImpl& self) {
                   std::vector<float> dx(static_cast<size_t>(bsz * 4 * c * h * w));
                   k::d2s_bwd(self.grad.data(), dx.data(), bsz, c, h, w);
                   accum_grad(*self.parents[0], dx.data(), bsz * 4 * c * h * w);
                 });
}

// ---- fused pixelwise cross entropy ------------------------------------------

Tensor pixel_ce_mean(const Tensor& logits, const Tensor& target) {
  if (logits.ndim() != 4)
    throw DimensionError("pixel_ce_mean: logits must be [B,C,H,W], got " +
                         shape_str(logits.shape()));
  int64_t bsz = logits.dim(0), c = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  if (target.ndim() != 3 || target.dim(0) != bsz || target.dim(1) != h || target.dim(2) != w)
    throw DimensionError("pixel_ce_mean: target " + shape_str(target.shape()) +
                         " does not match logits " + shape_str(logits.shape()));
  for (float v : target.data()) {
    auto cls = static_cast<int64_t>(v);
    if (static_cast<float>(cls) != v || cls < 0 || cls >= c)
      throw ContractError("pixel_ce_mean: target values must be integers in [0, C)");
  }
  int64_t hw = h * w;
  int64_t px = bsz * hw;
  std::vector<float> losses(static_cast<size_t>(px));
  k::ce_fwd(logits.data().data(), target.data().data(), losses.data(), bsz, c, hw);
  float total = k::sum_all(losses.data(), px);
  float inv = 1.0f / static_cast<float>(px);
  return make_op({1}, {total * inv}, {logits, target},
                 [bsz, c, hw, inv, logits, target](TensorImpl& self) {
                   if (!self.parents[0]->requires_grad) return;
                   std::vector<float> dl(static_cast<size_t>(bsz * c * hw));
                   k::ce_bwd(logits.data().data(), target.data().data(), dl.data(),
                             self.grad[0] * inv, bsz, c, hw);
                   accum_grad(*self.parents[0], dl.data(), bsz * c * hw);
                 });
}

}  // namespace xmadapt
