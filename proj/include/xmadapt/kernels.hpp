#pragma once

#include <cstdint>

// Dense float32 kernels backing the tensor ops. Two implementations share
// every signature:
//
//   xmadapt::kernels       production; OpenMP-parallel over independent
//                          output elements when built with OpenMP
//   xmadapt::kernels::ref  plain serial loops kept as the test oracle
//
// The production kernels parallelise only across outputs and keep each
// output's accumulation order fixed (k ascending, rows ascending), so they
// are bit-identical to the reference for every thread count. Scalar
// reductions (sum_all) stay serial for the same reason.
//
// Conventions: row-major contiguous buffers; a batch stride of 0 broadcasts
// that operand across the batch.

namespace xmadapt::kernels {

// Worker threads for the production kernels. Initialised once from the
// XMADAPT_THREADS environment variable (default 1); set_thread_count
// overrides it (values < 1 clamp to 1).
int thread_count();
void set_thread_count(int n);

// c[g,m,n] = sum_k a[g,m,k] * b[g,k,n]          a: [.., M, K]  b: [.., K, N]
void matmul_nn(const float* a, const float* b, float* c, int64_t batch,
               int64_t m, int64_t k, int64_t n, int64_t a_bstride, int64_t b_bstride);
// c[g,m,n] = sum_k a[g,m,k] * b[g,n,k]          a: [.., M, K]  b: [.., N, K]
void matmul_nt(const float* a, const float* b, float* c, int64_t batch,
               int64_t m, int64_t k, int64_t n, int64_t a_bstride, int64_t b_bstride);
// c[g,k,n] = sum_m a[g,m,k] * b[g,m,n]          a: [.., M, K]  b: [.., M, N]
void matmul_tn(const float* a, const float* b, float* c, int64_t batch,
               int64_t m, int64_t k, int64_t n, int64_t a_bstride, int64_t b_bstride);

// 1x1 convolution as a channel-mixing matmul over flattened pixels.
// x: [B, Ci, HW]  w: [Co, Ci]  bias: [Co] or nullptr  y: [B, Co, HW]
void conv1x1_fwd(const float* x, const float* w, const float* bias, float* y,
                 int64_t b, int64_t ci, int64_t co, int64_t hw);
void conv1x1_bwd_x(const float* dy, const float* w, float* dx,
                   int64_t b, int64_t ci, int64_t co, int64_t hw);
void conv1x1_bwd_w(const float* dy, const float* x, float* dw,
                   int64_t b, int64_t ci, int64_t co, int64_t hw);
void conv1x1_bwd_b(const float* dy, float* db, int64_t b, int64_t co, int64_t hw);

// Row-wise layer norm over the last dimension. mean/rstd are saved per row
// for the backward pass. Population variance, epsilon inside the sqrt.
void layernorm_fwd(const float* x, const float* gamma, const float* beta,
                   float* y, float* mean, float* rstd,
                   int64_t rows, int64_t d, float eps);
void layernorm_bwd_x(const float* dy, const float* x, const float* gamma,
                     const float* mean, const float* rstd, float* dx,
                     int64_t rows, int64_t d);
void layernorm_bwd_gb(const float* dy, const float* x, const float* mean,
                      const float* rstd, float* dgamma, float* dbeta,
                      int64_t rows, int64_t d);

// Row-wise softmax over the last dimension (max-subtracted for stability).
void softmax_fwd(const float* x, float* y, int64_t rows, int64_t d);
void softmax_bwd(const float* y, const float* dy, float* dx, int64_t rows, int64_t d);

// Per-pixel multi-class cross entropy on channel-first logits.
// logits: [B, C, HW]  target: [B*HW] class ids stored as exact floats.
// px_loss: [B*HW] per-pixel negative log likelihood (log-sum-exp stabilised).
void ce_fwd(const float* logits, const float* target, float* px_loss,
            int64_t b, int64_t c, int64_t hw);
// dlogits[b,c,p] = scale * (softmax(logits)[b,c,p] - [c == target[b,p]])
void ce_bwd(const float* logits, const float* target, float* dlogits,
            float scale, int64_t b, int64_t c, int64_t hw);

// Elementwise maps over n contiguous values.
void ew_add(const float* a, const float* b, float* out, int64_t n);
void ew_sub(const float* a, const float* b, float* out, int64_t n);
void ew_mul(const float* a, const float* b, float* out, int64_t n);
void ew_div(const float* a, const float* b, float* out, int64_t n);
void ew_affine(const float* x, float* out, int64_t n, float alpha, float beta);
void ew_acc(const float* x, float* out, int64_t n);  // out += x
void gelu_fwd(const float* x, float* y, int64_t n);  // exact erf form
void gelu_bwd(const float* x, const float* dy, float* dx, int64_t n);
void sigmoid_fwd(const float* x, float* y, int64_t n);
void sigmoid_bwd(const float* y, const float* dy, float* dx, int64_t n);

// Suffix broadcast: x viewed as [outer, inner], y as [inner].
void add_bcast(const float* x, const float* y, float* out, int64_t outer, int64_t inner);
// out[i] = sum_o d[o,i]; the gradient of add_bcast w.r.t. y.
void reduce_outer(const float* d, float* out, int64_t outer, int64_t inner);

// Non-overlapping patch extraction. img: [B, C, S, S] -> out: [B, T, C*p*p]
// with T = (S/p)^2, patches row-major over the grid, and patch columns laid
// out channel-major: out[b, gy*(S/p)+gx, c*p*p + py*p + px].
void unfold_fwd(const float* img, float* out, int64_t b, int64_t c, int64_t s, int64_t p);
void unfold_bwd(const float* dout, float* dimg, int64_t b, int64_t c, int64_t s, int64_t p);

// Depth-to-space with factor 2: x [B, 4C, H, W] -> y [B, C, 2H, 2W],
// y[b, c, 2h+dy, 2w+dx] = x[b, 4c + 2*dy + dx, h, w].
void d2s_fwd(const float* x, float* y, int64_t b, int64_t c_out, int64_t h, int64_t w);
void d2s_bwd(const float* dy, float* dx, int64_t b, int64_t c_out, int64_t h, int64_t w);

// out[r] = sum_c x[r, c]   (k ascending per row)
void sum_rows(const float* x, float* out, int64_t rows, int64_t cols);
// Serial left-to-right float32 accumulation; intentionally not parallel.
float sum_all(const float* x, int64_t n);

namespace ref {

void matmul_nn(const float* a, const float* b, float* c, int64_t batch,
               int64_t m, int64_t k, int64_t n, int64_t a_bstride, int64_t b_bstride);
void matmul_nt(const float* a, const float* b, float* c, int64_t batch,
               int64_t m, int64_t k, int64_t n, int64_t a_bstride, int64_t b_bstride);
void matmul_tn(const float* a, const float* b, float* c, int64_t batch,
               int64_t m, int64_t k, int64_t n, int64_t a_bstride, int64_t b_bstride);
void conv1x1_fwd(const float* x, const float* w, const float* bias, float* y,
                 int64_t b, int64_t ci, int64_t co, int64_t hw);
void conv1x1_bwd_x(const float* dy, const float* w, float* dx,
                   int64_t b, int64_t ci, int64_t co, int64_t hw);
void conv1x1_bwd_w(const float* dy, const float* x, float* dw,
                   int64_t b, int64_t ci, int64_t co, int64_t hw);
void conv1x1_bwd_b(const float* dy, float* db, int64_t b, int64_t co, int64_t hw);
void layernorm_fwd(const float* x, const float* gamma, const float* beta,
                   float* y, float* mean, float* rstd,
                   int64_t rows, int64_t d, float eps);
void layernorm_bwd_x(const float* dy, const float* x, const float* gamma,
                     const float* mean, const float* rstd, float* dx,
                     int64_t rows, int64_t d);
void layernorm_bwd_gb(const float* dy, const float* x, const float* mean,
                      const float* rstd, float* dgamma, float* dbeta,
                      int64_t rows, int64_t d);
void softmax_fwd(const float* x, float* y, int64_t rows, int64_t d);
void softmax_bwd(const float* y, const float* dy, float* dx, int64_t rows, int64_t d);
void ce_fwd(const float* logits, const float* target, float* px_loss,
            int64_t b, int64_t c, int64_t hw);
void ce_bwd(const float* logits, const float* target, float* dlogits,
            float scale, int64_t b, int64_t c, int64_t hw);
void ew_add(const float* a, const float* b, float* out, int64_t n);
void ew_sub(const float* a, const float* b, float* out, int64_t n);
void ew_mul(const float* a, const float* b, float* out, int64_t n);
void ew_div(const float* a, const float* b, float* out, int64_t n);
void ew_affine(const float* x, float* out, int64_t n, float alpha, float beta);
void ew_acc(const float* x, float* out, int64_t n);
void gelu_fwd(const float* x, float* y, int64_t n);
void gelu_bwd(const float* x, const float* dy, float* dx, int64_t n);
void sigmoid_fwd(const float* x, float* y, int64_t n);
void sigmoid_bwd(const float* y, const float* dy, float* dx, int64_t n);
void add_bcast(const float* x, const float* y, float* out, int64_t outer, int64_t inner);
void reduce_outer(const float* d, float* out, int64_t outer, int64_t inner);
void unfold_fwd(const float* img, float* out, int64_t b, int64_t c, int64_t s, int64_t p);
void unfold_bwd(const float* dout, float* dimg, int64_t b, int64_t c, int64_t s, int64_t p);
void d2s_fwd(const float* x, float* y, int64_t b, int64_t c_out, int64_t h, int64_t w);
void d2s_bwd(const float* dy, float* dx, int64_t b, int64_t c_out, int64_t h, int64_t w);
void sum_rows(const float* x, float* out, int64_t rows, int64_t cols);
float sum_all(const float* x, int64_t n);

}  // namespace ref

}  // namespace xmadapt::kernels
