#include "xmadapt/kernels.hpp"

#include <cmath>

// Serial reference kernels: the plainest loops that state the definition.
// These are the oracle the production kernels are tested against bit for
// bit, so keep them boring — no blocking, no pragmas, no reordering.

namespace xmadapt::kernels::ref {

void matmul_nn(const float* a, const float* b, float* c, int64_t batch,
               int64_t m, int64_t k, int64_t n, int64_t a_bstride, int64_t b_bstride) {
  for (int64_t g = 0; g < batch; ++g) {
    const float* ag = a + g * a_bstride;
    const float* bg = b + g * b_bstride;
    float* cg = c + g * m * n;
    for (int64_t i = 0; i < m; ++i) {
      for (int64_t j = 0; j < n; ++j) {
        float acc = 0.0f;
        for (int64_t kk = 0; kk < k; ++kk) acc += ag[i * k + kk] * bg[kk * n + j];
        cg[i * n + j] = acc;
      }
    }
  }
}

void matmul_nt(const float* a, const float* b, float* c, int64_t batch,
               int64_t m, int64_t k, int64_t n, int64_t a_bstride, int64_t b_bstride) {
  for (int64_t g = 0; g < batch; ++g) {
    const float* ag = a + g * a_bstride;
    const float* bg = b + g * b_bstride;
    float* cg = c + g * m * n;
    for (int64_t i = 0; i < m; ++i) {
      for (int64_t j = 0; j < n; ++j) {
        float acc = 0.0f;
        for (int64_t kk = 0; kk < k; ++kk) acc += ag[i * k + kk] * bg[j * k + kk];
        cg[i * n + j] = acc;
      }
    }
  }
}

void matmul_tn(const float* a, const float* b, float* c, int64_t batch,
               int64_t m, int64_t k, int64_t n, int64_t a_bstride, int64_t b_bstride) {
  for (int64_t g = 0; g < batch; ++g) {
    const float* ag = a + g * a_bstride;
    const float* bg = b + g * b_bstride;
    float* cg = c + g * k * n;
    for (int64_t kk = 0; kk < k; ++kk) {
      for (int64_t j = 0; j < n; ++j) {
        float acc = 0.0f;
        for (int64_t i = 0; i < m; ++i) acc += ag[i * k + kk] * bg[i * n + j];
        cg[kk * n + j] = acc;
      }
    }
  }
}

void conv1x1_fwd(const float* x, const float* w, const float* bias, float* y,
                 int64_t b, int64_t ci, int64_t co, int64_t hw) {
  for (int64_t i = 0; i < b; ++i) {
    for (int64_t o = 0; o < co; ++o) {
      for (int64_t p = 0; p < hw; ++p) {
        float acc = bias ? bias[o] : 0.0f;
        for (int64_t q = 0; q < ci; ++q) acc += w[o * ci + q] * x[(i * ci + q) * hw + p];
        y[(i * co + o) * hw + p] = acc;
      }
    }
  }
}

void conv1x1_bwd_x(const float* dy, const float* w, float* dx,
                   int64_t b, int64_t ci, int64_t co, int64_t hw) {
  for (int64_t i = 0; i < b; ++i) {
    for (int64_t q = 0; q < ci; ++q) {
      for (int64_t p = 0; p < hw; ++p) {
        float acc = 0.0f;
        for (int64_t o = 0; o < co; ++o) acc += w[o * ci + q] * dy[(i * co + o) * hw + p];
        dx[(i * ci + q) * hw + p] = acc;
      }
    }
  }
}

void conv1x1_bwd_w(const float* dy, const float* x, float* dw,
                   int64_t b, int64_t ci, int64_t co, int64_t hw) {
  for (int64_t o = 0; o < co; ++o) {
    for (int64_t q = 0; q < ci; ++q) {
      float acc = 0.0f;
      for (int64_t i = 0; i < b; ++i)
        for (int64_t p = 0; p < hw; ++p)
          acc += dy[(i * co + o) * hw + p] * x[(i * ci + q) * hw + p];
      dw[o * ci + q] = acc;
    }
  }
}

void conv1x1_bwd_b(const float* dy, float* db, int64_t b, int64_t co, int64_t hw) {
  for (int64_t o = 0; o < co; ++o) {
    float acc = 0.0f;
    for (int64_t i = 0; i < b; ++i)
      for (int64_t p = 0; p < hw; ++p) acc += dy[(i * co + o) * hw + p];
    db[o] = acc;
  }
}

void layernorm_fwd(const float* x, const float* gamma, const float* beta,
                   float* y, float* mean, float* rstd,
                   int64_t rows, int64_t d, float eps) {
  for (int64_t r = 0; r < rows; ++r) {
    const float* xr = x + r * d;
    float mu = 0.0f;
    for (int64_t i = 0; i < d; ++i) mu += xr[i];
    mu /= static_cast<float>(d);
    float var = 0.0f;
    for (int64_t i = 0; i < d; ++i) {
      float t = xr[i] - mu;
      var += t * t;
    }
    var /= static_cast<float>(d);
    float rs = 1.0f / std::sqrt(var + eps);
    mean[r] = mu;
    rstd[r] = rs;
    for (int64_t i = 0; i < d; ++i) y[r * d + i] = gamma[i] * ((xr[i] - mu) * rs) + beta[i];
  }
}

void layernorm_bwd_x(const float* dy, const float* x, const float* gamma,
                     const float* mean, const float* rstd, float* dx,
                     int64_t rows, int64_t d) {
  for (int64_t r = 0; r < rows; ++r) {
    const float* dyr = dy + r * d;
    const float* xr = x + r * d;
    float mu = mean[r], rs = rstd[r];
    // dx = rs * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
    float s1 = 0.0f, s2 = 0.0f;
    for (int64_t i = 0; i < d; ++i) {
      float xhat = (xr[i] - mu) * rs;
      float dxhat = dyr[i] * gamma[i];
      s1 += dxhat;
      s2 += dxhat * xhat;
    }
    s1 /= static_cast<float>(d);
    s2 /= static_cast<float>(d);
    for (int64_t i = 0; i < d; ++i) {
      float xhat = (xr[i] - mu) * rs;
      float dxhat = dyr[i] * gamma[i];
      dx[r * d + i] = rs * (dxhat - s1 - xhat * s2);
    }
  }
}

void layernorm_bwd_gb(const float* dy, const float* x, const float* mean,
                      const float* rstd, float* dgamma, float* dbeta,
                      int64_t rows, int64_t d) {
  for (int64_t i = 0; i < d; ++i) {
    float dg = 0.0f, db = 0.0f;
    for (int64_t r = 0; r < rows; ++r) {
      float xhat = (x[r * d + i] - mean[r]) * rstd[r];
      dg += dy[r * d + i] * xhat;
      db += dy[r * d + i];
    }
    dgamma[i] = dg;
    dbeta[i] = db;
  }
}

void softmax_fwd(const float* x, float* y, int64_t rows, int64_t d) {
  for (int64_t r = 0; r < rows; ++r) {
    const float* xr = x + r * d;
    float mx = xr[0];
    for (int64_t i = 1; i < d; ++i) mx = xr[i] > mx ? xr[i] : mx;
    float z = 0.0f;
    for (int64_t i = 0; i < d; ++i) {
      float e = std::exp(xr[i] - mx);
      y[r * d + i] = e;
      z += e;
    }
    float inv = 1.0f / z;
    for (int64_t i = 0; i < d; ++i) y[r * d + i] *= inv;
  }
}

void softmax_bwd(const float* y, const float* dy, float* dx, int64_t rows, int64_t d) {
  for (int64_t r = 0; r < rows; ++r) {
    const float* yr = y + r * d;
    const float* dyr = dy + r * d;
    float dot = 0.0f;
    for (int64_t i = 0; i < d; ++i) dot += yr[i] * dyr[i];
    for (int64_t i = 0; i < d; ++i) dx[r * d + i] = yr[i] * (dyr[i] - dot);
  }
}

void ce_fwd(const float* logits, const float* target, float* px_loss,
            int64_t b, int64_t c, int64_t hw) {
  for (int64_t i = 0; i < b; ++i) {
    for (int64_t p = 0; p < hw; ++p) {
      float mx = logits[(i * c) * hw + p];
      for (int64_t j = 1; j < c; ++j) {
        float v = logits[(i * c + j) * hw + p];
        mx = v > mx ? v : mx;
      }
      float z = 0.0f;
      for (int64_t j = 0; j < c; ++j) z += std::exp(logits[(i * c + j) * hw + p] - mx);
      int64_t t = static_cast<int64_t>(target[i * hw + p]);
      px_loss[i * hw + p] = mx + std::log(z) - logits[(i * c + t) * hw + p];
    }
  }
}

void ce_bwd(const float* logits, const float* target, float* dlogits,
            float scale, int64_t b, int64_t c, int64_t hw) {
  for (int64_t i = 0; i < b; ++i) {
    for (int64_t p = 0; p < hw; ++p) {
      float mx = logits[(i * c) * hw + p];
      for (int64_t j = 1; j < c; ++j) {
        float v = logits[(i * c + j) * hw + p];
        mx = v > mx ? v : mx;
      }
      float z = 0.0f;
      for (int64_t j = 0; j < c; ++j) z += std::exp(logits[(i * c + j) * hw + p] - mx);
      int64_t t = static_cast<int64_t>(target[i * hw + p]);
      for (int64_t j = 0; j < c; ++j) {
        float soft = std::exp(logits[(i * c + j) * hw + p] - mx) / z;
        dlogits[(i * c + j) * hw + p] = scale * (soft - (j == t ? 1.0f : 0.0f));
      }
    }
  }
}

void ew_add(const float* a, const float* b, float* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}
void ew_sub(const float* a, const float* b, float* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}
void ew_mul(const float* a, const float* b, float* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}
void ew_div(const float* a, const float* b, float* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] / b[i];
}
void ew_affine(const float* x, float* out, int64_t n, float alpha, float beta) {
  for (int64_t i = 0; i < n; ++i) out[i] = alpha * x[i] + beta;
}
void ew_acc(const float* x, float* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] += x[i];
}

void gelu_fwd(const float* x, float* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i)
    y[i] = 0.5f * x[i] * (1.0f + std::erf(x[i] * 0.70710678118654752440f));
}

void gelu_bwd(const float* x, const float* dy, float* dx, int64_t n) {
  // d/dx [x * Phi(x)] = Phi(x) + x * phi(x), phi the standard normal pdf.
  for (int64_t i = 0; i < n; ++i) {
    float phi_cdf = 0.5f * (1.0f + std::erf(x[i] * 0.70710678118654752440f));
    float pdf = 0.39894228040143267794f * std::exp(-0.5f * x[i] * x[i]);
    dx[i] = dy[i] * (phi_cdf + x[i] * pdf);
  }
}

void sigmoid_fwd(const float* x, float* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = 1.0f / (1.0f + std::exp(-x[i]));
}

void sigmoid_bwd(const float* y, const float* dy, float* dx, int64_t n) {
  for (int64_t i = 0; i < n; ++i) dx[i] = dy[i] * y[i] * (1.0f - y[i]);
}

void add_bcast(const float* x, const float* y, float* out, int64_t outer, int64_t inner) {
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) out[o * inner + i] = x[o * inner + i] + y[i];
}

void reduce_outer(const float* d, float* out, int64_t outer, int64_t inner) {
  for (int64_t i = 0; i < inner; ++i) {
    float acc = 0.0f;
    for (int64_t o = 0; o < outer; ++o) acc += d[o * inner + i];
    out[i] = acc;
  }
}

void unfold_fwd(const float* img, float* out, int64_t b, int64_t c, int64_t s, int64_t p) {
  int64_t g = s / p;  // patches per side
  for (int64_t i = 0; i < b; ++i)
    for (int64_t gy = 0; gy < g; ++gy)
      for (int64_t gx = 0; gx < g; ++gx)
        for (int64_t ch = 0; ch < c; ++ch)
          for (int64_t py = 0; py < p; ++py)
            for (int64_t px = 0; px < p; ++px) {
              int64_t t = gy * g + gx;
              int64_t col = ch * p * p + py * p + px;
              out[(i * g * g + t) * c * p * p + col] =
                  img[((i * c + ch) * s + gy * p + py) * s + gx * p + px];
            }
}

void unfold_bwd(const float* dout, float* dimg, int64_t b, int64_t c, int64_t s, int64_t p) {
  int64_t g = s / p;
  for (int64_t i = 0; i < b; ++i)
    for (int64_t gy = 0; gy < g; ++gy)
      for (int64_t gx = 0; gx < g; ++gx)
        for (int64_t ch = 0; ch < c; ++ch)
          for (int64_t py = 0; py < p; ++py)
            for (int64_t px = 0; px < p; ++px) {
              int64_t t = gy * g + gx;
              int64_t col = ch * p * p + py * p + px;
              dimg[((i * c + ch) * s + gy * p + py) * s + gx * p + px] =
                  dout[(i * g * g + t) * c * p * p + col];
            }
}

void d2s_fwd(const float* x, float* y, int64_t b, int64_t c_out, int64_t h, int64_t w) {
  for (int64_t i = 0; i < b; ++i)
    for (int64_t ch = 0; ch < c_out; ++ch)
      for (int64_t yy = 0; yy < 2 * h; ++yy)
        for (int64_t xx = 0; xx < 2 * w; ++xx) {
          int64_t src_c = 4 * ch + 2 * (yy & 1) + (xx & 1);
          y[((i * c_out + ch) * 2 * h + yy) * 2 * w + xx] =
              x[((i * 4 * c_out + src_c) * h + yy / 2) * w + xx / 2];
        }
}

void d2s_bwd(const float* dy, float* dx, int64_t b, int64_t c_out, int64_t h, int64_t w) {
  for (int64_t i = 0; i < b; ++i)
    for (int64_t ch = 0; ch < c_out; ++ch)
      for (int64_t yy = 0; yy < 2 * h; ++yy)
        for (int64_t xx = 0; xx < 2 * w; ++xx) {
          int64_t src_c = 4 * ch + 2 * (yy & 1) + (xx & 1);
          dx[((i * 4 * c_out + src_c) * h + yy / 2) * w + xx / 2] =
              dy[((i * c_out + ch) * 2 * h + yy) * 2 * w + xx];
        }
}

void sum_rows(const float* x, float* out, int64_t rows, int64_t cols) {
  for (int64_t r = 0; r < rows; ++r) {
    float acc = 0.0f;
    for (int64_t c = 0; c < cols; ++c) acc += x[r * cols + c];
    out[r] = acc;
  }
}

float sum_all(const float* x, int64_t n) {
  float acc = 0.0f;
  for (int64_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

}  // namespace xmadapt::kernels::ref
