#pragma once

// Brute-force reference implementations the tests compare the library
// against. Every oracle here restates its definition from first principles
// with plain loops — no code shared with the library under test — so a bug
// cannot hide on both sides of a comparison. Oracles accumulate in double
// except where a test asserts bitwise equality, in which case the oracle
// reproduces the library's promised float accumulation order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "xmadapt/fusion.hpp"
#include "xmadapt/metrics.hpp"

namespace oracle {

// ---- dense linear algebra -------------------------------------------------

// Triple-loop batched matrix product in double. When b_broadcast is set, the
// single [K,N] right operand serves every batch entry.
inline std::vector<double> matmul(const std::vector<float>& a, const std::vector<float>& b,
                                  int64_t batch, int64_t m, int64_t k, int64_t n,
                                  bool b_broadcast) {
  std::vector<double> c(static_cast<size_t>(batch * m * n), 0.0);
  for (int64_t g = 0; g < batch; ++g) {
    const float* ag = a.data() + g * m * k;
    const float* bg = b.data() + (b_broadcast ? 0 : g * k * n);
    double* cg = c.data() + g * m * n;
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int64_t kk = 0; kk < k; ++kk)
          acc += static_cast<double>(ag[i * k + kk]) * static_cast<double>(bg[kk * n + j]);
        cg[i * n + j] = acc;
      }
  }
  return c;
}

// Per-pixel channel mix accumulated in float with input channels ascending —
// the exact rounded op sequence the library kernel documents — so the
// comparison can demand bitwise equality.
inline std::vector<float> conv1x1(const std::vector<float>& x, const std::vector<float>& w,
                                  const std::vector<float>& bias, int64_t b, int64_t ci,
                                  int64_t co, int64_t hw) {
  std::vector<float> y(static_cast<size_t>(b * co * hw));
  for (int64_t i = 0; i < b; ++i)
    for (int64_t o = 0; o < co; ++o)
      for (int64_t p = 0; p < hw; ++p) {
        float acc = bias.empty() ? 0.0f : bias[static_cast<size_t>(o)];
        for (int64_t q = 0; q < ci; ++q)
          acc += w[static_cast<size_t>(o * ci + q)] * x[static_cast<size_t>((i * ci + q) * hw + p)];
        y[static_cast<size_t>((i * co + o) * hw + p)] = acc;
      }
  return y;
}

// Two-pass mean / population-variance layer norm in double.
inline std::vector<double> layernorm(const std::vector<float>& x, const std::vector<float>& gamma,
                                     const std::vector<float>& beta, int64_t rows, int64_t d,
                                     double eps) {
  std::vector<double> y(static_cast<size_t>(rows * d));
  for (int64_t r = 0; r < rows; ++r) {
    const float* xr = x.data() + r * d;
    double mean = 0.0;
    for (int64_t i = 0; i < d; ++i) mean += xr[i];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t i = 0; i < d; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= static_cast<double>(d);
    double rstd = 1.0 / std::sqrt(var + eps);
    for (int64_t i = 0; i < d; ++i)
      y[static_cast<size_t>(r * d + i)] =
          (xr[i] - mean) * rstd * static_cast<double>(gamma[static_cast<size_t>(i)]) +
          static_cast<double>(beta[static_cast<size_t>(i)]);
  }
  return y;
}

inline std::vector<double> softmax_row(const std::vector<double>& s) {
  double mx = s[0];
  for (double v : s) mx = std::max(mx, v);
  std::vector<double> e(s.size());
  double sum = 0.0;
  for (size_t i = 0; i < s.size(); ++i) {
    e[i] = std::exp(s[i] - mx);
    sum += e[i];
  }
  for (double& v : e) v /= sum;
  return e;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

// ---- transformer block ------------------------------------------------------

// Explicit-loop pre-norm block in double: LN -> per-head scaled dot-product
// attention -> output projection -> residual -> LN -> gelu MLP -> residual.
// Weight layouts match the library: wq/wk/wv/wo are [c,c] applied as row
// vector times matrix, w1 [c,hidden], w2 [hidden,c].
inline std::vector<double> encoder_block(
    const std::vector<float>& x, int64_t bsz, int64_t t, int64_t c, int64_t heads,
    int64_t hidden, double eps, const std::vector<float>& ln1_g, const std::vector<float>& ln1_b,
    const std::vector<float>& wq, const std::vector<float>& bq, const std::vector<float>& wk,
    const std::vector<float>& bk, const std::vector<float>& wv, const std::vector<float>& bv,
    const std::vector<float>& wo, const std::vector<float>& bo, const std::vector<float>& ln2_g,
    const std::vector<float>& ln2_b, const std::vector<float>& w1, const std::vector<float>& b1,
    const std::vector<float>& w2, const std::vector<float>& b2) {
  int64_t dh = c / heads;
  std::vector<double> out(static_cast<size_t>(bsz * t * c));
  for (int64_t bi = 0; bi < bsz; ++bi) {
    std::vector<float> xs(x.begin() + bi * t * c, x.begin() + (bi + 1) * t * c);
    std::vector<double> a = layernorm(xs, ln1_g, ln1_b, t, c, eps);

    auto project = [&](const std::vector<float>& w, const std::vector<float>& b) {
      std::vector<double> r(static_cast<size_t>(t * c));
      for (int64_t i = 0; i < t; ++i)
        for (int64_t j = 0; j < c; ++j) {
          double acc = b[static_cast<size_t>(j)];
          for (int64_t kk = 0; kk < c; ++kk) acc += a[i * c + kk] * w[kk * c + j];
          r[static_cast<size_t>(i * c + j)] = acc;
        }
      return r;
    };
    std::vector<double> q = project(wq, bq), k = project(wk, bk), v = project(wv, bv);

    // Attention per head; concatenated head outputs land back in [t, c].
    std::vector<double> att_out(static_cast<size_t>(t * c), 0.0);
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int64_t hh = 0; hh < heads; ++hh) {
      for (int64_t i = 0; i < t; ++i) {
        std::vector<double> scores(static_cast<size_t>(t));
        for (int64_t u = 0; u < t; ++u) {
          double s = 0.0;
          for (int64_t d = 0; d < dh; ++d)
            s += q[i * c + hh * dh + d] * k[u * c + hh * dh + d];
          scores[static_cast<size_t>(u)] = s * scale;
        }
        std::vector<double> p = softmax_row(scores);
        for (int64_t d = 0; d < dh; ++d) {
          double acc = 0.0;
          for (int64_t u = 0; u < t; ++u) acc += p[static_cast<size_t>(u)] * v[u * c + hh * dh + d];
          att_out[static_cast<size_t>(i * c + hh * dh + d)] = acc;
        }
      }
    }

    // Output projection + first residual.
    std::vector<double> x1(static_cast<size_t>(t * c));
    for (int64_t i = 0; i < t; ++i)
      for (int64_t j = 0; j < c; ++j) {
        double acc = bo[static_cast<size_t>(j)];
        for (int64_t kk = 0; kk < c; ++kk) acc += att_out[i * c + kk] * wo[kk * c + j];
        x1[static_cast<size_t>(i * c + j)] = static_cast<double>(xs[static_cast<size_t>(i * c + j)]) + acc;
      }

    // MLP on LN(x1) + second residual. layernorm() wants float input.
    std::vector<float> x1f(x1.begin(), x1.end());
    std::vector<double> m = layernorm(x1f, ln2_g, ln2_b, t, c, eps);
    for (int64_t i = 0; i < t; ++i) {
      std::vector<double> hid(static_cast<size_t>(hidden));
      for (int64_t j = 0; j < hidden; ++j) {
        double acc = b1[static_cast<size_t>(j)];
        for (int64_t kk = 0; kk < c; ++kk) acc += m[i * c + kk] * w1[kk * hidden + j];
        hid[static_cast<size_t>(j)] = gelu(acc);
      }
      for (int64_t j = 0; j < c; ++j) {
        double acc = b2[static_cast<size_t>(j)];
        for (int64_t kk = 0; kk < hidden; ++kk) acc += hid[static_cast<size_t>(kk)] * w2[kk * c + j];
        out[static_cast<size_t>((bi * t + i) * c + j)] = x1[static_cast<size_t>(i * c + j)] + acc;
      }
    }
  }
  return out;
}

// ---- segmentation metrics ---------------------------------------------------

// Boundary definition restated: a foreground pixel with a 4-neighbour outside
// the mask or outside the image.
inline std::vector<std::pair<int64_t, int64_t>> boundary(const xmadapt::BinaryMask& m) {
  std::vector<std::pair<int64_t, int64_t>> out;
  auto bg = [&](int64_t y, int64_t x) {
    return y < 0 || y >= m.h || x < 0 || x >= m.w || !m(y, x);
  };
  for (int64_t y = 0; y < m.h; ++y)
    for (int64_t x = 0; x < m.w; ++x)
      if (m(y, x) && (bg(y - 1, x) || bg(y + 1, x) || bg(y, x - 1) || bg(y, x + 1)))
        out.emplace_back(y, x);
  return out;
}

// rank = q*(n-1) with linear interpolation, the library's stated convention.
inline double percentile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  double rank = q * static_cast<double>(values.size() - 1);
  size_t lo = static_cast<size_t>(rank);
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (rank - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

// All-pairs directed nearest-boundary distances, both directions combined
// into one multiset, 95th percentile.
inline std::optional<double> hd95_allpairs(const xmadapt::BinaryMask& pred,
                                           const xmadapt::BinaryMask& gt) {
  if (pred.empty() || gt.empty()) return std::nullopt;
  auto pb = boundary(pred), gb = boundary(gt);
  auto nearest = [](const std::pair<int64_t, int64_t>& p,
                    const std::vector<std::pair<int64_t, int64_t>>& sites) {
    int64_t best = INT64_MAX;
    for (const auto& s : sites) {
      int64_t dy = p.first - s.first, dx = p.second - s.second;
      best = std::min(best, dy * dy + dx * dx);
    }
    return std::sqrt(static_cast<double>(best));
  };
  std::vector<double> dists;
  dists.reserve(pb.size() + gb.size());
  for (const auto& p : pb) dists.push_back(nearest(p, gb));
  for (const auto& g : gb) dists.push_back(nearest(g, pb));
  return percentile(std::move(dists), 0.95);
}

// Classic Hausdorff distance: max of the two directed maxima.
inline std::optional<double> hausdorff_exact(const xmadapt::BinaryMask& pred,
                                             const xmadapt::BinaryMask& gt) {
  if (pred.empty() || gt.empty()) return std::nullopt;
  auto pb = boundary(pred), gb = boundary(gt);
  auto directed = [](const std::vector<std::pair<int64_t, int64_t>>& from,
                     const std::vector<std::pair<int64_t, int64_t>>& to) {
    int64_t worst = 0;
    for (const auto& p : from) {
      int64_t best = INT64_MAX;
      for (const auto& s : to) {
        int64_t dy = p.first - s.first, dx = p.second - s.second;
        best = std::min(best, dy * dy + dx * dx);
      }
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::sqrt(static_cast<double>(std::max(directed(pb, gb), directed(gb, pb))));
}

// ---- parameter accounting ---------------------------------------------------

struct ParamCounts {
  long long total = 0;
  long long trainable = 0;
};

// Closed-form shape products for every module of the model, restating the
// architecture (including the decoder width rule) independently of the
// library's parameter collection. Trainable counts assume the freeze/train
// split: encoders frozen, lifts + adapters + decoder trainable.
inline ParamCounts param_counts(const xmadapt::ModelConfig& cfg) {
  const long long c = cfg.backbone.embed_dim;
  const long long p = cfg.backbone.patch_size;
  const long long grid = cfg.backbone.image_size / p;
  const long long tokens = grid * grid;
  const long long hidden = static_cast<long long>(
      cfg.backbone.mlp_ratio * static_cast<float>(cfg.backbone.embed_dim) + 0.5f);
  const long long depth = cfg.backbone.depth;

  const long long block = 2 * c                  // ln1 gamma+beta
                          + 4 * (c * c + c)      // q, k, v, o projections
                          + 2 * c                // ln2 gamma+beta
                          + c * hidden + hidden  // mlp in
                          + hidden * c + c;      // mlp out
  const long long encoder = (3 * p * p) * c + c  // patch projection
                            + tokens * c         // positional embedding
                            + depth * block;

  const bool cross = cfg.variant.kind == xmadapt::ModelVariant::Kind::Cross;
  const long long n_encoders = cross ? 2 : 1;
  const long long lift_in = cfg.variant.input_channels();
  const long long lifts = cross ? 2 * (3 * 2 + 3) : (3 * lift_in + 3);
  const long long adapters = cross ? cfg.adapter_depth * (c * 2 * c + c) : 0;

  long long decoder = 0;
  long long w_in = c;
  int stages = 0;
  for (long long q = p; q > 1; q >>= 1) ++stages;
  for (int i = 0; i < stages; ++i) {
    long long w_out = i == 0 ? c : std::max<long long>(8, (3 * c) >> (i + 1));
    decoder += 4 * w_out * w_in + 4 * w_out  // projection to 4x channels
               + w_out * w_out + w_out;      // post-upsample mix
    w_in = w_out;
  }
  decoder += 2 * w_in + 2;  // class head

  ParamCounts out;
  out.trainable = lifts + adapters + decoder;
  out.total = out.trainable + n_encoders * encoder;
  return out;
}

}  // namespace oracle
