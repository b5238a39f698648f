#include "xmadapt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "xmadapt/error.hpp"

namespace xmadapt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Large finite sentinel for "no site here". It must stay finite: with a true
// infinity, a row or column containing no sites makes the parabola
// intersection below compute inf - inf = NaN, which then poisons every later
// pass. Any value far above the largest achievable squared pixel distance
// works; sentinel-cost parabolas never win a lower envelope against a real
// site.
constexpr double kNoSite = 1e15;

// Felzenszwalb-Huttenlocher 1-D squared distance transform (lower envelope
// of parabolas). With integer site costs the output values are exact
// integers, which hd95 relies on to match the all-pairs definition exactly.
void dt_1d(const std::vector<double>& f, std::vector<double>& d, int64_t n,
           std::vector<int64_t>& v, std::vector<double>& z) {
  int64_t k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int64_t q = 1; q < n; ++q) {
    double s = ((f[q] + static_cast<double>(q * q)) -
                (f[v[k]] + static_cast<double>(v[k] * v[k]))) /
               (2.0 * static_cast<double>(q - v[k]));
    while (s <= z[k]) {
      --k;
      s = ((f[q] + static_cast<double>(q * q)) -
           (f[v[k]] + static_cast<double>(v[k] * v[k]))) /
          (2.0 * static_cast<double>(q - v[k]));
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int64_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    int64_t dq = q - v[k];
    d[q] = static_cast<double>(dq * dq) + f[v[k]];
  }
}

// Exact squared EDT of a site set on an h*w grid.
std::vector<double> edt_squared(const std::vector<std::pair<int64_t, int64_t>>& sites,
                                int64_t h, int64_t w) {
  std::vector<double> grid(static_cast<size_t>(h * w), kNoSite);
  for (auto [y, x] : sites) grid[static_cast<size_t>(y * w + x)] = 0.0;

  int64_t n = std::max(h, w);
  std::vector<double> f(static_cast<size_t>(n)), d(static_cast<size_t>(n));
  std::vector<int64_t> v(static_cast<size_t>(n));
  std::vector<double> z(static_cast<size_t>(n + 1));

  // Columns first, then rows.
  for (int64_t x = 0; x < w; ++x) {
    for (int64_t y = 0; y < h; ++y) f[y] = grid[static_cast<size_t>(y * w + x)];
    dt_1d(f, d, h, v, z);
    for (int64_t y = 0; y < h; ++y) grid[static_cast<size_t>(y * w + x)] = d[y];
  }
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) f[x] = grid[static_cast<size_t>(y * w + x)];
    dt_1d(f, d, w, v, z);
    for (int64_t x = 0; x < w; ++x) grid[static_cast<size_t>(y * w + x)] = d[x];
  }
  return grid;
}

}  // namespace

int64_t BinaryMask::area() const {
  int64_t n = 0;
  for (uint8_t v : at) n += v;
  return n;
}

BinaryMask mask_from_tensor(const Tensor& t) {
  if (t.ndim() != 2)
    throw DimensionError("mask_from_tensor: expected rank-2 tensor, got " +
                         shape_str(t.shape()));
  BinaryMask m;
  m.h = t.dim(0);
  m.w = t.dim(1);
  m.at.resize(static_cast<size_t>(m.h * m.w));
  const std::vector<float>& d = t.data();
  for (size_t i = 0; i < d.size(); ++i) {
    if (d[i] != 0.0f && d[i] != 1.0f)
      throw DataError("mask tensor contains a value other than 0 or 1");
    m.at[i] = d[i] == 1.0f ? 1 : 0;
  }
  return m;
}

BinaryMask argmax_mask(const Tensor& logits, int64_t batch_index) {
  if (logits.ndim() != 4 || logits.dim(1) != 2)
    throw DimensionError("argmax_mask: expected [B,2,S,S], got " + shape_str(logits.shape()));
  if (batch_index < 0 || batch_index >= logits.dim(0))
    throw ContractError("argmax_mask: batch index out of range");
  int64_t h = logits.dim(2), w = logits.dim(3);
  int64_t hw = h * w;
  const float* base = logits.data().data() + batch_index * 2 * hw;
  BinaryMask m;
  m.h = h;
  m.w = w;
  m.at.resize(static_cast<size_t>(hw));
  // Equal logits break toward background.
  for (int64_t i = 0; i < hw; ++i) m.at[static_cast<size_t>(i)] = base[hw + i] > base[i] ? 1 : 0;
  return m;
}

double dice_score(const BinaryMask& pred, const BinaryMask& gt) {
  if (pred.h != gt.h || pred.w != gt.w)
    throw DimensionError("dice_score: mask shapes differ, [" + std::to_string(pred.h) + "," +
                         std::to_string(pred.w) + "] vs [" + std::to_string(gt.h) + "," +
                         std::to_string(gt.w) + "]");
  int64_t inter = 0, total = 0;
  for (size_t i = 0; i < pred.at.size(); ++i) {
    inter += pred.at[i] & gt.at[i];
    total += pred.at[i] + gt.at[i];
  }
  if (total == 0) return 100.0;  // both empty: perfect agreement
  return 100.0 * 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

std::vector<std::pair<int64_t, int64_t>> boundary_pixels(const BinaryMask& m) {
  std::vector<std::pair<int64_t, int64_t>> out;
  for (int64_t y = 0; y < m.h; ++y) {
    for (int64_t x = 0; x < m.w; ++x) {
      if (!m(y, x)) continue;
      bool edge = y == 0 || y == m.h - 1 || x == 0 || x == m.w - 1;
      if (!edge)
        edge = !m(y - 1, x) || !m(y + 1, x) || !m(y, x - 1) || !m(y, x + 1);
      if (edge) out.emplace_back(y, x);
    }
  }
  return out;
}

double percentile_sorted(const std::vector<double>& sorted_values, double q) {
  if (sorted_values.empty())
    throw ContractError("percentile of an empty value set");
  double rank = q * static_cast<double>(sorted_values.size() - 1);
  size_t lo = static_cast<size_t>(rank);
  if (lo + 1 >= sorted_values.size()) return sorted_values.back();
  double frac = rank - static_cast<double>(lo);
  return sorted_values[lo] + frac * (sorted_values[lo + 1] - sorted_values[lo]);
}

std::optional<double> hd95(const BinaryMask& pred, const BinaryMask& gt) {
  if (pred.h != gt.h || pred.w != gt.w)
    throw DimensionError("hd95: mask shapes differ, [" + std::to_string(pred.h) + "," +
                         std::to_string(pred.w) + "] vs [" + std::to_string(gt.h) + "," +
                         std::to_string(gt.w) + "]");
  if (pred.empty() || gt.empty()) return std::nullopt;

  auto pb = boundary_pixels(pred);
  auto gb = boundary_pixels(gt);
  std::vector<double> dists;
  dists.reserve(pb.size() + gb.size());

  std::vector<double> to_gt = edt_squared(gb, pred.h, pred.w);
  for (auto [y, x] : pb) dists.push_back(std::sqrt(to_gt[static_cast<size_t>(y * pred.w + x)]));
  std::vector<double> to_pred = edt_squared(pb, pred.h, pred.w);
  for (auto [y, x] : gb)
    dists.push_back(std::sqrt(to_pred[static_cast<size_t>(y * pred.w + x)]));

  std::sort(dists.begin(), dists.end());
  return percentile_sorted(dists, 0.95);
}

EvalAggregate aggregate_records(const std::vector<EvalRecord>& records) {
  EvalAggregate agg;
  agg.count = static_cast<int64_t>(records.size());
  double dice_sum = 0.0, hd_sum = 0.0;
  int64_t hd_n = 0;
  for (const EvalRecord& r : records) {
    dice_sum += r.dice_percent;
    if (r.hd95.has_value()) {
      hd_sum += *r.hd95;
      ++hd_n;
    } else {
      ++agg.hd95_undefined;
    }
  }
  if (agg.count > 0) agg.mean_dice = dice_sum / static_cast<double>(agg.count);
  if (hd_n > 0) agg.mean_hd95 = hd_sum / static_cast<double>(hd_n);
  return agg;
}

}  // namespace xmadapt
