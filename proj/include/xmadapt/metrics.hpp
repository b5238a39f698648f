#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "xmadapt/tensor.hpp"

namespace xmadapt {

// Plain 0/1 raster for the evaluation metrics (no gradients involved).
struct BinaryMask {
  int64_t h = 0, w = 0;
  std::vector<uint8_t> at;  // row-major, size h*w

  uint8_t operator()(int64_t y, int64_t x) const { return at[static_cast<size_t>(y * w + x)]; }
  int64_t area() const;
  bool empty() const { return area() == 0; }
};

// [H,W] tensor with exact 0/1 values -> mask (DataError otherwise).
BinaryMask mask_from_tensor(const Tensor& t);

// Argmax over the class channel of [B,2,S,S] logits for one batch element;
// ties predict background (class 0).
BinaryMask argmax_mask(const Tensor& logits, int64_t batch_index);

// 100 * 2|P∩G| / (|P|+|G|); 100 when both masks are empty.
double dice_score(const BinaryMask& pred, const BinaryMask& gt);

// Boundary pixels: foreground pixels 4-adjacent to background or to the
// image border; returned in row-major order as (y, x).
std::vector<std::pair<int64_t, int64_t>> boundary_pixels(const BinaryMask& m);

// 95th percentile (linear interpolation) of the combined multiset of both
// directed boundary-to-boundary Euclidean distance sets. std::nullopt when
// either mask is empty. Internally uses an exact squared Euclidean distance
// transform, so results equal the all-pairs definition exactly.
std::optional<double> hd95(const BinaryMask& pred, const BinaryMask& gt);

// Shared percentile convention: rank = q*(n-1), linear interpolation between
// the neighbouring order statistics of the sorted values.
double percentile_sorted(const std::vector<double>& sorted_values, double q);

struct EvalRecord {
  std::string id;
  double dice_percent = 0.0;
  std::optional<double> hd95;
};

struct EvalAggregate {
  double mean_dice = 0.0;                // over all samples
  std::optional<double> mean_hd95;       // over samples where hd95 is defined
  int64_t hd95_undefined = 0;
  int64_t count = 0;
};

EvalAggregate aggregate_records(const std::vector<EvalRecord>& records);

}  // namespace xmadapt
