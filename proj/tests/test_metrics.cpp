#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "xmadapt/error.hpp"
#include "xmadapt/metrics.hpp"
#include "xmadapt/rng.hpp"

using namespace xmadapt;

namespace {

BinaryMask make_mask(int64_t h, int64_t w, const std::vector<uint8_t>& at) {
  BinaryMask m;
  m.h = h;
  m.w = w;
  m.at = at;
  REQUIRE(static_cast<int64_t>(at.size()) == h * w);
  return m;
}

BinaryMask empty_mask(int64_t h, int64_t w) {
  return make_mask(h, w, std::vector<uint8_t>(static_cast<size_t>(h * w), 0));
}

// Axis-aligned filled rectangle [y0,y1) x [x0,x1) on an h x w raster.
BinaryMask rect_mask(int64_t h, int64_t w, int64_t y0, int64_t x0, int64_t y1, int64_t x1) {
  BinaryMask m = empty_mask(h, w);
  for (int64_t y = y0; y < y1; ++y)
    for (int64_t x = x0; x < x1; ++x) m.at[static_cast<size_t>(y * w + x)] = 1;
  return m;
}

BinaryMask random_mask(int64_t h, int64_t w, SplitMix64& rng, double p) {
  BinaryMask m = empty_mask(h, w);
  for (uint8_t& v : m.at) v = rng.uniform() < p ? 1 : 0;
  return m;
}

}  // namespace

TEST_CASE("mask_from_tensor: exact binary rasters only") {
  Tensor t = Tensor::from_data({2, 3}, {0, 1, 0, 1, 1, 0});
  BinaryMask m = mask_from_tensor(t);
  CHECK(m.h == 2);
  CHECK(m.w == 3);
  CHECK(m.area() == 3);
  CHECK(m(0, 1) == 1);
  CHECK(m(1, 2) == 0);

  CHECK_THROWS_AS(mask_from_tensor(Tensor::from_data({1, 2}, {0.0f, 0.5f})), DataError);
  CHECK_THROWS_AS(mask_from_tensor(Tensor::from_data({1, 2}, {0.0f, 2.0f})), DataError);
  CHECK_THROWS_AS(mask_from_tensor(Tensor::zeros({2, 2, 2})), DimensionError);
}

TEST_CASE("argmax_mask: channel argmax with ties predicting background") {
  // Batch of 2; second element has the interesting pattern.
  Tensor logits = Tensor::zeros({2, 2, 1, 3});
  std::vector<float> d(logits.data().begin(), logits.data().end());
  // element 1: pixel 0 fg wins, pixel 1 tie, pixel 2 bg wins
  d[6] = 0.0f;
  d[9] = 1.0f;  // l1 > l0
  d[7] = 0.5f;
  d[10] = 0.5f;  // tie -> background
  d[8] = 2.0f;
  d[11] = -1.0f;  // l0 > l1
  logits = Tensor::from_data({2, 2, 1, 3}, std::move(d));

  BinaryMask m1 = argmax_mask(logits, 1);
  CHECK(m1(0, 0) == 1);
  CHECK(m1(0, 1) == 0);
  CHECK(m1(0, 2) == 0);
  BinaryMask m0 = argmax_mask(logits, 0);  // all ties -> all background
  CHECK(m0.area() == 0);

  CHECK_THROWS_AS(argmax_mask(logits, 2), ContractError);
  CHECK_THROWS_AS(argmax_mask(logits, -1), ContractError);
  CHECK_THROWS_AS(argmax_mask(Tensor::zeros({1, 3, 2, 2}), 0), DimensionError);
}

TEST_CASE("dice_score: identical, disjoint, shifted squares, symmetry") {
  BinaryMask sq = rect_mask(8, 8, 2, 2, 5, 5);  // 3x3 square
  CHECK(dice_score(sq, sq) == doctest::Approx(100.0));

  BinaryMask other = rect_mask(8, 8, 0, 0, 2, 2);
  CHECK(dice_score(sq, other) == doctest::Approx(0.0));

  // One-column shift: overlap 3x2 = 6, areas 9 each -> 100 * 12/18.
  BinaryMask shifted = rect_mask(8, 8, 2, 3, 5, 6);
  CHECK(dice_score(sq, shifted) == doctest::Approx(100.0 * 12.0 / 18.0));
  CHECK(dice_score(shifted, sq) == doctest::Approx(dice_score(sq, shifted)));

  CHECK(dice_score(empty_mask(4, 4), empty_mask(4, 4)) == doctest::Approx(100.0));
  CHECK(dice_score(sq, empty_mask(8, 8)) == doctest::Approx(0.0));
}

TEST_CASE("boundary_pixels: interior exclusion and border adjacency") {
  // 3x3 block centred in 5x5: ring of 8 boundary pixels, centre excluded.
  BinaryMask block = rect_mask(5, 5, 1, 1, 4, 4);
  auto b = boundary_pixels(block);
  CHECK(b.size() == 8);
  CHECK(std::find(b.begin(), b.end(), std::make_pair<int64_t, int64_t>(2, 2)) == b.end());
  CHECK(b.front() == std::make_pair<int64_t, int64_t>(1, 1));  // row-major order

  // Mask filling the whole raster: only the border frame is boundary.
  BinaryMask full = rect_mask(4, 4, 0, 0, 4, 4);
  CHECK(boundary_pixels(full).size() == 12);

  // Single pixel is its own boundary.
  BinaryMask dot = rect_mask(3, 3, 1, 1, 2, 2);
  CHECK(boundary_pixels(dot).size() == 1);
  CHECK(boundary_pixels(empty_mask(3, 3)).empty());

  // Re-derived oracle on random rasters.
  SplitMix64 rng(301);
  for (int rep = 0; rep < 20; ++rep) {
    BinaryMask m = random_mask(9, 7, rng, 0.45);
    CHECK(boundary_pixels(m) == oracle::boundary(m));
  }
}

TEST_CASE("percentile_sorted: rank = q*(n-1) with linear interpolation") {
  std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  CHECK(percentile_sorted(v, 0.0) == doctest::Approx(1.0));
  CHECK(percentile_sorted(v, 1.0) == doctest::Approx(4.0));
  CHECK(percentile_sorted(v, 0.5) == doctest::Approx(2.5));
  CHECK(percentile_sorted(v, 0.95) == doctest::Approx(1.0 + 0.95 * 3.0));
  CHECK(percentile_sorted({7.5}, 0.95) == doctest::Approx(7.5));
  CHECK_THROWS_AS(percentile_sorted({}, 0.5), ContractError);

  SplitMix64 rng(302);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<double> vals(1 + rng.below(17));
    for (double& x : vals) x = rng.uniform(-5.0, 5.0);
    std::sort(vals.begin(), vals.end());
    double q = rng.uniform();
    CHECK(percentile_sorted(vals, q) == doctest::Approx(oracle::percentile(vals, q)).epsilon(1e-12));
  }
}

TEST_CASE("hd95: hand geometry") {
  BinaryMask sq = rect_mask(8, 8, 2, 2, 5, 5);
  auto same = hd95(sq, sq);
  REQUIRE(same.has_value());
  CHECK(*same == doctest::Approx(0.0));

  // Single pixels at (0,0) and (3,4): both directed sets are {5}, so any
  // percentile is the 3-4-5 hypotenuse.
  BinaryMask a = rect_mask(6, 6, 0, 0, 1, 1);
  BinaryMask b = rect_mask(6, 6, 3, 4, 4, 5);
  auto d = hd95(a, b);
  REQUIRE(d.has_value());
  CHECK(*d == doctest::Approx(5.0).epsilon(1e-12));

  CHECK_FALSE(hd95(sq, empty_mask(8, 8)).has_value());
  CHECK_FALSE(hd95(empty_mask(8, 8), sq).has_value());
  CHECK_FALSE(hd95(empty_mask(8, 8), empty_mask(8, 8)).has_value());
}

TEST_CASE("hd95: equals the all-pairs oracle on random rasters") {
  SplitMix64 rng(303);
  int checked = 0;
  for (int rep = 0; rep < 80 && checked < 60; ++rep) {
    BinaryMask p = random_mask(16, 16, rng, rng.uniform(0.05, 0.5));
    BinaryMask g = random_mask(16, 16, rng, rng.uniform(0.05, 0.5));
    if (p.empty() || g.empty()) continue;
    ++checked;
    auto fast = hd95(p, g);
    auto slow = oracle::hd95_allpairs(p, g);
    REQUIRE(fast.has_value());
    REQUIRE(slow.has_value());
    CAPTURE(rep);
    CHECK(*fast == doctest::Approx(*slow).epsilon(1e-9));
    // The 95th percentile can never exceed the exact Hausdorff distance.
    CHECK(*fast <= *oracle::hausdorff_exact(p, g) + 1e-12);
  }
  CHECK(checked == 60);
}

TEST_CASE("hd95: exhaustive over tiny masks in a sliding window") {
  // Every non-empty mask in a 2x2 window, placed at two anchor offsets on a
  // 6x6 raster, against every other such mask: 15*2 placements squared.
  std::vector<BinaryMask> masks;
  const int64_t offs[2][2] = {{0, 0}, {3, 2}};
  for (int bits = 1; bits < 16; ++bits)
    for (auto& off : offs) {
      BinaryMask m = empty_mask(6, 6);
      for (int i = 0; i < 4; ++i)
        if (bits & (1 << i)) m.at[static_cast<size_t>((off[0] + i / 2) * 6 + off[1] + i % 2)] = 1;
      masks.push_back(std::move(m));
    }
  for (size_t i = 0; i < masks.size(); ++i)
    for (size_t j = 0; j < masks.size(); ++j) {
      auto fast = hd95(masks[i], masks[j]);
      auto slow = oracle::hd95_allpairs(masks[i], masks[j]);
      REQUIRE(fast.has_value());
      REQUIRE(slow.has_value());
      CAPTURE(i);
      CAPTURE(j);
      CHECK(*fast == doctest::Approx(*slow).epsilon(1e-9));
    }
}

TEST_CASE("aggregate_records: means, undefined counting, empty input") {
  std::vector<EvalRecord> recs;
  recs.push_back({"a", 80.0, 2.0});
  recs.push_back({"b", 90.0, std::nullopt});
  recs.push_back({"c", 70.0, 4.0});
  EvalAggregate agg = aggregate_records(recs);
  CHECK(agg.count == 3);
  CHECK(agg.mean_dice == doctest::Approx(80.0));
  REQUIRE(agg.mean_hd95.has_value());
  CHECK(*agg.mean_hd95 == doctest::Approx(3.0));  // over defined samples only
  CHECK(agg.hd95_undefined == 1);

  EvalAggregate none = aggregate_records({});
  CHECK(none.count == 0);
  CHECK(none.mean_dice == doctest::Approx(0.0));
  CHECK_FALSE(none.mean_hd95.has_value());

  std::vector<EvalRecord> all_undef;
  all_undef.push_back({"a", 50.0, std::nullopt});
  EvalAggregate u = aggregate_records(all_undef);
  CHECK_FALSE(u.mean_hd95.has_value());
  CHECK(u.hd95_undefined == 1);
}
