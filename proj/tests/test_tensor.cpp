#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "xmadapt/error.hpp"
#include "xmadapt/tensor.hpp"

using namespace xmadapt;

namespace {

Tensor rand_tensor(Shape shape, uint64_t seed, uint64_t stream = 0) {
  SplitMix64 rng(seed, stream);
  return Tensor::randn(std::move(shape), rng);
}

// Max absolute difference between a float tensor and a double oracle buffer.
double max_abs_diff(const Tensor& t, const std::vector<double>& ref) {
  REQUIRE(t.data().size() == ref.size());
  double worst = 0.0;
  for (size_t i = 0; i < ref.size(); ++i)
    worst = std::max(worst, std::fabs(static_cast<double>(t.data()[i]) - ref[i]));
  return worst;
}

}  // namespace

// ---- construction and handle contracts -------------------------------------

TEST_CASE("tensor: shape bookkeeping and invalid shapes") {
  Tensor t = Tensor::zeros({2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK(t.ndim() == 3);
  CHECK(t.dim(0) == 2);
  CHECK(t.dim(-1) == 4);

  CHECK_THROWS_AS(Tensor::zeros({}), DimensionError);
  CHECK_THROWS_AS(Tensor::zeros({2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1.0f, 2.0f, 3.0f}), DimensionError);
  CHECK_THROWS_AS(Tensor().numel(), ContractError);
}

TEST_CASE("tensor: item and mutable_data contracts") {
  Tensor s = Tensor::full({1}, 7.5f);
  CHECK(s.item() == 7.5f);
  CHECK_THROWS_AS(Tensor::zeros({2}).item(), ContractError);

  Tensor leaf = Tensor::zeros({2}, true);
  leaf.mutable_data()[0] = 3.0f;  // leaves admit in-place initialisation
  Tensor derived = add(leaf, leaf);
  CHECK_THROWS_AS(derived.mutable_data(), ContractError);
  CHECK_THROWS_AS(derived.set_requires_grad(false), ContractError);
}

TEST_CASE("tensor: randn is deterministic per (seed, stream)") {
  Tensor a = rand_tensor({4, 5}, 99, 3);
  Tensor b = rand_tensor({4, 5}, 99, 3);
  Tensor c = rand_tensor({4, 5}, 99, 4);
  CHECK(a.data() == b.data());
  CHECK(a.data() != c.data());
}

// ---- matmul -----------------------------------------------------------------

TEST_CASE("matmul: identity, hand product, and triple-loop oracle") {
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  CHECK(matmul(a, eye).data() == a.data());

  Tensor b = Tensor::from_data({2, 1}, {5, 6});
  Tensor c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 1});
  CHECK(c.data()[0] == 17.0f);
  CHECK(c.data()[1] == 39.0f);

  Tensor x = rand_tensor({3, 4}, 11, 0);
  Tensor y = rand_tensor({4, 2}, 11, 1);
  std::vector<double> ref = oracle::matmul(x.data(), y.data(), 1, 3, 4, 2, false);
  CHECK(max_abs_diff(matmul(x, y), ref) <= 1e-6);
}

TEST_CASE("matmul: batched and broadcast right operand match the oracle") {
  Tensor a = rand_tensor({2, 3, 5, 4}, 12, 0);  // batch dims collapse to 6
  Tensor b_full = rand_tensor({2, 3, 4, 2}, 12, 1);
  Tensor b_bcast = rand_tensor({4, 2}, 12, 2);

  std::vector<double> ref_full = oracle::matmul(a.data(), b_full.data(), 6, 5, 4, 2, false);
  CHECK(max_abs_diff(matmul(a, b_full), ref_full) <= 1e-6);

  std::vector<double> ref_bcast = oracle::matmul(a.data(), b_bcast.data(), 6, 5, 4, 2, true);
  CHECK(max_abs_diff(matmul(a, b_bcast), ref_bcast) <= 1e-6);
}

TEST_CASE("matmul: shape errors name both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4,2]") != std::string::npos);
  }
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 2, 3, 4}), Tensor::zeros({3, 4, 2})),
                  DimensionError);
}

// ---- conv1x1 ----------------------------------------------------------------

TEST_CASE("conv1x1: identity weights, hand pixel, per-pixel oracle") {
  Tensor x = rand_tensor({2, 3, 4, 4}, 21);
  Tensor eye = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor zb = Tensor::zeros({3});
  CHECK(conv1x1(x, eye, zb).data() == x.data());

  // One pixel (0.5, -1.0) through rows [[1,0],[0,1],[1,1]].
  Tensor px = Tensor::from_data({1, 2, 1, 1}, {0.5f, -1.0f});
  Tensor w = Tensor::from_data({3, 2}, {1, 0, 0, 1, 1, 1});
  Tensor y = conv1x1(px, w, Tensor::zeros({3}));
  CHECK(y.data() == std::vector<float>{0.5f, -1.0f, -0.5f});

  Tensor xr = rand_tensor({2, 5, 3, 3}, 22, 0);
  Tensor wr = rand_tensor({4, 5}, 22, 1);
  Tensor br = rand_tensor({4}, 22, 2);
  std::vector<float> ref = oracle::conv1x1(xr.data(), wr.data(), br.data(), 2, 5, 4, 9);
  CHECK(conv1x1(xr, wr, br).data() == ref);  // bitwise: same accumulation order

  CHECK_THROWS_AS(conv1x1(Tensor::zeros({1, 2, 2, 2}), Tensor::zeros({3, 4}), Tensor::zeros({3})),
                  DimensionError);
}

// ---- layernorm ---------------------------------------------------------------

TEST_CASE("layernorm: constant rows, already-normalized rows, two-pass oracle") {
  Tensor ones_g = Tensor::full({4}, 1.0f);
  Tensor zero_b = Tensor::zeros({4});

  Tensor flat = Tensor::full({2, 4}, 3.25f);
  Tensor flat_out = layernorm(flat, ones_g, zero_b, 1e-5f);
  for (float v : flat_out.data()) CHECK(v == 0.0f);

  Tensor pm = Tensor::from_data({1, 2}, {1.0f, -1.0f});
  Tensor g2 = Tensor::full({2}, 1.0f), b2 = Tensor::zeros({2});
  Tensor out = layernorm(pm, g2, b2, 1e-12f);
  CHECK(out.data()[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(out.data()[1] == doctest::Approx(-1.0).epsilon(1e-6));

  Tensor x = rand_tensor({3, 8}, 31, 0);
  Tensor g = rand_tensor({8}, 31, 1);
  Tensor b = rand_tensor({8}, 31, 2);
  std::vector<double> ref = oracle::layernorm(x.data(), g.data(), b.data(), 3, 8, 1e-5);
  CHECK(max_abs_diff(layernorm(x, g, b, 1e-5f), ref) <= 1e-5);

  CHECK_THROWS_AS(layernorm(x, g, b, 0.0f), ContractError);
  CHECK_THROWS_AS(layernorm(x, Tensor::zeros({4}), b, 1e-5f), DimensionError);
}

// ---- softmax ------------------------------------------------------------------

TEST_CASE("softmax: symmetry, shift invariance, hand values, row sums") {
  Tensor z = Tensor::from_data({1, 2}, {0.0f, 0.0f});
  CHECK(softmax(z, -1).data()[0] == doctest::Approx(0.5));
  CHECK(softmax(z, -1).data()[1] == doctest::Approx(0.5));

  Tensor h = Tensor::from_data({1, 2}, {std::log(2.0f), 0.0f});
  Tensor sh = softmax(h, -1);
  CHECK(sh.data()[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-6));
  CHECK(sh.data()[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-6));

  Tensor x = rand_tensor({4, 6}, 41);
  Tensor s1 = softmax(x, -1);
  Tensor s2 = softmax(affine(x, 1.0f, 2.5f), -1);  // shift by a constant
  for (size_t i = 0; i < s1.data().size(); ++i)
    CHECK(s1.data()[i] == doctest::Approx(s2.data()[i]).epsilon(1e-6));

  for (int64_t r = 0; r < 4; ++r) {
    double sum = 0.0;
    for (int64_t j = 0; j < 6; ++j) {
      float v = s1.data()[static_cast<size_t>(r * 6 + j)];
      CHECK(v >= 0.0f);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("softmax: interior axis agrees with permute-to-last") {
  Tensor x = rand_tensor({2, 3, 4}, 42);
  Tensor direct = softmax(x, 1);
  Tensor via_perm = permute(softmax(permute(x, {0, 2, 1}), -1), {0, 2, 1});
  for (size_t i = 0; i < direct.data().size(); ++i)
    CHECK(direct.data()[i] == doctest::Approx(via_perm.data()[i]).epsilon(1e-6));
}

// ---- elementwise suite ----------------------------------------------------------

TEST_CASE("elementwise: identities and hand values") {
  Tensor x = rand_tensor({3, 4}, 51);
  CHECK(add(x, Tensor::zeros({3, 4})).data() == x.data());

  Tensor a = Tensor::from_data({2}, {3.0f, -2.0f});
  Tensor b = Tensor::from_data({2}, {0.5f, 4.0f});
  CHECK(sub(a, b).data() == std::vector<float>{2.5f, -6.0f});
  CHECK(mul(a, b).data() == std::vector<float>{1.5f, -8.0f});
  CHECK(div(a, b).data() == std::vector<float>{6.0f, -0.5f});
  CHECK(affine(a, 2.0f, 1.0f).data() == std::vector<float>{7.0f, -3.0f});

  CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), DimensionError);
  CHECK_THROWS_AS(mul(Tensor::zeros({2, 3}), Tensor::zeros({3})), DimensionError);
}

TEST_CASE("add: suffix broadcast matches explicit tiling") {
  Tensor x = rand_tensor({2, 3, 4}, 52, 0);
  Tensor y = rand_tensor({3, 4}, 52, 1);
  Tensor out = add(x, y);
  for (int64_t b = 0; b < 2; ++b)
    for (int64_t i = 0; i < 12; ++i)
      CHECK(out.data()[static_cast<size_t>(b * 12 + i)] ==
            x.data()[static_cast<size_t>(b * 12 + i)] + y.data()[static_cast<size_t>(i)]);
}

TEST_CASE("gelu and sigmoid match high-precision formulas") {
  Tensor x = rand_tensor({64}, 53);
  Tensor g = gelu(x);
  Tensor s = sigmoid(x);
  for (size_t i = 0; i < 64; ++i) {
    double xv = x.data()[i];
    CHECK(static_cast<double>(g.data()[i]) ==
          doctest::Approx(oracle::gelu(xv)).epsilon(1e-5));
    CHECK(static_cast<double>(s.data()[i]) ==
          doctest::Approx(1.0 / (1.0 + std::exp(-xv))).epsilon(1e-5));
  }
}

// ---- shape ops ---------------------------------------------------------------

TEST_CASE("concat/slice: shapes, round trip, backward partition") {
  Tensor a = rand_tensor({2, 3, 4, 4}, 61, 0);
  Tensor b = rand_tensor({2, 3, 4, 4}, 61, 1);
  Tensor cat = concat({a, b}, 1);
  CHECK(cat.shape() == Shape{2, 6, 4, 4});

  // concat-then-split is the identity, bitwise.
  CHECK(slice(cat, 1, 0, 3).data() == a.data());
  CHECK(slice(cat, 1, 3, 3).data() == b.data());

  // backward of concat partitions the upstream all-ones gradient.
  Tensor la = Tensor::zeros({2, 2}, true);
  Tensor lb = Tensor::zeros({2, 2}, true);
  backward(sum(concat({la, lb}, 0)));
  CHECK(la.grad() == std::vector<float>(4, 1.0f));
  CHECK(lb.grad() == std::vector<float>(4, 1.0f));

  CHECK_THROWS_AS(concat({a, Tensor::zeros({2, 3, 4, 5})}, 1), DimensionError);
  CHECK_THROWS_AS(slice(a, 1, 2, 5), DimensionError);
}

TEST_CASE("reshape and permute semantics") {
  Tensor x = rand_tensor({2, 3, 4}, 62);
  CHECK(reshape(x, {6, 4}).data() == x.data());     // row-major relabel
  CHECK(reshape(x, {-1, 12}).shape() == Shape{2, 12});
  CHECK_THROWS_AS(reshape(x, {5, 5}), DimensionError);
  CHECK_THROWS_AS(reshape(x, {-1, -1}), DimensionError);

  Tensor p = permute(x, {2, 0, 1});
  CHECK(p.shape() == Shape{4, 2, 3});
  // p[k][i][j] == x[i][j][k]
  for (int64_t i = 0; i < 2; ++i)
    for (int64_t j = 0; j < 3; ++j)
      for (int64_t k = 0; k < 4; ++k)
        CHECK(p.data()[static_cast<size_t>((k * 2 + i) * 3 + j)] ==
              x.data()[static_cast<size_t>((i * 3 + j) * 4 + k)]);
  // inverse permutation restores the original bytes
  CHECK(permute(p, {1, 2, 0}).data() == x.data());
  CHECK_THROWS_AS(permute(x, {0, 0, 1}), DimensionError);
}

TEST_CASE("unfold_patches: hand layout on a 4x4 image") {
  // Image [1,1,4,4] with values 0..15 row-major; p=2 gives 4 patches.
  std::vector<float> img(16);
  for (size_t i = 0; i < 16; ++i) img[i] = static_cast<float>(i);
  Tensor t = Tensor::from_data({1, 1, 4, 4}, img);
  Tensor u = unfold_patches(t, 2);
  CHECK(u.shape() == Shape{1, 4, 4});
  // Patch (0,0) = rows 0-1, cols 0-1 in py,px order.
  CHECK(std::vector<float>(u.data().begin(), u.data().begin() + 4) ==
        std::vector<float>{0, 1, 4, 5});
  // Patch (1,0) = rows 2-3, cols 0-1 (grid is row-major).
  CHECK(std::vector<float>(u.data().begin() + 8, u.data().begin() + 12) ==
        std::vector<float>{8, 9, 12, 13});

  // Channel-major patch columns: channel 1 values follow channel 0 values.
  Tensor two = Tensor::from_data({1, 2, 2, 2}, {0, 1, 2, 3, 10, 11, 12, 13});
  Tensor u2 = unfold_patches(two, 2);
  CHECK(u2.shape() == Shape{1, 1, 8});
  CHECK(u2.data() == std::vector<float>{0, 1, 2, 3, 10, 11, 12, 13});
}

TEST_CASE("depth_to_space2: hand mapping") {
  // x[0, 4c+2dy+dx, 0, 0] lands at y[0, c, dy, dx].
  Tensor x = Tensor::from_data({1, 8, 1, 1}, {0, 1, 2, 3, 10, 11, 12, 13});
  Tensor y = depth_to_space2(x);
  CHECK(y.shape() == Shape{1, 2, 2, 2});
  CHECK(y.data() == std::vector<float>{0, 1, 2, 3, 10, 11, 12, 13});
  CHECK_THROWS_AS(depth_to_space2(Tensor::zeros({1, 6, 2, 2})), DimensionError);
}

// ---- reductions and backward ----------------------------------------------------

TEST_CASE("backward: linear and quadratic analytic gradients") {
  Tensor x = rand_tensor({3, 4}, 71);
  x.set_requires_grad(true);
  backward(sum(x));
  CHECK(x.grad() == std::vector<float>(12, 1.0f));

  Tensor y = rand_tensor({3, 4}, 72);
  y.set_requires_grad(true);
  backward(sum(mul(y, y)));
  for (size_t i = 0; i < 12; ++i)
    CHECK(y.grad()[i] == doctest::Approx(2.0f * y.data()[i]).epsilon(1e-6));
}

TEST_CASE("backward: gradients accumulate across uses and across calls") {
  Tensor x = rand_tensor({4}, 73);
  x.set_requires_grad(true);
  backward(sum(add(x, x)));  // two paths
  CHECK(x.grad() == std::vector<float>(4, 2.0f));

  backward(sum(x));  // second backward accumulates on top
  CHECK(x.grad() == std::vector<float>(4, 3.0f));

  x.zero_grad();
  backward(sum(x));
  CHECK(x.grad() == std::vector<float>(4, 1.0f));
}

TEST_CASE("backward: contracts and the requires_grad fence") {
  Tensor x = rand_tensor({2, 2}, 74);
  x.set_requires_grad(true);
  CHECK_THROWS_AS(backward(add(x, x)), ContractError);  // non-scalar root

  Tensor frozen = rand_tensor({2, 2}, 75);  // requires_grad stays false
  Tensor live = rand_tensor({2, 2}, 76);
  live.set_requires_grad(true);
  backward(sum(mul(frozen, live)));
  CHECK(!frozen.has_grad());
  CHECK(live.has_grad());
}

TEST_CASE("NoGradGuard: no graph, no gradients") {
  Tensor x = rand_tensor({3}, 77);
  x.set_requires_grad(true);
  Tensor loss;
  {
    NoGradGuard ng;
    loss = sum(mul(x, x));
  }
  CHECK_THROWS_AS(backward(loss), ContractError);  // nothing was recorded
  CHECK(!x.has_grad());
}

TEST_CASE("reductions: sum, mean, sum_last values") {
  Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(sum(x).item() == 21.0f);
  CHECK(mean(x).item() == doctest::Approx(3.5));
  Tensor sl = sum_last(x);
  CHECK(sl.shape() == Shape{2});
  CHECK(sl.data() == std::vector<float>{6.0f, 15.0f});

  Tensor m = Tensor::from_data({2}, {1.0f, 3.0f});
  m.set_requires_grad(true);
  backward(mean(m));
  CHECK(m.grad() == std::vector<float>{0.5f, 0.5f});
}

// ---- pixel cross entropy ---------------------------------------------------------

TEST_CASE("pixel_ce_mean: uniform logits, hand value, per-pixel oracle") {
  // Equal logits at every pixel: mean NLL is exactly ln 2.
  Tensor logits = Tensor::full({2, 2, 3, 3}, 0.7f);
  Tensor target = Tensor::zeros({2, 3, 3});
  CHECK(pixel_ce_mean(logits, target).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-6));

  // Single background pixel with logits (2, 0): loss = ln(1 + e^-2).
  Tensor one = Tensor::from_data({1, 2, 1, 1}, {2.0f, 0.0f});
  Tensor t0 = Tensor::zeros({1, 1, 1});
  CHECK(pixel_ce_mean(one, t0).item() ==
        doctest::Approx(std::log(1.0 + std::exp(-2.0))).epsilon(1e-6));

  // Random logits against a naive per-pixel double oracle.
  Tensor lr = rand_tensor({2, 2, 4, 4}, 81, 0);
  SplitMix64 rng(81, 1);
  std::vector<float> tgt(32);
  for (float& v : tgt) v = rng.uniform() < 0.5 ? 0.0f : 1.0f;
  Tensor tr = Tensor::from_data({2, 4, 4}, tgt);
  double ref = 0.0;
  for (int64_t b = 0; b < 2; ++b)
    for (int64_t p = 0; p < 16; ++p) {
      double l0 = lr.data()[static_cast<size_t>(b * 32 + p)];
      double l1 = lr.data()[static_cast<size_t>(b * 32 + 16 + p)];
      double mx = std::max(l0, l1);
      double lse = mx + std::log(std::exp(l0 - mx) + std::exp(l1 - mx));
      double lt = tgt[static_cast<size_t>(b * 16 + p)] == 0.0f ? l0 : l1;
      ref += lse - lt;
    }
  ref /= 32.0;
  CHECK(static_cast<double>(pixel_ce_mean(lr, tr).item()) ==
        doctest::Approx(ref).epsilon(1e-6));

  // Extreme logits stay finite (log-sum-exp stabilisation).
  Tensor big = Tensor::from_data({1, 2, 1, 1}, {10000.0f, 0.0f});
  CHECK(pixel_ce_mean(big, t0).item() == 0.0f);
}
