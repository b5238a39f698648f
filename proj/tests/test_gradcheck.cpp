#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "xmadapt/error.hpp"
#include "xmadapt/gradcheck.hpp"
#include "xmadapt/tensor.hpp"

using namespace xmadapt;

TEST_CASE("rel_error: denominator convention max(|a|,|n|,1e-6)") {
  CHECK(rel_error(2.0, 1.0) == doctest::Approx(0.5));
  CHECK(rel_error(0.0, 0.0) == 0.0);
  CHECK(rel_error(0.0, 1e-9) == doctest::Approx(1e-3));  // floored denominator
  CHECK(rel_error(-3.0, -3.0) == 0.0);
}

TEST_CASE("fd_gradient: exact for quadratics, restores the probed value") {
  float x = 1.5f;
  auto eval = [&]() { return static_cast<double>(x) * static_cast<double>(x); };
  double g = fd_gradient(eval, x, 1e-3);
  CHECK(g == doctest::Approx(3.0).epsilon(1e-4));  // d/dx x^2 at 1.5
  CHECK(x == 1.5f);
}

TEST_CASE("gradcheck: linear function has no truncation error") {
  // d/dx sum(x*w) = w, and central differences are exact for linear maps, so
  // the only residual is float32 cancellation noise in the forward pass,
  // roughly eps * |f| / (2*step) ~ 1e-4 relative.
  SplitMix64 rng(7);
  Tensor w = Tensor::randn({3, 4}, rng);
  GradFn fn = [w](const std::vector<Tensor>& in) { return sum(mul(in[0], w)); };
  float err = gradcheck(fn, {Tensor::randn({3, 4}, rng)}, 1e-2f);
  CHECK(err < 1e-3f);
}

TEST_CASE("gradcheck: softmax-CE composition on a random 4-vector") {
  SplitMix64 rng(8);
  // -log softmax(x)[0] via the pixel CE op on a 1-pixel "image".
  GradFn fn = [](const std::vector<Tensor>& in) {
    Tensor logits = reshape(in[0], {1, 4, 1, 1});
    return pixel_ce_mean(logits, Tensor::zeros({1, 1, 1}));
  };
  float err = gradcheck(fn, {Tensor::randn({4}, rng)}, 1e-2f);
  CHECK(err < 1e-3f);
}

TEST_CASE("gradcheck: step contract and non-finite detection") {
  GradFn fn = [](const std::vector<Tensor>& in) { return sum(in[0]); };
  CHECK_THROWS_AS(gradcheck(fn, {Tensor::zeros({2})}, 0.0f), ContractError);

  GradFn non_scalar = [](const std::vector<Tensor>& in) { return add(in[0], in[0]); };
  CHECK_THROWS_AS(gradcheck(non_scalar, {Tensor::zeros({2})}, 1e-2f), ContractError);

  GradFn nan_fn = [](const std::vector<Tensor>& in) {
    return div(sum(in[0]), Tensor::zeros({1}));  // 0/0
  };
  CHECK_THROWS_AS(gradcheck(nan_fn, {Tensor::zeros({2})}, 1e-2f), NumericError);
}

TEST_CASE("op gradcheck suite: every differentiable op passes its tolerance") {
  std::vector<GradcheckCase> cases = op_gradcheck_suite(12);
  CHECK(cases.size() >= 20);  // one sweep per op family
  for (const GradcheckCase& c : cases) {
    CAPTURE(c.name);
    CAPTURE(c.worst_rel);
    CHECK(c.pass());
  }
}
