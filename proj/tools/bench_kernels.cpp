// Micro-benchmark of the OpenMP kernels against the serial reference at
// attention-sized workloads: wall time per call, throughput where a FLOP
// count is meaningful, and a bitwise-equality check of the outputs.
//
// Usage: bench_kernels [--repeat N]
#include <chrono>
#include <cstdint>
#include <cstring>
#include <functional>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "xmadapt/kernels.hpp"
#include "xmadapt/rng.hpp"

namespace k = xmadapt::kernels;

namespace {

std::vector<float> random_buf(size_t n, xmadapt::SplitMix64& rng) {
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.normal());
  return v;
}

double time_call(const std::function<void()>& fn, int repeat) {
  fn();  // warm up (and first-touch the output buffer)
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < repeat; ++i) fn();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / repeat;
}

struct Case {
  std::string name;
  double flops;  // per call; 0 = bandwidth-bound, skip GFLOP/s
  std::function<void(float*)> run_ref;
  std::function<void(float*)> run_omp;
  size_t out_size;
};

void report(const Case& c, int repeat, const std::vector<int>& thread_counts) {
  std::vector<float> out_ref(c.out_size), out_omp(c.out_size);
  double ref_ms = time_call([&] { c.run_ref(out_ref.data()); }, repeat);

  std::cout << std::left << std::setw(22) << c.name << std::right << "  ref "
            << std::fixed << std::setprecision(3) << std::setw(8) << ref_ms << " ms";
  if (c.flops > 0)
    std::cout << " (" << std::setprecision(2) << c.flops / ref_ms / 1e6 << " GFLOP/s)";
  std::cout << "\n";

  for (int nt : thread_counts) {
    k::set_thread_count(nt);
    double ms = time_call([&] { c.run_omp(out_omp.data()); }, repeat);
    bool equal = std::memcmp(out_ref.data(), out_omp.data(), c.out_size * sizeof(float)) == 0;
    std::cout << std::setw(22) << "" << "  omp " << std::setw(8) << std::setprecision(3) << ms
              << " ms";
    if (c.flops > 0)
      std::cout << " (" << std::setprecision(2) << c.flops / ms / 1e6 << " GFLOP/s)";
    std::cout << "  threads " << nt << "  speedup " << std::setprecision(2) << ref_ms / ms
              << "x  bitwise " << (equal ? "EQUAL" : "DIFFER") << "\n";
    if (!equal) std::exit(1);
  }
}

}  // namespace

int main(int argc, char** argv) {
  int repeat = 20;
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg == "--repeat" && i + 1 < argc) {
      repeat = std::atoi(argv[++i]);
    } else {
      std::cerr << "usage: bench_kernels [--repeat N]\n";
      return 2;
    }
  }

  xmadapt::SplitMix64 rng(7, 0);
  const std::vector<int> threads = {1, 2, 4};
  std::vector<Case> cases;

  // Attention-shaped batched matmul: [B*h, T, dh] x [B*h, dh, T].
  {
    int64_t g = 32, m = 64, kk = 64, n = 64;
    auto a = random_buf(static_cast<size_t>(g * m * kk), rng);
    auto b = random_buf(static_cast<size_t>(g * kk * n), rng);
    cases.push_back({"matmul_nn 32x64x64x64", 2.0 * g * m * kk * n,
                     [=](float* out) {
                       k::ref::matmul_nn(a.data(), b.data(), out, g, m, kk, n, m * kk, kk * n);
                     },
                     [=](float* out) {
                       k::matmul_nn(a.data(), b.data(), out, g, m, kk, n, m * kk, kk * n);
                     },
                     static_cast<size_t>(g * m * n)});
  }
  // Weight-broadcast matmul: token MLP, [B, T, c] x [c, 4c] shared weights.
  {
    int64_t g = 8, m = 64, kk = 64, n = 256;
    auto a = random_buf(static_cast<size_t>(g * m * kk), rng);
    auto b = random_buf(static_cast<size_t>(kk * n), rng);
    cases.push_back({"matmul_nn bcast w", 2.0 * g * m * kk * n,
                     [=](float* out) {
                       k::ref::matmul_nn(a.data(), b.data(), out, g, m, kk, n, m * kk, 0);
                     },
                     [=](float* out) {
                       k::matmul_nn(a.data(), b.data(), out, g, m, kk, n, m * kk, 0);
                     },
                     static_cast<size_t>(g * m * n)});
  }
  // Decoder-shaped 1x1 convolution.
  {
    int64_t b = 8, ci = 64, co = 256, hw = 64 * 64;
    auto x = random_buf(static_cast<size_t>(b * ci * hw), rng);
    auto w = random_buf(static_cast<size_t>(co * ci), rng);
    auto bias = random_buf(static_cast<size_t>(co), rng);
    cases.push_back({"conv1x1 64->256", 2.0 * b * ci * co * hw,
                     [=](float* out) {
                       k::ref::conv1x1_fwd(x.data(), w.data(), bias.data(), out, b, ci, co, hw);
                     },
                     [=](float* out) {
                       k::conv1x1_fwd(x.data(), w.data(), bias.data(), out, b, ci, co, hw);
                     },
                     static_cast<size_t>(b * co * hw)});
  }
  // Token layer norm.
  {
    int64_t rows = 8 * 64 * 16, d = 64;
    auto x = random_buf(static_cast<size_t>(rows * d), rng);
    auto gamma = random_buf(static_cast<size_t>(d), rng);
    auto beta = random_buf(static_cast<size_t>(d), rng);
    size_t extra = static_cast<size_t>(rows);
    cases.push_back({"layernorm 8192x64", 0.0,
                     [=](float* out) {
                       std::vector<float> mean(extra), rstd(extra);
                       k::ref::layernorm_fwd(x.data(), gamma.data(), beta.data(), out,
                                             mean.data(), rstd.data(), rows, d, 1e-5f);
                     },
                     [=](float* out) {
                       std::vector<float> mean(extra), rstd(extra);
                       k::layernorm_fwd(x.data(), gamma.data(), beta.data(), out, mean.data(),
                                        rstd.data(), rows, d, 1e-5f);
                     },
                     static_cast<size_t>(rows * d)});
  }
  // Attention-row softmax.
  {
    int64_t rows = 32 * 64, d = 64;
    auto x = random_buf(static_cast<size_t>(rows * d), rng);
    cases.push_back({"softmax 2048x64", 0.0,
                     [=](float* out) { k::ref::softmax_fwd(x.data(), out, rows, d); },
                     [=](float* out) { k::softmax_fwd(x.data(), out, rows, d); },
                     static_cast<size_t>(rows * d)});
  }
  // Image-sized elementwise gelu.
  {
    int64_t n = 1 << 22;
    auto x = random_buf(static_cast<size_t>(n), rng);
    cases.push_back({"gelu 4M", 0.0,
                     [=](float* out) { k::ref::gelu_fwd(x.data(), out, n); },
                     [=](float* out) { k::gelu_fwd(x.data(), out, n); },
                     static_cast<size_t>(n)});
  }

  std::cout << "repeat " << repeat << ", thread counts 1/2/4; bitwise check vs serial ref\n";
  for (const Case& c : cases) report(c, repeat, threads);
  std::cout << "all outputs bitwise equal\n";
  return 0;
}
