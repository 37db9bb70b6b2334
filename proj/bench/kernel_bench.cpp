// Parallel kernels against the serial reference loops, at the shapes one
// attention head and one forward pass of the default model produce.

#include <benchmark/benchmark.h>

#include "colorctrl/kernels.hpp"
#include "colorctrl/model.hpp"
#include "colorctrl/rng.hpp"
#include "colorctrl/sampler.hpp"

using namespace colorctrl;

namespace {

Tensor2 random_tensor(std::size_t r, std::size_t c, std::uint64_t seed) {
    Rng rng(seed);
    return Tensor2(r, c, seeded_normal(rng, r * c, 0.0f, 1.0f));
}

// args: rows, inner, cols
template <Tensor2 (*F)(const Tensor2&, const Tensor2&)>
void bm_matmul(benchmark::State& st) {
    const auto n = static_cast<std::size_t>(st.range(0));
    const auto k = static_cast<std::size_t>(st.range(1));
    const auto m = static_cast<std::size_t>(st.range(2));
    const Tensor2 a = random_tensor(n, k, 1);
    const Tensor2 b = random_tensor(k, m, 2);
    for (auto _ : st) benchmark::DoNotOptimize(F(a, b));
    st.SetItemsProcessed(st.iterations() * static_cast<int64_t>(n * k * m));
}

template <Tensor2 (*F)(const Tensor2&, const Tensor2&)>
void bm_matmul_bt(benchmark::State& st) {
    const auto n = static_cast<std::size_t>(st.range(0));
    const auto k = static_cast<std::size_t>(st.range(1));
    const Tensor2 a = random_tensor(n, k, 3);
    const Tensor2 b = random_tensor(n, k, 4);
    for (auto _ : st) benchmark::DoNotOptimize(F(a, b));
    st.SetItemsProcessed(st.iterations() * static_cast<int64_t>(n * n * k));
}

template <Tensor2 (*F)(const Tensor2&, float)>
void bm_softmax(benchmark::State& st) {
    const auto n = static_cast<std::size_t>(st.range(0));
    const Tensor2 s = random_tensor(n, n, 5);
    for (auto _ : st) benchmark::DoNotOptimize(F(s, 0.25f));
    st.SetItemsProcessed(st.iterations() * static_cast<int64_t>(n * n));
}

// Overload sets need a pinned signature to become template arguments.
Tensor2 softmax_default(const Tensor2& s, float scale) { return kernels::softmax_rows(s, scale); }
Tensor2 softmax_ref(const Tensor2& s, float scale) { return reference::softmax_rows(s, scale); }

void bm_forward(benchmark::State& st) {
    const ModelConfig cfg;
    const Model model(cfg);
    const Tensor3 x = initial_noise(cfg, 42);
    const TokenSequence text = tokenize("a white fox in the snow", cfg);
    for (auto _ : st) benchmark::DoNotOptimize(model.forward(x, 0.5f, text, nullptr, 0, Pass::cond));
}

}  // namespace

// 272 tokens x 16 head dims: one head of the default model.
BENCHMARK(bm_matmul<kernels::matmul>)->Args({272, 272, 16})->Args({272, 64, 192})->Args({256, 256, 256});
BENCHMARK(bm_matmul<reference::matmul>)->Args({272, 272, 16})->Args({272, 64, 192})->Args({256, 256, 256});
BENCHMARK(bm_matmul_bt<kernels::matmul_bt>)->Args({272, 16});
BENCHMARK(bm_matmul_bt<reference::matmul_bt>)->Args({272, 16});
BENCHMARK(bm_softmax<softmax_default>)->Arg(272)->Arg(1024);
BENCHMARK(bm_softmax<softmax_ref>)->Arg(272)->Arg(1024);
BENCHMARK(bm_forward)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
