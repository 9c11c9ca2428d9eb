// Reference (serial direct loops) against production (im2col + GEMM, OpenMP)
// convolution kernels on the layer shapes of the default SDF-tiling model.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "framepred/kernels.hpp"

using framepred::kernels::ConvGeometry;

namespace {

struct Buffers {
    std::vector<float> x, w, b, y;

    explicit Buffers(const ConvGeometry& g)
        : x(g.input_size()), w(g.weight_size()), b(g.out_c), y(g.output_size()) {
        std::mt19937 rng(1);
        std::uniform_real_distribution<float> u(-1.0f, 1.0f);
        for (auto* v : {&x, &w, &b})
            for (auto& e : *v) e = u(rng);
    }
};

// Encoder layers 1-3 and the adjoint geometry of decoder layers 1-3.
ConvGeometry layer(int index) {
    switch (index) {
        case 0: return {1, 80, 160, 4, 64, 6, 2, 2};
        case 1: return {1, 40, 80, 64, 64, 6, 2, 2};
        case 2: return {1, 20, 40, 64, 64, 6, 2, 2};
        case 3: return {1, 20, 40, 80, 67, 6, 2, 2};
        case 4: return {1, 40, 80, 80, 80, 6, 2, 2};
        default: return {1, 80, 160, 80, 80, 6, 2, 2};
    }
}

void set_counters(benchmark::State& state, const ConvGeometry& g) {
    const double flops = 2.0 * double(g.output_size()) * double(g.kernel * g.kernel * g.in_c);
    state.counters["GFLOPS"] = benchmark::Counter(flops * 1e-9, benchmark::Counter::kIsIterationInvariantRate);
}

void BM_ConvForwardReference(benchmark::State& state) {
    const auto g = layer(int(state.range(0)));
    Buffers buf(g);
    for (auto _ : state) {
        framepred::kernels::reference::conv2d_forward<float>(g, buf.x, buf.w, buf.b, buf.y);
        benchmark::DoNotOptimize(buf.y.data());
    }
    set_counters(state, g);
}

void BM_ConvForwardFast(benchmark::State& state) {
    const auto g = layer(int(state.range(0)));
    Buffers buf(g);
    for (auto _ : state) {
        framepred::kernels::conv2d_forward<float>(g, buf.x, buf.w, buf.b, buf.y);
        benchmark::DoNotOptimize(buf.y.data());
    }
    set_counters(state, g);
}

void BM_ConvBackwardDataReference(benchmark::State& state) {
    const auto g = layer(int(state.range(0)));
    Buffers buf(g);
    for (auto _ : state) {
        framepred::kernels::reference::conv2d_backward_data<float>(g, buf.y, buf.w, buf.x);
        benchmark::DoNotOptimize(buf.x.data());
    }
    set_counters(state, g);
}

void BM_ConvBackwardDataFast(benchmark::State& state) {
    const auto g = layer(int(state.range(0)));
    Buffers buf(g);
    for (auto _ : state) {
        framepred::kernels::conv2d_backward_data<float>(g, buf.y, buf.w, buf.x);
        benchmark::DoNotOptimize(buf.x.data());
    }
    set_counters(state, g);
}

void BM_ConvBackwardWeightsReference(benchmark::State& state) {
    const auto g = layer(int(state.range(0)));
    Buffers buf(g);
    for (auto _ : state) {
        framepred::kernels::reference::conv2d_backward_weights<float>(g, buf.x, buf.y, buf.w, buf.b);
        benchmark::DoNotOptimize(buf.w.data());
    }
    set_counters(state, g);
}

void BM_ConvBackwardWeightsFast(benchmark::State& state) {
    const auto g = layer(int(state.range(0)));
    Buffers buf(g);
    for (auto _ : state) {
        framepred::kernels::conv2d_backward_weights<float>(g, buf.x, buf.y, buf.w, buf.b);
        benchmark::DoNotOptimize(buf.w.data());
    }
    set_counters(state, g);
}

}  // namespace

BENCHMARK(BM_ConvForwardReference)->DenseRange(0, 5)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForwardFast)->DenseRange(0, 5)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardDataReference)->DenseRange(0, 5)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardDataFast)->DenseRange(0, 5)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardWeightsReference)->DenseRange(0, 5)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardWeightsFast)->DenseRange(0, 5)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
