#include <benchmark/benchmark.h>

#include <random>

#include "mtsconv/audio.hpp"
#include "mtsconv/interp.hpp"
#include "mtsconv/layers.hpp"
#include "mtsconv/mts_layer.hpp"

using namespace mtsconv;

static Tensor random_tensor(Shape shape, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    Tensor t(std::move(shape));
    for (double& v : t.values())
        v = dist(rng);
    return t;
}

// Batch of 8 spectrogram patches, 10 output channels, [10,5] kernel.
static void BM_conv_forward(benchmark::State& state)
{
    const auto t = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(1);
    const Tensor x = random_tensor({8, 1, t, 40}, 2);
    const Conv2d conv = Conv2d::glorot(10, 1, 10, 5, rng);
    for (auto _ : state)
        benchmark::DoNotOptimize(conv2d_forward(x, conv));
    state.SetItemsProcessed(int64_t(state.iterations()) * 8);
}

static void BM_mts_forward(benchmark::State& state)
{
    const auto t = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(1);
    const Tensor x = random_tensor({8, 1, t, 40}, 2);
    MtsConv2d layer(Conv2d::glorot(10, 1, 10, 5, rng), ScaleSet({0.5, 1.0, 2.0}));
    for (auto _ : state)
        benchmark::DoNotOptimize(mts_forward(x, layer, false));
    state.SetItemsProcessed(int64_t(state.iterations()) * 8);
}

static void BM_mts_backward(benchmark::State& state)
{
    const auto t = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(1);
    const Tensor x = random_tensor({8, 1, t, 40}, 2);
    MtsConv2d layer(Conv2d::glorot(10, 1, 10, 5, rng), ScaleSet({0.5, 1.0, 2.0}));
    const MtsForwardResult fwd = mts_forward(x, layer, false);
    const Tensor g = random_tensor(fwd.output.shape(), 3);
    for (auto _ : state)
        benchmark::DoNotOptimize(mts_backward(g, fwd.cache, layer));
}

static void BM_resample_time(benchmark::State& state)
{
    const Tensor k = random_tensor({64, 16, 10, 5}, 4);
    for (auto _ : state)
        benchmark::DoNotOptimize(resample_time(k, 2.0, 2));
}

static void BM_stft(benchmark::State& state)
{
    AudioClip clip;
    clip.sample_rate = 16000.0;
    clip.samples.resize(static_cast<std::size_t>(state.range(0)));
    std::mt19937 rng(5);
    std::normal_distribution<double> dist;
    for (double& s : clip.samples)
        s = dist(rng);
    for (auto _ : state)
        benchmark::DoNotOptimize(stft_magnitude(clip));
    state.SetBytesProcessed(int64_t(state.iterations()) * int64_t(clip.samples.size() * sizeof(double)));
}

BENCHMARK(BM_conv_forward)->Arg(32)->Arg(99);
BENCHMARK(BM_mts_forward)->Arg(32)->Arg(99);
BENCHMARK(BM_mts_backward)->Arg(32)->Arg(99);
BENCHMARK(BM_resample_time);
BENCHMARK(BM_stft)->Arg(16000)->Arg(64000);

BENCHMARK_MAIN();
