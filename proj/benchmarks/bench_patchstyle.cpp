#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <vector>

#include <torch/torch.h>

#include "patchstyle/dataset.hpp"
#include "patchstyle/guidance.hpp"
#include "patchstyle/network.hpp"
#include "patchstyle/registration.hpp"
#include "patchstyle/temporal_filter.hpp"
#include "patchstyle/trainer.hpp"

using namespace patchstyle;

namespace {

// Smooth periodic pattern plus a little noise, shifted by (dx, dy).
Image pattern(int w, int h, double dx = 0.0, double dy = 0.0, uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> jitter(-0.02f, 0.02f);
    Image img(w, h, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double u = x - dx, v = y - dy;
            img.at(x, y, 0) = float(0.5 + 0.4 * std::sin(u * 0.21) * std::cos(v * 0.17)) + jitter(rng);
            img.at(x, y, 1) = float(0.5 + 0.4 * std::sin((u + v) * 0.11)) + jitter(rng);
            img.at(x, y, 2) = float(0.5 + 0.4 * std::cos(u * 0.07 - v * 0.13)) + jitter(rng);
        }
    return img;
}

}  // namespace

static void BM_Inference(benchmark::State& state) {
    torch::NoGradGuard guard;
    const int size = static_cast<int>(state.range(0));
    Generator g = build_generator(NetConfig{}, 1);
    g->eval();
    const Image frame = pattern(size, size);
    for (auto _ : state) benchmark::DoNotOptimize(infer_padded(g, frame));
    state.counters["fps"] = benchmark::Counter(static_cast<double>(state.iterations()), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_Inference)->Arg(128)->Arg(256)->Arg(640)->Unit(benchmark::kMillisecond);

static void BM_TrainStep(benchmark::State& state) {
    const Image input = pattern(128, 128);
    Image style = input;
    for (auto& v : style.data) v = std::floor(v * 4.0f) / 4.0f;
    Sequence seq = make_sequence({input});
    TrainConfig config;
    config.batch_size = static_cast<int>(state.range(0));
    config.budget = Budget::unbounded();
    Trainer trainer({make_keyframe(seq, 0, style)}, config);
    for (auto _ : state) benchmark::DoNotOptimize(trainer.step());
}
BENCHMARK(BM_TrainStep)->Arg(10)->Arg(40)->Unit(benchmark::kMillisecond);

static void BM_TemporalFilter(benchmark::State& state) {
    std::vector<Image> frames;
    for (int i = 0; i < 9; ++i) frames.push_back(pattern(128, 128, 0.0, 0.0, i + 1));
    const Sequence seq = make_sequence(std::move(frames));
    TemporalFilterParams params;
    if (state.range(0) != 0) params.motion = MotionCompensation{};
    for (auto _ : state) benchmark::DoNotOptimize(filter_frame(seq, 4, params));
}
BENCHMARK(BM_TemporalFilter)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_RasterizeGuidance(benchmark::State& state) {
    const int w = 640, h = 480;
    const GaussianSet set = generate_gaussians(w, h, default_gaussian_count(w, h), 4.0, 16.0, 3);
    const DeformableGrid grid = DeformableGrid::regular(w, h, 16);
    for (auto _ : state) benchmark::DoNotOptimize(rasterize_guidance(set, grid, w, h));
}
BENCHMARK(BM_RasterizeGuidance)->Unit(benchmark::kMillisecond);

static void BM_ArapRegister(benchmark::State& state) {
    const int size = static_cast<int>(state.range(0));
    const Image ref = pattern(size, size);
    const Image tgt = pattern(size, size, 3.0, 2.0);
    const DeformableGrid grid = DeformableGrid::regular(size, size, 16);
    for (auto _ : state) benchmark::DoNotOptimize(arap_register(grid, ref, tgt, {}));
}
BENCHMARK(BM_ArapRegister)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
