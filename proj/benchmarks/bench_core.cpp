#include <benchmark/benchmark.h>

#include "packbench/hrl.hpp"
#include "packbench/runner.hpp"

using namespace packbench;

namespace {

Heightmap rough_terrain(int rows, int cols, std::uint64_t seed) {
    Rng rng(seed);
    Heightmap t(rows, cols, 2.0);
    for (int x = 0; x < rows; ++x)
        for (int y = 0; y < cols; ++y) t.at(x, y) = static_cast<Height>(rng.below(1500));
    return t;
}

VoxelGrid cuboid(int n) {
    VoxelGrid g({n, n, n}, 2000);
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) g.set(x, y, z);
    return g;
}

void BM_ComputeZ(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const Heightmap terrain = rough_terrain(200, 200, 1);
    const ViewPair v = column_views(cuboid(n));
    int x = n;
    for (auto _ : state) {
        benchmark::DoNotOptimize(compute_z(terrain, v.bottom, x, 100));
        x = x + 1 < 200 - n ? x + 1 : n;
    }
}
BENCHMARK(BM_ComputeZ)->Arg(10)->Arg(30);

void BM_LegalityMask(benchmark::State& state) {
    const int res = static_cast<int>(state.range(0));
    const Heightmap terrain = rough_terrain(res, res, 2);
    const ViewPair v = column_views(cuboid(res / 10));
    for (auto _ : state) benchmark::DoNotOptimize(legality_mask(terrain, v.top, v.bottom, 3000));
}
BENCHMARK(BM_LegalityMask)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_HmPlaceFirstObject(benchmark::State& state) {
    ExperimentConfig cfg;
    cfg.resolution = static_cast<int>(state.range(0));
    const auto ctx = make_episode_context(cfg, 1);
    const auto order = bbox_sequence(ctx->episode->objects, std::vector<std::size_t>{0, 1, 2, 3});
    const PackingState empty = PackingState::empty(ctx->box, ctx->size());
    HmPlacement hm(cfg.rules.hm_downsample);
    for (auto _ : state) benchmark::DoNotOptimize(hm.place(empty, order.front(), *ctx));
}
BENCHMARK(BM_HmPlaceFirstObject)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_HmEpisode(benchmark::State& state) {
    ExperimentConfig cfg;
    cfg.resolution = 50;
    cfg.timing = false;
    const auto ctx = make_episode_context(cfg, 2);
    for (auto _ : state) {
        Planner p = make_planner(cfg, nullptr, 0);
        benchmark::DoNotOptimize(run_episode(*ctx, *p.sequence, *p.placement, {}).j_final);
    }
}
BENCHMARK(BM_HmEpisode)->Unit(benchmark::kMillisecond);

void BM_WorkerForward(benchmark::State& state) {
    const int side = static_cast<int>(state.range(0));
    nn::WorkerNet net(kWorkerChannels, 16);
    Rng rng(3);
    net.init(rng);
    nn::Tensor x(kWorkerChannels, side, side);
    for (double& v : x.v) v = rng.uniform();
    for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
}
BENCHMARK(BM_WorkerForward)->Arg(16)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_ManagerForward(benchmark::State& state) {
    nn::ManagerNet net(20, kManagerChannels, 16, 64);
    Rng rng(4);
    net.init(rng);
    std::vector<std::optional<nn::Tensor>> in(20);
    for (auto& t : in) {
        t = nn::Tensor(kManagerChannels, 16, 16);
        for (double& v : t->v) v = rng.uniform();
    }
    for (auto _ : state) benchmark::DoNotOptimize(net.forward(in));
}
BENCHMARK(BM_ManagerForward)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
