// Serial reference vs OpenMP for the three hot loops.
#include <benchmark/benchmark.h>

#include <vector>

#include "wbforge/kernels/kernels.hpp"
#include "wbforge/synth/dataset.hpp"
#include "wbforge/synth/detections.hpp"
#include "wbforge/synth/generator.hpp"

using namespace wbforge;

namespace {

struct Fixture {
    Rig rig = Rig::corner_rig();
    std::vector<Coords3> pred, gt;
    std::vector<kernels::ViewSet> views;
    std::vector<int> rows, root;

    Fixture()
    {
        const SyntheticPoseGenerator gen;
        for (std::uint64_t s = 1; s <= 512; ++s) {
            const Pose3D p = gen.generate(s);
            gt.push_back(p.coords);
            pred.push_back(gen.generate(s + 10000).coords);
            kernels::ViewSet vs;
            for (const auto& cam : rig.cameras())
                vs.push_back(project_pose(p, cam));
            views.push_back(std::move(vs));
        }
        const auto& layout = KeypointLayout::builtin();
        for (int r = 0; r < layout.total(); ++r)
            rows.push_back(r);
        root = layout.rows(Part::body);
    }
};

const Fixture& fx()
{
    static const Fixture f;
    return f;
}

template <auto Fn>
void mpjpe(benchmark::State& state)
{
    const auto& f = fx();
    const auto n = static_cast<size_t>(state.range(0));
    const std::span<const Coords3> p(f.pred.data(), n), g(f.gt.data(), n);
    for (auto _ : state)
        benchmark::DoNotOptimize(Fn(p, g, f.rows, f.root));
    state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}

template <auto Fn>
void triangulate(benchmark::State& state)
{
    const auto& f = fx();
    const std::span<const kernels::ViewSet> sets(f.views.data(), static_cast<size_t>(state.range(0)));
    for (auto _ : state)
        benchmark::DoNotOptimize(Fn(sets, f.rig, TriangulationOptions{}));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <auto Fn>
void render(benchmark::State& state)
{
    const auto& f = fx();
    const Pose2D& v = f.views[0][0];
    const int side = static_cast<int>(state.range(0));
    // Keypoints rescaled into a square canvas.
    const Coords2 uv = v.coords * (side / 1000.0);
    std::vector<float> out(static_cast<size_t>(uv.rows()) * side * side);
    for (auto _ : state) {
        Fn(uv, v.visible, side, side, 3.0, false, out.data());
        benchmark::ClobberMemory();
    }
}

} // namespace

BENCHMARK(mpjpe<kernels::mpjpe_batch_serial>)->Name("mpjpe/serial")->Arg(64)->Arg(512);
BENCHMARK(mpjpe<kernels::mpjpe_batch_parallel>)->Name("mpjpe/omp")->Arg(64)->Arg(512);
BENCHMARK(triangulate<kernels::triangulate_batch_serial>)->Name("triangulate/serial")->Arg(16)->Arg(128);
BENCHMARK(triangulate<kernels::triangulate_batch_parallel>)->Name("triangulate/omp")->Arg(16)->Arg(128);
BENCHMARK(render<kernels::render_serial>)->Name("render/serial")->Arg(96)->Arg(224);
BENCHMARK(render<kernels::render_parallel>)->Name("render/omp")->Arg(96)->Arg(224);

BENCHMARK_MAIN();
