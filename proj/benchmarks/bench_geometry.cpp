#include <benchmark/benchmark.h>

#include "utaam/dataio.hpp"
#include "utaam/geometry.hpp"

namespace {

struct WarpFixture {
    utaam::SyntheticDataset dataset;
    utaam::ReferenceMesh mesh;
    utaam::ImageGray image;

    WarpFixture() {
        utaam::SyntheticSpec spec;
        spec.extents = {4, 3, 1, 1};
        spec.landmarks = 14;
        spec.image_side = 128;
        dataset = utaam::generate_synthetic(spec);
        std::vector<utaam::FaceShape> frontal;
        for (const auto& s : dataset.samples)
            if (s.cell[1] == dataset.frontal_pose) frontal.push_back(s.shape);
        mesh = utaam::build_reference_mesh(frontal, 64.0);
        image = utaam::render_synthetic_image(dataset, 0);
    }
};

const WarpFixture& fixture() {
    static WarpFixture fx;
    return fx;
}

}  // namespace

static void PiecewiseAffineWarp(benchmark::State& state) {
    const auto& fx = fixture();
    for (auto _ : state) {
        auto r = utaam::warp_to_reference(fx.image, fx.dataset.samples[0].shape, fx.mesh);
        benchmark::DoNotOptimize(r);
    }
}
BENCHMARK(PiecewiseAffineWarp);

static void GeneralizedProcrustes(benchmark::State& state) {
    const auto& fx = fixture();
    std::vector<utaam::FaceShape> shapes;
    for (const auto& s : fx.dataset.samples) shapes.push_back(s.shape);
    for (auto _ : state) {
        auto r = utaam::procrustes_align(shapes);
        benchmark::DoNotOptimize(r);
    }
}
BENCHMARK(GeneralizedProcrustes);

static void RenderSyntheticImage(benchmark::State& state) {
    const auto& fx = fixture();
    for (auto _ : state) {
        auto img = utaam::render_synthetic_image(fx.dataset, 1);
        benchmark::DoNotOptimize(img);
    }
}
BENCHMARK(RenderSyntheticImage);
