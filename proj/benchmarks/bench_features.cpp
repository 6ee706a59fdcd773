#include <benchmark/benchmark.h>

#include "utaam/features.hpp"
#include "utaam/random.hpp"

static void HogExtraction(benchmark::State& state) {
    utaam::ImageGray image(128, 128);
    utaam::RandomStream rng(1);
    for (auto& p : image.pixels) p = rng.uniform01();

    const std::size_t landmarks = 18;
    Eigen::VectorXd coords(2 * landmarks);
    for (Eigen::Index k = 0; k < coords.size(); ++k) coords[k] = rng.uniform(20.0, 108.0);
    const utaam::FaceShape shape(coords);

    utaam::HogSpec spec;
    spec.patch_side = static_cast<std::size_t>(state.range(0));
    spec.cell_side = 8;
    for (auto _ : state) {
        auto f = utaam::extract_features(image, shape, spec);
        benchmark::DoNotOptimize(f);
    }
}
BENCHMARK(HogExtraction)->Arg(16)->Arg(32);

BENCHMARK_MAIN();
