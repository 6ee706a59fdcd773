#include <benchmark/benchmark.h>

#include "utaam/random.hpp"
#include "utaam/tensor.hpp"

namespace {

utaam::DenseTensor random_tensor(std::vector<std::size_t> dims, std::uint64_t seed) {
    utaam::RandomStream rng(seed);
    utaam::DenseTensor x(std::move(dims));
    for (auto& v : x.values()) v = rng.uniform(-1.0, 1.0);
    return x;
}

}  // namespace

static void UnfoldMode0(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const utaam::DenseTensor x = random_tensor({n, n, n}, 1);
    for (auto _ : state) {
        auto m = utaam::unfold(x, 0);
        benchmark::DoNotOptimize(m);
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(UnfoldMode0)->RangeMultiplier(2)->Range(8, 64)->Complexity();

static void ModeProduct(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const utaam::DenseTensor x = random_tensor({n, n, n}, 2);
    const Eigen::MatrixXd m = Eigen::MatrixXd::Random(static_cast<Eigen::Index>(n),
                                                      static_cast<Eigen::Index>(n));
    for (auto _ : state) {
        auto z = utaam::mode_n_product(x, m, 1);
        benchmark::DoNotOptimize(z);
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(ModeProduct)->RangeMultiplier(2)->Range(8, 32)->Complexity();

static void FullRankHosvd(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const utaam::DenseTensor x = random_tensor({n, n, n}, 3);
    const std::vector<std::size_t> ranks{n, n, n};
    for (auto _ : state) {
        auto t = utaam::hosvd(x, ranks);
        benchmark::DoNotOptimize(t);
    }
}
BENCHMARK(FullRankHosvd)->RangeMultiplier(2)->Range(8, 32);
