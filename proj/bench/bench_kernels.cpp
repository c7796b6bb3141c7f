#include <benchmark/benchmark.h>

#include <random>

#include "hrge/kernels.hpp"
#include "hrge/retrieval.hpp"
#include "hrge/synthetic.hpp"

using namespace hrge;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, 1.0);
    Matrix m(rows, cols);
    for (double& v : m.values()) v = d(rng);
    return m;
}

// Pairwise-MLP shaped product: 132 pairs of 12 views, width taken from the range.
template <void (*Affine)(const Matrix&, const Matrix&, std::span<const double>, Matrix&)>
void BM_affine(benchmark::State& state) {
    const auto w = static_cast<std::size_t>(state.range(0));
    const Matrix x = random_matrix(132, 2 * w, 1);
    const Matrix weight = random_matrix(w, 2 * w, 2);
    const std::vector<double> b(w, 0.1);
    Matrix out(132, w);
    for (auto _ : state) {
        Affine(x, weight, b, out);
        benchmark::DoNotOptimize(out.values().data());
    }
    state.SetItemsProcessed(state.iterations() * 132 * static_cast<std::int64_t>(2 * w * w));
}

template <void (*Grad)(const Matrix&, const Matrix&, Matrix&, std::span<double>)>
void BM_affine_grad_params(benchmark::State& state) {
    const auto w = static_cast<std::size_t>(state.range(0));
    const Matrix x = random_matrix(132, 2 * w, 1);
    const Matrix g = random_matrix(132, w, 2);
    Matrix gw(w, 2 * w);
    std::vector<double> gb(w, 0.0);
    for (auto _ : state) {
        Grad(g, x, gw, gb);
        benchmark::DoNotOptimize(gw.values().data());
    }
}

template <Matrix (*Expand)(const Matrix&)>
void BM_expand_pairs(benchmark::State& state) {
    const Matrix x = random_matrix(12, static_cast<std::size_t>(state.range(0)), 3);
    for (auto _ : state) benchmark::DoNotOptimize(Expand(x));
}

template <Matrix (*Dist)(const Matrix&, const Matrix&)>
void BM_distances(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Matrix q = random_matrix(n, 256, 4);
    const Matrix c = random_matrix(n, 256, 5);
    for (auto _ : state) benchmark::DoNotOptimize(Dist(q, c));
}

template <Matrix (*Extract)(const HrgeModel&, const FeatureDataset&)>
void BM_extract_descriptors(benchmark::State& state) {
    SyntheticSpec spec;
    spec.num_classes = 4;
    spec.per_class = 8;
    spec.views = 12;
    spec.dim = static_cast<std::size_t>(state.range(0));
    const FeatureDataset ds = generate_synthetic(spec);
    ModelGeometry g;
    g.views = 12;
    g.width = spec.dim;
    g.depth = 2;
    HrgeModel m(g, apply_variant(Variant::full, 2));
    std::mt19937_64 rng(6);
    m.init(rng);
    for (auto _ : state) benchmark::DoNotOptimize(Extract(m, ds));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(ds.size()));
}

} // namespace

BENCHMARK(BM_affine<kernels::affine_serial>)->Name("affine/serial")->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(BM_affine<kernels::affine_parallel>)->Name("affine/parallel")->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(BM_affine_grad_params<kernels::affine_grad_params_serial>)->Name("affine_grad_params/serial")->Arg(128);
BENCHMARK(BM_affine_grad_params<kernels::affine_grad_params_parallel>)->Name("affine_grad_params/parallel")->Arg(128);
BENCHMARK(BM_expand_pairs<kernels::expand_pairs_serial>)->Name("expand_pairs/serial")->Arg(256)->Arg(2048);
BENCHMARK(BM_expand_pairs<kernels::expand_pairs_parallel>)->Name("expand_pairs/parallel")->Arg(256)->Arg(2048);
BENCHMARK(BM_distances<kernels::distances_serial>)->Name("distances/serial")->Arg(64)->Arg(512);
BENCHMARK(BM_distances<kernels::distances_parallel>)->Name("distances/parallel")->Arg(64)->Arg(512);
BENCHMARK(BM_extract_descriptors<extract_descriptors_serial>)->Name("extract_descriptors/serial")->Arg(32);
BENCHMARK(BM_extract_descriptors<extract_descriptors>)->Name("extract_descriptors/parallel")->Arg(32);

BENCHMARK_MAIN();
