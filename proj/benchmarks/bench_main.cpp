// Microbenchmarks for the hot paths: scoring, graph search and the two plan
// optimizers. Run with --benchmark_filter=<regex> to narrow.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "mvtune/common.hpp"
#include "mvtune/graph_index.hpp"
#include "mvtune/model.hpp"
#include "mvtune/planner.hpp"
#include "mvtune/synth.hpp"

namespace {

using namespace mvtune;

const Dataset& bench_dataset() {
    static Dataset ds = [] {
        synth::DatasetParams p;
        p.num_rows = 20000;
        p.columns = {{1, 32, ""}, {2, 48, ""}};
        p.num_clusters = 24;
        p.noise = 0.3;
        p.seed = 11;
        return synth::make_dataset(p);
    }();
    return ds;
}

const ann::GraphIndex& bench_index() {
    static ann::GraphIndex index = [] {
        ann::BuildParams bp;
        bp.max_degree = 16;
        bp.ef_construction = 120;
        bp.seed = 12;
        return ann::GraphIndex::build(bench_dataset(), IndexDescriptor::of({1}), bp);
    }();
    return index;
}

std::vector<float> random_unit(size_t dim, uint64_t seed) {
    auto rng = make_rng(seed);
    std::normal_distribution<float> n(0.0f, 1.0f);
    std::vector<float> v(dim);
    for (float& x : v) x = n(rng);
    l2_normalize(v);
    return v;
}

planner::IndexChoices random_choices(int k, std::mt19937_64& rng) {
    std::vector<int64_t> ranks(static_cast<size_t>(k));
    std::uniform_int_distribution<int64_t> step(1, 40);
    int64_t r = 0;
    for (auto& x : ranks) x = (r += step(rng));
    std::vector<int> items(static_cast<size_t>(k));
    std::iota(items.begin(), items.end(), 0);
    std::shuffle(items.begin(), items.end(), rng);

    planner::IndexChoices xc;
    xc.entries.push_back({0, -1});
    xc.exec_ek.push_back(0);
    xc.cost.push_back(0.0);
    for (int t = 0; t < k; ++t) {
        xc.entries.push_back({ranks[t], items[t]});
        xc.exec_ek.push_back(ranks[t]);
        xc.cost.push_back(1.5 * static_cast<double>(ranks[t]) + 20.0);
    }
    return xc;
}

std::vector<planner::IndexChoices> random_tables(int nx, int k, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<planner::IndexChoices> X;
    for (int i = 0; i < nx; ++i) X.push_back(random_choices(k, rng));
    return X;
}

void BM_dot(benchmark::State& state) {
    const auto dim = static_cast<size_t>(state.range(0));
    std::vector<float> a = random_unit(dim, 21);
    std::vector<float> b = random_unit(dim, 22);
    for (auto _ : state) benchmark::DoNotOptimize(dot(a, b));
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_dot)->Arg(32)->Arg(128)->Arg(512);

void BM_graph_search(benchmark::State& state) {
    const auto& index = bench_index();
    std::vector<float> q = random_unit(32, 23);
    const auto ek = static_cast<int64_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(index.search(q, ek));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_graph_search)->Arg(10)->Arg(100)->Arg(1000);

void BM_plan_search_2(benchmark::State& state) {
    const int k = static_cast<int>(state.range(0));
    auto X = random_tables(2, k, 31);
    for (auto _ : state) benchmark::DoNotOptimize(planner::plan_search(X, k, 0.9));
}
BENCHMARK(BM_plan_search_2)->Arg(10)->Arg(100)->Arg(1000);

void BM_plan_search_3(benchmark::State& state) {
    const int k = static_cast<int>(state.range(0));
    auto X = random_tables(3, k, 32);
    for (auto _ : state) benchmark::DoNotOptimize(planner::plan_search(X, k, 0.9));
}
BENCHMARK(BM_plan_search_3)->Arg(10)->Arg(50)->Arg(100);

void BM_plan_dp(benchmark::State& state) {
    const int nx = static_cast<int>(state.range(0));
    auto X = random_tables(nx, 100, 33);
    for (auto _ : state)
        benchmark::DoNotOptimize(planner::plan_dp(X, 100, 10, 0.9, 3, 34));
}
BENCHMARK(BM_plan_dp)->Arg(4)->Arg(6)->Arg(8);

} // namespace

BENCHMARK_MAIN();
