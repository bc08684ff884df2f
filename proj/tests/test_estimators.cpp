#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>

#include "mvtune/errors.hpp"
#include "mvtune/estimators.hpp"
#include "mvtune/synth.hpp"

using namespace mvtune;

namespace {

// Hand-built model bundle with known coefficients, independent of fit().
est::Models toy_models() {
    est::Models m;
    m.dataset_id = "toy";
    m.num_rows = 10000;
    m.sample_size = 200;
    m.scale_factor = 50.0;
    m.grid = {50, 100, 200};
    est::ColumnModel c1;
    c1.column = 1;
    c1.dim = 16;
    c1.a = 1.0;
    c1.b = 0.0;
    c1.c = 0.0;
    c1.d = 0.4; // flat 40% recall
    c1.ek_min = 50;
    c1.ek_max = 10000;
    est::ColumnModel c2;
    c2.column = 2;
    c2.dim = 52;
    c2.a = 3.0;
    c2.b = 100.0;
    c2.c = 0.0;
    c2.d = 1.0;
    c2.ek_min = 50;
    c2.ek_max = 10000;
    m.columns = {{1, c1}, {2, c2}};
    m.storage = {16, 4, 4};
    return m;
}

Dataset small_synth(uint32_t rows, uint64_t seed) {
    synth::DatasetParams p;
    p.num_rows = rows;
    p.columns = {{1, 8, "a"}, {2, 12, "b"}};
    p.num_clusters = 10;
    p.noise = 0.3;
    p.seed = seed;
    return synth::make_dataset(p);
}

} // namespace

TEST_CASE("row sampling is deterministic, sorted, and duplicate-free") {
    auto s1 = est::sample_rows(5000, 800, 99);
    auto s2 = est::sample_rows(5000, 800, 99);
    REQUIRE(s1 == s2);
    REQUIRE(s1.size() == 800);
    REQUIRE(std::is_sorted(s1.begin(), s1.end()));
    REQUIRE(std::set<uint32_t>(s1.begin(), s1.end()).size() == 800);
    REQUIRE(s1.back() < 5000);

    auto s3 = est::sample_rows(5000, 800, 100);
    REQUIRE(s1 != s3); // different seed, different sample

    auto all = est::sample_rows(100, 100, 7);
    REQUIRE(all.size() == 100);
    REQUIRE(all.front() == 0);
    REQUIRE(all.back() == 99);
}

TEST_CASE("sample size honors fraction, floor, and cap") {
    est::FitParams p;
    p.sample_fraction = 0.01;
    p.min_sample = 1000;
    REQUIRE(est::effective_sample_size(1000000, p) == 10000); // fraction wins
    REQUIRE(est::effective_sample_size(50000, p) == 1000);    // floor wins
    REQUIRE(est::effective_sample_size(300, p) == 300);       // capped at n
}

TEST_CASE("cost prediction is dim times predicted scan work") {
    est::Models m = toy_models();
    IndexDescriptor x1 = IndexDescriptor::of({1});
    // a=1, b=0: est_num_dist(ek) == ek inside the clamp range.
    REQUIRE(est::est_num_dist(m, x1, 500) == 500.0);
    REQUIRE(est::est_cost_idx(m, x1, 500) == 16.0 * 500.0);
    // Clamped below at 1 and above at num_rows.
    REQUIRE(est::est_num_dist(m, x1, 0) == 1.0);
    REQUIRE(est::est_num_dist(m, x1, 10000000) == 10000.0);
}

TEST_CASE("multi-column predictions average the per-column coefficients") {
    est::Models m = toy_models();
    IndexDescriptor x12 = IndexDescriptor::of({1, 2});
    // Averaged line: a=(1+3)/2=2, b=(0+100)/2=50 -> 2*ek+50, exactly.
    REQUIRE(est::est_num_dist(m, x12, 100) == 250.0);
    REQUIRE(est::est_cost_idx(m, x12, 100) == (16.0 + 52.0) * 250.0);
    // Averaged recall: c=0, d=(0.4+1.0)/2=0.7.
    REQUIRE(est::est_recall(m, x12, 100) == 0.7);
}

TEST_CASE("recall prediction is clamped to the unit interval") {
    est::Models m = toy_models();
    m.columns[1].c = 0.5;
    m.columns[1].d = -3.0; // deeply negative at small ek
    IndexDescriptor x1 = IndexDescriptor::of({1});
    REQUIRE(est::est_recall(m, x1, 2) == 0.0);
    m.columns[1].d = 5.0;
    REQUIRE(est::est_recall(m, x1, 2) == 1.0);
}

TEST_CASE("sample ranks scale to full-size depths") {
    est::Models m = toy_models(); // scale_factor 50
    REQUIRE(est::full_scale_ek(m, 0) == 0);
    REQUIRE(est::full_scale_ek(m, 10) == 500);
    REQUIRE(est::full_scale_ek(m, 1) == 50);
    // Never exceeds the dataset.
    REQUIRE(est::full_scale_ek(m, 1000000) == 10000);
}

TEST_CASE("depth inflation divides by predicted recall") {
    est::Models m = toy_models();
    IndexDescriptor x1 = IndexDescriptor::of({1}); // recall flat at 0.4
    REQUIRE(est::inflate_ek(m, x1, 100) == 250);   // ceil(100/0.4)
    IndexDescriptor x2 = IndexDescriptor::of({2}); // recall flat at 1.0
    REQUIRE(est::inflate_ek(m, x2, 100) == 100);
    // Recall floor of 0.1 bounds the inflation factor at 10x.
    m.columns[1].d = 0.0;
    REQUIRE(est::inflate_ek(m, x1, 100) == 1000);
    // Capped at num_rows.
    REQUIRE(est::inflate_ek(m, x1, 5000) == 10000);
}

TEST_CASE("storage accounting matches the layout arithmetic") {
    est::Models m = toy_models(); // 10000 rows, max_degree 16, 4B edges/floats
    Configuration conf = Configuration::of(
        {IndexDescriptor::of({1}), IndexDescriptor::of({1, 2})});
    REQUIRE(est::est_storage(m, conf, StorageUnit::IndexCount) == 2.0);
    // Per index: rows * (max_degree*4 + dim*4).
    // {1}:   10000 * (64 + 4*16)  = 1,280,000
    // {1,2}: 10000 * (64 + 4*68)  = 3,360,000
    REQUIRE(est::est_storage(m, conf, StorageUnit::Bytes) == 1280000.0 + 3360000.0);
    REQUIRE(est::est_storage(m, Configuration::of({}), StorageUnit::Bytes) == 0.0);
}

TEST_CASE("fitting learns an accurate cost line on a full-coverage sample") {
    Dataset ds = small_synth(8000, 11);
    est::FitParams p;
    p.sample_fraction = 1.0; // sample == dataset, scale factor 1
    p.min_sample = 1;
    p.train_queries = 12;
    p.train_k = 20;
    // Wide span, top well below the row count: the linear regime end to end.
    p.ek_grid = {50, 100, 200, 400, 800, 1600};
    p.max_degree = 12;
    p.ef_construction = 80;
    p.seed = 5;
    est::Models m = est::fit(ds, p);

    REQUIRE(m.num_rows == 8000);
    REQUIRE(m.sample_size == 8000);
    REQUIRE(m.scale_factor == 1.0);
    REQUIRE(m.columns.size() == 2);
    for (const auto& [id, cm] : m.columns) {
        INFO("column " << id);
        REQUIRE(cm.a >= 0.0);
        REQUIRE(cm.c >= 0.0);
        // Scan work grows near-linearly in ek for a graph index, so the
        // linear fit should explain almost all the variance.
        REQUIRE(cm.r2_cost >= 0.9);
        REQUIRE(cm.ek_min == 50);
        REQUIRE(cm.ek_max == 1600);
        // Predictions at the fitted endpoints stay within the clamp range.
        IndexDescriptor x = IndexDescriptor::of({id});
        REQUIRE(est::est_num_dist(m, x, 1600) <= 8000.0);
        REQUIRE(est::est_num_dist(m, x, 50) >= 1.0);
        // Deeper scans are never predicted cheaper.
        REQUIRE(est::est_num_dist(m, x, 1600) >= est::est_num_dist(m, x, 50));
        REQUIRE(est::est_recall(m, x, 1600) >= est::est_recall(m, x, 50));
    }
}

TEST_CASE("fitting is bitwise deterministic per seed") {
    Dataset ds = small_synth(1500, 13);
    est::FitParams p;
    p.sample_fraction = 0.5;
    p.min_sample = 100;
    p.train_queries = 6;
    p.train_k = 10;
    p.ek_grid = {40, 80, 160, 320};
    p.max_degree = 10;
    p.ef_construction = 60;
    p.seed = 21;
    est::Models a = est::fit(ds, p);
    est::Models b = est::fit(ds, p);
    REQUIRE(a.sample_size == b.sample_size);
    REQUIRE(a.grid == b.grid);
    for (const auto& [id, ca] : a.columns) {
        const est::ColumnModel& cb = b.columns.at(id);
        REQUIRE(ca.a == cb.a);
        REQUIRE(ca.b == cb.b);
        REQUIRE(ca.c == cb.c);
        REQUIRE(ca.d == cb.d);
        REQUIRE(ca.r2_cost == cb.r2_cost);
        REQUIRE(ca.r2_recall == cb.r2_recall);
    }
}

TEST_CASE("fitting rejects a grid with fewer than three usable depths") {
    Dataset ds = small_synth(500, 17);
    est::FitParams p;
    p.sample_fraction = 1.0;
    p.min_sample = 1;
    p.train_queries = 4;
    p.train_k = 5;
    p.ek_grid = {50, 100}; // two points cannot support the fit
    p.seed = 3;
    REQUIRE_THROWS_AS(est::fit(ds, p), TrainingError);
}

TEST_CASE("model lookups reject unknown columns") {
    est::Models m = toy_models();
    REQUIRE_THROWS_AS(m.column(9), InvalidInputError);
    REQUIRE_THROWS_AS(est::est_num_dist(m, IndexDescriptor::of({9}), 100), InvalidInputError);
}
