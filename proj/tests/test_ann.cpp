#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "mvtune/errors.hpp"
#include "mvtune/graph_index.hpp"
#include "mvtune/model.hpp"
#include "mvtune/oracle.hpp"
#include "mvtune/synth.hpp"

using namespace mvtune;

namespace {

Dataset clustered(uint32_t rows, uint64_t seed, int dim1 = 8, int dim2 = 12) {
    synth::DatasetParams p;
    p.num_rows = rows;
    p.columns = {{1, dim1, "a"}, {2, dim2, "b"}};
    p.num_clusters = 12;
    p.noise = 0.3;
    p.seed = seed;
    return synth::make_dataset(p);
}

// Brute-force top-ek under the index's partial score, long-double arithmetic.
std::vector<uint32_t> brute_top(const Query& q, const IndexDescriptor& x, const Dataset& ds,
                                int64_t ek) {
    std::vector<std::pair<long double, uint32_t>> all;
    for (uint32_t r = 0; r < ds.num_rows(); ++r) {
        long double s = 0.0L;
        for (int col : x.vid) {
            auto qv = q.vector(col);
            auto rv = ds.row(col, r);
            for (size_t i = 0; i < qv.size(); ++i)
                s += static_cast<long double>(qv[i]) * static_cast<long double>(rv[i]);
        }
        all.emplace_back(s, r);
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<uint32_t> ids;
    for (int64_t i = 0; i < ek && i < static_cast<int64_t>(all.size()); ++i)
        ids.push_back(all[i].second);
    return ids;
}

} // namespace

TEST_CASE("base layer reaches every node") {
    Dataset ds = clustered(500, 3);
    for (auto desc : {IndexDescriptor::of({1}), IndexDescriptor::of({1, 2})}) {
        ann::GraphIndex gi = ann::GraphIndex::build(ds, desc, {8, 60, 1});
        REQUIRE(gi.num_rows() == 500);
        REQUIRE(gi.base_layer_reachable().size() == 500);
        // Degree cap holds strictly above the base layer; the base layer may
        // carry a few rescue edges that reconnect stranded nodes, so it gets
        // a small slack allowance.
        for (int l = 1; l < gi.num_layers(); ++l)
            for (uint32_t v = 0; v < gi.num_rows(); ++v)
                REQUIRE(gi.neighbors(l, v).size() <= static_cast<size_t>(gi.max_degree()));
        for (uint32_t v = 0; v < gi.num_rows(); ++v)
            REQUIRE(gi.neighbors(0, v).size() <= static_cast<size_t>(gi.max_degree()) + 8);
    }
}

TEST_CASE("exhaustive fallback returns the exact answer") {
    Dataset ds = clustered(300, 5);
    IndexDescriptor x = IndexDescriptor::of({1, 2});
    ann::GraphIndex gi = ann::GraphIndex::build(ds, x, {8, 60, 1});
    Query q = synth::materialize_query(ds, {1, 2}, 10, 1.0, 42, 0.2);
    std::vector<float> qv = ann::query_vector_for(q, x);

    ann::SearchResult res = gi.search(qv, 300);
    REQUIRE(res.num_dist == 300); // full scan
    REQUIRE(res.ids == brute_top(q, x, ds, 300));

    ann::SearchResult res2 = gi.search(qv, 9999); // ek > n also degrades
    REQUIRE(res2.num_dist == 300);
    REQUIRE(res2.ids.size() == 300);
}

TEST_CASE("num_dist equals the number of score evaluations") {
    Dataset ds = clustered(400, 7);
    IndexDescriptor x = IndexDescriptor::of({1});
    ann::GraphIndex gi = ann::GraphIndex::build(ds, x, {8, 80, 2});
    Query q = synth::materialize_query(ds, {1}, 10, 1.0, 17, 0.2);
    std::vector<float> qv = ann::query_vector_for(q, x);

    uint64_t probes = 0;
    ann::SearchOptions opts;
    opts.score_probe = [&](uint32_t) { ++probes; };
    ann::SearchResult res = gi.search(qv, 20, &opts);
    REQUIRE(probes == res.num_dist);
    REQUIRE(res.num_dist <= 400);
    REQUIRE(res.ids.size() == 20);
}

TEST_CASE("graph search visits far fewer points than a scan") {
    Dataset ds = clustered(4000, 9);
    IndexDescriptor x = IndexDescriptor::of({1});
    ann::GraphIndex gi = ann::GraphIndex::build(ds, x, {16, 100, 3});
    Query q = synth::materialize_query(ds, {1}, 10, 1.0, 23, 0.2);
    ann::SearchResult res = gi.search(ann::query_vector_for(q, x), 10);
    REQUIRE(res.num_dist < 4000);
    REQUIRE(res.ids.size() == 10);
}

TEST_CASE("search quality is high at moderate ek") {
    Dataset ds = clustered(1000, 13);
    IndexDescriptor x = IndexDescriptor::of({1, 2});
    ann::GraphIndex gi = ann::GraphIndex::build(ds, x, {16, 120, 4});
    int hits = 0, total = 0;
    for (uint64_t s = 0; s < 5; ++s) {
        Query q = synth::materialize_query(ds, {1, 2}, 10, 1.0, 100 + s, 0.2);
        std::vector<uint32_t> want = brute_top(q, x, ds, 10);
        ann::SearchResult res = gi.search(ann::query_vector_for(q, x), 100);
        std::set<uint32_t> got(res.ids.begin(), res.ids.end());
        for (uint32_t id : want) hits += got.count(id);
        total += 10;
    }
    REQUIRE(hits >= total * 8 / 10);
}

TEST_CASE("construction and search are deterministic per seed") {
    Dataset ds = clustered(600, 21);
    IndexDescriptor x = IndexDescriptor::of({1, 2});
    ann::GraphIndex a = ann::GraphIndex::build(ds, x, {12, 80, 5});
    ann::GraphIndex b = ann::GraphIndex::build(ds, x, {12, 80, 5});
    REQUIRE(a.num_layers() == b.num_layers());
    REQUIRE(a.entry_point() == b.entry_point());
    for (int l = 0; l < a.num_layers(); ++l)
        for (uint32_t v = 0; v < a.num_rows(); ++v)
            REQUIRE(a.neighbors(l, v) == b.neighbors(l, v));

    Query q = synth::materialize_query(ds, {1, 2}, 10, 1.0, 77, 0.2);
    std::vector<float> qv = ann::query_vector_for(q, x);
    ann::SearchResult ra = a.search(qv, 25);
    ann::SearchResult rb = b.search(qv, 25);
    REQUIRE(ra.ids == rb.ids);
    REQUIRE(ra.scores == rb.scores);
    REQUIRE(ra.num_dist == rb.num_dist);
}

TEST_CASE("index persistence round-trips") {
    Dataset ds = clustered(400, 29);
    IndexDescriptor x = IndexDescriptor::of({2});
    ann::GraphIndex gi = ann::GraphIndex::build(ds, x, {10, 80, 6});

    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "mvtune_test_index.mvgi").string();
    gi.save(path);
    ann::GraphIndex back = ann::GraphIndex::load(path, ds);
    REQUIRE(back.num_layers() == gi.num_layers());
    REQUIRE(back.entry_point() == gi.entry_point());
    for (int l = 0; l < gi.num_layers(); ++l)
        for (uint32_t v = 0; v < gi.num_rows(); ++v)
            REQUIRE(back.neighbors(l, v) == gi.neighbors(l, v));

    Query q = synth::materialize_query(ds, {2}, 5, 1.0, 31, 0.2);
    std::vector<float> qv = ann::query_vector_for(q, x);
    ann::SearchResult ra = gi.search(qv, 15);
    ann::SearchResult rb = back.search(qv, 15);
    REQUIRE(ra.ids == rb.ids);
    REQUIRE(ra.num_dist == rb.num_dist);

    // Corrupt header is rejected.
    {
        std::ofstream bad(path, std::ios::binary | std::ios::trunc);
        bad << "NOPE";
    }
    REQUIRE_THROWS_AS(ann::GraphIndex::load(path, ds), mvtune::Error);
    fs::remove(path);
}

TEST_CASE("search validates its inputs") {
    Dataset ds = clustered(100, 37);
    IndexDescriptor x = IndexDescriptor::of({1});
    ann::GraphIndex gi = ann::GraphIndex::build(ds, x, {8, 40, 7});
    std::vector<float> wrong_dim(5, 0.1f);
    REQUIRE_THROWS_AS(gi.search(wrong_dim, 10), InvalidInputError);
    std::vector<float> ok(8, 0.1f);
    REQUIRE_THROWS_AS(gi.search(ok, 0), InvalidInputError);
}

TEST_CASE("execute_plan reranks the deduplicated union exactly") {
    Dataset ds = clustered(500, 41);
    IndexDescriptor x1 = IndexDescriptor::of({1});
    IndexDescriptor x2 = IndexDescriptor::of({2});
    ann::GraphIndex g1 = ann::GraphIndex::build(ds, x1, {10, 80, 8});
    ann::GraphIndex g2 = ann::GraphIndex::build(ds, x2, {10, 80, 8});
    std::map<IndexDescriptor, const ann::GraphIndex*> built = {{x1, &g1}, {x2, &g2}};

    Query q = synth::materialize_query(ds, {1, 2}, 10, 1.0, 53, 0.2);
    QueryPlan plan;
    plan.assignments.push_back({x1, 500}); // exhaustive: candidates = everything
    plan.assignments.push_back({x2, 40});
    ann::ExecutionResult ex = ann::execute_plan(q, plan, built, ds);

    // Union covers all rows (the first scan is exhaustive), so the rerank
    // must equal the exact full-score top-k.
    oracle::GroundTruth gt = oracle::ground_truth(q, ds);
    REQUIRE(ex.top_ids == gt.ids);

    // Cost identity: sum over indexes of dim*num_dist plus rerank work.
    REQUIRE(ex.num_dist.size() == 2);
    const double want_cost = 8.0 * static_cast<double>(ex.num_dist[0]) +
                             12.0 * static_cast<double>(ex.num_dist[1]) +
                             static_cast<double>(q.dim()) * (500.0 + 40.0);
    REQUIRE(ex.measured_cost == want_cost);

    // The multiset size counts duplicates; the scans returned 500 + 40 ids.
    REQUIRE(ex.candidate_multiset_size == 540);
    REQUIRE(ex.retrieved.size() == 2);
    REQUIRE(ex.retrieved[0].size() == 500);
    REQUIRE(ex.retrieved[1].size() == 40);

    // Plans may only reference built indexes.
    QueryPlan missing;
    missing.assignments.push_back({IndexDescriptor::of({1, 2}), 10});
    REQUIRE_THROWS_AS(ann::execute_plan(q, missing, built, ds), mvtune::Error);
}
