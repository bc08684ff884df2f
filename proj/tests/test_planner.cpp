#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "mvtune/errors.hpp"
#include "mvtune/estimators.hpp"
#include "mvtune/oracle.hpp"
#include "mvtune/planner.hpp"
#include "mvtune/synth.hpp"

using namespace mvtune;
using planner::IndexChoices;
using planner::PlanOutcome;

namespace {

// Random well-formed choice table: k strictly increasing ranks, the covered
// items a permutation of 0..k-1, exec_ek equal to the rank, and a strictly
// increasing affine cost.
IndexChoices random_choices(int k, int columns_id, std::mt19937_64& rng) {
    IndexChoices xc;
    xc.index = IndexDescriptor::of({columns_id});
    std::set<int64_t> rank_set;
    std::uniform_int_distribution<int64_t> rd(1, 400);
    while (static_cast<int>(rank_set.size()) < k) rank_set.insert(rd(rng));
    std::vector<int64_t> ranks(rank_set.begin(), rank_set.end());
    std::vector<int> items(k);
    std::iota(items.begin(), items.end(), 0);
    std::shuffle(items.begin(), items.end(), rng);

    std::uniform_real_distribution<double> ad(0.5, 4.0);
    std::uniform_real_distribution<double> bd(0.0, 50.0);
    const double a = ad(rng), b = bd(rng);
    xc.entries.push_back({0, -1});
    xc.exec_ek.push_back(0);
    xc.cost.push_back(0.0);
    for (int t = 0; t < k; ++t) {
        xc.entries.push_back({ranks[t], items[t]});
        xc.exec_ek.push_back(ranks[t]);
        xc.cost.push_back(a * static_cast<double>(ranks[t]) + b);
    }
    return xc;
}

// Exhaustive reference: walks every position tuple. Mirrors the optimizer's
// feasibility epsilon, cost summation order, and tie rule so results are
// comparable bit for bit.
PlanOutcome enumerate_optimum(const std::vector<IndexChoices>& X, int k, double theta) {
    const double need = theta * k;
    const size_t m = X.size();
    std::vector<int> pos(m, 0);
    PlanOutcome best;
    std::vector<int> best_pos;

    auto better = [&](double ca, const std::vector<int>& pa, double cb,
                      const std::vector<int>& pb) {
        if (ca != cb) return ca < cb;
        int ua = 0, ub = 0;
        for (int p : pa) ua += (p > 0);
        for (int p : pb) ub += (p > 0);
        if (ua != ub) return ua < ub;
        for (size_t i = 0; i < pa.size(); ++i) {
            if (X[i].exec_ek[pa[i]] != X[i].exec_ek[pb[i]])
                return X[i].exec_ek[pa[i]] < X[i].exec_ek[pb[i]];
        }
        return false;
    };

    while (true) {
        std::vector<char> covered(static_cast<size_t>(k), 0);
        double cost = 0.0;
        for (size_t i = 0; i < m; ++i) {
            for (int t = 1; t <= pos[i]; ++t) covered[X[i].entries[t].item] = 1;
            cost = cost + X[i].cost[pos[i]]; // left-to-right, like the optimizer
        }
        int cov = 0;
        for (char c : covered) cov += c;
        if (static_cast<double>(cov) + 1e-9 >= need &&
            (!best.feasible || better(cost, pos, best.cost, best_pos))) {
            best.feasible = true;
            best.cost = cost;
            best.covered = cov;
            best_pos = pos;
        }
        size_t i = 0;
        while (i < m && pos[i] == k) pos[i++] = 0;
        if (i == m) break;
        ++pos[i];
    }
    if (best.feasible) best.pos = best_pos;
    return best;
}

Dataset tiny_synth(uint32_t rows, uint64_t seed) {
    synth::DatasetParams p;
    p.num_rows = rows;
    p.columns = {{1, 6, "a"}, {2, 9, "b"}};
    p.num_clusters = 8;
    p.noise = 0.35;
    p.seed = seed;
    return synth::make_dataset(p);
}

} // namespace

TEST_CASE("grid optimizer matches exhaustive enumeration") {
    std::mt19937_64 rng(20240917);
    std::uniform_real_distribution<double> td(0.3, 1.0);
    for (int num_idx = 1; num_idx <= 3; ++num_idx) {
        for (int trial = 0; trial < 60; ++trial) {
            const int k = 2 + static_cast<int>(rng() % 5); // 2..6
            std::vector<IndexChoices> X;
            for (int i = 0; i < num_idx; ++i) X.push_back(random_choices(k, i + 1, rng));
            const double theta = (trial % 4 == 0) ? 1.0 : td(rng);

            PlanOutcome got = planner::plan_search(X, k, theta);
            PlanOutcome want = enumerate_optimum(X, k, theta);
            INFO("indexes=" << num_idx << " trial=" << trial << " k=" << k
                            << " theta=" << theta);
            REQUIRE(got.feasible == want.feasible);
            if (want.feasible) {
                REQUIRE(got.cost == want.cost); // exact: same summation order
                REQUIRE(got.pos == want.pos);
                REQUIRE(got.covered >= static_cast<int>(std::ceil(theta * k - 1e-9)));
            }
        }
    }
}

TEST_CASE("set-cover program at full sample width equals the grid optimizer") {
    std::mt19937_64 rng(7151);
    for (int trial = 0; trial < 40; ++trial) {
        const int k = 2 + static_cast<int>(rng() % 4); // 2..5
        const int num_idx = 1 + static_cast<int>(rng() % 3);
        std::vector<IndexChoices> X;
        for (int i = 0; i < num_idx; ++i) X.push_back(random_choices(k, i + 1, rng));
        const double theta = (trial % 3 == 0) ? 1.0 : 0.7;

        PlanOutcome search = planner::plan_search(X, k, theta);
        // k' = k with one sample draws every item, so both optimizers face
        // the same instance and the same tie rule.
        PlanOutcome dp = planner::plan_dp(X, k, k, theta, 1, 99);
        REQUIRE(dp.feasible == search.feasible);
        if (search.feasible) {
            REQUIRE(dp.cost == search.cost);
            REQUIRE(dp.pos == search.pos);
        }
    }
}

TEST_CASE("set-cover program is deterministic per seed") {
    std::mt19937_64 rng(33);
    std::vector<IndexChoices> X;
    for (int i = 0; i < 3; ++i) X.push_back(random_choices(8, i + 1, rng));
    PlanOutcome a = planner::plan_dp(X, 8, 4, 0.9, 3, 1234);
    PlanOutcome b = planner::plan_dp(X, 8, 4, 0.9, 3, 1234);
    REQUIRE(a.feasible == b.feasible);
    REQUIRE(a.cost == b.cost);
    REQUIRE(a.pos == b.pos);
    // Full-depth scans cover every item, so some plan is always feasible here.
    REQUIRE(a.feasible);
}

TEST_CASE("two-index worked example lands on the shallow split") {
    // Items appear in A at ranks 6, 31, 183 and in B at ranks 116, 230, 8.
    // Covering everything (theta = 1) via one index costs 183 (A) or 230 (B);
    // the split A@31 ∪ B@8 covers {0,1} ∪ {2} for 39.
    IndexChoices A;
    A.index = IndexDescriptor::of({1});
    A.entries = {{0, -1}, {6, 0}, {31, 1}, {183, 2}};
    A.exec_ek = {0, 6, 31, 183};
    A.cost = {0.0, 6.0, 31.0, 183.0};
    IndexChoices B;
    B.index = IndexDescriptor::of({2});
    B.entries = {{0, -1}, {8, 2}, {116, 0}, {230, 1}};
    B.exec_ek = {0, 8, 116, 230};
    B.cost = {0.0, 8.0, 116.0, 230.0};

    PlanOutcome got = planner::plan_search({A, B}, 3, 1.0);
    REQUIRE(got.feasible);
    REQUIRE(got.cost == 39.0);
    REQUIRE(got.pos == std::vector<int>{2, 1}); // A to entry (31,1), B to (8,2)
    REQUIRE(got.covered == 3);

    PlanOutcome check = enumerate_optimum({A, B}, 3, 1.0);
    REQUIRE(check.cost == 39.0);
    REQUIRE(check.pos == got.pos);
}

TEST_CASE("malformed choice tables are rejected") {
    std::mt19937_64 rng(11);
    IndexChoices ok = random_choices(3, 1, rng);

    SECTION("more than three indexes") {
        std::vector<IndexChoices> X(4, ok);
        REQUIRE_THROWS_AS(planner::plan_search(X, 3, 0.9), InvalidInputError);
    }
    SECTION("missing sentinel") {
        IndexChoices bad = ok;
        bad.entries[0] = {1, 0};
        REQUIRE_THROWS_AS(planner::plan_search({bad}, 3, 0.9), InvalidInputError);
    }
    SECTION("duplicate ranks") {
        IndexChoices bad = ok;
        bad.entries[2].rank = bad.entries[1].rank;
        REQUIRE_THROWS_AS(planner::plan_search({bad}, 3, 0.9), InvalidInputError);
    }
    SECTION("decreasing cost is an internal invariant break") {
        IndexChoices bad = ok;
        bad.cost[2] = bad.cost[1] - 1.0;
        try {
            planner::plan_search({bad}, 3, 0.9);
            FAIL("expected a throw");
        } catch (const Error& e) {
            REQUIRE(e.kind() == ErrorKind::Internal);
        }
    }
    SECTION("misaligned table width") {
        IndexChoices bad = ok;
        bad.cost.pop_back();
        REQUIRE_THROWS_AS(planner::plan_search({bad}, 3, 0.9), InvalidInputError);
    }
}

TEST_CASE("usable indexes are query subsets within the omission bound") {
    Configuration conf = Configuration::of({
        IndexDescriptor::of({1}),
        IndexDescriptor::of({2}),
        IndexDescriptor::of({3}),
        IndexDescriptor::of({1, 2}),
    });
    Query q;
    q.vid = {1, 2};
    q.k = 5;
    q.probability = 1.0;

    auto keys = [](const std::vector<IndexDescriptor>& v) {
        std::vector<std::string> out;
        for (const auto& x : v) out.push_back(x.key());
        return out;
    };

    // di = 0: only exact-coverage indexes qualify.
    REQUIRE(keys(planner::candidate_indexes(q, conf, 0)) == std::vector<std::string>{"1,2"});
    // di = 1: singletons may omit one of the two columns. Results keep the
    // configuration's ordering ({1} < {1,2} < {2}).
    REQUIRE(keys(planner::candidate_indexes(q, conf, 1)) ==
            std::vector<std::string>{"1", "1,2", "2"});
    // Wider budgets change nothing; {3} is never usable (not a subset).
    REQUIRE(keys(planner::candidate_indexes(q, conf, 5)) ==
            std::vector<std::string>{"1", "1,2", "2"});
    REQUIRE_THROWS_AS(planner::candidate_indexes(q, conf, -1), InvalidInputError);
}

TEST_CASE("relevant depth tables are aligned permutations of the answer set") {
    Dataset ds = tiny_synth(80, 51);
    Query q = synth::materialize_query(ds, {1, 2}, 4, 1.0, 9, 0.2);
    oracle::GroundTruth gt = oracle::ground_truth(q, ds);
    std::vector<IndexDescriptor> X = {IndexDescriptor::of({1}), IndexDescriptor::of({2}),
                                      IndexDescriptor::of({1, 2})};
    auto rel = planner::relevant_ek(q, X, gt, ds);
    REQUIRE(rel.size() == 3);
    for (size_t i = 0; i < rel.size(); ++i) {
        INFO("index " << X[i].key());
        REQUIRE(rel[i].index == X[i]);
        REQUIRE(rel[i].entries.size() == 5); // k + sentinel
        REQUIRE(rel[i].entries[0].rank == 0);
        REQUIRE(rel[i].entries[0].item == -1);
        std::set<int> items;
        for (size_t t = 1; t < rel[i].entries.size(); ++t) {
            REQUIRE(rel[i].entries[t].rank > rel[i].entries[t - 1].rank);
            REQUIRE(rel[i].entries[t].rank >= 1);
            REQUIRE(rel[i].entries[t].rank <= 80);
            items.insert(rel[i].entries[t].item);
        }
        REQUIRE(items == std::set<int>{0, 1, 2, 3});
    }
    // The all-column index ranks items exactly in answer order.
    for (int t = 1; t <= 4; ++t) {
        REQUIRE(rel[2].entries[t].rank == t);
        REQUIRE(rel[2].entries[t].item == t - 1);
    }
}

TEST_CASE("what-if planning produces feasible plans and honors its cache") {
    Dataset ds = tiny_synth(400, 61);
    est::FitParams fp;
    fp.sample_fraction = 1.0;
    fp.min_sample = 1;
    fp.train_queries = 8;
    fp.train_k = 15;
    fp.ek_grid = {30, 60, 120, 240};
    fp.max_degree = 10;
    fp.ef_construction = 60;
    fp.seed = 2;
    est::Models models = est::fit(ds, fp);

    planner::PlannerParams pp;
    pp.di = 2;
    pp.theta = 0.9;
    pp.seed = 0;
    planner::Planner pl(ds, models, pp);

    Query q = synth::materialize_query(ds, {1, 2}, 6, 1.0, 19, 0.2);
    Configuration conf = Configuration::of({IndexDescriptor::of({1}), IndexDescriptor::of({2})});
    QueryPlan plan = pl.plan(7, q, conf);
    REQUIRE(!plan.assignments.empty());
    REQUIRE(plan.estimated_cost > 0.0);
    REQUIRE(plan.estimated_recall >= 0.9);
    for (const auto& a : plan.assignments) {
        REQUIRE(a.ek >= 1);
        REQUIRE(a.ek <= 400);
        REQUIRE(a.index.covers_subset_of(q.vid));
    }

    // Cached and uncached planning agree in every field.
    QueryPlan again = pl.plan(7, q, conf);
    planner::PlannerParams nocache = pp;
    nocache.use_cache = false;
    planner::Planner pl2(ds, models, nocache);
    QueryPlan fresh = pl2.plan(7, q, conf);
    for (const QueryPlan* other : {&again, &fresh}) {
        REQUIRE(other->assignments.size() == plan.assignments.size());
        REQUIRE(other->estimated_cost == plan.estimated_cost);
        REQUIRE(other->estimated_recall == plan.estimated_recall);
        for (size_t i = 0; i < plan.assignments.size(); ++i) {
            REQUIRE(other->assignments[i].index == plan.assignments[i].index);
            REQUIRE(other->assignments[i].ek == plan.assignments[i].ek);
        }
    }

    // No usable index: the configuration misses every query column.
    Query q1 = synth::materialize_query(ds, {1}, 5, 1.0, 23, 0.2);
    Configuration only2 = Configuration::of({IndexDescriptor::of({2})});
    REQUIRE_THROWS_AS(pl.plan(8, q1, only2), InfeasiblePlanError);
}
