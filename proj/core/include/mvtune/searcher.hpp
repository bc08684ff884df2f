#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mvtune/estimators.hpp"
#include "mvtune/model.hpp"
#include "mvtune/planner.hpp"

namespace mvtune::tuner {

struct SearchParams {
    int di = 2;          ///< max columns an index may omit from a query it serves
    int se = 2;          ///< max indexes per seed configuration
    int beam_width = 4;
    /// Stop once the relative improvement of the best feasible cost drops to
    /// this value or below (never checked after the first expansion round).
    /// Negative disables early stopping.
    double improvement_threshold = 0.05;
    int max_iterations = 20;
    int k_prime = 5;
    int dp_samples = 3;
    uint64_t seed = 0;
    bool use_cache = true;
    size_t max_pool = 5000; ///< candidate descriptor cap
};

struct IterationTrace {
    int iteration = 0;
    std::string best_config;    ///< best feasible so far; empty if none
    double best_cost = -1.0;    ///< -1 until a feasible configuration exists
    int beam_size = 0;
    int expansions = 0;
};

struct TunerResult {
    Configuration config;
    std::map<int, QueryPlan> plans; ///< query position -> plan under config
    double workload_cost = 0.0;     ///< sum of probability-weighted plan costs
    double storage_used = 0.0;
    bool feasible = false;
    std::vector<IterationTrace> trace;
    int seeds_evaluated = 0;
    int configs_evaluated = 0;
    int iterations = 0;
};

/// Every index descriptor usable by at least one query: non-empty column
/// subsets of a query's columns missing at most `di` of them. Deterministic
/// order; throws when the pool would exceed `max_pool`.
std::vector<IndexDescriptor> candidate_pool(const Workload& w, int di, size_t max_pool);

/// Per-query subsets of the pool of size 1..se, deduplicated across queries.
std::vector<Configuration> seed_configs(const Workload& w,
                                        const std::vector<IndexDescriptor>& pool, int se,
                                        int di);

/// Beam search over index configurations minimizing expected workload cost
/// subject to the workload's recall threshold and storage budget. Seeds that
/// cover only part of the workload stay in the beam (ranked by uncovered
/// queries, then cost) so multi-query workloads can be assembled index by
/// index; only configurations that plan every query within budget are
/// eligible results. `extra_seeds` joins the seed set as-is.
TunerResult tune(const Workload& w, const Dataset& ds, const est::Models& models,
                 const SearchParams& params,
                 const std::vector<Configuration>& extra_seeds = {});

/// One single-column index per column any query touches.
TunerResult baseline_per_column(const Workload& w, const Dataset& ds, const est::Models& models,
                                const SearchParams& params);

/// One index per distinct query column set (exact match, storage budget
/// ignored; a reference point, not a contender).
TunerResult baseline_per_query(const Workload& w, const Dataset& ds, const est::Models& models,
                               const SearchParams& params);

} // namespace mvtune::tuner
