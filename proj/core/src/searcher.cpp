#include "mvtune/searcher.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_set>

#include "mvtune/common.hpp"
#include "mvtune/errors.hpp"

namespace mvtune::tuner {

namespace {

/// Plans, weighted cost, and the subset of `raw` the plans actually touch.
struct Eval {
    Configuration raw;
    Configuration pruned;
    std::map<int, QueryPlan> plans;
    int unplanned = 0;
    double cost = 0.0; ///< weighted cost over the planned queries only
    double storage_pruned = 0.0;
};

/// Beam order: cover more queries first, then cheaper, then stable key.
bool beam_better(const Eval& a, const Eval& b) {
    if (a.unplanned != b.unplanned) return a.unplanned < b.unplanned;
    if (a.cost != b.cost) return a.cost < b.cost;
    return a.raw.key() < b.raw.key();
}

Eval evaluate_config(planner::Planner& pl, const Workload& w, const est::Models& models,
                     StorageUnit unit, Configuration conf) {
    Eval ev;
    ev.raw = std::move(conf);
    std::set<IndexDescriptor> used;
    const auto& queries = w.queries();
    for (size_t i = 0; i < queries.size(); ++i) {
        try {
            QueryPlan plan = pl.plan(static_cast<int>(i), queries[i], ev.raw);
            ev.cost += queries[i].probability * plan.estimated_cost;
            for (const auto& a : plan.assignments) used.insert(a.index);
            ev.plans.emplace(static_cast<int>(i), std::move(plan));
        } catch (const InfeasiblePlanError&) {
            ++ev.unplanned;
        }
    }
    // Dropping indexes no plan touches cannot invalidate any plan: each plan
    // was optimal for a superset of the surviving candidate set and uses only
    // surviving indexes, so it stays optimal for the subset.
    ev.pruned.indexes.assign(used.begin(), used.end());
    ev.storage_pruned = est::est_storage(models, ev.pruned, unit);
    return ev;
}

std::string format_storage(double v, StorageUnit unit) {
    std::ostringstream os;
    if (unit == StorageUnit::IndexCount)
        os << static_cast<long long>(std::llround(v)) << " indexes";
    else
        os << static_cast<long long>(std::llround(v)) << " bytes";
    return os.str();
}

} // namespace

std::vector<IndexDescriptor> candidate_pool(const Workload& w, int di, size_t max_pool) {
    if (di < 0) throw InvalidInputError("di must be >= 0");
    std::set<std::vector<int>> seen;
    for (const Query& q : w.queries()) {
        const int m = static_cast<int>(q.vid.size());
        const int min_size = std::max(1, m - di);
        for (int r = min_size; r <= m; ++r) {
            for_each_combination(m, r, [&](const std::vector<int>& pick) {
                std::vector<int> cols;
                cols.reserve(pick.size());
                for (int p : pick) cols.push_back(q.vid[static_cast<size_t>(p)]);
                seen.insert(std::move(cols));
            });
            if (seen.size() > max_pool)
                throw InvalidInputError(
                    "candidate pool exceeds " + std::to_string(max_pool) +
                    " descriptors; lower di or raise the pool cap");
        }
    }
    std::vector<IndexDescriptor> pool;
    pool.reserve(seen.size());
    for (const auto& cols : seen) pool.push_back(IndexDescriptor::of(cols));
    return pool;
}

std::vector<Configuration> seed_configs(const Workload& w,
                                        const std::vector<IndexDescriptor>& pool, int se,
                                        int di) {
    if (se < 1) throw InvalidInputError("se must be >= 1");
    Configuration pool_conf;
    pool_conf.indexes = pool;
    std::set<Configuration> seen;
    for (const Query& q : w.queries()) {
        std::vector<IndexDescriptor> usable = planner::candidate_indexes(q, pool_conf, di);
        const int n = static_cast<int>(usable.size());
        for (int r = 1; r <= std::min(se, n); ++r) {
            for_each_combination(n, r, [&](const std::vector<int>& pick) {
                std::vector<IndexDescriptor> xs;
                xs.reserve(pick.size());
                for (int p : pick) xs.push_back(usable[static_cast<size_t>(p)]);
                seen.insert(Configuration::of(std::move(xs)));
            });
        }
    }
    return {seen.begin(), seen.end()};
}

TunerResult tune(const Workload& w, const Dataset& ds, const est::Models& models,
                 const SearchParams& params, const std::vector<Configuration>& extra_seeds) {
    if (params.beam_width < 1) throw InvalidInputError("beam width must be >= 1");
    if (params.max_iterations < 1) throw InvalidInputError("max iterations must be >= 1");

    planner::PlannerParams pp;
    pp.di = params.di;
    pp.k_prime = params.k_prime;
    pp.dp_samples = params.dp_samples;
    pp.theta = w.recall_threshold();
    pp.seed = params.seed;
    pp.use_cache = params.use_cache;
    planner::Planner planner(ds, models, pp);

    const StorageUnit unit = w.storage_unit();
    const bool budgeted = w.has_storage_budget();
    const double budget = w.storage_budget();
    auto within_budget = [&](const Configuration& c) {
        return !budgeted || est::est_storage(models, c, unit) <= budget;
    };

    std::vector<IndexDescriptor> pool = candidate_pool(w, params.di, params.max_pool);
    std::vector<Configuration> seeds = seed_configs(w, pool, params.se, params.di);
    seeds.insert(seeds.end(), extra_seeds.begin(), extra_seeds.end());

    TunerResult result;
    std::unordered_set<std::string> visited;
    std::vector<Eval> evaluated; // owns every Eval considered
    evaluated.reserve(256);
    double best_planned_storage = std::numeric_limits<double>::infinity();
    bool any_fully_planned = false;
    int min_unplanned = static_cast<int>(w.queries().size());

    // `evaluated` may reallocate, so track the best by index.
    size_t best_at = SIZE_MAX;
    auto consider = [&](Eval&& ev) {
        ++result.configs_evaluated;
        if (ev.unplanned < min_unplanned) min_unplanned = ev.unplanned;
        if (ev.unplanned == 0) {
            any_fully_planned = true;
            best_planned_storage = std::min(best_planned_storage, ev.storage_pruned);
        }
        evaluated.push_back(std::move(ev));
        const Eval& e = evaluated.back();
        bool feasible = e.unplanned == 0 && (!budgeted || e.storage_pruned <= budget);
        if (feasible) {
            if (best_at == SIZE_MAX) {
                best_at = evaluated.size() - 1;
            } else {
                const Eval& b = evaluated[best_at];
                if (e.cost < b.cost ||
                    (e.cost == b.cost && e.pruned.key() < b.pruned.key()))
                    best_at = evaluated.size() - 1;
            }
        }
        return evaluated.size() - 1;
    };

    // Seed round. Configurations over budget are skipped outright: storage
    // only grows as indexes are added, so they cannot lead anywhere feasible.
    std::vector<size_t> beam;
    for (Configuration& seed : seeds) {
        if (seed.indexes.empty()) continue;
        if (!visited.insert(seed.key()).second) continue;
        if (!within_budget(seed)) continue;
        ++result.seeds_evaluated;
        beam.push_back(consider(evaluate_config(planner, w, models, unit, std::move(seed))));
    }
    std::sort(beam.begin(), beam.end(),
              [&](size_t a, size_t b) { return beam_better(evaluated[a], evaluated[b]); });
    if (beam.size() > static_cast<size_t>(params.beam_width))
        beam.resize(static_cast<size_t>(params.beam_width));

    if (beam.empty()) {
        if (budgeted)
            throw InfeasibleWorkloadError(
                "storage budget " + format_storage(budget, unit) +
                " is below every single-index configuration");
        throw InfeasibleWorkloadError("no seed configurations could be formed");
    }

    double prev_best = best_at == SIZE_MAX ? -1.0 : evaluated[best_at].cost;
    for (int iter = 1; iter <= params.max_iterations; ++iter) {
        result.iterations = iter;
        std::vector<size_t> candidates;
        int expansions = 0;
        for (size_t bi : beam) {
            const Configuration base = evaluated[bi].raw; // copy: evaluated grows below
            for (const IndexDescriptor& x : pool) {
                if (base.contains(x)) continue;
                Configuration grown = base.with(x);
                if (!visited.insert(grown.key()).second) continue;
                if (!within_budget(grown)) continue;
                ++expansions;
                candidates.push_back(
                    consider(evaluate_config(planner, w, models, unit, std::move(grown))));
            }
        }

        std::sort(candidates.begin(), candidates.end(),
                  [&](size_t a, size_t b) { return beam_better(evaluated[a], evaluated[b]); });
        if (candidates.size() > static_cast<size_t>(params.beam_width))
            candidates.resize(static_cast<size_t>(params.beam_width));

        IterationTrace tr;
        tr.iteration = iter;
        tr.beam_size = static_cast<int>(candidates.size());
        tr.expansions = expansions;
        if (best_at != SIZE_MAX) {
            tr.best_config = evaluated[best_at].pruned.key();
            tr.best_cost = evaluated[best_at].cost;
        }
        result.trace.push_back(tr);

        if (candidates.empty()) break;
        beam = std::move(candidates);

        const double cur_best = best_at == SIZE_MAX ? -1.0 : evaluated[best_at].cost;
        if (iter >= 2 && prev_best > 0.0 && cur_best > 0.0) {
            const double rel = (prev_best - cur_best) / prev_best;
            if (rel <= params.improvement_threshold) break;
        }
        prev_best = cur_best;
    }

    if (best_at == SIZE_MAX) {
        if (any_fully_planned && budgeted)
            throw InfeasibleWorkloadError(
                "every configuration covering all queries needs at least " +
                format_storage(best_planned_storage, unit) + ", over the budget of " +
                format_storage(budget, unit));
        throw InfeasibleWorkloadError(
            "search ended with " + std::to_string(min_unplanned) + " of " +
            std::to_string(w.queries().size()) +
            " queries unplanned; raise the storage budget, beam width, or di");
    }

    Eval& b = evaluated[best_at];
    result.config = std::move(b.pruned);
    result.plans = std::move(b.plans);
    result.workload_cost = b.cost;
    result.storage_used = b.storage_pruned;
    result.feasible = true;
    return result;
}

namespace {

TunerResult fixed_config_result(const Workload& w, const Dataset& ds, const est::Models& models,
                                const SearchParams& params, Configuration conf, int di,
                                bool enforce_budget) {
    planner::PlannerParams pp;
    pp.di = di;
    pp.k_prime = params.k_prime;
    pp.dp_samples = params.dp_samples;
    pp.theta = w.recall_threshold();
    pp.seed = params.seed;
    pp.use_cache = params.use_cache;
    planner::Planner planner(ds, models, pp);

    Eval ev = evaluate_config(planner, w, models, w.storage_unit(), std::move(conf));
    if (ev.unplanned > 0)
        throw InfeasibleWorkloadError("baseline configuration leaves " +
                                      std::to_string(ev.unplanned) + " queries unplanned");
    TunerResult result;
    result.config = std::move(ev.pruned);
    result.plans = std::move(ev.plans);
    result.workload_cost = ev.cost;
    result.storage_used = ev.storage_pruned;
    result.feasible =
        !enforce_budget || !w.has_storage_budget() || ev.storage_pruned <= w.storage_budget();
    result.configs_evaluated = 1;
    return result;
}

} // namespace

TunerResult baseline_per_column(const Workload& w, const Dataset& ds, const est::Models& models,
                                const SearchParams& params) {
    std::set<int> used_cols;
    for (const Query& q : w.queries()) used_cols.insert(q.vid.begin(), q.vid.end());
    std::vector<IndexDescriptor> xs;
    for (int c : used_cols) xs.push_back(IndexDescriptor::of({c}));
    // Single-column indexes may omit arbitrarily many query columns.
    return fixed_config_result(w, ds, models, params, Configuration::of(std::move(xs)), INT_MAX,
                               /*enforce_budget=*/true);
}

TunerResult baseline_per_query(const Workload& w, const Dataset& ds, const est::Models& models,
                               const SearchParams& params) {
    std::set<std::vector<int>> vids;
    for (const Query& q : w.queries()) vids.insert(q.vid);
    std::vector<IndexDescriptor> xs;
    for (const auto& v : vids) xs.push_back(IndexDescriptor::of(v));
    return fixed_config_result(w, ds, models, params, Configuration::of(std::move(xs)), 0,
                               /*enforce_budget=*/false);
}

} // namespace mvtune::tuner
