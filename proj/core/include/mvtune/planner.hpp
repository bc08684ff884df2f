#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "mvtune/estimators.hpp"
#include "mvtune/model.hpp"
#include "mvtune/oracle.hpp"

namespace mvtune::planner {

/// One depth option for an index: scanning to `rank` newly covers ground-truth
/// item `item` (ordinal into the gt list; -1 for the rank-0 sentinel).
struct RelEntry {
    int64_t rank = 0;
    int item = -1;
};

struct RelevantEk {
    IndexDescriptor index;
    std::vector<RelEntry> entries; ///< k+1 entries, rank-ascending, entries[0] = {0, -1}
};

/// Indexes in conf usable for q: column set contained in the query's, and at
/// most di columns narrower.
std::vector<IndexDescriptor> candidate_indexes(const Query& q, const Configuration& conf,
                                               int di);

/// Relevant scan depths per index: the ranks of the gt items under each
/// index's partial score, plus the "unused" sentinel at rank 0.
std::vector<RelevantEk> relevant_ek(const Query& q, const std::vector<IndexDescriptor>& X,
                                    const oracle::GroundTruth& gt, const Dataset& ds);

/// Planning view of one index: entry t means "scan this index deep enough to
/// cover the first t list items". exec_ek and cost must be non-decreasing in
/// t; cost[t] is the full per-index contribution (scan plus re-rank share).
struct IndexChoices {
    IndexDescriptor index;
    std::vector<RelEntry> entries;
    std::vector<int64_t> exec_ek;
    std::vector<double> cost;
};

struct PlanOutcome {
    bool feasible = false;
    std::vector<int> pos;  ///< chosen entry position per index
    double cost = 0.0;     ///< sum of per-index contributions
    int covered = 0;       ///< distinct gt items covered
};

/// Exact grid optimum for up to 3 indexes: enumerates positions of all but
/// the last index and lowers the last index's depth as far as coverage
/// allows. Requires >= theta * k covered items. Ties prefer fewer indexes,
/// then the lexicographically smaller exec_ek vector.
PlanOutcome plan_search(const std::vector<IndexChoices>& X, int k, double theta);

struct DpStats {
    size_t table_entries = 0;
};

/// Set-cover dynamic program over a k'-item subsample of the ground truth,
/// repeated num_samples times; cheapest resulting plan wins. items maps the
/// subsample to gt ordinals. plan_dp draws the subsamples from seed.
PlanOutcome plan_dp_single(const std::vector<IndexChoices>& X, const std::vector<int>& items,
                           double theta, DpStats* stats = nullptr);
PlanOutcome plan_dp(const std::vector<IndexChoices>& X, int k, int k_prime, double theta,
                    int num_samples, uint64_t seed, DpStats* stats = nullptr);

struct PlannerParams {
    int di = 2;
    int k_prime = 5;
    int dp_samples = 3;
    double theta = 0.9; ///< per-query recall threshold
    uint64_t seed = 0;
    bool use_cache = true;
};

/// What-if planner over the training sample. Ground truth, rank lists and
/// finished plans are cached; the caches are read-mostly and lock-guarded.
class Planner {
  public:
    Planner(const Dataset& full, const est::Models& models, PlannerParams params);

    /// Optimal plan for q against conf under the fitted cost model, with
    /// sample ranks rescaled to full-data depths and inflated for approximate
    /// retrieval. Throws InfeasiblePlanError when conf has no usable index.
    QueryPlan plan(int q_id, const Query& q, const Configuration& conf);

    const Dataset& sample() const { return sample_; }
    const est::Models& models() const { return models_; }
    const PlannerParams& params() const { return params_; }

  private:
    const oracle::GroundTruth& sample_gt(int q_id, const Query& q);
    const std::vector<int64_t>& rank_list(int q_id, const Query& q, const IndexDescriptor& x);
    IndexChoices make_choices(const Query& q, const IndexDescriptor& x,
                              const std::vector<int64_t>& ranks) const;

    est::Models models_;
    PlannerParams params_;
    Dataset sample_;

    std::mutex mu_;
    std::map<int, oracle::GroundTruth> gt_cache_;
    std::map<std::pair<int, std::string>, std::vector<int64_t>> rank_cache_;
    std::map<std::string, QueryPlan> plan_cache_;
};

} // namespace mvtune::planner
