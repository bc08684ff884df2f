#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mvtune/model.hpp"

namespace mvtune::ann {

struct BuildParams {
    int max_degree = 16;      ///< per-layer out-degree cap
    int ef_construction = 200;
    uint64_t seed = 0;
};

struct SearchResult {
    std::vector<uint32_t> ids;   ///< score-descending, ties by lower id
    std::vector<double> scores;
    uint64_t num_dist = 0;       ///< exact count of score evaluations
};

struct SearchOptions {
    bool exhaustive_fallback = true; ///< scan everything when ek >= num_rows
    /// Invoked once per score evaluation; lets callers audit num_dist.
    std::function<void(uint32_t)> score_probe;
};

/// Hierarchical small-world graph over the concatenation of one or more
/// columns. Scores are inner products (cosine, since rows are unit vectors).
/// Construction is sequential and fully determined by the build seed.
class GraphIndex {
  public:
    GraphIndex() = default;

    static GraphIndex build(const Dataset& ds, const IndexDescriptor& desc,
                            const BuildParams& params = {});

    /// Top-ek by inner product. The beam width is max(ek, 64), capped at
    /// num_rows. With exhaustive_fallback (default) an ek >= num_rows request
    /// degrades to a full scan.
    SearchResult search(std::span<const float> query, int64_t ek,
                        const SearchOptions* opts = nullptr) const;

    void save(const std::string& path) const;
    static GraphIndex load(const std::string& path, const Dataset& ds);

    const IndexDescriptor& descriptor() const { return desc_; }
    int dim() const { return dim_; }
    uint32_t num_rows() const { return n_; }
    int max_degree() const { return max_degree_; }
    uint32_t entry_point() const { return entry_; }
    int num_layers() const { return static_cast<int>(layers_.size()); }
    const std::vector<uint32_t>& neighbors(int layer, uint32_t node) const {
        return layers_[static_cast<size_t>(layer)][node];
    }
    std::span<const float> vector(uint32_t node) const {
        return {vectors_.data() + static_cast<size_t>(node) * dim_, static_cast<size_t>(dim_)};
    }

    /// Ids reachable from the entry point over the base layer.
    std::vector<uint32_t> base_layer_reachable() const;

  private:
    void insert(uint32_t id, int level, int ef_construction);
    std::vector<std::pair<double, uint32_t>> search_layer(std::span<const float> q,
                                                          std::pair<double, uint32_t> entry,
                                                          int ef, int layer,
                                                          uint64_t& dist_count,
                                                          const SearchOptions* opts) const;
    std::vector<uint32_t> select_neighbors(std::span<const float> base,
                                           std::vector<std::pair<double, uint32_t>> cand,
                                           int m) const;
    void shrink(int layer, uint32_t node);
    void repair_connectivity();

    IndexDescriptor desc_;
    int dim_ = 0;
    uint32_t n_ = 0;
    int max_degree_ = 16;
    std::vector<float> vectors_;                         ///< n_ x dim_, row-major
    std::vector<std::vector<std::vector<uint32_t>>> layers_; ///< layers_[l][node]
    uint32_t entry_ = 0;
    mutable std::vector<uint32_t> visit_mark_;           ///< search scratch
    mutable uint32_t visit_epoch_ = 0;
};

/// One scan per plan assignment, then an exact re-rank of the deduplicated
/// candidate union under the full score.
struct ExecutionResult {
    std::vector<uint32_t> top_ids;
    std::vector<double> top_scores;
    std::vector<std::vector<uint32_t>> retrieved; ///< per assignment, pre-dedup
    std::vector<uint64_t> num_dist;               ///< per assignment
    size_t candidate_multiset_size = 0;           ///< sum of retrieved sizes
    double measured_cost = 0.0;                   ///< sum dim_i*num_dist_i + q.dim*sum ek_i
};

ExecutionResult execute_plan(const Query& q, const QueryPlan& plan,
                             const std::map<IndexDescriptor, const GraphIndex*>& built,
                             const Dataset& ds);

/// Concatenates the query vectors for the index's columns (ascending id).
std::vector<float> query_vector_for(const Query& q, const IndexDescriptor& x);

} // namespace mvtune::ann
