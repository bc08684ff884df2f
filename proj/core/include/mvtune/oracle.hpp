#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mvtune/model.hpp"

namespace mvtune::oracle {

/// Exact top-k under full_score. Ties break by lower row id.
struct GroundTruth {
    int k = 0;
    std::vector<uint32_t> ids;   ///< size min(k, num_rows), score-descending
    std::vector<double> scores;  ///< aligned with ids
};

/// For each index, the 1-based rank of every ground-truth item under that
/// index's partial score, with the same tie-breaking as GroundTruth.
struct RankTable {
    std::vector<IndexDescriptor> indexes;
    std::vector<std::vector<int64_t>> ranks; ///< ranks[i][j]: rank of gt item j in indexes[i]
};

GroundTruth ground_truth(const Query& q, const Dataset& ds);

RankTable rank_table(const Query& q, const GroundTruth& gt,
                     const std::vector<IndexDescriptor>& indexes, const Dataset& ds);

/// |gt ∩ union(retrieved)| / |gt|. Duplicate ids across lists count once.
double exact_recall(const GroundTruth& gt,
                    const std::vector<std::vector<uint32_t>>& retrieved);

/// Content key for the on-disk ground-truth cache.
uint64_t cache_key(const Query& q, const std::string& dataset_id);

/// Binary per-query cache: k u32 ids then k f32 scores, little-endian.
/// Returns false if no entry exists or the entry does not match k.
bool cache_load(const std::string& dir, uint64_t key, int k, GroundTruth& out);
void cache_store(const std::string& dir, uint64_t key, const GroundTruth& gt);

} // namespace mvtune::oracle
