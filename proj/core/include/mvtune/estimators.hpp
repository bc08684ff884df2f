#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mvtune/graph_index.hpp"
#include "mvtune/model.hpp"

namespace mvtune::est {

struct FitParams {
    double sample_fraction = 0.01; ///< of num_rows; at least min_sample rows, at most all
    uint32_t min_sample = 1000;
    int train_queries = 50;
    int train_k = 100;         ///< recall reference depth, clipped to the sample
    double perturb_sigma = 0.1;
    std::vector<int64_t> ek_grid = {100, 200, 400, 800, 1600, 3200};
    int max_degree = 16;
    int ef_construction = 200;
    uint64_t seed = 0;
    int threads = 1;
};

/// Per-column what-if models, fitted in full-scale ek units:
///   numDist(ek) ~ a*ek + b        (least squares, a clamped >= 0)
///   recall(ek)  ~ c*ln(ek) + d    (least squares, c clamped >= 0, clamped to [0,1])
struct ColumnModel {
    int column = 0;
    int dim = 0;
    double a = 0.0, b = 0.0;
    double r2_cost = 0.0;
    double c = 0.0, d = 0.0;
    double r2_recall = 0.0;
    int64_t ek_min = 0, ek_max = 0; ///< fitted range (full-scale units)
};

struct StorageParams {
    int max_degree = 16;
    int bytes_per_edge = 4;
    int bytes_per_float = 4;
};

using StorageUnit = mvtune::StorageUnit;

struct Models {
    std::string dataset_id;
    uint32_t num_rows = 0;
    uint32_t sample_size = 0;
    double scale_factor = 1.0; ///< num_rows / sample_size
    uint64_t seed = 0;
    double sample_fraction = 0.01;
    int train_queries = 0;
    int train_k = 0;
    std::vector<int64_t> grid; ///< sample-scale ek values actually probed
    std::map<int, ColumnModel> columns;
    StorageParams storage;

    const ColumnModel& column(int id) const;
};

/// Uniform sample without replacement; sorted; deterministic per seed.
std::vector<uint32_t> sample_rows(uint32_t num_rows, uint32_t sample_size, uint64_t seed);
uint32_t effective_sample_size(uint32_t num_rows, const FitParams& p);

/// Builds one sample-scale index per column, probes the ek grid with held-out
/// perturbed-row queries, and fits the cost and recall models.
Models fit(const Dataset& ds, const FitParams& params);

/// Predicted distance evaluations for scanning x to depth ek (full-scale
/// units). Coefficients of multi-column indexes average the constituent
/// columns. Clamped to [1, num_rows].
double est_num_dist(const Models& m, const IndexDescriptor& x, int64_t ek);

/// x.dim * est_num_dist; lands in [x.dim, x.dim * num_rows].
double est_cost_idx(const Models& m, const IndexDescriptor& x, int64_t ek);

double est_recall(const Models& m, const IndexDescriptor& x, int64_t ek);

/// Sample rank -> full-scale ek. Rank 0 stays 0 (unused index).
int64_t full_scale_ek(const Models& m, int64_t sample_rank);

/// Compensates for approximate retrieval: ceil(ek / max(recall, 0.1)),
/// capped at num_rows.
int64_t inflate_ek(const Models& m, const IndexDescriptor& x, int64_t ek);

double est_storage(const Models& m, const Configuration& conf, StorageUnit unit);

} // namespace mvtune::est
