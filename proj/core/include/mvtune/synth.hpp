#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mvtune/model.hpp"

namespace mvtune::synth {

struct ColumnGen {
    int id = 0;
    int dim = 0;
    std::string name;
};

struct DatasetParams {
    uint32_t num_rows = 0;
    std::vector<ColumnGen> columns;
    int num_clusters = 16;
    double noise = 0.3;
    uint64_t seed = 0;
    std::string dataset_id; ///< derived from the parameters when empty
};

/// Clustered multi-column data: each row draws one topic shared by all
/// columns, then each column emits its topic center plus Gaussian noise.
/// The shared topic is what makes rows that are close in one column likely
/// close in the others, so multi-column indexes have something to exploit.
Dataset make_dataset(const DatasetParams& p);

/// Non-empty random subset of `all_cols`, each kept with probability `p`
/// (empty draws rejected and retried).
std::vector<int> draw_vid(const std::vector<int>& all_cols, std::mt19937_64& rng,
                          double p = 0.5);

/// Query built from a dataset row: the row's vectors on `vid`, perturbed with
/// N(0, sigma^2) per component and renormalized. Deterministic per seed.
Query materialize_query(const Dataset& ds, std::vector<int> vid, int k, double probability,
                        uint64_t seed, double sigma = 0.05);

/// Recipe sufficient to rebuild one query against the same dataset.
struct QuerySpec {
    std::vector<int> vid;
    int k = 0;
    double probability = 0.0;
    uint64_t seed = 0;
    double sigma = 0.05;
};

struct WorkloadParams {
    int num_queries = 8;
    int k = 10;
    double recall_threshold = 0.9;
    double storage_budget = -1.0; ///< negative: unlimited
    StorageUnit storage_unit = StorageUnit::IndexCount;
    uint64_t seed = 0;
    double sigma = 0.05;
    double column_probability = 0.5;
};

struct GeneratedWorkload {
    Workload workload;
    std::vector<QuerySpec> specs; ///< one per query, in order
};

/// Uniform-probability workload of seed-backed queries.
GeneratedWorkload gen_workload(const Dataset& ds, const WorkloadParams& p);

} // namespace mvtune::synth
