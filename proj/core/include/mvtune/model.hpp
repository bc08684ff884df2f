#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mvtune/common.hpp"
#include "mvtune/errors.hpp"

namespace mvtune {

struct ColumnSpec {
    int id = 0; ///< 1-based, contiguous across a dataset
    int dim = 0;
    std::string name;
};

/// Column-major multi-vector table. Every stored vector is L2-normalized at
/// ingestion, so dot products over rows are cosine similarities.
class Dataset {
  public:
    Dataset() = default;

    /// Takes ownership of raw per-column row-major data and normalizes it.
    /// Zero vectors are replaced by the first basis vector (with a warning).
    Dataset(std::vector<ColumnSpec> columns, std::vector<std::vector<float>> data,
            uint32_t num_rows, std::string id = {});

    uint32_t num_rows() const { return num_rows_; }
    const std::vector<ColumnSpec>& columns() const { return columns_; }
    const ColumnSpec& column(int col_id) const;
    const std::string& id() const { return id_; }

    std::span<const float> row(int col_id, uint32_t row_id) const {
        const ColumnSpec& c = column(col_id);
        return {data_[static_cast<size_t>(col_id) - 1].data() +
                    static_cast<size_t>(row_id) * c.dim,
                static_cast<size_t>(c.dim)};
    }

    /// New dataset holding only the given rows (in the given order).
    Dataset subset(const std::vector<uint32_t>& row_ids) const;

    int total_dim() const;

  private:
    std::vector<ColumnSpec> columns_;
    std::vector<std::vector<float>> data_; ///< data_[i] belongs to column id i+1
    uint32_t num_rows_ = 0;
    std::string id_;
};

struct Query {
    std::vector<int> vid;                    ///< sorted column ids, non-empty
    std::map<int, std::vector<float>> vectors; ///< one unit vector per vid entry
    int k = 0;
    double probability = 0.0;

    int dim() const;
    std::span<const float> vector(int col_id) const;
    void validate(const Dataset& ds) const;
};

/// How a storage budget is denominated.
enum class StorageUnit { IndexCount, Bytes };

StorageUnit storage_unit_from_string(const std::string& s);
std::string to_string(StorageUnit u);

class Workload {
  public:
    Workload() = default;

    /// Validates queries and probabilities. Probability mass within
    /// [0.9, 1.1] of 1 is renormalized with a warning; anything else is
    /// rejected. A negative storage budget means unlimited.
    Workload(std::vector<Query> queries, double recall_threshold, double storage_budget,
             StorageUnit storage_unit = StorageUnit::IndexCount);

    const std::vector<Query>& queries() const { return queries_; }
    double recall_threshold() const { return recall_threshold_; }
    double storage_budget() const { return storage_budget_; }
    StorageUnit storage_unit() const { return storage_unit_; }
    bool has_storage_budget() const { return storage_budget_ >= 0.0; }

  private:
    std::vector<Query> queries_;
    double recall_threshold_ = 0.9;
    double storage_budget_ = -1.0;
    StorageUnit storage_unit_ = StorageUnit::IndexCount;
};

/// Set of columns an index is built over.
struct IndexDescriptor {
    std::vector<int> vid; ///< sorted, unique, non-empty

    static IndexDescriptor of(std::vector<int> cols);

    int dim(const Dataset& ds) const;
    bool covers_subset_of(const std::vector<int>& query_vid) const;
    std::string key() const; ///< e.g. "1,3"

    auto operator<=>(const IndexDescriptor&) const = default;
};

/// Set of candidate indexes, kept sorted and unique.
struct Configuration {
    std::vector<IndexDescriptor> indexes;

    static Configuration of(std::vector<IndexDescriptor> idx);

    bool contains(const IndexDescriptor& d) const;
    Configuration with(const IndexDescriptor& d) const;
    std::string key() const;

    auto operator<=>(const Configuration&) const = default;
};

struct PlanAssignment {
    IndexDescriptor index;
    int64_t ek = 0; ///< scan depth, >= 1
};

struct QueryPlan {
    std::vector<PlanAssignment> assignments; ///< sorted by index descriptor
    double estimated_cost = 0.0;
    double estimated_recall = 0.0;
    std::string algorithm; ///< "search" or "dp"

    int64_t total_ek() const;
};

/// Sum of per-column dot products over all query columns.
double full_score(const Query& q, uint32_t row_id, const Dataset& ds);

/// Same sum restricted to the index's columns; requires x.vid subset of q.vid.
double partial_score(const Query& q, const IndexDescriptor& x, uint32_t row_id,
                     const Dataset& ds);

/// Plan cost under an arbitrary per-index cost function:
///   sum_i cost_idx(q, x_i, ek_i) + q.dim * sum_i ek_i
double plan_cost(const Query& q, const QueryPlan& plan,
                 const std::function<double(const Query&, const IndexDescriptor&, int64_t)>& cost_idx);

} // namespace mvtune
