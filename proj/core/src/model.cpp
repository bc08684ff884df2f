#include "mvtune/model.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

namespace mvtune {

bool l2_normalize(std::span<float> v) {
    double sq = 0.0;
    for (float x : v) sq += static_cast<double>(x) * x;
    if (sq < 1e-24) {
        std::fill(v.begin(), v.end(), 0.0f);
        if (!v.empty()) v[0] = 1.0f;
        return false;
    }
    double inv = 1.0 / std::sqrt(sq);
    for (float& x : v) x = static_cast<float>(x * inv);
    return true;
}

void log_warn(const std::string& msg) {
    std::cerr << "warning: " << msg << "\n";
}

void for_each_combination(int n, int r, const std::function<void(const std::vector<int>&)>& fn) {
    if (r < 0 || r > n) return;
    std::vector<int> idx(r);
    for (int i = 0; i < r; ++i) idx[i] = i;
    while (true) {
        fn(idx);
        int i = r - 1;
        while (i >= 0 && idx[i] == n - r + i) --i;
        if (i < 0) break;
        ++idx[i];
        for (int j = i + 1; j < r; ++j) idx[j] = idx[j - 1] + 1;
    }
}

Dataset::Dataset(std::vector<ColumnSpec> columns, std::vector<std::vector<float>> data,
                 uint32_t num_rows, std::string id)
    : columns_(std::move(columns)), data_(std::move(data)), num_rows_(num_rows),
      id_(std::move(id)) {
    if (columns_.size() != data_.size())
        throw InvalidInputError("dataset: column specs and data blocks disagree");
    for (size_t i = 0; i < columns_.size(); ++i) {
        const ColumnSpec& c = columns_[i];
        if (c.id != static_cast<int>(i) + 1)
            throw InvalidInputError("dataset: column ids must be contiguous from 1");
        if (c.dim <= 0) throw InvalidInputError("dataset: column dim must be positive");
        if (data_[i].size() != static_cast<size_t>(num_rows_) * c.dim)
            throw InvalidInputError("dataset: column " + std::to_string(c.id) +
                                    " has wrong data size");
        size_t zeros = 0;
        for (uint32_t r = 0; r < num_rows_; ++r) {
            std::span<float> v(data_[i].data() + static_cast<size_t>(r) * c.dim,
                               static_cast<size_t>(c.dim));
            if (!l2_normalize(v)) ++zeros;
        }
        if (zeros > 0)
            log_warn("column " + std::to_string(c.id) + ": replaced " + std::to_string(zeros) +
                     " zero vector(s) with a basis vector");
    }
}

const ColumnSpec& Dataset::column(int col_id) const {
    if (col_id < 1 || col_id > static_cast<int>(columns_.size()))
        throw InvalidInputError("unknown column id " + std::to_string(col_id));
    return columns_[static_cast<size_t>(col_id) - 1];
}

Dataset Dataset::subset(const std::vector<uint32_t>& row_ids) const {
    std::vector<std::vector<float>> data(columns_.size());
    for (size_t i = 0; i < columns_.size(); ++i) {
        int d = columns_[i].dim;
        data[i].resize(row_ids.size() * static_cast<size_t>(d));
        for (size_t r = 0; r < row_ids.size(); ++r) {
            if (row_ids[r] >= num_rows_)
                throw InvalidInputError("subset: row id out of range");
            const float* src = data_[i].data() + static_cast<size_t>(row_ids[r]) * d;
            std::copy(src, src + d, data[i].data() + r * static_cast<size_t>(d));
        }
    }
    // Rows are already unit vectors; the constructor re-normalization is a no-op
    // numerically but keeps a single ingestion path.
    return Dataset(columns_, std::move(data), static_cast<uint32_t>(row_ids.size()),
                   id_.empty() ? std::string() : id_ + "#subset");
}

int Dataset::total_dim() const {
    int d = 0;
    for (const auto& c : columns_) d += c.dim;
    return d;
}

int Query::dim() const {
    int d = 0;
    for (const auto& [col, vec] : vectors) d += static_cast<int>(vec.size());
    return d;
}

std::span<const float> Query::vector(int col_id) const {
    auto it = vectors.find(col_id);
    if (it == vectors.end())
        throw InvalidInputError("query has no vector for column " + std::to_string(col_id));
    return {it->second.data(), it->second.size()};
}

void Query::validate(const Dataset& ds) const {
    if (vid.empty()) throw InvalidInputError("query: vid must be non-empty");
    if (!std::is_sorted(vid.begin(), vid.end()) ||
        std::adjacent_find(vid.begin(), vid.end()) != vid.end())
        throw InvalidInputError("query: vid must be sorted and unique");
    if (k <= 0) throw InvalidInputError("query: k must be positive");
    if (vectors.size() != vid.size())
        throw InvalidInputError("query: one vector required per column in vid");
    for (int col : vid) {
        const ColumnSpec& c = ds.column(col);
        auto it = vectors.find(col);
        if (it == vectors.end() || static_cast<int>(it->second.size()) != c.dim)
            throw InvalidInputError("query: vector for column " + std::to_string(col) +
                                    " missing or has wrong dim");
    }
}

StorageUnit storage_unit_from_string(const std::string& s) {
    if (s == "index-count") return StorageUnit::IndexCount;
    if (s == "bytes") return StorageUnit::Bytes;
    throw InvalidInputError("unknown storage unit '" + s + "' (want index-count or bytes)");
}

std::string to_string(StorageUnit u) {
    return u == StorageUnit::IndexCount ? "index-count" : "bytes";
}

Workload::Workload(std::vector<Query> queries, double recall_threshold, double storage_budget,
                   StorageUnit storage_unit)
    : queries_(std::move(queries)), recall_threshold_(recall_threshold),
      storage_budget_(storage_budget), storage_unit_(storage_unit) {
    if (queries_.empty()) throw InvalidInputError("workload: no queries");
    if (recall_threshold_ <= 0.0 || recall_threshold_ > 1.0)
        throw InvalidInputError("workload: recall threshold must be in (0, 1]");
    if (storage_budget_ == 0.0)
        throw InvalidInputError("workload: storage budget must be positive (or negative for unlimited)");
    double sum = 0.0;
    for (const Query& q : queries_) {
        if (q.probability < 0.0) throw InvalidInputError("workload: negative probability");
        sum += q.probability;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
        if (sum < 0.9 || sum > 1.1)
            throw InvalidInputError("workload: probabilities sum to " + std::to_string(sum) +
                                    ", outside [0.9, 1.1]");
        log_warn("workload: probabilities sum to " + std::to_string(sum) + ", renormalizing");
        for (Query& q : queries_) q.probability /= sum;
    }
}

IndexDescriptor IndexDescriptor::of(std::vector<int> cols) {
    std::sort(cols.begin(), cols.end());
    cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
    if (cols.empty()) throw InvalidInputError("index descriptor: empty column set");
    return IndexDescriptor{std::move(cols)};
}

int IndexDescriptor::dim(const Dataset& ds) const {
    int d = 0;
    for (int col : vid) d += ds.column(col).dim;
    return d;
}

bool IndexDescriptor::covers_subset_of(const std::vector<int>& query_vid) const {
    return std::includes(query_vid.begin(), query_vid.end(), vid.begin(), vid.end());
}

std::string IndexDescriptor::key() const {
    std::ostringstream os;
    for (size_t i = 0; i < vid.size(); ++i) {
        if (i) os << ',';
        os << vid[i];
    }
    return os.str();
}

Configuration Configuration::of(std::vector<IndexDescriptor> idx) {
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    return Configuration{std::move(idx)};
}

bool Configuration::contains(const IndexDescriptor& d) const {
    return std::binary_search(indexes.begin(), indexes.end(), d);
}

Configuration Configuration::with(const IndexDescriptor& d) const {
    std::vector<IndexDescriptor> idx = indexes;
    idx.push_back(d);
    return Configuration::of(std::move(idx));
}

std::string Configuration::key() const {
    std::ostringstream os;
    for (size_t i = 0; i < indexes.size(); ++i) {
        if (i) os << ';';
        os << indexes[i].key();
    }
    return os.str();
}

int64_t QueryPlan::total_ek() const {
    int64_t s = 0;
    for (const auto& a : assignments) s += a.ek;
    return s;
}

double full_score(const Query& q, uint32_t row_id, const Dataset& ds) {
    double s = 0.0;
    for (int col : q.vid) s += dot(q.vector(col), ds.row(col, row_id));
    return s;
}

double partial_score(const Query& q, const IndexDescriptor& x, uint32_t row_id,
                     const Dataset& ds) {
    if (!x.covers_subset_of(q.vid))
        throw InvalidInputError("partial_score: index " + x.key() +
                                " is not a subset of the query columns");
    double s = 0.0;
    for (int col : x.vid) s += dot(q.vector(col), ds.row(col, row_id));
    return s;
}

double plan_cost(const Query& q, const QueryPlan& plan,
                 const std::function<double(const Query&, const IndexDescriptor&, int64_t)>& cost_idx) {
    double scan = 0.0;
    int64_t ek_sum = 0;
    for (const auto& a : plan.assignments) {
        scan += cost_idx(q, a.index, a.ek);
        ek_sum += a.ek;
    }
    return scan + static_cast<double>(q.dim()) * static_cast<double>(ek_sum);
}

} // namespace mvtune
