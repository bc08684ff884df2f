#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvtune/estimators.hpp"
#include "mvtune/model.hpp"
#include "mvtune/synth.hpp"

namespace mvtune::io {

/// Row-major float matrix with a two-u32 header (rows, dim).
struct FbinData {
    uint32_t num = 0;
    uint32_t dim = 0;
    std::vector<float> data; ///< num * dim floats
};

/// Rejects files whose byte size differs from 8 + 4 * num * dim.
FbinData read_fbin(const std::string& path);
void write_fbin(const std::string& path, uint32_t num, uint32_t dim, const float* data);

/// Writes content to `path` via a temp file + rename, so readers never see a
/// partial file. Used for every artifact this library emits.
void write_text_atomic(const std::string& path, const std::string& content);
std::string read_text(const std::string& path);

/// A dataset directory holds dataset.json plus one col_<id>.fbin per column.
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

/// Workload files reference queries either by generator seed or by an .fbin
/// of explicit vectors; seed-backed queries need the dataset to materialize.
Workload load_workload(const std::string& path, const Dataset& ds);
void save_workload(const std::string& path, const std::vector<synth::QuerySpec>& specs,
                   double recall_threshold, double storage_budget, StorageUnit unit);

void save_models(const est::Models& m, const std::string& path);
est::Models load_models(const std::string& path);

} // namespace mvtune::io
