#include "mvtune/io.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "mvtune/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mvtune::io {

namespace {

json parse_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InvalidInputError(path + ": " + e.what());
    }
}

void reject_unknown_fields(const json& obj, const std::set<std::string>& allowed,
                           const std::string& what) {
    for (const auto& [key, value] : obj.items())
        if (!allowed.count(key))
            throw InvalidInputError(what + ": unknown field '" + key + "'");
}

template <typename T>
T require(const json& obj, const std::string& key, const std::string& what) {
    if (!obj.contains(key)) throw InvalidInputError(what + ": missing field '" + key + "'");
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw InvalidInputError(what + ": field '" + key + "': " + e.what());
    }
}

void rename_over(const std::string& tmp, const std::string& path) {
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
    }
}

} // namespace

FbinData read_fbin(const std::string& path) {
    std::error_code ec;
    const auto size = fs::file_size(path, ec);
    if (ec) throw IoError("cannot stat " + path + ": " + ec.message());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);

    FbinData f;
    uint32_t header[2];
    if (!in.read(reinterpret_cast<char*>(header), sizeof header))
        throw InvalidInputError(path + ": too short for an fbin header");
    f.num = header[0];
    f.dim = header[1];
    const uint64_t expected = 8ull + 4ull * f.num * f.dim;
    if (size != expected)
        throw InvalidInputError(path + ": size " + std::to_string(size) + " != expected " +
                                std::to_string(expected) + " for " + std::to_string(f.num) +
                                "x" + std::to_string(f.dim));
    f.data.resize(static_cast<size_t>(f.num) * f.dim);
    if (!f.data.empty() &&
        !in.read(reinterpret_cast<char*>(f.data.data()),
                 static_cast<std::streamsize>(f.data.size() * sizeof(float))))
        throw IoError(path + ": truncated read");
    return f;
}

void write_fbin(const std::string& path, uint32_t num, uint32_t dim, const float* data) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot create " + tmp);
        uint32_t header[2] = {num, dim};
        out.write(reinterpret_cast<const char*>(header), sizeof header);
        out.write(reinterpret_cast<const char*>(data),
                  static_cast<std::streamsize>(4ull * num * dim));
        if (!out) throw IoError("short write to " + tmp);
    }
    rename_over(tmp, path);
}

void write_text_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot create " + tmp);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("short write to " + tmp);
    }
    rename_over(tmp, path);
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed: " + path);
    return s;
}

void save_dataset(const Dataset& ds, const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir + ": " + ec.message());

    json meta;
    meta["dataset_id"] = ds.id();
    meta["num_rows"] = ds.num_rows();
    json cols = json::array();
    for (const ColumnSpec& c : ds.columns()) {
        const std::string file = "col_" + std::to_string(c.id) + ".fbin";
        cols.push_back({{"id", c.id}, {"dim", c.dim}, {"name", c.name}, {"file", file}});

        std::vector<float> block;
        block.reserve(static_cast<size_t>(ds.num_rows()) * c.dim);
        for (uint32_t r = 0; r < ds.num_rows(); ++r) {
            auto v = ds.row(c.id, r);
            block.insert(block.end(), v.begin(), v.end());
        }
        write_fbin((fs::path(dir) / file).string(), ds.num_rows(),
                   static_cast<uint32_t>(c.dim), block.data());
    }
    meta["columns"] = std::move(cols);
    write_text_atomic((fs::path(dir) / "dataset.json").string(), meta.dump(2) + "\n");
}

Dataset load_dataset(const std::string& dir) {
    const json meta = parse_json((fs::path(dir) / "dataset.json").string());
    reject_unknown_fields(meta, {"dataset_id", "num_rows", "columns"}, "dataset.json");
    const auto id = require<std::string>(meta, "dataset_id", "dataset.json");
    const auto num_rows = require<uint32_t>(meta, "num_rows", "dataset.json");
    if (!meta.contains("columns") || !meta["columns"].is_array())
        throw InvalidInputError("dataset.json: missing columns array");

    std::vector<ColumnSpec> specs;
    std::vector<std::vector<float>> blocks;
    for (const json& c : meta["columns"]) {
        reject_unknown_fields(c, {"id", "dim", "name", "file"}, "dataset.json column");
        ColumnSpec spec;
        spec.id = require<int>(c, "id", "column");
        spec.dim = require<int>(c, "dim", "column");
        spec.name = c.value("name", "col" + std::to_string(spec.id));
        const auto file = require<std::string>(c, "file", "column");

        FbinData f = read_fbin((fs::path(dir) / file).string());
        if (f.num != num_rows || static_cast<int>(f.dim) != spec.dim)
            throw InvalidInputError(file + ": shape " + std::to_string(f.num) + "x" +
                                    std::to_string(f.dim) + " does not match dataset.json");
        specs.push_back(std::move(spec));
        blocks.push_back(std::move(f.data));
    }
    return Dataset(std::move(specs), std::move(blocks), num_rows, id);
}

Workload load_workload(const std::string& path, const Dataset& ds) {
    const json doc = parse_json(path);
    reject_unknown_fields(
        doc, {"columns", "recall_threshold", "storage_budget", "storage_unit", "queries"},
        "workload");
    const auto theta = require<double>(doc, "recall_threshold", "workload");
    const double budget = doc.contains("storage_budget") && !doc["storage_budget"].is_null()
                              ? doc["storage_budget"].get<double>()
                              : -1.0;
    const StorageUnit unit = storage_unit_from_string(doc.value("storage_unit", "index-count"));
    if (!doc.contains("queries") || !doc["queries"].is_array() || doc["queries"].empty())
        throw InvalidInputError("workload: missing queries array");

    std::set<int> union_cols;
    std::vector<Query> queries;
    for (const json& jq : doc["queries"]) {
        reject_unknown_fields(jq, {"vid", "k", "probability", "seed", "sigma", "vectors_ref"},
                              "workload query");
        auto vid = require<std::vector<int>>(jq, "vid", "query");
        const int k = require<int>(jq, "k", "query");
        const double prob = require<double>(jq, "probability", "query");
        union_cols.insert(vid.begin(), vid.end());

        if (jq.contains("seed") == jq.contains("vectors_ref"))
            throw InvalidInputError("query: need exactly one of 'seed' or 'vectors_ref'");
        if (jq.contains("seed")) {
            const auto seed = jq["seed"].get<uint64_t>();
            const double sigma = jq.value("sigma", 0.05);
            queries.push_back(synth::materialize_query(ds, std::move(vid), k, prob, seed, sigma));
        } else {
            std::sort(vid.begin(), vid.end());
            const auto ref = jq["vectors_ref"].get<std::string>();
            FbinData f = read_fbin((fs::path(path).parent_path() / ref).string());
            Query q;
            q.vid = vid;
            q.k = k;
            q.probability = prob;
            size_t off = 0;
            for (int col : vid) {
                const int dim = ds.column(col).dim;
                if (off + dim > f.data.size())
                    throw InvalidInputError(ref + ": fewer floats than the query columns need");
                std::vector<float> v(f.data.begin() + static_cast<long>(off),
                                     f.data.begin() + static_cast<long>(off + dim));
                l2_normalize(v);
                q.vectors.emplace(col, std::move(v));
                off += static_cast<size_t>(dim);
            }
            if (f.num != 1 || off != f.data.size())
                throw InvalidInputError(ref + ": expected a single row of " +
                                        std::to_string(off) + " floats");
            q.validate(ds);
            queries.push_back(std::move(q));
        }
    }
    if (doc.contains("columns")) {
        const auto declared = doc["columns"].get<std::vector<int>>();
        if (std::set<int>(declared.begin(), declared.end()) != union_cols)
            throw InvalidInputError("workload: 'columns' does not match the queries' columns");
    }
    return Workload(std::move(queries), theta, budget, unit);
}

void save_workload(const std::string& path, const std::vector<synth::QuerySpec>& specs,
                   double recall_threshold, double storage_budget, StorageUnit unit) {
    std::set<int> union_cols;
    json qs = json::array();
    for (const synth::QuerySpec& s : specs) {
        union_cols.insert(s.vid.begin(), s.vid.end());
        qs.push_back({{"vid", s.vid},
                      {"k", s.k},
                      {"probability", s.probability},
                      {"seed", s.seed},
                      {"sigma", s.sigma}});
    }
    json doc;
    doc["columns"] = std::vector<int>(union_cols.begin(), union_cols.end());
    doc["recall_threshold"] = recall_threshold;
    doc["storage_budget"] = storage_budget;
    doc["storage_unit"] = to_string(unit);
    doc["queries"] = std::move(qs);
    write_text_atomic(path, doc.dump(2) + "\n");
}

void save_models(const est::Models& m, const std::string& path) {
    json doc;
    doc["type"] = "mvtune-models";
    doc["version"] = 1;
    doc["dataset_id"] = m.dataset_id;
    doc["num_rows"] = m.num_rows;
    doc["sampling"] = {{"seed", m.seed},           {"sample_size", m.sample_size},
                       {"scale_factor", m.scale_factor}, {"fraction", m.sample_fraction},
                       {"train_queries", m.train_queries}, {"train_k", m.train_k},
                       {"grid", m.grid}};
    json cols = json::array();
    for (const auto& [id, c] : m.columns) {
        cols.push_back({{"id", c.column},
                        {"dim", c.dim},
                        {"cost", {{"a", c.a}, {"b", c.b}, {"r2", c.r2_cost}}},
                        {"recall", {{"c", c.c}, {"d", c.d}, {"r2", c.r2_recall}}},
                        {"ek_min", c.ek_min},
                        {"ek_max", c.ek_max}});
    }
    doc["columns"] = std::move(cols);
    doc["storage"] = {{"max_degree", m.storage.max_degree},
                      {"bytes_per_edge", m.storage.bytes_per_edge},
                      {"bytes_per_float", m.storage.bytes_per_float}};
    write_text_atomic(path, doc.dump(2) + "\n");
}

est::Models load_models(const std::string& path) {
    const json doc = parse_json(path);
    reject_unknown_fields(
        doc, {"type", "version", "dataset_id", "num_rows", "sampling", "columns", "storage"},
        "models");
    if (require<std::string>(doc, "type", "models") != "mvtune-models")
        throw InvalidInputError(path + ": not a models file");
    if (require<int>(doc, "version", "models") != 1)
        throw InvalidInputError(path + ": unsupported models version");

    est::Models m;
    m.dataset_id = require<std::string>(doc, "dataset_id", "models");
    m.num_rows = require<uint32_t>(doc, "num_rows", "models");
    const json& s = doc.at("sampling");
    reject_unknown_fields(
        s, {"seed", "sample_size", "scale_factor", "fraction", "train_queries", "train_k", "grid"},
        "models.sampling");
    m.seed = require<uint64_t>(s, "seed", "sampling");
    m.sample_size = require<uint32_t>(s, "sample_size", "sampling");
    m.scale_factor = require<double>(s, "scale_factor", "sampling");
    m.sample_fraction = require<double>(s, "fraction", "sampling");
    m.train_queries = require<int>(s, "train_queries", "sampling");
    m.train_k = require<int>(s, "train_k", "sampling");
    m.grid = require<std::vector<int64_t>>(s, "grid", "sampling");

    for (const json& c : doc.at("columns")) {
        reject_unknown_fields(c, {"id", "dim", "cost", "recall", "ek_min", "ek_max"},
                              "models column");
        est::ColumnModel cm;
        cm.column = require<int>(c, "id", "column");
        cm.dim = require<int>(c, "dim", "column");
        cm.a = require<double>(c.at("cost"), "a", "cost");
        cm.b = require<double>(c.at("cost"), "b", "cost");
        cm.r2_cost = require<double>(c.at("cost"), "r2", "cost");
        cm.c = require<double>(c.at("recall"), "c", "recall");
        cm.d = require<double>(c.at("recall"), "d", "recall");
        cm.r2_recall = require<double>(c.at("recall"), "r2", "recall");
        cm.ek_min = require<int64_t>(c, "ek_min", "column");
        cm.ek_max = require<int64_t>(c, "ek_max", "column");
        m.columns.emplace(cm.column, std::move(cm));
    }
    const json& st = doc.at("storage");
    reject_unknown_fields(st, {"max_degree", "bytes_per_edge", "bytes_per_float"},
                          "models.storage");
    m.storage.max_degree = require<int>(st, "max_degree", "storage");
    m.storage.bytes_per_edge = require<int>(st, "bytes_per_edge", "storage");
    m.storage.bytes_per_float = require<int>(st, "bytes_per_float", "storage");
    return m;
}

} // namespace mvtune::io
