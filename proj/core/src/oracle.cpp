#include "mvtune/oracle.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <unordered_set>

#include "mvtune/errors.hpp"

namespace mvtune::oracle {

namespace {

/// Selects the top-k (score desc, id asc) positions of a score array.
std::vector<uint32_t> top_k_ids(const std::vector<double>& scores, int k) {
    std::vector<uint32_t> ids(scores.size());
    for (uint32_t i = 0; i < ids.size(); ++i) ids[i] = i;
    size_t kk = std::min<size_t>(static_cast<size_t>(k), ids.size());
    auto better = [&](uint32_t a, uint32_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    };
    std::partial_sort(ids.begin(), ids.begin() + kk, ids.end(), better);
    ids.resize(kk);
    return ids;
}

} // namespace

GroundTruth ground_truth(const Query& q, const Dataset& ds) {
    q.validate(ds);
    std::vector<double> scores(ds.num_rows());
    for (uint32_t r = 0; r < ds.num_rows(); ++r) scores[r] = full_score(q, r, ds);
    GroundTruth gt;
    gt.k = q.k;
    gt.ids = top_k_ids(scores, q.k);
    gt.scores.reserve(gt.ids.size());
    for (uint32_t id : gt.ids) gt.scores.push_back(scores[id]);
    return gt;
}

RankTable rank_table(const Query& q, const GroundTruth& gt,
                     const std::vector<IndexDescriptor>& indexes, const Dataset& ds) {
    RankTable table;
    table.indexes = indexes;
    table.ranks.resize(indexes.size());
    for (size_t i = 0; i < indexes.size(); ++i) {
        const IndexDescriptor& x = indexes[i];
        std::vector<double> scores(ds.num_rows());
        for (uint32_t r = 0; r < ds.num_rows(); ++r) scores[r] = partial_score(q, x, r, ds);
        std::vector<int64_t>& ranks = table.ranks[i];
        ranks.resize(gt.ids.size());
        for (size_t j = 0; j < gt.ids.size(); ++j) {
            uint32_t item = gt.ids[j];
            double s = scores[item];
            int64_t ahead = 0;
            for (uint32_t r = 0; r < ds.num_rows(); ++r) {
                if (scores[r] > s || (scores[r] == s && r < item)) ++ahead;
            }
            ranks[j] = ahead + 1;
        }
    }
    return table;
}

double exact_recall(const GroundTruth& gt,
                    const std::vector<std::vector<uint32_t>>& retrieved) {
    if (gt.ids.empty()) throw InvalidInputError("exact_recall: empty ground truth");
    std::unordered_set<uint32_t> seen;
    for (const auto& list : retrieved) seen.insert(list.begin(), list.end());
    size_t hit = 0;
    for (uint32_t id : gt.ids)
        if (seen.count(id)) ++hit;
    return static_cast<double>(hit) / static_cast<double>(gt.ids.size());
}

uint64_t cache_key(const Query& q, const std::string& dataset_id) {
    uint64_t h = 0x9e3779b97f4a7c15ULL;
    for (char c : dataset_id) h = splitmix64(h ^ static_cast<uint8_t>(c));
    h = splitmix64(h ^ static_cast<uint64_t>(q.k));
    for (int col : q.vid) {
        h = splitmix64(h ^ static_cast<uint64_t>(col));
        for (float f : q.vectors.at(col)) {
            uint32_t bits;
            std::memcpy(&bits, &f, sizeof(bits));
            h = splitmix64(h ^ bits);
        }
    }
    return h;
}

namespace {

std::string cache_path(const std::string& dir, uint64_t key) {
    char name[32];
    std::snprintf(name, sizeof(name), "%016llx.gt", static_cast<unsigned long long>(key));
    return (std::filesystem::path(dir) / name).string();
}

} // namespace

bool cache_load(const std::string& dir, uint64_t key, int k, GroundTruth& out) {
    std::ifstream in(cache_path(dir, key), std::ios::binary);
    if (!in) return false;
    in.seekg(0, std::ios::end);
    auto size = static_cast<size_t>(in.tellg());
    in.seekg(0);
    if (size % 8 != 0) return false;
    size_t n = size / 8;
    if (n != static_cast<size_t>(k)) return false;
    out.k = k;
    out.ids.resize(n);
    out.scores.resize(n);
    std::vector<float> f32(n);
    in.read(reinterpret_cast<char*>(out.ids.data()), static_cast<std::streamsize>(n * 4));
    in.read(reinterpret_cast<char*>(f32.data()), static_cast<std::streamsize>(n * 4));
    if (!in) return false;
    for (size_t i = 0; i < n; ++i) out.scores[i] = f32[i];
    return true;
}

void cache_store(const std::string& dir, uint64_t key, const GroundTruth& gt) {
    std::filesystem::create_directories(dir);
    std::string path = cache_path(dir, key);
    std::string tmp = path + ".tmp";
    {
        std::ofstream outf(tmp, std::ios::binary | std::ios::trunc);
        if (!outf) throw IoError("cannot write ground-truth cache entry: " + tmp);
        std::vector<float> f32(gt.scores.begin(), gt.scores.end());
        outf.write(reinterpret_cast<const char*>(gt.ids.data()),
                   static_cast<std::streamsize>(gt.ids.size() * 4));
        outf.write(reinterpret_cast<const char*>(f32.data()),
                   static_cast<std::streamsize>(f32.size() * 4));
        if (!outf) throw IoError("short write to ground-truth cache entry: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

} // namespace mvtune::oracle
