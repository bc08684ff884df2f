#include "mvtune/graph_index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <queue>

#include "mvtune/errors.hpp"

namespace mvtune::ann {

namespace {

// Orders (score, id) pairs best-first: higher score wins, lower id breaks ties.
inline bool better(const std::pair<double, uint32_t>& a, const std::pair<double, uint32_t>& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
}

struct BetterCmp {
    bool operator()(const std::pair<double, uint32_t>& a,
                    const std::pair<double, uint32_t>& b) const {
        return better(a, b);
    }
};
struct WorseCmp {
    bool operator()(const std::pair<double, uint32_t>& a,
                    const std::pair<double, uint32_t>& b) const {
        return better(b, a);
    }
};

} // namespace

GraphIndex GraphIndex::build(const Dataset& ds, const IndexDescriptor& desc,
                             const BuildParams& params) {
    if (params.max_degree < 2) throw InvalidInputError("graph index: max_degree must be >= 2");
    if (params.ef_construction < 1)
        throw InvalidInputError("graph index: ef_construction must be >= 1");
    if (ds.num_rows() == 0) throw InvalidInputError("graph index: empty dataset");

    GraphIndex g;
    g.desc_ = desc;
    g.dim_ = desc.dim(ds);
    g.n_ = ds.num_rows();
    g.max_degree_ = params.max_degree;
    g.vectors_.resize(static_cast<size_t>(g.n_) * g.dim_);
    for (uint32_t r = 0; r < g.n_; ++r) {
        float* dst = g.vectors_.data() + static_cast<size_t>(r) * g.dim_;
        for (int col : desc.vid) {
            auto src = ds.row(col, r);
            std::memcpy(dst, src.data(), src.size() * sizeof(float));
            dst += src.size();
        }
    }
    g.visit_mark_.assign(g.n_, 0);

    const double ml = 1.0 / std::log(static_cast<double>(params.max_degree));
    std::vector<int> levels(g.n_);
    for (uint32_t i = 0; i < g.n_; ++i) {
        double u = hash_u01(mix_seed(params.seed, 0x6c76u, i));
        levels[i] = static_cast<int>(-std::log(u) * ml);
    }

    int top = *std::max_element(levels.begin(), levels.end());
    g.layers_.resize(static_cast<size_t>(top) + 1);
    for (auto& layer : g.layers_) layer.resize(g.n_);

    g.entry_ = 0;
    int entry_level = levels[0];
    for (uint32_t i = 1; i < g.n_; ++i) {
        g.insert(i, std::min(levels[i], entry_level), params.ef_construction);
        if (levels[i] > entry_level) {
            // Promote after linking at the shared layers; the node starts the
            // new upper layers empty, as the sole occupant.
            entry_level = levels[i];
            g.entry_ = i;
        }
    }
    // Trim layers that ended up above the highest realized entry level.
    g.layers_.resize(static_cast<size_t>(entry_level) + 1);

    g.repair_connectivity();
    return g;
}

void GraphIndex::insert(uint32_t id, int level, int ef_construction) {
    std::span<const float> vec = vector(id);
    uint64_t dists = 0;
    std::pair<double, uint32_t> cur{dot(vec, vector(entry_)), entry_};
    int top = num_layers() - 1;
    for (int l = top; l > level; --l) {
        bool improved = true;
        while (improved) {
            improved = false;
            for (uint32_t nb : layers_[l][cur.second]) {
                std::pair<double, uint32_t> cand{dot(vec, vector(nb)), nb};
                if (better(cand, cur)) {
                    cur = cand;
                    improved = true;
                }
            }
        }
    }
    for (int l = std::min(level, top); l >= 0; --l) {
        auto cand = search_layer(vec, cur, ef_construction, l, dists, nullptr);
        auto nbrs = select_neighbors(vec, cand, max_degree_);
        layers_[l][id] = nbrs;
        for (uint32_t nb : nbrs) {
            layers_[l][nb].push_back(id);
            if (static_cast<int>(layers_[l][nb].size()) > max_degree_) shrink(l, nb);
        }
        cur = cand.front();
    }
}

std::vector<std::pair<double, uint32_t>> GraphIndex::search_layer(
    std::span<const float> q, std::pair<double, uint32_t> entry, int ef, int layer,
    uint64_t& dist_count, const SearchOptions* opts) const {
    if (++visit_epoch_ == 0) {
        std::fill(visit_mark_.begin(), visit_mark_.end(), 0);
        visit_epoch_ = 1;
    }
    const uint32_t epoch = visit_epoch_;
    visit_mark_[entry.second] = epoch;

    std::priority_queue<std::pair<double, uint32_t>, std::vector<std::pair<double, uint32_t>>,
                        WorseCmp>
        frontier; // best first
    std::priority_queue<std::pair<double, uint32_t>, std::vector<std::pair<double, uint32_t>>,
                        BetterCmp>
        results; // worst first
    frontier.push(entry);
    results.push(entry);

    while (!frontier.empty()) {
        auto cand = frontier.top();
        if (static_cast<int>(results.size()) >= ef && better(results.top(), cand)) break;
        frontier.pop();
        for (uint32_t nb : layers_[layer][cand.second]) {
            if (visit_mark_[nb] == epoch) continue;
            visit_mark_[nb] = epoch;
            double s = dot(q, vector(nb));
            ++dist_count;
            if (opts && opts->score_probe) opts->score_probe(nb);
            std::pair<double, uint32_t> e{s, nb};
            if (static_cast<int>(results.size()) < ef || better(e, results.top())) {
                frontier.push(e);
                results.push(e);
                if (static_cast<int>(results.size()) > ef) results.pop();
            }
        }
    }
    std::vector<std::pair<double, uint32_t>> out;
    out.reserve(results.size());
    while (!results.empty()) {
        out.push_back(results.top());
        results.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
}

std::vector<uint32_t> GraphIndex::select_neighbors(
    std::span<const float> base, std::vector<std::pair<double, uint32_t>> cand, int m) const {
    std::sort(cand.begin(), cand.end(), BetterCmp{});
    std::vector<uint32_t> selected;
    std::vector<uint32_t> skipped;
    for (const auto& [s, c] : cand) {
        if (static_cast<int>(selected.size()) >= m) break;
        bool keep = true;
        for (uint32_t r : selected) {
            if (dot(vector(c), vector(r)) > s) {
                keep = false;
                break;
            }
        }
        if (keep)
            selected.push_back(c);
        else
            skipped.push_back(c);
    }
    // Backfill so nodes keep connectivity even in dense clusters.
    for (uint32_t c : skipped) {
        if (static_cast<int>(selected.size()) >= m) break;
        selected.push_back(c);
    }
    return selected;
}

void GraphIndex::shrink(int layer, uint32_t node) {
    std::span<const float> base = vector(node);
    std::vector<std::pair<double, uint32_t>> cand;
    cand.reserve(layers_[layer][node].size());
    for (uint32_t nb : layers_[layer][node]) cand.emplace_back(dot(base, vector(nb)), nb);
    layers_[layer][node] = select_neighbors(base, std::move(cand), max_degree_);
}

std::vector<uint32_t> GraphIndex::base_layer_reachable() const {
    std::vector<uint8_t> seen(n_, 0);
    std::vector<uint32_t> stack{entry_};
    std::vector<uint32_t> out;
    seen[entry_] = 1;
    while (!stack.empty()) {
        uint32_t u = stack.back();
        stack.pop_back();
        out.push_back(u);
        for (uint32_t nb : layers_[0][u]) {
            if (!seen[nb]) {
                seen[nb] = 1;
                stack.push_back(nb);
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

void GraphIndex::repair_connectivity() {
    std::vector<uint32_t> reached = base_layer_reachable();
    if (reached.size() == n_) return;
    std::vector<uint8_t> ok(n_, 0);
    for (uint32_t r : reached) ok[r] = 1;
    // Bridge endpoints come from a strided sample of the reached set: close
    // enough for a similar anchor, bounded work even when most of the graph
    // is stranded. reached is sorted, so the sample is deterministic.
    constexpr size_t kMaxAnchors = 1024;
    const size_t stride = std::max<size_t>(1, reached.size() / kMaxAnchors);
    std::vector<uint32_t> anchors;
    anchors.reserve(kMaxAnchors + 1);
    for (size_t i = 0; i < reached.size(); i += stride) anchors.push_back(reached[i]);
    for (uint32_t u = 0; u < n_; ++u) {
        if (ok[u]) continue;
        // Link the stranded node from its most similar anchor with spare
        // degree; when every anchor is full, append to the least loaded one.
        // Rescue edges never evict: an eviction could strand another node and
        // undo earlier repairs, while a slightly oversized base-layer list
        // only costs a few extra scans.
        std::span<const float> uv = vector(u);
        std::pair<double, uint32_t> best_spare{-2.0, 0};
        bool have_spare = false;
        uint32_t fb = anchors.front();
        size_t fb_size = layers_[0][fb].size();
        double fb_score = dot(uv, vector(fb));
        for (uint32_t r : anchors) {
            const double s = dot(uv, vector(r));
            if (static_cast<int>(layers_[0][r].size()) < max_degree_) {
                std::pair<double, uint32_t> e{s, r};
                if (!have_spare || better(e, best_spare)) best_spare = e;
                have_spare = true;
            } else if (!have_spare) {
                const size_t sz = layers_[0][r].size();
                if (sz < fb_size || (sz == fb_size && (s > fb_score || (s == fb_score && r < fb)))) {
                    fb = r;
                    fb_size = sz;
                    fb_score = s;
                }
            }
        }
        layers_[0][have_spare ? best_spare.second : fb].push_back(u);
    }
    // Only edges out of reached nodes were added, so this cannot regress.
    if (base_layer_reachable().size() != n_)
        throw Error(ErrorKind::Internal, "graph index: could not connect base layer");
}

SearchResult GraphIndex::search(std::span<const float> query, int64_t ek,
                                const SearchOptions* opts) const {
    if (static_cast<int>(query.size()) != dim_)
        throw InvalidInputError("graph index: query dim mismatch");
    if (ek < 1) throw InvalidInputError("graph index: ek must be >= 1");

    SearchResult res;
    bool fallback = !opts || opts->exhaustive_fallback;
    if (fallback && ek >= static_cast<int64_t>(n_)) {
        std::vector<std::pair<double, uint32_t>> all(n_);
        for (uint32_t i = 0; i < n_; ++i) {
            all[i] = {dot(query, vector(i)), i};
            if (opts && opts->score_probe) opts->score_probe(i);
        }
        res.num_dist = n_;
        std::sort(all.begin(), all.end(), BetterCmp{});
        size_t take = std::min<size_t>(static_cast<size_t>(ek), all.size());
        for (size_t i = 0; i < take; ++i) {
            res.ids.push_back(all[i].second);
            res.scores.push_back(all[i].first);
        }
        return res;
    }

    uint64_t dists = 0;
    std::pair<double, uint32_t> cur{dot(query, vector(entry_)), entry_};
    ++dists;
    if (opts && opts->score_probe) opts->score_probe(entry_);
    for (int l = num_layers() - 1; l >= 1; --l) {
        bool improved = true;
        while (improved) {
            improved = false;
            for (uint32_t nb : layers_[l][cur.second]) {
                double s = dot(query, vector(nb));
                ++dists;
                if (opts && opts->score_probe) opts->score_probe(nb);
                std::pair<double, uint32_t> cand{s, nb};
                if (better(cand, cur)) {
                    cur = cand;
                    improved = true;
                }
            }
        }
    }
    int ef = static_cast<int>(std::min<int64_t>(std::max<int64_t>(ek, 64), n_));
    auto found = search_layer(query, cur, ef, 0, dists, opts);
    size_t take = std::min<size_t>(static_cast<size_t>(ek), found.size());
    res.ids.reserve(take);
    res.scores.reserve(take);
    for (size_t i = 0; i < take; ++i) {
        res.ids.push_back(found[i].second);
        res.scores.push_back(found[i].first);
    }
    res.num_dist = dists;
    return res;
}

namespace {

constexpr char kMagic[4] = {'M', 'V', 'G', 'I'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T read_pod(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

} // namespace

void GraphIndex::save(const std::string& path) const {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for write: " + tmp);
        out.write(kMagic, 4);
        write_pod<uint32_t>(out, kVersion);
        write_pod<uint32_t>(out, static_cast<uint32_t>(desc_.vid.size()));
        for (int col : desc_.vid) write_pod<uint32_t>(out, static_cast<uint32_t>(col));
        write_pod<uint32_t>(out, static_cast<uint32_t>(max_degree_));
        write_pod<uint32_t>(out, n_);
        write_pod<uint32_t>(out, entry_);
        write_pod<uint32_t>(out, static_cast<uint32_t>(layers_.size()));
        for (const auto& layer : layers_) {
            for (uint32_t node = 0; node < n_; ++node) {
                const auto& adj = layer[node];
                write_pod<uint16_t>(out, static_cast<uint16_t>(adj.size()));
                for (uint32_t nb : adj) write_pod<uint32_t>(out, nb);
            }
        }
        if (!out) throw IoError("short write: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

GraphIndex GraphIndex::load(const std::string& path, const Dataset& ds) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open index file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw InvalidInputError("not an index file: " + path);
    uint32_t version = read_pod<uint32_t>(in);
    if (version != kVersion)
        throw InvalidInputError("unsupported index version " + std::to_string(version));
    uint32_t ncols = read_pod<uint32_t>(in);
    if (ncols == 0 || ncols > 4096) throw InvalidInputError("index file: bad column count");
    std::vector<int> vid(ncols);
    for (auto& c : vid) c = static_cast<int>(read_pod<uint32_t>(in));
    IndexDescriptor desc = IndexDescriptor::of(vid);
    uint32_t max_degree = read_pod<uint32_t>(in);
    uint32_t n = read_pod<uint32_t>(in);
    uint32_t entry = read_pod<uint32_t>(in);
    uint32_t num_layers = read_pod<uint32_t>(in);
    if (!in) throw InvalidInputError("index file truncated: " + path);
    if (n != ds.num_rows())
        throw InvalidInputError("index file row count does not match dataset");
    if (entry >= n || num_layers == 0 || num_layers > 64 || max_degree < 2)
        throw InvalidInputError("index file: bad header");

    GraphIndex g;
    g.desc_ = desc;
    g.dim_ = desc.dim(ds);
    g.n_ = n;
    g.max_degree_ = static_cast<int>(max_degree);
    g.entry_ = entry;
    g.layers_.resize(num_layers);
    for (auto& layer : g.layers_) {
        layer.resize(n);
        for (uint32_t node = 0; node < n; ++node) {
            uint16_t deg = read_pod<uint16_t>(in);
            if (deg > max_degree) throw InvalidInputError("index file: degree over cap");
            layer[node].resize(deg);
            for (auto& nb : layer[node]) {
                nb = read_pod<uint32_t>(in);
                if (nb >= n) throw InvalidInputError("index file: neighbor out of range");
            }
        }
    }
    if (!in) throw InvalidInputError("index file truncated: " + path);
    g.vectors_.resize(static_cast<size_t>(n) * g.dim_);
    for (uint32_t r = 0; r < n; ++r) {
        float* dst = g.vectors_.data() + static_cast<size_t>(r) * g.dim_;
        for (int col : desc.vid) {
            auto src = ds.row(col, r);
            std::memcpy(dst, src.data(), src.size() * sizeof(float));
            dst += src.size();
        }
    }
    g.visit_mark_.assign(n, 0);
    return g;
}

std::vector<float> query_vector_for(const Query& q, const IndexDescriptor& x) {
    std::vector<float> v;
    for (int col : x.vid) {
        auto part = q.vector(col);
        v.insert(v.end(), part.begin(), part.end());
    }
    return v;
}

ExecutionResult execute_plan(const Query& q, const QueryPlan& plan,
                             const std::map<IndexDescriptor, const GraphIndex*>& built,
                             const Dataset& ds) {
    if (plan.assignments.empty())
        throw InvalidInputError("execute_plan: plan has no assignments");
    ExecutionResult res;
    int64_t ek_sum = 0;
    double scan_cost = 0.0;
    std::vector<uint32_t> union_ids;
    for (const auto& a : plan.assignments) {
        auto it = built.find(a.index);
        if (it == built.end() || it->second == nullptr)
            throw InvalidInputError("execute_plan: no built index for " + a.index.key());
        const GraphIndex& g = *it->second;
        if (a.ek < 1) throw InvalidInputError("execute_plan: ek must be >= 1");
        std::vector<float> qv = query_vector_for(q, a.index);
        SearchResult sr = g.search(qv, a.ek);
        res.candidate_multiset_size += sr.ids.size();
        res.num_dist.push_back(sr.num_dist);
        scan_cost += static_cast<double>(g.dim()) * static_cast<double>(sr.num_dist);
        ek_sum += a.ek;
        union_ids.insert(union_ids.end(), sr.ids.begin(), sr.ids.end());
        res.retrieved.push_back(std::move(sr.ids));
    }
    res.measured_cost = scan_cost + static_cast<double>(q.dim()) * static_cast<double>(ek_sum);

    std::sort(union_ids.begin(), union_ids.end());
    union_ids.erase(std::unique(union_ids.begin(), union_ids.end()), union_ids.end());
    std::vector<std::pair<double, uint32_t>> scored;
    scored.reserve(union_ids.size());
    for (uint32_t id : union_ids) scored.emplace_back(full_score(q, id, ds), id);
    std::sort(scored.begin(), scored.end(), BetterCmp{});
    size_t take = std::min<size_t>(static_cast<size_t>(q.k), scored.size());
    res.top_ids.reserve(take);
    res.top_scores.reserve(take);
    for (size_t i = 0; i < take; ++i) {
        res.top_ids.push_back(scored[i].second);
        res.top_scores.push_back(scored[i].first);
    }
    return res;
}

} // namespace mvtune::ann
