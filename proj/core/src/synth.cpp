#include "mvtune/synth.hpp"

#include <algorithm>
#include <sstream>

#include "mvtune/common.hpp"
#include "mvtune/errors.hpp"

namespace mvtune::synth {

Dataset make_dataset(const DatasetParams& p) {
    if (p.num_rows == 0) throw InvalidInputError("dataset: num_rows must be > 0");
    if (p.columns.empty()) throw InvalidInputError("dataset: at least one column");
    if (p.num_clusters < 1) throw InvalidInputError("dataset: num_clusters must be >= 1");
    if (p.noise < 0.0) throw InvalidInputError("dataset: noise must be >= 0");

    std::vector<int> topic(p.num_rows);
    {
        auto rng = make_rng(p.seed, 0x746f70u); // topic stream
        std::uniform_int_distribution<int> pick(0, p.num_clusters - 1);
        for (uint32_t r = 0; r < p.num_rows; ++r) topic[r] = pick(rng);
    }

    std::vector<ColumnSpec> specs;
    std::vector<std::vector<float>> blocks;
    for (const ColumnGen& c : p.columns) {
        if (c.dim < 1) throw InvalidInputError("dataset: column dim must be >= 1");
        specs.push_back({c.id, c.dim,
                         c.name.empty() ? "col" + std::to_string(c.id) : c.name});

        std::vector<float> centers(static_cast<size_t>(p.num_clusters) * c.dim);
        {
            auto rng = make_rng(p.seed, 0x637472u, static_cast<uint64_t>(c.id));
            std::normal_distribution<double> gauss(0.0, 1.0);
            for (float& v : centers) v = static_cast<float>(gauss(rng));
        }

        std::vector<float> block(static_cast<size_t>(p.num_rows) * c.dim);
        auto rng = make_rng(p.seed, 0x6e7365u, static_cast<uint64_t>(c.id));
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (uint32_t r = 0; r < p.num_rows; ++r) {
            const float* ctr = centers.data() + static_cast<size_t>(topic[r]) * c.dim;
            float* dst = block.data() + static_cast<size_t>(r) * c.dim;
            for (int j = 0; j < c.dim; ++j)
                dst[j] = ctr[j] + static_cast<float>(p.noise * gauss(rng));
        }
        blocks.push_back(std::move(block));
    }

    std::string id = p.dataset_id;
    if (id.empty()) {
        std::ostringstream os;
        os << "synth_r" << p.num_rows << "_c" << p.columns.size() << "_k" << p.num_clusters
           << "_s" << p.seed;
        id = os.str();
    }
    return Dataset(std::move(specs), std::move(blocks), p.num_rows, id);
}

std::vector<int> draw_vid(const std::vector<int>& all_cols, std::mt19937_64& rng, double p) {
    if (all_cols.empty()) throw InvalidInputError("draw_vid: no columns");
    if (p <= 0.0 || p > 1.0) throw InvalidInputError("draw_vid: p must be in (0, 1]");
    std::bernoulli_distribution keep(p);
    for (;;) {
        std::vector<int> vid;
        for (int c : all_cols)
            if (keep(rng)) vid.push_back(c);
        if (!vid.empty()) return vid;
    }
}

Query materialize_query(const Dataset& ds, std::vector<int> vid, int k, double probability,
                        uint64_t seed, double sigma) {
    if (sigma < 0.0) throw InvalidInputError("query: sigma must be >= 0");
    std::sort(vid.begin(), vid.end());
    Query q;
    q.vid = std::move(vid);
    q.k = k;
    q.probability = probability;

    auto rng = make_rng(seed, 0x717279u); // query stream
    std::uniform_int_distribution<uint32_t> pick(0, ds.num_rows() - 1);
    const uint32_t row = pick(rng);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int col : q.vid) {
        auto src = ds.row(col, row);
        std::vector<float> v(src.begin(), src.end());
        for (float& x : v) x += static_cast<float>(sigma * gauss(rng));
        l2_normalize(v);
        q.vectors.emplace(col, std::move(v));
    }
    q.validate(ds);
    return q;
}

GeneratedWorkload gen_workload(const Dataset& ds, const WorkloadParams& p) {
    if (p.num_queries < 1) throw InvalidInputError("workload: num_queries must be >= 1");
    if (p.k < 1) throw InvalidInputError("workload: k must be >= 1");

    std::vector<int> all_cols;
    for (const ColumnSpec& c : ds.columns()) all_cols.push_back(c.id);

    const double prob = 1.0 / p.num_queries;
    std::vector<Query> queries;
    std::vector<QuerySpec> specs;
    for (int i = 0; i < p.num_queries; ++i) {
        const uint64_t qseed = mix_seed(p.seed, 0x777131u, static_cast<uint64_t>(i));
        auto rng = make_rng(qseed, 0x766964u); // column-subset stream
        std::vector<int> vid = draw_vid(all_cols, rng, p.column_probability);
        queries.push_back(materialize_query(ds, vid, p.k, prob, qseed, p.sigma));
        specs.push_back({queries.back().vid, p.k, prob, qseed, p.sigma});
    }
    GeneratedWorkload out{
        Workload(std::move(queries), p.recall_threshold, p.storage_budget, p.storage_unit),
        std::move(specs)};
    return out;
}

} // namespace mvtune::synth
