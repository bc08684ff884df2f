#include "mvtune/estimators.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>
#include <unordered_set>

#include "mvtune/errors.hpp"
#include "mvtune/oracle.hpp"

namespace mvtune::est {

const ColumnModel& Models::column(int id) const {
    auto it = columns.find(id);
    if (it == columns.end())
        throw InvalidInputError("no model for column " + std::to_string(id));
    return it->second;
}

std::vector<uint32_t> sample_rows(uint32_t num_rows, uint32_t sample_size, uint64_t seed) {
    if (sample_size > num_rows)
        throw InvalidInputError("sample size exceeds row count");
    std::vector<uint32_t> all(num_rows);
    std::iota(all.begin(), all.end(), 0u);
    std::vector<uint32_t> out;
    out.reserve(sample_size);
    auto rng = make_rng(seed, 0x736d706cu);
    std::sample(all.begin(), all.end(), std::back_inserter(out), sample_size, rng);
    return out; // std::sample preserves order, so ids come out sorted
}

uint32_t effective_sample_size(uint32_t num_rows, const FitParams& p) {
    if (p.sample_fraction <= 0.0 || p.sample_fraction > 1.0)
        throw InvalidInputError("sample fraction must be in (0, 1]");
    auto want = static_cast<uint32_t>(std::llround(p.sample_fraction * num_rows));
    want = std::max(want, p.min_sample);
    return std::min(want, num_rows);
}

namespace {

struct LineFit {
    double slope = 0.0, intercept = 0.0, r2 = 0.0;
};

/// Ordinary least squares with non-negative slope. A negative fitted slope
/// collapses to the horizontal line through the mean.
LineFit fit_line(const std::vector<double>& xs, const std::vector<double>& ys) {
    size_t n = xs.size();
    double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    LineFit f;
    if (sxx > 0.0) {
        f.slope = sxy / sxx;
        f.intercept = my - f.slope * mx;
    } else {
        f.slope = 0.0;
        f.intercept = my;
    }
    if (f.slope < 0.0) {
        f.slope = 0.0;
        f.intercept = my;
    }
    double ss_res = 0.0, ss_tot = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double pred = f.slope * xs[i] + f.intercept;
        ss_res += (ys[i] - pred) * (ys[i] - pred);
        ss_tot += (ys[i] - my) * (ys[i] - my);
    }
    if (ss_tot < 1e-12)
        f.r2 = ss_res < 1e-9 ? 1.0 : 0.0;
    else
        f.r2 = 1.0 - ss_res / ss_tot;
    return f;
}

ColumnModel fit_column(const Dataset& ds, const Dataset& sample_ds,
                       const std::vector<uint32_t>& sample_ids, int col,
                       const std::vector<int64_t>& grid, double scale_factor,
                       const FitParams& params) {
    const ColumnSpec& spec = ds.column(col);
    IndexDescriptor desc = IndexDescriptor::of({col});
    ann::BuildParams bp;
    bp.max_degree = params.max_degree;
    bp.ef_construction = params.ef_construction;
    bp.seed = mix_seed(params.seed, 0x626c64u, static_cast<uint64_t>(col));
    ann::GraphIndex index = ann::GraphIndex::build(sample_ds, desc, bp);

    // Held-out queries: perturbed copies of rows outside the sample when any
    // exist, otherwise of sample rows.
    std::unordered_set<uint32_t> in_sample(sample_ids.begin(), sample_ids.end());
    std::vector<uint32_t> source_rows;
    for (uint32_t r = 0; r < ds.num_rows() && source_rows.size() < 4 * 1024u * 1024u; ++r)
        if (!in_sample.count(r)) source_rows.push_back(r);
    if (source_rows.empty()) {
        source_rows.resize(ds.num_rows());
        std::iota(source_rows.begin(), source_rows.end(), 0u);
    }

    int train_k = static_cast<int>(
        std::min<int64_t>(params.train_k, static_cast<int64_t>(sample_ds.num_rows())));
    auto pick_rng = make_rng(params.seed, 0x71726f77u, static_cast<uint64_t>(col));
    std::uniform_int_distribution<size_t> pick(0, source_rows.size() - 1);

    std::vector<double> cost_x, cost_y, rec_x, rec_y;
    for (int qi = 0; qi < params.train_queries; ++qi) {
        uint32_t row = source_rows[pick(pick_rng)];
        std::vector<float> qvec(ds.row(col, row).begin(), ds.row(col, row).end());
        auto noise_rng =
            make_rng(params.seed, 0x6e6f6973u, (static_cast<uint64_t>(col) << 32) | qi);
        std::normal_distribution<double> noise(0.0, params.perturb_sigma);
        for (float& v : qvec) v = static_cast<float>(v + noise(noise_rng));
        l2_normalize(qvec);

        Query q;
        q.vid = {col};
        q.vectors[col] = qvec;
        q.k = train_k;
        q.probability = 1.0;
        oracle::GroundTruth gt = oracle::ground_truth(q, sample_ds);
        std::unordered_set<uint32_t> gt_set(gt.ids.begin(), gt.ids.end());

        for (int64_t ek : grid) {
            ann::SearchResult r = index.search(qvec, ek);
            size_t hit = 0;
            for (uint32_t id : r.ids)
                if (gt_set.count(id)) ++hit;
            double full_ek = static_cast<double>(ek) * scale_factor;
            cost_x.push_back(full_ek);
            cost_y.push_back(static_cast<double>(r.num_dist));
            rec_x.push_back(std::log(full_ek));
            rec_y.push_back(static_cast<double>(hit) / static_cast<double>(gt.ids.size()));
        }
    }

    LineFit cost_fit = fit_line(cost_x, cost_y);
    LineFit rec_fit = fit_line(rec_x, rec_y);
    ColumnModel m;
    m.column = col;
    m.dim = spec.dim;
    m.a = cost_fit.slope;
    m.b = cost_fit.intercept;
    m.r2_cost = cost_fit.r2;
    m.c = rec_fit.slope;
    m.d = rec_fit.intercept;
    m.r2_recall = rec_fit.r2;
    m.ek_min = static_cast<int64_t>(std::llround(grid.front() * scale_factor));
    m.ek_max = static_cast<int64_t>(std::llround(grid.back() * scale_factor));
    return m;
}

} // namespace

Models fit(const Dataset& ds, const FitParams& params) {
    if (ds.num_rows() == 0) throw InvalidInputError("fit: empty dataset");
    if (params.train_queries < 2) throw InvalidInputError("fit: need at least 2 train queries");

    uint32_t sample_size = effective_sample_size(ds.num_rows(), params);
    std::vector<uint32_t> sample_ids = sample_rows(ds.num_rows(), sample_size, params.seed);
    Dataset sample_ds = ds.subset(sample_ids);

    std::vector<int64_t> grid;
    for (int64_t ek : params.ek_grid)
        if (ek <= static_cast<int64_t>(sample_size)) grid.push_back(ek);
    std::sort(grid.begin(), grid.end());
    if (grid.size() < 3)
        throw TrainingError("fit: fewer than 3 usable ek grid points for sample size " +
                            std::to_string(sample_size));

    Models models;
    models.dataset_id = ds.id();
    models.num_rows = ds.num_rows();
    models.sample_size = sample_size;
    models.scale_factor = static_cast<double>(ds.num_rows()) / sample_size;
    models.seed = params.seed;
    models.sample_fraction = params.sample_fraction;
    models.train_queries = params.train_queries;
    models.train_k = params.train_k;
    models.grid = grid;
    models.storage.max_degree = params.max_degree;

    size_t ncols = ds.columns().size();
    std::vector<ColumnModel> fitted(ncols);
    int threads = std::max(1, params.threads);
    if (threads == 1 || ncols <= 1) {
        for (size_t i = 0; i < ncols; ++i)
            fitted[i] = fit_column(ds, sample_ds, sample_ids, static_cast<int>(i) + 1, grid,
                                   models.scale_factor, params);
    } else {
        std::atomic<size_t> next{0};
        auto worker = [&] {
            while (true) {
                size_t i = next.fetch_add(1);
                if (i >= ncols) break;
                fitted[i] = fit_column(ds, sample_ds, sample_ids, static_cast<int>(i) + 1, grid,
                                       models.scale_factor, params);
            }
        };
        std::vector<std::thread> pool;
        for (int t = 0; t < std::min<int>(threads, static_cast<int>(ncols)); ++t)
            pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (auto& m : fitted) models.columns[m.column] = m;
    return models;
}

namespace {

/// Averages coefficients over the index's constituent columns.
void averaged(const Models& m, const IndexDescriptor& x, double& a, double& b, double& c,
              double& d) {
    a = b = c = d = 0.0;
    for (int col : x.vid) {
        const ColumnModel& cm = m.column(col);
        a += cm.a;
        b += cm.b;
        c += cm.c;
        d += cm.d;
    }
    double n = static_cast<double>(x.vid.size());
    a /= n;
    b /= n;
    c /= n;
    d /= n;
}

int index_dim(const Models& m, const IndexDescriptor& x) {
    int dim = 0;
    for (int col : x.vid) dim += m.column(col).dim;
    return dim;
}

} // namespace

double est_num_dist(const Models& m, const IndexDescriptor& x, int64_t ek) {
    if (ek < 0) throw InvalidInputError("est_num_dist: negative ek");
    double a, b, c, d;
    averaged(m, x, a, b, c, d);
    double pred = a * static_cast<double>(ek) + b;
    return std::clamp(pred, 1.0, static_cast<double>(m.num_rows));
}

double est_cost_idx(const Models& m, const IndexDescriptor& x, int64_t ek) {
    return static_cast<double>(index_dim(m, x)) * est_num_dist(m, x, ek);
}

double est_recall(const Models& m, const IndexDescriptor& x, int64_t ek) {
    if (ek < 1) throw InvalidInputError("est_recall: ek must be >= 1");
    double a, b, c, d;
    averaged(m, x, a, b, c, d);
    double pred = c * std::log(static_cast<double>(ek)) + d;
    return std::clamp(pred, 0.0, 1.0);
}

int64_t full_scale_ek(const Models& m, int64_t sample_rank) {
    if (sample_rank < 0) throw InvalidInputError("full_scale_ek: negative rank");
    if (sample_rank == 0) return 0;
    auto ek = static_cast<int64_t>(std::llround(static_cast<double>(sample_rank) * m.scale_factor));
    return std::clamp<int64_t>(ek, 1, static_cast<int64_t>(m.num_rows));
}

int64_t inflate_ek(const Models& m, const IndexDescriptor& x, int64_t ek) {
    if (ek == 0) return 0;
    double r = std::max(est_recall(m, x, ek), 0.1);
    auto inflated = static_cast<int64_t>(std::ceil(static_cast<double>(ek) / r));
    return std::clamp<int64_t>(inflated, 1, static_cast<int64_t>(m.num_rows));
}

double est_storage(const Models& m, const Configuration& conf, StorageUnit unit) {
    if (unit == StorageUnit::IndexCount) return static_cast<double>(conf.indexes.size());
    double total = 0.0;
    for (const IndexDescriptor& x : conf.indexes) {
        double per_row = static_cast<double>(m.storage.max_degree) * m.storage.bytes_per_edge +
                         static_cast<double>(index_dim(m, x)) * m.storage.bytes_per_float;
        total += static_cast<double>(m.num_rows) * per_row;
    }
    return total;
}

} // namespace mvtune::est
