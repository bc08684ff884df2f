#include "mvtune/planner.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

#include "mvtune/errors.hpp"

namespace mvtune::planner {

namespace {

constexpr double kCoverEps = 1e-9;

void check_choices(const std::vector<IndexChoices>& X, int k) {
    if (X.empty()) throw InvalidInputError("planning: no indexes");
    for (const auto& xc : X) {
        if (static_cast<int>(xc.entries.size()) != k + 1 ||
            xc.exec_ek.size() != xc.entries.size() || xc.cost.size() != xc.entries.size())
            throw InvalidInputError("planning: choice table must have k+1 aligned entries");
        if (xc.entries[0].rank != 0 || xc.entries[0].item != -1)
            throw InvalidInputError("planning: entry 0 must be the rank-0 sentinel");
        if (xc.cost[0] != 0.0 || xc.exec_ek[0] != 0)
            throw InvalidInputError("planning: the sentinel entry must be free");
        for (size_t t = 1; t < xc.entries.size(); ++t) {
            if (xc.entries[t].rank <= xc.entries[t - 1].rank)
                throw InvalidInputError("planning: ranks must be strictly increasing");
            if (xc.entries[t].item < 0 || xc.entries[t].item >= k)
                throw InvalidInputError("planning: entry item out of range");
            if (xc.cost[t] < xc.cost[t - 1] || xc.exec_ek[t] < xc.exec_ek[t - 1])
                throw Error(ErrorKind::Internal,
                            "planning: cost and exec_ek must be non-decreasing");
        }
    }
}

/// Tie rule shared by both optimizers: cheapest, then fewest used indexes,
/// then lexicographically smallest executed-depth vector.
bool candidate_better(const std::vector<IndexChoices>& X, double cost_a,
                      const std::vector<int>& pos_a, double cost_b,
                      const std::vector<int>& pos_b) {
    if (cost_a != cost_b) return cost_a < cost_b;
    int used_a = 0, used_b = 0;
    for (int p : pos_a) used_a += (p > 0);
    for (int p : pos_b) used_b += (p > 0);
    if (used_a != used_b) return used_a < used_b;
    for (size_t i = 0; i < pos_a.size(); ++i) {
        int64_t ea = X[i].exec_ek[pos_a[i]];
        int64_t eb = X[i].exec_ek[pos_b[i]];
        if (ea != eb) return ea < eb;
    }
    return false;
}

} // namespace

std::vector<IndexDescriptor> candidate_indexes(const Query& q, const Configuration& conf,
                                               int di) {
    if (di < 0) throw InvalidInputError("candidate_indexes: di must be >= 0");
    std::vector<IndexDescriptor> out;
    auto min_width = static_cast<int>(q.vid.size()) - di;
    for (const IndexDescriptor& x : conf.indexes) {
        if (!x.covers_subset_of(q.vid)) continue;
        if (static_cast<int>(x.vid.size()) < min_width) continue;
        out.push_back(x);
    }
    return out;
}

std::vector<RelevantEk> relevant_ek(const Query& q, const std::vector<IndexDescriptor>& X,
                                    const oracle::GroundTruth& gt, const Dataset& ds) {
    oracle::RankTable table = oracle::rank_table(q, gt, X, ds);
    std::vector<RelevantEk> out;
    out.reserve(X.size());
    for (size_t i = 0; i < X.size(); ++i) {
        RelevantEk rel;
        rel.index = X[i];
        rel.entries.push_back({0, -1});
        for (size_t j = 0; j < table.ranks[i].size(); ++j)
            rel.entries.push_back({table.ranks[i][j], static_cast<int>(j)});
        std::sort(rel.entries.begin() + 1, rel.entries.end(),
                  [](const RelEntry& a, const RelEntry& b) { return a.rank < b.rank; });
        out.push_back(std::move(rel));
    }
    return out;
}

PlanOutcome plan_search(const std::vector<IndexChoices>& X, int k, double theta) {
    if (X.size() > 3)
        throw InvalidInputError("plan_search handles at most 3 indexes");
    check_choices(X, k);
    const double need = theta * k;

    PlanOutcome best;
    std::vector<int> best_pos;
    auto consider = [&](const std::vector<int>& pos, double cost, int covered) {
        if (static_cast<double>(covered) + kCoverEps < need) return;
        if (!best.feasible || candidate_better(X, cost, pos, best.cost, best_pos)) {
            best.feasible = true;
            best.cost = cost;
            best.covered = covered;
            best_pos = pos;
        }
    };

    if (X.size() == 1) {
        // Coverage grows one item per entry; take the shallowest feasible depth.
        for (int t = 0; t <= k; ++t) consider({t}, X[0].cost[t], t);
    } else if (X.size() == 2) {
        const auto& A = X[0];
        const auto& B = X[1];
        std::vector<char> in_a(k, 0), in_b(k, 1);
        // s starts at full depth for B and only ever moves left as A deepens.
        int s = k;
        int uni = k;
        std::vector<int> pos(2);
        for (int t = 0; t <= k; ++t) {
            if (t > 0) {
                int item = A.entries[t].item;
                in_a[item] = 1;
                if (!in_b[item]) ++uni;
            }
            while (s >= 1) {
                int item = B.entries[s].item;
                int next_uni = uni - (in_a[item] ? 0 : 1);
                if (static_cast<double>(next_uni) + kCoverEps < need) break;
                in_b[item] = 0;
                uni = next_uni;
                --s;
            }
            pos[0] = t;
            pos[1] = s;
            consider(pos, A.cost[t] + B.cost[s], uni);
        }
    } else {
        const auto& A = X[0];
        const auto& B = X[1];
        const auto& C = X[2];
        std::vector<char> in_a(k, 0);
        std::vector<char> in_b(k), in_c(k);
        std::vector<int> pos(3);
        for (int t1 = 0; t1 <= k; ++t1) {
            if (t1 > 0) in_a[A.entries[t1].item] = 1;
            std::fill(in_b.begin(), in_b.end(), 0);
            std::fill(in_c.begin(), in_c.end(), 1);
            int covered_a = t1;
            int uni = k; // A(t1) ∪ B(0) ∪ C(k) covers everything C does: all k
            int s = k;
            for (int t2 = 0; t2 <= k; ++t2) {
                if (t2 > 0) {
                    int item = B.entries[t2].item;
                    in_b[item] = 1;
                    if (!in_a[item] && !in_c[item]) ++uni;
                }
                while (s >= 1) {
                    int item = C.entries[s].item;
                    int next_uni = uni - ((in_a[item] || in_b[item]) ? 0 : 1);
                    if (static_cast<double>(next_uni) + kCoverEps < need) break;
                    in_c[item] = 0;
                    uni = next_uni;
                    --s;
                }
                pos[0] = t1;
                pos[1] = t2;
                pos[2] = s;
                consider(pos, A.cost[t1] + B.cost[t2] + C.cost[s], uni);
            }
            (void)covered_a;
        }
    }

    if (best.feasible) best.pos = best_pos;
    return best;
}

PlanOutcome plan_dp_single(const std::vector<IndexChoices>& X, const std::vector<int>& items,
                           double theta, DpStats* stats) {
    if (items.empty()) throw InvalidInputError("plan_dp: empty item sample");
    if (items.size() > 16)
        throw InvalidInputError("plan_dp: sampled item count must be <= 16");
    const int kp = static_cast<int>(items.size());
    const uint32_t full = (1u << kp) - 1;
    const size_t nx = X.size();
    const double need = theta * kp;

    // Position of each sampled item in every index's entry list.
    std::vector<std::vector<int>> item_pos(nx, std::vector<int>(kp, 0));
    for (size_t i = 0; i < nx; ++i) {
        for (int j = 0; j < kp; ++j) {
            int target = items[j];
            int found = -1;
            for (size_t t = 1; t < X[i].entries.size(); ++t) {
                if (X[i].entries[t].item == target) {
                    found = static_cast<int>(t);
                    break;
                }
            }
            if (found < 0) throw InvalidInputError("plan_dp: item missing from entry list");
            item_pos[i][j] = found;
        }
    }
    // pos_mask[i][m]: deepest entry needed for index i to cover subset m.
    std::vector<std::vector<int>> pos_mask(nx, std::vector<int>(full + 1, 0));
    for (size_t i = 0; i < nx; ++i) {
        for (uint32_t m = 1; m <= full; ++m) {
            uint32_t low = m & (m - 1);
            int j = std::countr_zero(m);
            pos_mask[i][m] = std::max(pos_mask[i][low], item_pos[i][j]);
        }
    }

    std::vector<double> prev(full + 1), cur(full + 1);
    std::vector<std::vector<uint32_t>> choice(nx, std::vector<uint32_t>(full + 1, 0));
    if (stats) stats->table_entries = nx * static_cast<size_t>(full + 1);

    for (uint32_t m = 0; m <= full; ++m) {
        prev[m] = X[0].cost[pos_mask[0][m]];
        choice[0][m] = m;
    }
    for (size_t i = 1; i < nx; ++i) {
        for (uint32_t cover = 0; cover <= full; ++cover) {
            double best = std::numeric_limits<double>::infinity();
            uint32_t best_sub = 0;
            uint32_t sub = cover;
            while (true) {
                double c = prev[cover ^ sub] + X[i].cost[pos_mask[i][sub]];
                if (c < best) {
                    best = c;
                    best_sub = sub;
                }
                if (sub == 0) break;
                sub = (sub - 1) & cover;
            }
            cur[cover] = best;
            choice[i][cover] = best_sub;
        }
        std::swap(prev, cur);
    }

    PlanOutcome best;
    std::vector<int> best_pos;
    for (uint32_t cover = 0; cover <= full; ++cover) {
        int covered = std::popcount(cover);
        if (static_cast<double>(covered) + kCoverEps < need) continue;
        double cost = prev[cover];
        // Reconstruct to apply the shared tie rule.
        std::vector<int> pos(nx, 0);
        uint32_t rest = cover;
        for (size_t i = nx; i-- > 0;) {
            uint32_t sub = choice[i][rest];
            pos[i] = pos_mask[i][sub];
            rest ^= sub;
        }
        if (!best.feasible || candidate_better(X, cost, pos, best.cost, best_pos)) {
            best.feasible = true;
            best.cost = cost;
            best.covered = covered;
            best_pos = pos;
        }
    }
    if (best.feasible) best.pos = best_pos;
    return best;
}

PlanOutcome plan_dp(const std::vector<IndexChoices>& X, int k, int k_prime, double theta,
                    int num_samples, uint64_t seed, DpStats* stats) {
    check_choices(X, k);
    if (k_prime < 1) throw InvalidInputError("plan_dp: k_prime must be >= 1");
    if (num_samples < 1) throw InvalidInputError("plan_dp: num_samples must be >= 1");
    int kp = std::min(k_prime, k);
    if (kp > 16) throw InvalidInputError("plan_dp: k_prime must be <= 16");

    std::vector<int> all(k);
    for (int j = 0; j < k; ++j) all[j] = j;

    std::vector<std::vector<int>> samples;
    if (kp == k) {
        samples.push_back(all);
    } else {
        auto rng = make_rng(seed, 0x64702du);
        for (int s = 0; s < num_samples; ++s) {
            std::vector<int> items;
            items.reserve(kp);
            std::sample(all.begin(), all.end(), std::back_inserter(items), kp, rng);
            if (std::find(samples.begin(), samples.end(), items) == samples.end())
                samples.push_back(std::move(items));
        }
    }

    PlanOutcome best;
    for (const auto& items : samples) {
        PlanOutcome r = plan_dp_single(X, items, theta, stats);
        if (!r.feasible) continue;
        if (!best.feasible || candidate_better(X, r.cost, r.pos, best.cost, best.pos))
            best = r;
    }
    return best;
}

Planner::Planner(const Dataset& full, const est::Models& models, PlannerParams params)
    : models_(models), params_(params) {
    if (models_.num_rows != full.num_rows())
        throw InvalidInputError("planner: model was fitted on a different row count");
    if (!models_.dataset_id.empty() && !full.id().empty() && models_.dataset_id != full.id())
        log_warn("planner: model dataset id '" + models_.dataset_id +
                 "' does not match dataset '" + full.id() + "'");
    if (params_.theta <= 0.0 || params_.theta > 1.0)
        throw InvalidInputError("planner: recall threshold must be in (0, 1]");
    std::vector<uint32_t> ids =
        est::sample_rows(models_.num_rows, models_.sample_size, models_.seed);
    sample_ = full.subset(ids);
}

const oracle::GroundTruth& Planner::sample_gt(int q_id, const Query& q) {
    {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = gt_cache_.find(q_id);
        if (it != gt_cache_.end()) return it->second;
    }
    Query qs = q;
    qs.k = static_cast<int>(std::min<int64_t>(q.k, sample_.num_rows()));
    oracle::GroundTruth gt = oracle::ground_truth(qs, sample_);
    std::lock_guard<std::mutex> lock(mu_);
    return gt_cache_.emplace(q_id, std::move(gt)).first->second;
}

const std::vector<int64_t>& Planner::rank_list(int q_id, const Query& q,
                                               const IndexDescriptor& x) {
    auto key = std::make_pair(q_id, x.key());
    {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = rank_cache_.find(key);
        if (it != rank_cache_.end()) return it->second;
    }
    const oracle::GroundTruth& gt = sample_gt(q_id, q);
    oracle::RankTable table = oracle::rank_table(q, gt, {x}, sample_);
    std::lock_guard<std::mutex> lock(mu_);
    return rank_cache_.emplace(key, std::move(table.ranks[0])).first->second;
}

IndexChoices Planner::make_choices(const Query& q, const IndexDescriptor& x,
                                   const std::vector<int64_t>& ranks) const {
    IndexChoices xc;
    xc.index = x;
    xc.entries.push_back({0, -1});
    for (size_t j = 0; j < ranks.size(); ++j)
        xc.entries.push_back({ranks[j], static_cast<int>(j)});
    std::sort(xc.entries.begin() + 1, xc.entries.end(),
              [](const RelEntry& a, const RelEntry& b) { return a.rank < b.rank; });
    xc.exec_ek.resize(xc.entries.size());
    xc.cost.resize(xc.entries.size());
    const double qdim = q.dim();
    for (size_t t = 1; t < xc.entries.size(); ++t) {
        int64_t full = est::full_scale_ek(models_, xc.entries[t].rank);
        int64_t ek = est::inflate_ek(models_, x, full);
        // A deeper relevant rank may never execute a shallower scan.
        ek = std::max(ek, xc.exec_ek[t - 1]);
        xc.exec_ek[t] = ek;
        xc.cost[t] = est::est_cost_idx(models_, x, ek) + qdim * static_cast<double>(ek);
    }
    return xc;
}

QueryPlan Planner::plan(int q_id, const Query& q, const Configuration& conf) {
    std::vector<IndexDescriptor> usable = candidate_indexes(q, conf, params_.di);
    if (usable.empty())
        throw InfeasiblePlanError("no usable index for query " + std::to_string(q_id));

    std::string cache_key;
    if (params_.use_cache) {
        std::ostringstream os;
        os << q_id << '|';
        for (const auto& x : usable) os << x.key() << ';';
        cache_key = os.str();
        std::lock_guard<std::mutex> lock(mu_);
        auto it = plan_cache_.find(cache_key);
        if (it != plan_cache_.end()) return it->second;
    }

    const oracle::GroundTruth& gt = sample_gt(q_id, q);
    const int k = static_cast<int>(gt.ids.size());
    std::vector<IndexChoices> X;
    X.reserve(usable.size());
    for (const auto& x : usable) X.push_back(make_choices(q, x, rank_list(q_id, q, x)));

    PlanOutcome out;
    std::string algorithm;
    if (X.size() <= 3) {
        out = plan_search(X, k, params_.theta);
        algorithm = "search";
    } else {
        out = plan_dp(X, k, params_.k_prime, params_.theta, params_.dp_samples,
                      mix_seed(params_.seed, 0x6470u, static_cast<uint64_t>(q_id)));
        algorithm = "dp";
    }
    if (!out.feasible)
        throw InfeasiblePlanError("query " + std::to_string(q_id) +
                                  ": no plan reaches the recall threshold");

    QueryPlan plan;
    plan.algorithm = algorithm;
    plan.estimated_cost = out.cost;
    int denom = (algorithm == "dp") ? std::min(params_.k_prime, k) : k;
    plan.estimated_recall = static_cast<double>(out.covered) / std::max(denom, 1);
    for (size_t i = 0; i < X.size(); ++i) {
        if (out.pos[i] == 0) continue;
        plan.assignments.push_back({X[i].index, X[i].exec_ek[out.pos[i]]});
    }
    if (plan.assignments.empty())
        throw Error(ErrorKind::Internal, "planner produced an empty plan");

    if (params_.use_cache) {
        std::lock_guard<std::mutex> lock(mu_);
        plan_cache_.emplace(cache_key, plan);
    }
    return plan;
}

} // namespace mvtune::planner
