#include "mvtune/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <future>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mvtune/errors.hpp"
#include "mvtune/estimators.hpp"
#include "mvtune/graph_index.hpp"
#include "mvtune/io.hpp"
#include "mvtune/oracle.hpp"
#include "mvtune/planner.hpp"
#include "mvtune/searcher.hpp"
#include "mvtune/synth.hpp"

using nlohmann::json;

namespace mvtune::cmd {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt_seconds(double s) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << s << "s";
    return os.str();
}

json config_to_json(const Configuration& c) {
    json arr = json::array();
    for (const IndexDescriptor& x : c.indexes) arr.push_back(x.vid);
    return arr;
}

Configuration config_from_json(const json& arr) {
    if (!arr.is_array() || arr.empty())
        throw InvalidInputError("configuration: expected a non-empty array of column lists");
    std::vector<IndexDescriptor> xs;
    for (const json& v : arr) xs.push_back(IndexDescriptor::of(v.get<std::vector<int>>()));
    return Configuration::of(std::move(xs));
}

Configuration parse_config_key(const std::string& s) {
    std::vector<IndexDescriptor> xs;
    std::stringstream list(s);
    std::string part;
    while (std::getline(list, part, ';')) {
        std::vector<int> cols;
        std::stringstream cs(part);
        std::string col;
        while (std::getline(cs, col, ',')) {
            try {
                cols.push_back(std::stoi(col));
            } catch (const std::exception&) {
                throw InvalidInputError("configuration '" + s + "': bad column id '" + col +
                                        "'");
            }
        }
        xs.push_back(IndexDescriptor::of(std::move(cols)));
    }
    if (xs.empty()) throw InvalidInputError("configuration '" + s + "' is empty");
    return Configuration::of(std::move(xs));
}

json plan_to_json(int query, const QueryPlan& p) {
    json assignments = json::array();
    for (const PlanAssignment& a : p.assignments)
        assignments.push_back({{"vid", a.index.vid}, {"ek", a.ek}});
    return {{"query", query},
            {"algorithm", p.algorithm},
            {"est_cost", p.estimated_cost},
            {"est_recall", p.estimated_recall},
            {"assignments", std::move(assignments)}};
}

QueryPlan plan_from_json(const json& jp, int& query_out) {
    QueryPlan p;
    query_out = jp.at("query").get<int>();
    p.algorithm = jp.value("algorithm", "");
    p.estimated_cost = jp.at("est_cost").get<double>();
    p.estimated_recall = jp.at("est_recall").get<double>();
    for (const json& ja : jp.at("assignments")) {
        PlanAssignment a;
        a.index = IndexDescriptor::of(ja.at("vid").get<std::vector<int>>());
        a.ek = ja.at("ek").get<int64_t>();
        p.assignments.push_back(std::move(a));
    }
    if (p.assignments.empty()) throw InvalidInputError("plan with no assignments");
    return p;
}

json result_to_json(const tuner::TunerResult& r, bool with_search_stats) {
    json plans = json::array();
    for (const auto& [q, plan] : r.plans) plans.push_back(plan_to_json(q, plan));
    json out = {{"config", config_to_json(r.config)},
                {"feasible", r.feasible},
                {"workload_cost", r.workload_cost},
                {"storage_used", r.storage_used},
                {"plans", std::move(plans)}};
    if (with_search_stats) {
        json trace = json::array();
        for (const tuner::IterationTrace& t : r.trace)
            trace.push_back({{"iteration", t.iteration},
                             {"best_config", t.best_config},
                             {"best_cost", t.best_cost},
                             {"beam_size", t.beam_size},
                             {"expansions", t.expansions}});
        out["trace"] = std::move(trace);
        out["seeds_evaluated"] = r.seeds_evaluated;
        out["configs_evaluated"] = r.configs_evaluated;
        out["iterations"] = r.iterations;
    }
    return out;
}

json parse_report(const std::string& path) {
    json doc;
    try {
        doc = json::parse(io::read_text(path));
    } catch (const json::parse_error& e) {
        throw InvalidInputError(path + ": " + e.what());
    }
    if (doc.value("type", "") != "mvtune-report")
        throw InvalidInputError(path + ": not a tuning report");
    return doc;
}

Workload apply_overrides(Workload w, double recall_override, double budget_override) {
    if (std::isnan(recall_override) && std::isnan(budget_override)) return w;
    const double theta = std::isnan(recall_override) ? w.recall_threshold() : recall_override;
    const double budget = std::isnan(budget_override) ? w.storage_budget() : budget_override;
    return Workload(w.queries(), theta, budget, w.storage_unit());
}

std::string csv_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

} // namespace

int cmd_gen(const GenOptions& opt) {
    if (opt.dataset_dir.empty()) throw InvalidInputError("gen: dataset directory required");
    const auto t0 = Clock::now();

    synth::DatasetParams dp;
    dp.num_rows = opt.rows;
    for (size_t i = 0; i < opt.dims.size(); ++i)
        dp.columns.push_back({static_cast<int>(i) + 1, opt.dims[i],
                              "col" + std::to_string(i + 1)});
    dp.num_clusters = opt.clusters;
    dp.noise = opt.noise;
    dp.seed = opt.seed;
    dp.dataset_id = opt.dataset_id;

    Dataset ds = synth::make_dataset(dp);
    io::save_dataset(ds, opt.dataset_dir);
    std::cout << "dataset " << ds.id() << ": " << ds.num_rows() << " rows, "
              << ds.columns().size() << " columns -> " << opt.dataset_dir << "\n";

    if (!opt.workload_out.empty()) {
        synth::WorkloadParams wp;
        wp.num_queries = opt.num_queries;
        wp.k = opt.k;
        wp.recall_threshold = opt.recall_threshold;
        wp.storage_budget = opt.storage_budget;
        wp.storage_unit = storage_unit_from_string(opt.storage_unit);
        wp.seed = opt.seed;
        wp.sigma = opt.sigma;
        wp.column_probability = opt.column_probability;
        synth::GeneratedWorkload gw = synth::gen_workload(ds, wp);
        io::save_workload(opt.workload_out, gw.specs, wp.recall_threshold, wp.storage_budget,
                          wp.storage_unit);
        std::cout << "workload: " << gw.specs.size() << " queries, k=" << wp.k << " -> "
                  << opt.workload_out << "\n";
    }
    std::cout << "gen finished in " << fmt_seconds(seconds_since(t0)) << "\n";
    return 0;
}

int cmd_train(const TrainOptions& opt) {
    if (opt.dataset_dir.empty() || opt.models_out.empty())
        throw InvalidInputError("train: dataset directory and output path required");
    const auto t0 = Clock::now();
    Dataset ds = io::load_dataset(opt.dataset_dir);
    std::cout << "loaded " << ds.id() << " (" << ds.num_rows() << " rows) in "
              << fmt_seconds(seconds_since(t0)) << "\n";

    est::FitParams fp;
    fp.sample_fraction = opt.fraction;
    fp.min_sample = opt.min_sample;
    fp.train_queries = opt.train_queries;
    fp.train_k = opt.train_k;
    fp.perturb_sigma = opt.sigma;
    if (!opt.grid.empty()) fp.ek_grid = opt.grid;
    fp.max_degree = opt.max_degree;
    fp.ef_construction = opt.ef_construction;
    fp.seed = opt.seed;
    fp.threads = opt.threads;

    const auto t1 = Clock::now();
    est::Models m = est::fit(ds, fp);
    std::cout << "fitted " << m.columns.size() << " column models on a " << m.sample_size
              << "-row sample (scale factor " << m.scale_factor << ") in "
              << fmt_seconds(seconds_since(t1)) << "\n";
    for (const auto& [id, c] : m.columns) {
        std::cout << "  column " << id << ": numDist ~ " << c.a << "*ek + " << c.b
                  << " (r2 " << c.r2_cost << "), recall ~ clamp(" << c.c << "*ln ek + " << c.d
                  << ") (r2 " << c.r2_recall << ")\n";
    }
    io::save_models(m, opt.models_out);
    std::cout << "models -> " << opt.models_out << "\n";
    return 0;
}

int cmd_tune(const TuneOptions& opt) {
    if (opt.dataset_dir.empty() || opt.workload_path.empty() || opt.models_path.empty() ||
        opt.report_out.empty())
        throw InvalidInputError("tune: dataset, workload, models, and output paths required");
    const auto t0 = Clock::now();
    Dataset ds = io::load_dataset(opt.dataset_dir);
    est::Models models = io::load_models(opt.models_path);
    Workload w = apply_overrides(io::load_workload(opt.workload_path, ds),
                                 opt.recall_override, opt.budget_override);
    std::cout << "loaded dataset, models, and " << w.queries().size() << " queries in "
              << fmt_seconds(seconds_since(t0)) << "\n";

    tuner::SearchParams sp;
    sp.di = opt.di;
    sp.se = opt.se;
    sp.beam_width = opt.beam_width;
    sp.improvement_threshold = opt.improvement_threshold;
    sp.max_iterations = opt.max_iterations;
    sp.k_prime = opt.k_prime;
    sp.dp_samples = opt.dp_samples;
    sp.seed = opt.seed;
    sp.use_cache = !opt.no_cache;

    const auto t1 = Clock::now();
    tuner::TunerResult tuned = tuner::tune(w, ds, models, sp);
    const double tune_s = seconds_since(t1);
    tuner::TunerResult per_column = tuner::baseline_per_column(w, ds, models, sp);
    tuner::TunerResult per_query = tuner::baseline_per_query(w, ds, models, sp);

    json report;
    report["type"] = "mvtune-report";
    report["version"] = 1;
    report["dataset_id"] = ds.id();
    report["workload"] = {{"num_queries", w.queries().size()},
                          {"recall_threshold", w.recall_threshold()},
                          {"storage_budget", w.storage_budget()},
                          {"storage_unit", to_string(w.storage_unit())}};
    report["params"] = {{"di", sp.di},
                        {"se", sp.se},
                        {"beam_width", sp.beam_width},
                        {"improvement_threshold", sp.improvement_threshold},
                        {"max_iterations", sp.max_iterations},
                        {"k_prime", sp.k_prime},
                        {"dp_samples", sp.dp_samples},
                        {"seed", sp.seed},
                        {"max_degree", models.storage.max_degree}};
    report["tuned"] = result_to_json(tuned, true);
    report["per_column"] = result_to_json(per_column, false);
    report["per_query"] = result_to_json(per_query, false);
    io::write_text_atomic(opt.report_out, report.dump(2) + "\n");

    std::cout << "tuned configuration " << tuned.config.key() << " (cost "
              << tuned.workload_cost << ", storage " << tuned.storage_used << ") in "
              << fmt_seconds(tune_s) << " after " << tuned.configs_evaluated
              << " configurations\n";
    std::cout << "per-column baseline cost " << per_column.workload_cost
              << ", per-query baseline cost " << per_query.workload_cost << "\n";
    std::cout << "report -> " << opt.report_out << "\n";
    return 0;
}

int cmd_plan(const PlanOptions& opt) {
    if (opt.dataset_dir.empty() || opt.workload_path.empty() || opt.models_path.empty() ||
        opt.plans_out.empty())
        throw InvalidInputError("plan: dataset, workload, models, and output paths required");
    if (opt.config.empty() && opt.report_path.empty())
        throw InvalidInputError("plan: pass a configuration or a report to take it from");

    Dataset ds = io::load_dataset(opt.dataset_dir);
    est::Models models = io::load_models(opt.models_path);
    Workload w = io::load_workload(opt.workload_path, ds);

    Configuration conf;
    if (!opt.config.empty()) {
        conf = parse_config_key(opt.config);
    } else {
        const json report = parse_report(opt.report_path);
        if (!report.contains(opt.section))
            throw InvalidInputError(opt.report_path + ": no section '" + opt.section + "'");
        conf = config_from_json(report.at(opt.section).at("config"));
    }

    planner::PlannerParams pp;
    pp.di = opt.di;
    pp.k_prime = opt.k_prime;
    pp.dp_samples = opt.dp_samples;
    pp.theta = w.recall_threshold();
    pp.seed = opt.seed;
    planner::Planner planner(ds, models, pp);

    json plans = json::array();
    double weighted_cost = 0.0;
    for (size_t i = 0; i < w.queries().size(); ++i) {
        const Query& q = w.queries()[i];
        QueryPlan p = planner.plan(static_cast<int>(i), q, conf);
        weighted_cost += q.probability * p.estimated_cost;
        plans.push_back(plan_to_json(static_cast<int>(i), p));
    }

    json doc;
    doc["type"] = "mvtune-plans";
    doc["version"] = 1;
    doc["dataset_id"] = ds.id();
    doc["config"] = config_to_json(conf);
    doc["plans"] = std::move(plans);
    io::write_text_atomic(opt.plans_out, doc.dump(2) + "\n");
    std::cout << "planned " << w.queries().size() << " queries under " << conf.key()
              << " (weighted cost " << weighted_cost << ") -> " << opt.plans_out << "\n";
    return 0;
}

namespace {

struct SectionEval {
    std::string name;
    Configuration config;
    std::map<int, QueryPlan> plans;
    json rows = json::array();
    double weighted_est = 0.0;
    double weighted_measured = 0.0;
    double min_recall = 1.0;
    double sum_recall = 0.0;
};

} // namespace

int cmd_eval(const EvalOptions& opt) {
    if (opt.dataset_dir.empty() || opt.workload_path.empty() || opt.report_path.empty())
        throw InvalidInputError("eval: dataset, workload, and report paths required");
    if (opt.format != "json" && opt.format != "csv")
        throw InvalidInputError("eval: format must be json or csv");

    const auto t0 = Clock::now();
    Dataset ds = io::load_dataset(opt.dataset_dir);
    Workload w = io::load_workload(opt.workload_path, ds);
    const json report = parse_report(opt.report_path);
    std::cout << "loaded inputs in " << fmt_seconds(seconds_since(t0)) << "\n";

    std::vector<SectionEval> sections;
    for (const char* name : {"tuned", "per_column", "per_query"}) {
        if (!report.contains(name)) continue;
        SectionEval se;
        se.name = name;
        se.config = config_from_json(report.at(name).at("config"));
        for (const json& jp : report.at(name).at("plans")) {
            int q = 0;
            QueryPlan p = plan_from_json(jp, q);
            if (q < 0 || static_cast<size_t>(q) >= w.queries().size())
                throw InvalidInputError("report references query " + std::to_string(q) +
                                        " outside the workload");
            se.plans.emplace(q, std::move(p));
        }
        if (se.plans.size() != w.queries().size())
            throw InvalidInputError(std::string("report section '") + name +
                                    "' does not cover every query");
        sections.push_back(std::move(se));
    }
    if (sections.empty()) throw InvalidInputError("report has no plan sections to evaluate");

    int max_degree = opt.max_degree;
    if (max_degree <= 0 && report.contains("params"))
        max_degree = report.at("params").value("max_degree", 16);
    if (max_degree <= 0) max_degree = 16;

    std::set<IndexDescriptor> to_build;
    for (const SectionEval& se : sections)
        for (const IndexDescriptor& x : se.config.indexes) to_build.insert(x);

    ann::BuildParams bp;
    bp.max_degree = max_degree;
    bp.ef_construction = opt.ef_construction;
    bp.seed = opt.seed;

    std::map<IndexDescriptor, ann::GraphIndex> built;
    const auto tb = Clock::now();
    if (opt.threads > 1) {
        std::vector<std::pair<IndexDescriptor, std::future<ann::GraphIndex>>> futs;
        for (const IndexDescriptor& x : to_build)
            futs.emplace_back(x, std::async(std::launch::async, [&ds, x, bp] {
                                  return ann::GraphIndex::build(ds, x, bp);
                              }));
        for (auto& [x, fut] : futs) built.emplace(x, fut.get());
    } else {
        for (const IndexDescriptor& x : to_build) {
            const auto ti = Clock::now();
            built.emplace(x, ann::GraphIndex::build(ds, x, bp));
            std::cout << "built index [" << x.key() << "] in "
                      << fmt_seconds(seconds_since(ti)) << "\n";
        }
    }
    std::cout << "built " << built.size() << " indexes in " << fmt_seconds(seconds_since(tb))
              << "\n";

    const auto tg = Clock::now();
    std::vector<oracle::GroundTruth> gts;
    gts.reserve(w.queries().size());
    for (const Query& q : w.queries()) gts.push_back(oracle::ground_truth(q, ds));
    std::cout << "computed exact baselines for " << gts.size() << " queries in "
              << fmt_seconds(seconds_since(tg)) << "\n";

    std::map<IndexDescriptor, const ann::GraphIndex*> built_ptrs;
    for (const auto& [x, gi] : built) built_ptrs.emplace(x, &gi);

    for (SectionEval& se : sections) {
        const auto ts = Clock::now();
        for (size_t i = 0; i < w.queries().size(); ++i) {
            const Query& q = w.queries()[i];
            const QueryPlan& plan = se.plans.at(static_cast<int>(i));
            ann::ExecutionResult ex = ann::execute_plan(q, plan, built_ptrs, ds);
            const double recall = oracle::exact_recall(gts[i], {ex.top_ids});
            se.weighted_est += q.probability * plan.estimated_cost;
            se.weighted_measured += q.probability * ex.measured_cost;
            se.min_recall = std::min(se.min_recall, recall);
            se.sum_recall += recall;
            se.rows.push_back({{"query", static_cast<int>(i)},
                               {"est_cost", plan.estimated_cost},
                               {"measured_cost", ex.measured_cost},
                               {"est_recall", plan.estimated_recall},
                               {"measured_recall", recall},
                               {"candidates", ex.candidate_multiset_size},
                               {"total_ek", plan.total_ek()}});
        }
        std::cout << "section " << se.name << ": executed " << w.queries().size()
                  << " queries in " << fmt_seconds(seconds_since(ts)) << "\n";
    }

    json doc;
    doc["type"] = "mvtune-eval";
    doc["version"] = 1;
    doc["dataset_id"] = ds.id();
    json jsections;
    const SectionEval* tuned = nullptr;
    const SectionEval* per_column = nullptr;
    for (SectionEval& se : sections) {
        if (se.name == "tuned") tuned = &se;
        if (se.name == "per_column") per_column = &se;
        jsections[se.name] = {{"config", config_to_json(se.config)},
                              {"queries", se.rows},
                              {"weighted_est_cost", se.weighted_est},
                              {"weighted_measured_cost", se.weighted_measured},
                              {"min_recall", se.min_recall},
                              {"mean_recall", se.sum_recall / w.queries().size()}};
    }
    doc["sections"] = std::move(jsections);
    if (tuned && per_column && tuned->weighted_measured > 0.0 && tuned->weighted_est > 0.0) {
        doc["speedup_vs_per_column"] = {
            {"estimated", per_column->weighted_est / tuned->weighted_est},
            {"measured", per_column->weighted_measured / tuned->weighted_measured}};
    }

    for (const SectionEval& se : sections) {
        std::cout << se.name << ": measured cost " << se.weighted_measured << " (est "
                  << se.weighted_est << "), min recall " << se.min_recall << ", mean recall "
                  << se.sum_recall / w.queries().size() << "\n";
    }
    if (doc.contains("speedup_vs_per_column"))
        std::cout << "speedup vs per-column: measured "
                  << doc["speedup_vs_per_column"]["measured"].get<double>() << "x, estimated "
                  << doc["speedup_vs_per_column"]["estimated"].get<double>() << "x\n";

    if (!opt.out.empty()) {
        if (opt.format == "json") {
            io::write_text_atomic(opt.out, doc.dump(2) + "\n");
        } else {
            std::ostringstream csv;
            csv << "section,query,est_cost,measured_cost,est_recall,measured_recall\n";
            for (const SectionEval& se : sections)
                for (const json& row : se.rows)
                    csv << se.name << ',' << row["query"].get<int>() << ','
                        << csv_double(row["est_cost"].get<double>()) << ','
                        << csv_double(row["measured_cost"].get<double>()) << ','
                        << csv_double(row["est_recall"].get<double>()) << ','
                        << csv_double(row["measured_recall"].get<double>()) << '\n';
            io::write_text_atomic(opt.out, csv.str());
        }
        std::cout << "evaluation -> " << opt.out << "\n";
    }
    return 0;
}

int cmd_sweep(const SweepOptions& opt) {
    if (opt.dataset_dir.empty() || opt.workload_path.empty() || opt.models_path.empty() ||
        opt.out.empty())
        throw InvalidInputError("sweep: dataset, workload, models, and output paths required");
    if (opt.budgets.empty()) throw InvalidInputError("sweep: at least one budget");
    if (opt.format != "json" && opt.format != "csv")
        throw InvalidInputError("sweep: format must be json or csv");

    Dataset ds = io::load_dataset(opt.dataset_dir);
    est::Models models = io::load_models(opt.models_path);
    Workload base = io::load_workload(opt.workload_path, ds);

    std::vector<double> budgets = opt.budgets;
    std::sort(budgets.begin(), budgets.end());
    budgets.erase(std::unique(budgets.begin(), budgets.end()), budgets.end());

    tuner::SearchParams sp;
    sp.di = opt.di;
    sp.se = opt.se;
    sp.beam_width = opt.beam_width;
    sp.improvement_threshold = opt.improvement_threshold;
    sp.max_iterations = opt.max_iterations;
    sp.k_prime = opt.k_prime;
    sp.dp_samples = opt.dp_samples;
    sp.seed = opt.seed;
    sp.use_cache = !opt.no_cache;

    json rows = json::array();
    std::vector<Configuration> carry;
    int feasible_count = 0;
    double prev_cost = -1.0;
    for (double budget : budgets) {
        const auto tb = Clock::now();
        Workload w(base.queries(), base.recall_threshold(), budget, base.storage_unit());
        json row;
        row["budget"] = budget;
        try {
            // The previous budget's winner seeds this round: anything feasible
            // under a smaller budget stays feasible, so costs never regress.
            tuner::TunerResult r = tuner::tune(w, ds, models, sp, carry);
            row["feasible"] = true;
            row["workload_cost"] = r.workload_cost;
            row["storage_used"] = r.storage_used;
            row["config"] = config_to_json(r.config);
            if (prev_cost >= 0.0 && r.workload_cost > prev_cost)
                log_warn("sweep: cost rose from " + std::to_string(prev_cost) + " to " +
                         std::to_string(r.workload_cost));
            prev_cost = r.workload_cost;
            carry = {r.config};
            ++feasible_count;
            std::cout << "budget " << budget << ": cost " << r.workload_cost << " with "
                      << r.config.key() << " in " << fmt_seconds(seconds_since(tb)) << "\n";
        } catch (const InfeasibleWorkloadError& e) {
            row["feasible"] = false;
            row["error"] = e.what();
            std::cout << "budget " << budget << ": infeasible (" << e.what() << ")\n";
        }
        rows.push_back(std::move(row));
    }

    if (opt.format == "json") {
        json doc;
        doc["type"] = "mvtune-sweep";
        doc["version"] = 1;
        doc["dataset_id"] = ds.id();
        doc["storage_unit"] = to_string(base.storage_unit());
        doc["rows"] = std::move(rows);
        io::write_text_atomic(opt.out, doc.dump(2) + "\n");
    } else {
        std::ostringstream csv;
        csv << "budget,feasible,workload_cost,storage_used,config\n";
        for (const json& row : rows) {
            csv << csv_double(row["budget"].get<double>()) << ','
                << (row["feasible"].get<bool>() ? "true" : "false") << ',';
            if (row["feasible"].get<bool>()) {
                std::string key;
                const json& conf = row["config"];
                for (size_t i = 0; i < conf.size(); ++i) {
                    if (i) key += ';';
                    const auto cols = conf[i].get<std::vector<int>>();
                    for (size_t j = 0; j < cols.size(); ++j) {
                        if (j) key += ',';
                        key += std::to_string(cols[j]);
                    }
                }
                csv << csv_double(row["workload_cost"].get<double>()) << ','
                    << csv_double(row["storage_used"].get<double>()) << ",\"" << key << "\"\n";
            } else {
                csv << ",,\n";
            }
        }
        io::write_text_atomic(opt.out, csv.str());
    }
    std::cout << "sweep -> " << opt.out << "\n";

    if (feasible_count == 0)
        throw InfeasibleWorkloadError("no budget in the sweep admitted any configuration");
    return 0;
}

} // namespace mvtune::cmd
