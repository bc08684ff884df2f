#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mvtune/commands.hpp"
#include "mvtune/errors.hpp"

namespace {

int exit_code_for(const mvtune::Error& e) {
    switch (e.kind()) {
        case mvtune::ErrorKind::Infeasible: return 2;
        case mvtune::ErrorKind::InvalidInput: return 3;
        case mvtune::ErrorKind::Training: return 3;
        case mvtune::ErrorKind::Io: return 4;
        case mvtune::ErrorKind::Internal: return 1;
    }
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    using namespace mvtune::cmd;

    CLI::App app{"offline index tuning for multi-vector similarity search"};
    app.require_subcommand(1);

    uint64_t seed = 0;
    int threads = 1;
    app.add_option("--seed", seed, "seed for every random choice")->capture_default_str();
    app.add_option("--threads", threads, "worker threads where supported")
        ->capture_default_str();

    GenOptions gen;
    auto* cgen = app.add_subcommand("gen", "generate a clustered dataset and a workload");
    cgen->fallthrough();
    cgen->add_option("--dataset", gen.dataset_dir, "output dataset directory")->required();
    cgen->add_option("--workload", gen.workload_out, "output workload file");
    cgen->add_option("--rows", gen.rows, "rows per column")->capture_default_str();
    cgen->add_option("--dims", gen.dims, "per-column dimensions")->capture_default_str();
    cgen->add_option("--clusters", gen.clusters, "topic clusters")->capture_default_str();
    cgen->add_option("--noise", gen.noise, "within-cluster noise")->capture_default_str();
    cgen->add_option("--dataset-id", gen.dataset_id, "dataset id (derived when empty)");
    cgen->add_option("--queries", gen.num_queries, "workload size")->capture_default_str();
    cgen->add_option("--k", gen.k, "top-k per query")->capture_default_str();
    cgen->add_option("--recall", gen.recall_threshold, "recall threshold")
        ->capture_default_str();
    cgen->add_option("--budget", gen.storage_budget, "storage budget (negative: unlimited)")
        ->capture_default_str();
    cgen->add_option("--unit", gen.storage_unit, "storage unit: index-count or bytes")
        ->capture_default_str();
    cgen->add_option("--sigma", gen.sigma, "query perturbation")->capture_default_str();
    cgen->add_option("--column-prob", gen.column_probability,
                     "probability a query touches a column")
        ->capture_default_str();

    TrainOptions train;
    auto* ctrain = app.add_subcommand("train", "fit per-column cost and recall models");
    ctrain->fallthrough();
    ctrain->add_option("--dataset", train.dataset_dir, "dataset directory")->required();
    ctrain->add_option("--out", train.models_out, "output models file")->required();
    ctrain->add_option("--fraction", train.fraction, "sample fraction")->capture_default_str();
    ctrain->add_option("--min-sample", train.min_sample, "sample floor")->capture_default_str();
    ctrain->add_option("--train-queries", train.train_queries, "probe queries per column")
        ->capture_default_str();
    ctrain->add_option("--train-k", train.train_k, "recall reference depth")
        ->capture_default_str();
    ctrain->add_option("--sigma", train.sigma, "probe query perturbation")
        ->capture_default_str();
    ctrain->add_option("--grid", train.grid, "ek probe grid");
    ctrain->add_option("--max-degree", train.max_degree, "graph out-degree cap")
        ->capture_default_str();
    ctrain->add_option("--ef-construction", train.ef_construction, "build beam width")
        ->capture_default_str();

    TuneOptions tune;
    auto* ctune = app.add_subcommand("tune", "search for the best index configuration");
    ctune->fallthrough();
    ctune->add_option("--dataset", tune.dataset_dir, "dataset directory")->required();
    ctune->add_option("--workload", tune.workload_path, "workload file")->required();
    ctune->add_option("--models", tune.models_path, "models file")->required();
    ctune->add_option("--out", tune.report_out, "output report file")->required();
    ctune->add_option("--di", tune.di, "max columns an index may omit")->capture_default_str();
    ctune->add_option("--se", tune.se, "max indexes per seed")->capture_default_str();
    ctune->add_option("--beam-width", tune.beam_width, "beam width")->capture_default_str();
    ctune->add_option("--improvement", tune.improvement_threshold,
                      "relative-improvement stop (negative: never stop early)")
        ->capture_default_str();
    ctune->add_option("--max-iterations", tune.max_iterations, "expansion rounds cap")
        ->capture_default_str();
    ctune->add_option("--k-prime", tune.k_prime, "planning subset size")->capture_default_str();
    ctune->add_option("--dp-samples", tune.dp_samples, "planning subset draws")
        ->capture_default_str();
    ctune->add_flag("--no-cache", tune.no_cache, "disable plan caching");
    ctune->add_option("--budget", tune.budget_override, "override the workload's budget");
    ctune->add_option("--recall", tune.recall_override, "override the recall threshold");

    PlanOptions plan;
    auto* cplan = app.add_subcommand("plan", "plan every query under a fixed configuration");
    cplan->fallthrough();
    cplan->add_option("--dataset", plan.dataset_dir, "dataset directory")->required();
    cplan->add_option("--workload", plan.workload_path, "workload file")->required();
    cplan->add_option("--models", plan.models_path, "models file")->required();
    cplan->add_option("--out", plan.plans_out, "output plans file")->required();
    cplan->add_option("--config", plan.config, "configuration, e.g. \"1;2,3\"");
    cplan->add_option("--report", plan.report_path, "tune report to take the config from");
    cplan->add_option("--section", plan.section, "report section")->capture_default_str();
    cplan->add_option("--di", plan.di, "max columns an index may omit")->capture_default_str();
    cplan->add_option("--k-prime", plan.k_prime, "planning subset size")->capture_default_str();
    cplan->add_option("--dp-samples", plan.dp_samples, "planning subset draws")
        ->capture_default_str();

    EvalOptions eval;
    auto* ceval = app.add_subcommand("eval", "execute a report's plans against real indexes");
    ceval->fallthrough();
    ceval->add_option("--dataset", eval.dataset_dir, "dataset directory")->required();
    ceval->add_option("--workload", eval.workload_path, "workload file")->required();
    ceval->add_option("--report", eval.report_path, "tune report")->required();
    ceval->add_option("--out", eval.out, "output file");
    ceval->add_option("--format", eval.format, "json or csv")->capture_default_str();
    ceval->add_option("--max-degree", eval.max_degree, "graph degree (0: from report)")
        ->capture_default_str();
    ceval->add_option("--ef-construction", eval.ef_construction, "build beam width")
        ->capture_default_str();

    SweepOptions sweep;
    auto* csweep = app.add_subcommand("sweep", "tune across a range of storage budgets");
    csweep->fallthrough();
    csweep->add_option("--dataset", sweep.dataset_dir, "dataset directory")->required();
    csweep->add_option("--workload", sweep.workload_path, "workload file")->required();
    csweep->add_option("--models", sweep.models_path, "models file")->required();
    csweep->add_option("--out", sweep.out, "output file")->required();
    csweep->add_option("--format", sweep.format, "json or csv")->capture_default_str();
    csweep->add_option("--budgets", sweep.budgets, "storage budgets to sweep")->required();
    csweep->add_option("--di", sweep.di, "max columns an index may omit")
        ->capture_default_str();
    csweep->add_option("--se", sweep.se, "max indexes per seed")->capture_default_str();
    csweep->add_option("--beam-width", sweep.beam_width, "beam width")->capture_default_str();
    csweep->add_option("--improvement", sweep.improvement_threshold,
                       "relative-improvement stop")
        ->capture_default_str();
    csweep->add_option("--max-iterations", sweep.max_iterations, "expansion rounds cap")
        ->capture_default_str();
    csweep->add_option("--k-prime", sweep.k_prime, "planning subset size")
        ->capture_default_str();
    csweep->add_option("--dp-samples", sweep.dp_samples, "planning subset draws")
        ->capture_default_str();
    csweep->add_flag("--no-cache", sweep.no_cache, "disable plan caching");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 3;
    }

    gen.seed = seed;
    train.seed = seed;
    train.threads = threads;
    tune.seed = seed;
    plan.seed = seed;
    eval.seed = seed;
    eval.threads = threads;
    sweep.seed = seed;

    try {
        if (cgen->parsed()) return cmd_gen(gen);
        if (ctrain->parsed()) return cmd_train(train);
        if (ctune->parsed()) return cmd_tune(tune);
        if (cplan->parsed()) return cmd_plan(plan);
        if (ceval->parsed()) return cmd_eval(eval);
        if (csweep->parsed()) return cmd_sweep(sweep);
    } catch (const mvtune::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
