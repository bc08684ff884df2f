#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace mvtune::cmd {

/// Each command loads its inputs, does the work, writes its outputs
/// atomically, and prints a short human summary (and any timings) to stdout.
/// Failures are reported by throwing mvtune::Error subclasses; the CLI maps
/// ErrorKind to the process exit code. Output files never contain timings,
/// so a rerun with the same inputs and seed reproduces them byte for byte.

struct GenOptions {
    std::string dataset_dir;
    std::string workload_out; ///< optional; empty skips workload generation
    uint32_t rows = 10000;
    std::vector<int> dims = {32, 32};
    int clusters = 16;
    double noise = 0.3;
    std::string dataset_id; ///< optional; derived from parameters when empty
    int num_queries = 8;
    int k = 10;
    double recall_threshold = 0.9;
    double storage_budget = -1.0;
    std::string storage_unit = "index-count";
    double sigma = 0.05;
    double column_probability = 0.5;
    uint64_t seed = 0;
};
int cmd_gen(const GenOptions& opt);

struct TrainOptions {
    std::string dataset_dir;
    std::string models_out;
    double fraction = 0.01;
    uint32_t min_sample = 1000;
    int train_queries = 50;
    int train_k = 100;
    double sigma = 0.1;
    std::vector<int64_t> grid; ///< empty keeps the default probe grid
    int max_degree = 16;
    int ef_construction = 200;
    uint64_t seed = 0;
    int threads = 1;
};
int cmd_train(const TrainOptions& opt);

struct TuneOptions {
    std::string dataset_dir;
    std::string workload_path;
    std::string models_path;
    std::string report_out;
    int di = 2;
    int se = 2;
    int beam_width = 4;
    double improvement_threshold = 0.05;
    int max_iterations = 20;
    int k_prime = 5;
    int dp_samples = 3;
    uint64_t seed = 0;
    bool no_cache = false;
    /// NaN keeps the workload file's value.
    double budget_override = std::numeric_limits<double>::quiet_NaN();
    double recall_override = std::numeric_limits<double>::quiet_NaN();
};
int cmd_tune(const TuneOptions& opt);

struct PlanOptions {
    std::string dataset_dir;
    std::string workload_path;
    std::string models_path;
    std::string plans_out;
    /// Explicit configuration, e.g. "1;2,3" (indexes split by ';', columns
    /// by ','). Empty requires report_path.
    std::string config;
    std::string report_path; ///< take the configuration from a tune report
    std::string section = "tuned";
    int di = 2;
    int k_prime = 5;
    int dp_samples = 3;
    uint64_t seed = 0;
};
int cmd_plan(const PlanOptions& opt);

struct EvalOptions {
    std::string dataset_dir;
    std::string workload_path;
    std::string report_path;
    std::string out;            ///< optional; stdout table always printed
    std::string format = "json"; ///< json or csv
    int max_degree = 0;         ///< 0: use the value recorded in the report
    int ef_construction = 200;
    uint64_t seed = 0;
    int threads = 1;
};
int cmd_eval(const EvalOptions& opt);

struct SweepOptions {
    std::string dataset_dir;
    std::string workload_path;
    std::string models_path;
    std::string out;
    std::string format = "json"; ///< json or csv
    std::vector<double> budgets; ///< ascending
    int di = 2;
    int se = 2;
    int beam_width = 4;
    double improvement_threshold = 0.05;
    int max_iterations = 20;
    int k_prime = 5;
    int dp_samples = 3;
    uint64_t seed = 0;
    bool no_cache = false;
};
int cmd_sweep(const SweepOptions& opt);

} // namespace mvtune::cmd
