#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mfhpo/benchmark.hpp"
#include "mfhpo/searcher.hpp"
#include "mfhpo/simulator.hpp"

namespace mfhpo {

// Method roster: each name pins a (scheduler variant, searcher) pairing.
// abo/ars run every evaluation to r_max on a single-rung geometry.
enum class Method {
    abohb_stopping,
    abohb_promotion,
    ahb_stopping,
    ahb_promotion,  // ASHA
    abo,
    ars,
    sync_hb,
};

Method method_from_string(const std::string& s);
std::string method_to_string(Method m);

struct MethodTraits {
    SchedulerVariant variant;
    bool model_based;
    bool single_rung;  // degenerate geometry {r_max}
};

MethodTraits method_traits(Method m);

struct GeometryConfig {
    int r_min = 1;
    int r_max = 27;
    int eta = 3;
    int num_brackets = 0;  // 0: all
};

struct BenchmarkConfig {
    std::string type;  // "synthetic" | "tabular"
    // tabular
    std::string path;
    std::string sidecar;
    TabularMatch match = TabularMatch::error;
    // synthetic
    SyntheticSpec synthetic;
    int dimensions = 8;  // used when no explicit space is given
};

struct ExperimentConfig {
    std::string name = "experiment";
    BenchmarkConfig benchmark;
    std::shared_ptr<ConfigSpace> space;
    std::vector<Method> methods;
    GeometryConfig geometry;
    int n_workers = 1;
    double time_budget = 0.0;
    std::vector<std::uint64_t> seeds;
    SearcherConfig searcher;
    bool resume_from_checkpoint = false;
    double decision_overhead_sec = 0.0;

    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig from_file(const std::string& path);
    nlohmann::json to_json() const;  // fully resolved, reproducible
};

struct MethodAggregate {
    std::string method;
    std::vector<double> mean_regret;
    std::vector<double> stderr_regret;
    std::vector<std::vector<double>> per_seed_regret;
};

// Per-method aggregation on a common time grid (step-function interpolation
// of each seed's regret series), plus the pooled y_star they share.
struct AggregateResult {
    double y_star = 0.0;
    std::vector<double> time_grid;
    std::vector<MethodAggregate> methods;
};

struct ExperimentRun {
    ExperimentConfig config;
    // traces[method index][seed index]
    std::vector<std::vector<EventTrace>> traces;
    AggregateResult aggregate;
};

std::unique_ptr<Benchmark> make_benchmark(const ExperimentConfig& config);

EventTrace run_single(const ExperimentConfig& config, Method method, std::uint64_t seed,
                      const Benchmark& benchmark);

ExperimentRun run_experiment(const ExperimentConfig& config);

// Pooled best observed metric across all traces of all methods and seeds.
double pooled_best_metric(const std::vector<std::vector<EventTrace>>& traces);

AggregateResult aggregate_traces(const std::vector<std::string>& method_names,
                                 const std::vector<std::vector<EventTrace>>& traces,
                                 int grid_points = 256);

// Writes manifest.json, per-method aggregate CSVs, per-seed regret CSVs and
// raw JSONL traces into out_dir. Deterministic byte-for-byte given the same
// run.
void emit_results(const ExperimentRun& run, const std::string& out_dir);

// Re-aggregates previously written traces (manifest.json + *.jsonl) without
// re-running, rewriting the CSV outputs.
void reaggregate_directory(const std::string& dir);

std::string format_double(double v);  // %.17g, used for all CSV output

}  // namespace mfhpo
