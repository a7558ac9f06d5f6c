#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mfhpo/errors.hpp"
#include "mfhpo/experiment.hpp"
#include "mfhpo/version.hpp"

namespace {

std::string default_out_dir(const std::string& name) {
    const char* root = std::getenv("MFHPO_OUTPUT_ROOT");
    const std::filesystem::path base = root ? root : "results";
    return (base / name).string();
}

int cmd_run(const std::string& config_path, std::string out_dir,
            const std::vector<std::uint64_t>& seeds, int workers,
            const std::vector<std::string>& methods) {
    mfhpo::ExperimentConfig config = mfhpo::ExperimentConfig::from_file(config_path);
    if (!seeds.empty()) config.seeds = seeds;
    if (workers > 0) config.n_workers = workers;
    if (!methods.empty()) {
        config.methods.clear();
        for (const auto& m : methods) config.methods.push_back(mfhpo::method_from_string(m));
    }
    if (out_dir.empty()) out_dir = default_out_dir(config.name);

    const auto run = mfhpo::run_experiment(config);
    mfhpo::emit_results(run, out_dir);
    std::cout << "wrote " << out_dir << " (y_star=" << mfhpo::format_double(run.aggregate.y_star)
              << ", " << config.methods.size() << " methods x " << config.seeds.size()
              << " seeds)\n";
    return 0;
}

int cmd_validate(const std::string& config_path) {
    const mfhpo::ExperimentConfig config = mfhpo::ExperimentConfig::from_file(config_path);
    const auto benchmark = mfhpo::make_benchmark(config);  // loads + validates tables
    mfhpo::build_geometry(config.geometry.r_min, config.geometry.r_max, config.geometry.eta);
    std::cout << "OK: " << config.name << " (" << config.methods.size() << " methods, "
              << config.seeds.size() << " seeds, r_max=" << benchmark->r_max() << ")\n";
    return 0;
}

int cmd_aggregate(const std::string& traces_dir) {
    mfhpo::reaggregate_directory(traces_dir);
    std::cout << "re-aggregated " << traces_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Asynchronous multi-fidelity hyperparameter optimization (simulated workers)"};
    app.set_version_flag("--version", std::string("mfhpo ") + mfhpo::kVersion);
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::string traces_dir;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> methods;
    int workers = 0;

    auto* run = app.add_subcommand("run", "Run an experiment and write traces + regret curves");
    run->add_option("--config", config_path, "Experiment config JSON (or a manifest.json)")
        ->required();
    run->add_option("--out", out_dir, "Output directory (default: $MFHPO_OUTPUT_ROOT/<name>)");
    run->add_option("--seeds", seeds, "Override the config's seed list");
    run->add_option("--workers", workers, "Override the number of simulated workers");
    run->add_option("--method", methods, "Restrict to the given methods");

    auto* validate = app.add_subcommand("validate", "Check a config (and its data files)");
    validate->add_option("--config", config_path, "Experiment config JSON")->required();

    auto* aggregate =
        app.add_subcommand("aggregate", "Re-aggregate previously written traces without re-running");
    aggregate->add_option("--traces", traces_dir, "Directory holding manifest.json and *.jsonl")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path, out_dir, seeds, workers, methods);
        if (validate->parsed()) return cmd_validate(config_path);
        if (aggregate->parsed()) return cmd_aggregate(traces_dir);
    } catch (const mfhpo::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
