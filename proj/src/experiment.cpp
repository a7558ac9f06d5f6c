#include "mfhpo/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "mfhpo/errors.hpp"
#include "mfhpo/version.hpp"

namespace mfhpo {
namespace fs = std::filesystem;

Method method_from_string(const std::string& s) {
    if (s == "abohb_stopping") return Method::abohb_stopping;
    if (s == "abohb_promotion") return Method::abohb_promotion;
    if (s == "ahb_stopping") return Method::ahb_stopping;
    if (s == "ahb_promotion" || s == "asha") return Method::ahb_promotion;
    if (s == "abo") return Method::abo;
    if (s == "ars") return Method::ars;
    if (s == "sync_hb") return Method::sync_hb;
    throw ConfigError("unknown method '" + s + "'");
}

std::string method_to_string(Method m) {
    switch (m) {
        case Method::abohb_stopping: return "abohb_stopping";
        case Method::abohb_promotion: return "abohb_promotion";
        case Method::ahb_stopping: return "ahb_stopping";
        case Method::ahb_promotion: return "ahb_promotion";
        case Method::abo: return "abo";
        case Method::ars: return "ars";
        case Method::sync_hb: return "sync_hb";
    }
    return "?";
}

MethodTraits method_traits(Method m) {
    switch (m) {
        case Method::abohb_stopping: return {SchedulerVariant::stopping, true, false};
        case Method::abohb_promotion: return {SchedulerVariant::promotion, true, false};
        case Method::ahb_stopping: return {SchedulerVariant::stopping, false, false};
        case Method::ahb_promotion: return {SchedulerVariant::promotion, false, false};
        case Method::abo: return {SchedulerVariant::stopping, true, true};
        case Method::ars: return {SchedulerVariant::stopping, false, true};
        case Method::sync_hb: return {SchedulerVariant::synchronous, false, false};
    }
    return {SchedulerVariant::stopping, false, false};
}

namespace {

ConfigSpace default_continuous_space(int dimensions) {
    std::vector<Dimension> dims;
    for (int i = 0; i < dimensions; ++i)
        dims.push_back({"x" + std::to_string(i), ContinuousDomain{0.0, 1.0, Scale::linear}});
    return ConfigSpace(std::move(dims));
}

SearcherConfig searcher_from_json(const nlohmann::json& j, bool model_based) {
    SearcherConfig sc;
    sc.model_based = model_based;
    if (j.is_null()) return sc;
    if (j.contains("kernel")) sc.kernel = kernel_variant_from_string(j.at("kernel"));
    if (j.contains("data_mode")) sc.data_mode = data_mode_from_string(j.at("data_mode"));
    if (j.contains("refit")) sc.refit.kind = refit_policy_from_string(j.at("refit"));
    sc.refit.k = j.value("refit_k", sc.refit.k);
    sc.refit.warmup = j.value("refit_warmup", sc.refit.warmup);
    sc.fantasy_samples = j.value("fantasy_samples", sc.fantasy_samples);
    sc.l_acq = j.value("l_acq", sc.l_acq);
    sc.init_random = j.value("init_random", sc.init_random);
    sc.ei_candidates = j.value("ei_candidates", sc.ei_candidates);
    sc.ei_refine_top = j.value("ei_refine_top", sc.ei_refine_top);
    sc.ei_refine_steps = j.value("ei_refine_steps", sc.ei_refine_steps);
    sc.ei_refine_scale = j.value("ei_refine_scale", sc.ei_refine_scale);
    sc.fix_gamma = j.value("fix_gamma", sc.fix_gamma);
    sc.gamma_value = j.value("gamma_value", sc.gamma_value);
    if (j.value("incumbent", std::string("posterior_mean")) == "observed")
        sc.incumbent_observed = true;
    sc.fit_restarts = j.value("fit_restarts", sc.fit_restarts);
    sc.fit_max_iterations = j.value("fit_max_iterations", sc.fit_max_iterations);
    return sc;
}

nlohmann::json searcher_to_json(const SearcherConfig& sc) {
    nlohmann::json j;
    j["kernel"] = kernel_variant_to_string(sc.kernel);
    switch (sc.data_mode) {
        case DataMode::rungs_only: j["data_mode"] = "rungs_only"; break;
        case DataMode::rungs_and_last: j["data_mode"] = "rungs_and_last"; break;
        case DataMode::all_epochs: j["data_mode"] = "all_epochs"; break;
    }
    switch (sc.refit.kind) {
        case RefitPolicyKind::always: j["refit"] = "always"; break;
        case RefitPolicyKind::every_k: j["refit"] = "every_k"; break;
        case RefitPolicyKind::full_resource_gate: j["refit"] = "full_resource_gate"; break;
    }
    j["refit_k"] = sc.refit.k;
    j["refit_warmup"] = sc.refit.warmup;
    j["fantasy_samples"] = sc.fantasy_samples;
    j["l_acq"] = sc.l_acq;
    j["init_random"] = sc.init_random;
    j["ei_candidates"] = sc.ei_candidates;
    j["ei_refine_top"] = sc.ei_refine_top;
    j["ei_refine_steps"] = sc.ei_refine_steps;
    j["ei_refine_scale"] = sc.ei_refine_scale;
    j["fix_gamma"] = sc.fix_gamma;
    j["gamma_value"] = sc.gamma_value;
    j["incumbent"] = sc.incumbent_observed ? "observed" : "posterior_mean";
    j["fit_restarts"] = sc.fit_restarts;
    j["fit_max_iterations"] = sc.fit_max_iterations;
    return j;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& root) {
    // A manifest is accepted in place of a config: its resolved_config is used.
    const nlohmann::json& j = root.contains("resolved_config") ? root.at("resolved_config") : root;

    ExperimentConfig c;
    c.name = j.value("name", std::string("experiment"));

    const auto& b = j.at("benchmark");
    c.benchmark.type = b.at("type").get<std::string>();
    if (c.benchmark.type == "tabular") {
        c.benchmark.path = b.at("path").get<std::string>();
        c.benchmark.sidecar = b.value("sidecar", std::string());
        c.benchmark.match =
            b.value("match", std::string("error")) == "nearest" ? TabularMatch::nearest : TabularMatch::error;
    } else if (c.benchmark.type == "synthetic") {
        auto& s = c.benchmark.synthetic;
        s.r_max = b.value("r_max", s.r_max);
        s.seed = b.value("seed", s.seed);
        s.noise_std = b.value("noise_std", s.noise_std);
        s.asymptote_floor = b.value("asymptote_floor", s.asymptote_floor);
        s.asymptote_scale = b.value("asymptote_scale", s.asymptote_scale);
        s.span_lo = b.value("span_lo", s.span_lo);
        s.span_hi = b.value("span_hi", s.span_hi);
        s.decay_lo = b.value("decay_lo", s.decay_lo);
        s.decay_hi = b.value("decay_hi", s.decay_hi);
        s.epoch_seconds_lo = b.value("epoch_seconds_lo", s.epoch_seconds_lo);
        s.epoch_seconds_hi = b.value("epoch_seconds_hi", s.epoch_seconds_hi);
        c.benchmark.dimensions = b.value("dimensions", c.benchmark.dimensions);
    } else {
        throw ConfigError("unknown benchmark type '" + c.benchmark.type + "'");
    }

    if (j.contains("space")) {
        c.space = std::make_shared<ConfigSpace>(ConfigSpace::from_json(j.at("space")));
    } else if (c.benchmark.type == "tabular") {
        const std::string sidecar =
            c.benchmark.sidecar.empty() ? c.benchmark.path + ".space.json" : c.benchmark.sidecar;
        std::ifstream side(sidecar);
        if (!side) throw DataError("cannot open benchmark sidecar: " + sidecar);
        nlohmann::json meta;
        side >> meta;
        c.space = std::make_shared<ConfigSpace>(ConfigSpace::from_json(meta.at("space")));
    } else {
        c.space = std::make_shared<ConfigSpace>(default_continuous_space(c.benchmark.dimensions));
    }

    for (const auto& m : j.at("methods")) c.methods.push_back(method_from_string(m));
    if (c.methods.empty()) throw ConfigError("no methods listed");

    if (j.contains("geometry")) {
        const auto& g = j.at("geometry");
        c.geometry.r_min = g.value("r_min", 1);
        c.geometry.r_max = g.value("r_max", 27);
        c.geometry.eta = g.value("eta", 3);
        c.geometry.num_brackets = g.value("num_brackets", 0);
    }
    c.n_workers = j.value("n_workers", 1);
    c.time_budget = j.value("time_budget", 0.0);
    if (j.contains("seeds")) {
        for (const auto& s : j.at("seeds")) c.seeds.push_back(s.get<std::uint64_t>());
    } else {
        c.seeds = {0};
    }
    c.searcher = searcher_from_json(j.value("searcher", nlohmann::json()), true);
    if (j.contains("sim")) {
        c.resume_from_checkpoint = j.at("sim").value("resume_from_checkpoint", false);
        c.decision_overhead_sec = j.at("sim").value("decision_overhead_sec", 0.0);
    }
    if (c.n_workers < 1) throw ConfigError("n_workers must be >= 1");
    if (c.geometry.r_max > [&] {
            int rm = c.benchmark.type == "synthetic" ? c.benchmark.synthetic.r_max
                                                     : std::numeric_limits<int>::max();
            return rm;
        }())
        throw ConfigError("geometry r_max exceeds the benchmark's r_max");
    return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("invalid JSON in " + path + ": " + e.what());
    }
    return from_json(j);
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json j;
    j["name"] = name;
    nlohmann::json b{{"type", benchmark.type}};
    if (benchmark.type == "tabular") {
        b["path"] = benchmark.path;
        if (!benchmark.sidecar.empty()) b["sidecar"] = benchmark.sidecar;
        b["match"] = benchmark.match == TabularMatch::nearest ? "nearest" : "error";
    } else {
        const auto& s = benchmark.synthetic;
        b["r_max"] = s.r_max;
        b["seed"] = s.seed;
        b["noise_std"] = s.noise_std;
        b["asymptote_floor"] = s.asymptote_floor;
        b["asymptote_scale"] = s.asymptote_scale;
        b["span_lo"] = s.span_lo;
        b["span_hi"] = s.span_hi;
        b["decay_lo"] = s.decay_lo;
        b["decay_hi"] = s.decay_hi;
        b["epoch_seconds_lo"] = s.epoch_seconds_lo;
        b["epoch_seconds_hi"] = s.epoch_seconds_hi;
        b["dimensions"] = benchmark.dimensions;
    }
    j["benchmark"] = std::move(b);
    j["space"] = space->to_json();
    nlohmann::json ms = nlohmann::json::array();
    for (Method m : methods) ms.push_back(method_to_string(m));
    j["methods"] = std::move(ms);
    j["geometry"] = {{"r_min", geometry.r_min},
                     {"r_max", geometry.r_max},
                     {"eta", geometry.eta},
                     {"num_brackets", geometry.num_brackets}};
    j["n_workers"] = n_workers;
    j["time_budget"] = time_budget;
    j["seeds"] = seeds;
    j["searcher"] = searcher_to_json(searcher);
    j["sim"] = {{"resume_from_checkpoint", resume_from_checkpoint},
                {"decision_overhead_sec", decision_overhead_sec}};
    return j;
}

std::unique_ptr<Benchmark> make_benchmark(const ExperimentConfig& config) {
    if (config.benchmark.type == "tabular") {
        return std::make_unique<TabularBenchmark>(
            load_tabular(config.benchmark.path, config.benchmark.sidecar, config.benchmark.match));
    }
    return std::make_unique<SyntheticBenchmark>(*config.space, config.benchmark.synthetic);
}

EventTrace run_single(const ExperimentConfig& config, Method method, std::uint64_t seed,
                      const Benchmark& benchmark) {
    const MethodTraits traits = method_traits(method);
    const RungGeometry geometry =
        traits.single_rung
            ? single_rung_geometry(config.geometry.r_max)
            : build_geometry(config.geometry.r_min, config.geometry.r_max, config.geometry.eta);
    HbScheduler scheduler(geometry, traits.variant, config.geometry.num_brackets);
    SearcherConfig sc = config.searcher;
    sc.model_based = traits.model_based;
    auto searcher = make_searcher(*config.space, geometry, sc);

    SimOptions options;
    options.n_workers = config.n_workers;
    options.time_budget = config.time_budget;
    options.seed = mix_seed(seed, static_cast<std::uint64_t>(method));
    options.resume_from_checkpoint = config.resume_from_checkpoint;
    options.decision_overhead_sec = config.decision_overhead_sec;
    return run_simulation(*config.space, benchmark, scheduler, *searcher, options);
}

double pooled_best_metric(const std::vector<std::vector<EventTrace>>& traces) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& per_method : traces)
        for (const auto& trace : per_method)
            for (const auto& p : trace.incumbents) best = std::min(best, p.y);
    return best;
}

AggregateResult aggregate_traces(const std::vector<std::string>& method_names,
                                 const std::vector<std::vector<EventTrace>>& traces,
                                 int grid_points) {
    AggregateResult result;
    result.y_star = pooled_best_metric(traces);

    double t_lo = 0.0;
    double t_hi = 0.0;
    bool any = false;
    for (const auto& per_method : traces) {
        for (const auto& trace : per_method) {
            if (trace.incumbents.empty()) continue;
            t_lo = std::max(t_lo, trace.incumbents.front().t);
            t_hi = std::max({t_hi, trace.last_event_time(), trace.incumbents.back().t});
            any = true;
        }
    }
    if (!any) {
        for (const auto& name : method_names) {
            MethodAggregate agg;
            agg.method = name;
            result.methods.push_back(std::move(agg));
        }
        return result;
    }

    // Log-spaced points between the latest first observation and the end;
    // endpoints are pinned exactly so step boundaries land on the grid.
    t_lo = std::max(t_lo, 1e-9);
    t_hi = std::max(t_hi, t_lo);
    result.time_grid.reserve(static_cast<std::size_t>(grid_points));
    if (t_hi <= t_lo || grid_points == 1) {
        result.time_grid.push_back(t_hi);
    } else {
        const double log_lo = std::log(t_lo);
        const double log_hi = std::log(t_hi);
        for (int i = 0; i < grid_points; ++i) {
            const double f =
                static_cast<double>(i) / static_cast<double>(grid_points - 1);
            result.time_grid.push_back(std::exp(log_lo + f * (log_hi - log_lo)));
        }
        result.time_grid.front() = t_lo;
        result.time_grid.back() = t_hi;
    }

    for (std::size_t m = 0; m < traces.size(); ++m) {
        MethodAggregate agg;
        agg.method = method_names[m];
        const auto& seeds = traces[m];
        for (const auto& trace : seeds) {
            std::vector<double> curve;
            curve.reserve(result.time_grid.size());
            for (double t : result.time_grid) {
                // Step interpolation: the last incumbent at or before t.
                double value = std::numeric_limits<double>::quiet_NaN();
                for (const auto& p : trace.incumbents) {
                    if (p.t <= t) value = p.y - result.y_star;
                    else break;
                }
                if (!std::isfinite(value) && !trace.incumbents.empty())
                    value = trace.incumbents.front().y - result.y_star;
                curve.push_back(value);
            }
            agg.per_seed_regret.push_back(std::move(curve));
        }
        const std::size_t n = agg.per_seed_regret.size();
        for (std::size_t i = 0; i < result.time_grid.size(); ++i) {
            double mean = 0.0;
            for (const auto& curve : agg.per_seed_regret) mean += curve[i];
            mean /= static_cast<double>(n);
            double var = 0.0;
            for (const auto& curve : agg.per_seed_regret) var += (curve[i] - mean) * (curve[i] - mean);
            const double sem = n > 1 ? std::sqrt(var / static_cast<double>(n - 1) /
                                                 static_cast<double>(n))
                                     : 0.0;
            agg.mean_regret.push_back(mean);
            agg.stderr_regret.push_back(sem);
        }
        result.methods.push_back(std::move(agg));
    }
    return result;
}

ExperimentRun run_experiment(const ExperimentConfig& config) {
    const auto benchmark = make_benchmark(config);
    ExperimentRun run;
    run.config = config;
    run.traces.resize(config.methods.size());
    for (std::size_t m = 0; m < config.methods.size(); ++m) {
        for (std::uint64_t seed : config.seeds) {
            try {
                run.traces[m].push_back(run_single(config, config.methods[m], seed, *benchmark));
            } catch (const Error& e) {
                throw Error("method " + method_to_string(config.methods[m]) + " seed " +
                            std::to_string(seed) + " failed: " + e.what());
            }
        }
    }
    std::vector<std::string> names;
    for (Method m : config.methods) names.push_back(method_to_string(m));
    run.aggregate = aggregate_traces(names, run.traces);
    return run;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

void write_seed_csv(const fs::path& path, const EventTrace& trace, double y_star) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "time,incumbent,regret\n";
    for (const auto& p : trace.incumbents)
        out << format_double(p.t) << ',' << format_double(p.y) << ','
            << format_double(p.y - y_star) << '\n';
}

void write_aggregate_csv(const fs::path& path, const AggregateResult& agg,
                         const MethodAggregate& method) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "time,mean_regret,stderr\n";
    for (std::size_t i = 0; i < agg.time_grid.size(); ++i)
        out << format_double(agg.time_grid[i]) << ',' << format_double(method.mean_regret[i])
            << ',' << format_double(method.stderr_regret[i]) << '\n';
}

}  // namespace

void emit_results(const ExperimentRun& run, const std::string& out_dir) {
    fs::path dir(out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory " + out_dir + ": " + ec.message());

    nlohmann::json manifest;
    manifest["tool"] = "mfhpo";
    manifest["version"] = kVersion;
    manifest["resolved_config"] = run.config.to_json();
    manifest["y_star"] = run.aggregate.y_star;

    for (std::size_t m = 0; m < run.config.methods.size(); ++m) {
        const std::string name = method_to_string(run.config.methods[m]);
        for (std::size_t s = 0; s < run.config.seeds.size(); ++s) {
            if (s >= run.traces[m].size()) continue;  // partial run
            const std::string stem = name + "_seed" + std::to_string(run.config.seeds[s]);
            {
                std::ofstream out(dir / (stem + ".jsonl"));
                if (!out) throw DataError("cannot write trace " + stem);
                write_trace_jsonl(run.traces[m][s], out);
            }
            write_seed_csv(dir / (stem + ".csv"), run.traces[m][s], run.aggregate.y_star);
        }
        write_aggregate_csv(dir / (name + "_aggregate.csv"), run.aggregate,
                            run.aggregate.methods.at(m));
    }
    std::ofstream mf(dir / "manifest.json");
    if (!mf) throw DataError("cannot write manifest.json");
    mf << manifest.dump(2) << "\n";
}

void reaggregate_directory(const std::string& dir_str) {
    const fs::path dir(dir_str);
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw DataError("no manifest.json in " + dir_str);
    nlohmann::json manifest;
    mf >> manifest;
    const ExperimentConfig config = ExperimentConfig::from_json(manifest);

    ExperimentRun run;
    run.config = config;
    run.traces.resize(config.methods.size());
    for (std::size_t m = 0; m < config.methods.size(); ++m) {
        const std::string name = method_to_string(config.methods[m]);
        for (std::uint64_t seed : config.seeds) {
            const fs::path p = dir / (name + "_seed" + std::to_string(seed) + ".jsonl");
            std::ifstream in(p);
            if (!in) throw DataError("missing trace " + p.string());
            run.traces[m].push_back(read_trace_jsonl(in));
        }
    }
    std::vector<std::string> names;
    for (Method m : config.methods) names.push_back(method_to_string(m));
    run.aggregate = aggregate_traces(names, run.traces);
    emit_results(run, dir_str);
}

}  // namespace mfhpo
