#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mfhpo/hp_space.hpp"

namespace mfhpo {

// Evaluation backend: deterministic metric and per-epoch duration for a
// configuration, given (config, epoch, benchmark seed). Lower metric is
// better everywhere.
class Benchmark {
public:
    struct EpochResult {
        double metric = 0.0;
        double seconds = 0.0;
    };

    virtual ~Benchmark() = default;
    virtual EpochResult evaluate(const Config& config, int epoch) const = 0;
    virtual int r_max() const = 0;
};

enum class TabularMatch { error, nearest };

// Offline-evaluated grid of configurations: one learning curve plus per-epoch
// durations per config key. Curves must all span exactly r_max epochs.
class TabularBenchmark : public Benchmark {
public:
    struct Curve {
        Config config;
        std::vector<double> metrics;  // indexed by epoch-1
        std::vector<double> seconds;
    };

    TabularBenchmark(const ConfigSpace& space, std::vector<Curve> curves, int r_max,
                     TabularMatch match);

    EpochResult evaluate(const Config& config, int epoch) const override;
    int r_max() const override { return r_max_; }
    std::size_t num_configs() const { return curves_.size(); }
    const ConfigSpace& space() const { return space_; }

private:
    const Curve& lookup(const Config& config) const;

    ConfigSpace space_;
    std::vector<Curve> curves_;
    std::map<std::string, std::size_t> index_;
    std::vector<FeatureVector> encoded_;  // for nearest-neighbor matching
    int r_max_;
    TabularMatch match_;
};

// Loads the columnar benchmark format: CSV `config_key,epoch,metric,seconds`
// plus a sidecar JSON declaring the ConfigSpace, r_max and metric objective.
// When `sidecar_path` is empty, `<csv path>.space.json` is used.
TabularBenchmark load_tabular(const std::string& csv_path, const std::string& sidecar_path = "",
                              TabularMatch match = TabularMatch::error);

// Parameters of the synthetic stand-in benchmark: learning curves
// a(x) + b(x) c(x)^epoch + noise decaying toward a configuration-dependent
// asymptote, with heterogeneous per-epoch durations.
struct SyntheticSpec {
    int r_max = 27;
    std::uint64_t seed = 0;
    double noise_std = 5e-4;
    double asymptote_floor = 0.02;
    double asymptote_scale = 0.6;
    double span_lo = 0.6;   // b(x) range
    double span_hi = 1.2;
    double decay_lo = 0.5;  // c(x) range, must stay inside (0, 1)
    double decay_hi = 0.75;
    double epoch_seconds_lo = 0.3;
    double epoch_seconds_hi = 1.7;
};

class SyntheticBenchmark : public Benchmark {
public:
    SyntheticBenchmark(const ConfigSpace& space, SyntheticSpec spec);

    EpochResult evaluate(const Config& config, int epoch) const override;
    int r_max() const override { return spec_.r_max; }

    // Noise-free asymptote; handy for oracles and sanity checks.
    double asymptote(const Config& config) const;
    double optimum() const { return spec_.asymptote_floor; }

private:
    ConfigSpace space_;
    SyntheticSpec spec_;
    Eigen::VectorXd optimum_coords_;
    Eigen::VectorXd quad_weights_;
};

}  // namespace mfhpo
