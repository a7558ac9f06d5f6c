#include "mfhpo/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mfhpo/errors.hpp"

namespace mfhpo {
namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    // The config_key field is JSON and may contain commas; it is the first
    // column, so parse the remaining columns from the right.
    std::vector<std::string> out;
    std::size_t end = line.size();
    for (int i = 0; i < 3; ++i) {
        const auto pos = line.rfind(',', end - 1);
        if (pos == std::string::npos) return {};
        out.insert(out.begin(), line.substr(pos + 1, end - pos - 1));
        end = pos;
    }
    out.insert(out.begin(), line.substr(0, end));
    return out;
}

}  // namespace

TabularBenchmark::TabularBenchmark(const ConfigSpace& space, std::vector<Curve> curves, int r_max,
                                   TabularMatch match)
    : space_(space), curves_(std::move(curves)), r_max_(r_max), match_(match) {
    if (r_max_ < 1) throw DataError("tabular benchmark needs r_max >= 1");
    if (curves_.empty()) throw DataError("tabular benchmark has no configurations");
    for (std::size_t i = 0; i < curves_.size(); ++i) {
        const auto& c = curves_[i];
        if (c.metrics.size() != static_cast<std::size_t>(r_max_) ||
            c.seconds.size() != static_cast<std::size_t>(r_max_))
            throw DataError("curve " + std::to_string(i) + " does not span r_max=" +
                            std::to_string(r_max_) + " epochs");
        for (double s : c.seconds)
            if (!(s > 0.0)) throw DataError("curve " + std::to_string(i) + " has non-positive duration");
        const std::string key = config_key(space_, c.config);
        if (!index_.emplace(key, i).second) throw DataError("duplicate config key: " + key);
        encoded_.push_back(encode(space_, c.config));
    }
}

const TabularBenchmark::Curve& TabularBenchmark::lookup(const Config& config) const {
    const std::string key = config_key(space_, config);
    auto it = index_.find(key);
    if (it != index_.end()) return curves_[it->second];
    if (match_ == TabularMatch::error)
        throw DataError("configuration not in benchmark table: " + key);
    const FeatureVector z = encode(space_, config);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < encoded_.size(); ++i) {
        const double d = (encoded_[i] - z).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return curves_[best];
}

Benchmark::EpochResult TabularBenchmark::evaluate(const Config& config, int epoch) const {
    if (epoch < 1 || epoch > r_max_)
        throw ProtocolError("epoch " + std::to_string(epoch) + " outside 1.." + std::to_string(r_max_));
    const auto& curve = lookup(config);
    const auto i = static_cast<std::size_t>(epoch - 1);
    return {curve.metrics[i], curve.seconds[i]};
}

TabularBenchmark load_tabular(const std::string& csv_path, const std::string& sidecar_path,
                              TabularMatch match) {
    const std::string sidecar = sidecar_path.empty() ? csv_path + ".space.json" : sidecar_path;
    std::ifstream side(sidecar);
    if (!side) throw DataError("cannot open benchmark sidecar: " + sidecar);
    nlohmann::json meta;
    try {
        side >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("invalid JSON in " + sidecar + ": " + e.what());
    }
    const ConfigSpace space = ConfigSpace::from_json(meta.at("space"));
    const int r_max = meta.at("r_max").get<int>();
    const bool negate = meta.value("objective", std::string("min")) == "max";

    std::ifstream in(csv_path);
    if (!in) throw DataError("cannot open benchmark table: " + csv_path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty benchmark table: " + csv_path);
    if (line != "config_key,epoch,metric,seconds")
        throw DataError(csv_path + ": expected header 'config_key,epoch,metric,seconds'");

    struct Partial {
        Config config;
        std::map<int, std::pair<double, double>> rows;
    };
    std::map<std::string, Partial> partials;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 4)
            throw DataError(csv_path + ":" + std::to_string(line_no) + ": expected 4 columns");
        int epoch;
        double metric, seconds;
        try {
            epoch = std::stoi(fields[1]);
            metric = std::stod(fields[2]);
            seconds = std::stod(fields[3]);
        } catch (const std::exception&) {
            throw DataError(csv_path + ":" + std::to_string(line_no) + ": malformed numeric field");
        }
        auto [it, inserted] = partials.try_emplace(fields[0]);
        if (inserted) {
            try {
                it->second.config = config_from_key(space, fields[0]);
            } catch (const Error& e) {
                throw DataError(csv_path + ":" + std::to_string(line_no) + ": " + e.what());
            }
        }
        if (!it->second.rows.emplace(epoch, std::make_pair(negate ? -metric : metric, seconds)).second)
            throw DataError(csv_path + ":" + std::to_string(line_no) + ": duplicate (config, epoch) row");
    }
    if (partials.empty()) throw DataError(csv_path + ": no data rows");

    std::vector<TabularBenchmark::Curve> curves;
    for (auto& [key, partial] : partials) {
        TabularBenchmark::Curve curve;
        curve.config = partial.config;
        for (int e = 1; e <= r_max; ++e) {
            auto it = partial.rows.find(e);
            if (it == partial.rows.end())
                throw DataError(csv_path + ": config " + key + " is missing epoch " + std::to_string(e));
            curve.metrics.push_back(it->second.first);
            curve.seconds.push_back(it->second.second);
        }
        if (partial.rows.size() != static_cast<std::size_t>(r_max))
            throw DataError(csv_path + ": config " + key + " has epochs beyond r_max");
        curves.push_back(std::move(curve));
    }
    return TabularBenchmark(space, std::move(curves), r_max, match);
}

SyntheticBenchmark::SyntheticBenchmark(const ConfigSpace& space, SyntheticSpec spec)
    : space_(space), spec_(spec) {
    if (!(spec_.decay_lo > 0.0 && spec_.decay_hi < 1.0 && spec_.decay_lo <= spec_.decay_hi))
        throw ConfigError("synthetic decay range must lie inside (0, 1)");
    if (spec_.r_max < 1) throw ConfigError("synthetic r_max must be >= 1");
    Rng rng(mix_seed(spec_.seed, 0x5ca1ab1e));
    const int d = space_.encoded_dim();
    optimum_coords_.resize(d);
    quad_weights_.resize(d);
    for (int i = 0; i < d; ++i) {
        optimum_coords_[i] = rng.uniform(0.25, 0.75);
        quad_weights_[i] = rng.uniform(0.5, 1.5);
    }
}

double SyntheticBenchmark::asymptote(const Config& config) const {
    const FeatureVector z = encode(space_, config);
    double s = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        const double diff = z[i] - optimum_coords_[i];
        s += quad_weights_[i] * diff * diff;
    }
    return spec_.asymptote_floor + spec_.asymptote_scale * s / static_cast<double>(z.size());
}

Benchmark::EpochResult SyntheticBenchmark::evaluate(const Config& config, int epoch) const {
    if (epoch < 1 || epoch > spec_.r_max)
        throw ProtocolError("epoch " + std::to_string(epoch) + " outside 1.." +
                            std::to_string(spec_.r_max));
    const FeatureVector z = encode(space_, config);
    const double zbar = z.mean();
    const double a = asymptote(config);
    const double b = spec_.span_lo + (spec_.span_hi - spec_.span_lo) * zbar;
    const double c =
        spec_.decay_lo + (spec_.decay_hi - spec_.decay_lo) * (z.size() > 1 ? z[1] : zbar);
    // Noise is seeded per (config, epoch) so re-evaluations reproduce exactly.
    const std::string key = config_key(space_, config);
    Rng noise(mix_seed(spec_.seed ^ fnv1a(key), static_cast<std::uint64_t>(epoch)));
    const double y = a + b * std::pow(c, epoch) + spec_.noise_std * noise.normal();

    const double speed = z.size() > 0 ? z[0] : 0.5;
    const double seconds =
        spec_.epoch_seconds_lo + (spec_.epoch_seconds_hi - spec_.epoch_seconds_lo) * speed;
    return {y, seconds};
}

}  // namespace mfhpo
