#include "mfhpo/hp_space.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mfhpo/errors.hpp"

namespace mfhpo {
namespace {

double transform(double v, Scale scale) {
    return scale == Scale::log ? std::log(v) : v;
}

double untransform(double t, Scale scale) {
    return scale == Scale::log ? std::exp(t) : t;
}

// Maps a raw numeric value to its [0,1] encoded coordinate.
double to_unit(double v, double lo, double hi, Scale scale) {
    const double tlo = transform(lo, scale);
    const double thi = transform(hi, scale);
    return (transform(v, scale) - tlo) / (thi - tlo);
}

double from_unit(double u, double lo, double hi, Scale scale) {
    const double tlo = transform(lo, scale);
    const double thi = transform(hi, scale);
    return untransform(tlo + u * (thi - tlo), scale);
}

// Truncated Gaussian step inside [0,1]: rejection sample, clamp as last resort.
double truncated_step(double center, double stddev, Rng& rng) {
    for (int i = 0; i < 64; ++i) {
        const double v = rng.normal(center, stddev);
        if (v >= 0.0 && v <= 1.0) return v;
    }
    return std::clamp(rng.normal(center, stddev), 0.0, 1.0);
}

Scale scale_from_string(const std::string& s) {
    if (s == "linear") return Scale::linear;
    if (s == "log") return Scale::log;
    throw ConfigError("unknown scale '" + s + "' (expected linear|log)");
}

std::string scale_to_string(Scale s) {
    return s == Scale::log ? "log" : "linear";
}

}  // namespace

ConfigSpace::ConfigSpace(std::vector<Dimension> dimensions) : dims_(std::move(dimensions)) {
    if (dims_.empty()) throw ConfigError("configuration space has no dimensions");
    std::set<std::string> names;
    for (const auto& dim : dims_) {
        if (dim.name.empty()) throw ConfigError("dimension with empty name");
        if (!names.insert(dim.name).second)
            throw ConfigError("duplicate dimension name '" + dim.name + "'");
        if (const auto* c = std::get_if<ContinuousDomain>(&dim.domain)) {
            if (!(c->lower < c->upper))
                throw ConfigError("dimension '" + dim.name + "': lower must be < upper");
            if (c->scale == Scale::log && !(c->lower > 0.0))
                throw ConfigError("dimension '" + dim.name + "': log scale requires lower > 0");
            encoded_dim_ += 1;
        } else if (const auto* i = std::get_if<IntegerDomain>(&dim.domain)) {
            if (!(i->lower < i->upper))
                throw ConfigError("dimension '" + dim.name + "': lower must be < upper");
            if (i->scale == Scale::log && !(i->lower > 0))
                throw ConfigError("dimension '" + dim.name + "': log scale requires lower > 0");
            encoded_dim_ += 1;
        } else {
            const auto& cat = std::get<CategoricalDomain>(dim.domain);
            if (cat.choices.empty())
                throw ConfigError("dimension '" + dim.name + "': empty choice list");
            std::set<std::string> uniq(cat.choices.begin(), cat.choices.end());
            if (uniq.size() != cat.choices.size())
                throw ConfigError("dimension '" + dim.name + "': duplicate choices");
            encoded_dim_ += static_cast<int>(cat.choices.size());
        }
    }
}

void ConfigSpace::validate(const Config& config) const {
    if (config.values.size() != dims_.size())
        throw ConfigError("config has " + std::to_string(config.values.size()) +
                          " values, space has " + std::to_string(dims_.size()) + " dimensions");
    for (std::size_t i = 0; i < dims_.size(); ++i) {
        const auto& dim = dims_[i];
        const auto& val = config.values[i];
        if (const auto* c = std::get_if<ContinuousDomain>(&dim.domain)) {
            const double* v = std::get_if<double>(&val);
            if (!v) throw ConfigError("dimension '" + dim.name + "': expected real value");
            if (*v < c->lower || *v > c->upper)
                throw ConfigError("dimension '" + dim.name + "': value out of bounds");
        } else if (const auto* d = std::get_if<IntegerDomain>(&dim.domain)) {
            const std::int64_t* v = std::get_if<std::int64_t>(&val);
            if (!v) throw ConfigError("dimension '" + dim.name + "': expected integer value");
            if (*v < d->lower || *v > d->upper)
                throw ConfigError("dimension '" + dim.name + "': value out of bounds");
        } else {
            const auto& cat = std::get<CategoricalDomain>(dim.domain);
            const std::string* v = std::get_if<std::string>(&val);
            if (!v) throw ConfigError("dimension '" + dim.name + "': expected categorical value");
            if (std::find(cat.choices.begin(), cat.choices.end(), *v) == cat.choices.end())
                throw ConfigError("dimension '" + dim.name + "': unknown choice '" + *v + "'");
        }
    }
}

ConfigSpace ConfigSpace::from_json(const nlohmann::json& j) {
    const nlohmann::json& list = j.is_array() ? j : j.at("dimensions");
    std::vector<Dimension> dims;
    for (const auto& d : list) {
        Dimension dim;
        dim.name = d.at("name").get<std::string>();
        const std::string type = d.at("type").get<std::string>();
        const Scale scale =
            d.contains("scale") ? scale_from_string(d.at("scale").get<std::string>()) : Scale::linear;
        if (type == "continuous") {
            dim.domain = ContinuousDomain{d.at("lower").get<double>(), d.at("upper").get<double>(), scale};
        } else if (type == "integer") {
            dim.domain =
                IntegerDomain{d.at("lower").get<std::int64_t>(), d.at("upper").get<std::int64_t>(), scale};
        } else if (type == "categorical") {
            dim.domain = CategoricalDomain{d.at("choices").get<std::vector<std::string>>()};
        } else {
            throw ConfigError("dimension '" + dim.name + "': unknown type '" + type + "'");
        }
        dims.push_back(std::move(dim));
    }
    return ConfigSpace(std::move(dims));
}

ConfigSpace ConfigSpace::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open space file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("invalid JSON in " + path + ": " + e.what());
    }
    return from_json(j);
}

nlohmann::json ConfigSpace::to_json() const {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& dim : dims_) {
        nlohmann::json d{{"name", dim.name}};
        if (const auto* c = std::get_if<ContinuousDomain>(&dim.domain)) {
            d["type"] = "continuous";
            d["lower"] = c->lower;
            d["upper"] = c->upper;
            d["scale"] = scale_to_string(c->scale);
        } else if (const auto* i = std::get_if<IntegerDomain>(&dim.domain)) {
            d["type"] = "integer";
            d["lower"] = i->lower;
            d["upper"] = i->upper;
            d["scale"] = scale_to_string(i->scale);
        } else {
            d["type"] = "categorical";
            d["choices"] = std::get<CategoricalDomain>(dim.domain).choices;
        }
        list.push_back(std::move(d));
    }
    return nlohmann::json{{"dimensions", std::move(list)}};
}

Config sample_random(const ConfigSpace& space, Rng& rng) {
    Config config;
    config.values.reserve(space.size());
    for (const auto& dim : space.dimensions()) {
        if (const auto* c = std::get_if<ContinuousDomain>(&dim.domain)) {
            config.values.emplace_back(from_unit(rng.uniform(), c->lower, c->upper, c->scale));
        } else if (const auto* i = std::get_if<IntegerDomain>(&dim.domain)) {
            const double raw = from_unit(rng.uniform(), static_cast<double>(i->lower),
                                         static_cast<double>(i->upper), i->scale);
            const auto v = std::clamp<std::int64_t>(std::llround(raw), i->lower, i->upper);
            config.values.emplace_back(v);
        } else {
            const auto& cat = std::get<CategoricalDomain>(dim.domain);
            config.values.emplace_back(
                cat.choices[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(cat.choices.size())))]);
        }
    }
    return config;
}

FeatureVector encode(const ConfigSpace& space, const Config& config) {
    space.validate(config);
    FeatureVector coords(space.encoded_dim());
    int k = 0;
    for (std::size_t i = 0; i < space.size(); ++i) {
        const auto& dim = space.dimensions()[i];
        const auto& val = config.values[i];
        if (const auto* c = std::get_if<ContinuousDomain>(&dim.domain)) {
            coords[k++] = to_unit(std::get<double>(val), c->lower, c->upper, c->scale);
        } else if (const auto* d = std::get_if<IntegerDomain>(&dim.domain)) {
            coords[k++] = to_unit(static_cast<double>(std::get<std::int64_t>(val)),
                                  static_cast<double>(d->lower), static_cast<double>(d->upper), d->scale);
        } else {
            const auto& cat = std::get<CategoricalDomain>(dim.domain);
            const auto& v = std::get<std::string>(val);
            for (const auto& choice : cat.choices) coords[k++] = (choice == v) ? 1.0 : 0.0;
        }
    }
    return coords;
}

Config decode(const ConfigSpace& space, const FeatureVector& coords) {
    if (coords.size() != space.encoded_dim())
        throw ConfigError("feature vector has wrong dimensionality");
    Config config;
    int k = 0;
    for (const auto& dim : space.dimensions()) {
        if (const auto* c = std::get_if<ContinuousDomain>(&dim.domain)) {
            const double u = std::clamp(coords[k++], 0.0, 1.0);
            config.values.emplace_back(std::clamp(from_unit(u, c->lower, c->upper, c->scale), c->lower, c->upper));
        } else if (const auto* d = std::get_if<IntegerDomain>(&dim.domain)) {
            const double u = std::clamp(coords[k++], 0.0, 1.0);
            const double raw =
                from_unit(u, static_cast<double>(d->lower), static_cast<double>(d->upper), d->scale);
            config.values.emplace_back(std::clamp<std::int64_t>(std::llround(raw), d->lower, d->upper));
        } else {
            const auto& cat = std::get<CategoricalDomain>(dim.domain);
            int best = 0;
            for (int j = 1; j < static_cast<int>(cat.choices.size()); ++j)
                if (coords[k + j] > coords[k + best]) best = j;
            config.values.emplace_back(cat.choices[static_cast<std::size_t>(best)]);
            k += static_cast<int>(cat.choices.size());
        }
    }
    return config;
}

Config perturb(const ConfigSpace& space, const Config& config, double scale, Rng& rng) {
    if (!(scale > 0.0 && scale <= 1.0)) throw ConfigError("perturb scale must be in (0, 1]");
    space.validate(config);
    Config out;
    out.values.reserve(space.size());
    for (std::size_t i = 0; i < space.size(); ++i) {
        const auto& dim = space.dimensions()[i];
        const auto& val = config.values[i];
        if (const auto* c = std::get_if<ContinuousDomain>(&dim.domain)) {
            const double u = to_unit(std::get<double>(val), c->lower, c->upper, c->scale);
            const double v = from_unit(truncated_step(u, scale, rng), c->lower, c->upper, c->scale);
            out.values.emplace_back(std::clamp(v, c->lower, c->upper));
        } else if (const auto* d = std::get_if<IntegerDomain>(&dim.domain)) {
            const double u = to_unit(static_cast<double>(std::get<std::int64_t>(val)),
                                     static_cast<double>(d->lower), static_cast<double>(d->upper), d->scale);
            const double raw = from_unit(truncated_step(u, scale, rng), static_cast<double>(d->lower),
                                         static_cast<double>(d->upper), d->scale);
            out.values.emplace_back(std::clamp<std::int64_t>(std::llround(raw), d->lower, d->upper));
        } else {
            const auto& cat = std::get<CategoricalDomain>(dim.domain);
            if (rng.uniform() < scale) {
                out.values.emplace_back(
                    cat.choices[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(cat.choices.size())))]);
            } else {
                out.values.emplace_back(val);
            }
        }
    }
    return out;
}

std::string config_key(const ConfigSpace& space, const Config& config) {
    space.validate(config);
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& val : config.values) {
        std::visit([&arr](const auto& v) { arr.push_back(v); }, val);
    }
    return arr.dump();
}

Config config_from_key(const ConfigSpace& space, const std::string& key) {
    nlohmann::json arr;
    try {
        arr = nlohmann::json::parse(key);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("invalid config key: ") + e.what());
    }
    if (!arr.is_array() || arr.size() != space.size())
        throw DataError("config key does not match space arity: " + key);
    Config config;
    for (std::size_t i = 0; i < space.size(); ++i) {
        const auto& dim = space.dimensions()[i];
        const auto& v = arr[i];
        if (std::holds_alternative<ContinuousDomain>(dim.domain)) {
            config.values.emplace_back(v.get<double>());
        } else if (std::holds_alternative<IntegerDomain>(dim.domain)) {
            config.values.emplace_back(v.get<std::int64_t>());
        } else {
            config.values.emplace_back(v.get<std::string>());
        }
    }
    space.validate(config);
    return config;
}

}  // namespace mfhpo
