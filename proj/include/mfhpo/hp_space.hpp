#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "mfhpo/rng.hpp"

namespace mfhpo {

enum class Scale { linear, log };

struct ContinuousDomain {
    double lower = 0.0;
    double upper = 1.0;
    Scale scale = Scale::linear;
};

struct IntegerDomain {
    std::int64_t lower = 0;
    std::int64_t upper = 1;
    Scale scale = Scale::linear;
};

struct CategoricalDomain {
    std::vector<std::string> choices;
};

using Domain = std::variant<ContinuousDomain, IntegerDomain, CategoricalDomain>;

struct Dimension {
    std::string name;
    Domain domain;
};

using Value = std::variant<double, std::int64_t, std::string>;

// A concrete assignment, one value per dimension of its space.
struct Config {
    std::vector<Value> values;
};

// GP input representation: numeric dims map monotonically into [0,1]
// (log-transformed first when scale=log), categoricals become one-hot blocks.
using FeatureVector = Eigen::VectorXd;

class ConfigSpace {
public:
    explicit ConfigSpace(std::vector<Dimension> dimensions);

    static ConfigSpace from_json(const nlohmann::json& j);
    static ConfigSpace from_file(const std::string& path);
    nlohmann::json to_json() const;

    const std::vector<Dimension>& dimensions() const { return dims_; }
    // Number of hyperparameters.
    std::size_t size() const { return dims_.size(); }
    // Total encoded dimensionality (1 per numeric dim, |choices| per categorical).
    int encoded_dim() const { return encoded_dim_; }

    // Throws ConfigError when a value is missing, mistyped, or out of domain.
    void validate(const Config& config) const;

private:
    std::vector<Dimension> dims_;
    int encoded_dim_ = 0;
};

Config sample_random(const ConfigSpace& space, Rng& rng);
FeatureVector encode(const ConfigSpace& space, const Config& config);
Config decode(const ConfigSpace& space, const FeatureVector& coords);

// Local-search move: numeric dims get a truncated Gaussian step of the given
// std in encoded space, categoricals are resampled with probability `scale`.
Config perturb(const ConfigSpace& space, const Config& config, double scale, Rng& rng);

// Canonical serialized form, used as tabular-benchmark key and in traces.
std::string config_key(const ConfigSpace& space, const Config& config);
Config config_from_key(const ConfigSpace& space, const std::string& key);

}  // namespace mfhpo
