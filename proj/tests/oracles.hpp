#pragma once

// Independent reference implementations used only by tests. These stay
// deliberately naive (dense inverses, full sorts, rescans) so they cannot
// share a bug with the code under test.

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>

#include "mfhpo/gp.hpp"
#include "mfhpo/kernels.hpp"

namespace oracle {

// GP posterior via the explicit inverse of K + sigma^2 I.
struct DensePrediction {
    double mean = 0.0;
    double variance = 0.0;
};

inline DensePrediction dense_gp_predict(const std::vector<mfhpo::Observation>& data,
                                        const mfhpo::KernelSpec& spec, const Eigen::VectorXd& x,
                                        int r) {
    const auto n = static_cast<Eigen::Index>(data.size());
    Eigen::MatrixXd A(n, n);
    Eigen::VectorXd y(n), mu(n), k(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j)
            A(i, j) = mfhpo::kernel_eval(data[i].x, data[i].r, data[j].x, data[j].r, spec);
        y[i] = data[i].y;
        mu[i] = mfhpo::mean_eval(data[i].x, data[i].r, spec);
        k[i] = mfhpo::kernel_eval(data[i].x, data[i].r, x, r, spec);
    }
    A.diagonal().array() += spec.noise_variance;
    const Eigen::MatrixXd Ainv = A.inverse();
    DensePrediction out;
    out.mean = mfhpo::mean_eval(x, r, spec) + k.dot(Ainv * (y - mu));
    out.variance = mfhpo::kernel_eval(x, r, x, r, spec) - k.dot(Ainv * k);
    return out;
}

inline double dense_gp_lml(const std::vector<mfhpo::Observation>& data,
                           const mfhpo::KernelSpec& spec) {
    const auto n = static_cast<Eigen::Index>(data.size());
    Eigen::MatrixXd A(n, n);
    Eigen::VectorXd y(n), mu(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j)
            A(i, j) = mfhpo::kernel_eval(data[i].x, data[i].r, data[j].x, data[j].r, spec);
        y[i] = data[i].y;
        mu[i] = mfhpo::mean_eval(data[i].x, data[i].r, spec);
    }
    A.diagonal().array() += spec.noise_variance;
    const Eigen::VectorXd c = y - mu;
    const double logdet = std::log(A.determinant());
    return -0.5 * c.dot(A.inverse() * c) - 0.5 * logdet -
           0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
}

// Chi-square goodness-of-fit p-value for observed counts vs expected
// probabilities.
inline double chi_square_pvalue(const std::vector<long>& counts,
                                const std::vector<double>& probs) {
    double total = 0.0;
    for (long c : counts) total += static_cast<double>(c);
    double stat = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const double expected = total * probs[i];
        const double diff = static_cast<double>(counts[i]) - expected;
        stat += diff * diff / expected;
    }
    boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
    return boost::math::cdf(boost::math::complement(dist, stat));
}

// Kolmogorov-Smirnov statistic against Uniform[0, 1].
inline double ks_uniform_statistic(std::vector<double> samples) {
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double lo = static_cast<double>(i) / n;
        const double hi = static_cast<double>(i + 1) / n;
        worst = std::max(worst, std::max(std::abs(samples[i] - lo), std::abs(samples[i] - hi)));
    }
    return worst;
}

// Brute-force re-statement of the asynchronous scheduling rules. Rungs are
// plain (trial, y) lists; everything is recomputed by sorting on demand.
struct BruteRung {
    std::vector<std::pair<int, double>> entries;
};

inline bool brute_continue(const BruteRung& rung, double y, int eta) {
    if (rung.entries.size() < static_cast<std::size_t>(eta)) return true;
    std::vector<double> values;
    for (const auto& e : rung.entries) values.push_back(e.second);
    std::sort(values.begin(), values.end());
    const std::size_t keep =
        (values.size() + static_cast<std::size_t>(eta) - 1) / static_cast<std::size_t>(eta);
    const double cutoff = values[keep - 1];
    return y <= cutoff;  // ties continue
}

// Promotion scan: highest rung first, among paused+eligible pick lowest y
// (ties: lowest trial id). Returns {trial, from_rung_index} or {-1, -1}.
struct BrutePromotion {
    int trial = -1;
    int rung_index = -1;
};

inline BrutePromotion brute_promotion_scan(const std::vector<BruteRung>& bracket_rungs,
                                           const std::map<int, int>& paused_at, int eta) {
    for (int idx = static_cast<int>(bracket_rungs.size()) - 2; idx >= 0; --idx) {
        const auto& rung = bracket_rungs[static_cast<std::size_t>(idx)];
        if (rung.entries.size() < static_cast<std::size_t>(eta)) continue;
        int best = -1;
        double best_y = 0.0;
        for (const auto& [trial, y] : rung.entries) {
            auto it = paused_at.find(trial);
            if (it == paused_at.end() || it->second != idx) continue;
            if (!brute_continue(rung, y, eta)) continue;
            if (best < 0 || y < best_y || (y == best_y && trial < best)) {
                best = trial;
                best_y = y;
            }
        }
        if (best >= 0) return {best, idx};
    }
    return {-1, -1};
}

}  // namespace oracle
