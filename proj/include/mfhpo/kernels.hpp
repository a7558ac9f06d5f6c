#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace mfhpo {

// Surrogate covariance families over (x, r). The exponential-decay variants
// model metric curves that decay toward an asymptote; matern_joint treats the
// warped resource as one more ARD input dimension.
enum class KernelVariant {
    matern_joint,       // Matern 5/2 ARD over (x, w(r))
    expdecay_additive,  // delta pinned to 0
    expdecay_fixed,     // delta pinned to 1
    expdecay_learned,   // delta free in [0, 1]
};

KernelVariant kernel_variant_from_string(const std::string& s);
std::string kernel_variant_to_string(KernelVariant v);

struct KernelSpec {
    KernelVariant variant = KernelVariant::matern_joint;
    double alpha = 1.0;
    double beta = 1.0;
    double gamma = 1.0;
    double delta = 0.0;
    double noise_variance = 1e-3;
    Eigen::VectorXd matern_length_scales;  // x dims; matern_joint appends one for warped r
    double matern_amplitude = 1.0;
    double mean_constant = 0.0;
    // r is normalized to r / resource_scale inside kappa and the warp; fixed
    // data scaling, never optimized.
    double resource_scale = 1.0;
    bool gamma_fixed = false;

    // delta as pinned by the variant.
    double effective_delta() const;
    // Number of ARD length scales this variant expects for encoded dim d.
    static int num_scales(KernelVariant v, int encoded_dim);
    static KernelSpec defaults(KernelVariant v, int encoded_dim, double resource_scale);
};

// kappa(u) = beta^alpha / (u + beta)^alpha: the exponential decay e^{-lambda u}
// marginalized over a Gamma(alpha, beta) prior on lambda.
double kappa(double u, double alpha, double beta);

double kernel_eval(const Eigen::VectorXd& x1, int r1, const Eigen::VectorXd& x2, int r2,
                   const KernelSpec& spec);
double mean_eval(const Eigen::VectorXd& x, int r, const KernelSpec& spec);

// Free-parameter vector layout for empirical-Bayes fitting. Order:
// noise_variance, matern_amplitude, length scales..., then for expdecay
// variants alpha, beta, [gamma], [delta], and finally mean_constant.
enum class ParamTransform { log_positive, logit_unit, identity };

struct ParamEntry {
    std::string name;
    ParamTransform transform;
    double lower;
    double upper;
};

std::vector<ParamEntry> param_layout(const KernelSpec& spec);
Eigen::VectorXd pack_params(const KernelSpec& spec);
KernelSpec with_params(const KernelSpec& spec, const Eigen::VectorXd& values);

// d k / d theta for every layout parameter (noise slot is zero here; the
// Gram-level sigma^2 I term is handled by the likelihood assembly).
Eigen::VectorXd kernel_grad(const Eigen::VectorXd& x1, int r1, const Eigen::VectorXd& x2, int r2,
                            const KernelSpec& spec);
Eigen::VectorXd mean_grad(const Eigen::VectorXd& x, int r, const KernelSpec& spec);

}  // namespace mfhpo
