#include "mfhpo/kernels.hpp"

#include <cmath>

#include "mfhpo/errors.hpp"

namespace mfhpo {
namespace {

constexpr double kSqrt5 = 2.23606797749978969;

// Matern 5/2 profile and its derivative in the scaled distance.
double matern52(double d) {
    return (1.0 + kSqrt5 * d + 5.0 / 3.0 * d * d) * std::exp(-kSqrt5 * d);
}

double matern52_ddist(double d) {
    return -5.0 / 3.0 * d * (1.0 + kSqrt5 * d) * std::exp(-kSqrt5 * d);
}

// Warped resource coordinate for the joint Matern kernel: rung ladders are
// geometric, so log r / log r_max spaces them evenly in [0, 1].
double warp_resource(int r, double resource_scale) {
    if (resource_scale <= 1.0) return 1.0;
    return std::log(static_cast<double>(r)) / std::log(resource_scale);
}

struct MaternParts {
    double value;    // a^2 * m(d)
    double profile;  // m(d)
    double dist;
};

MaternParts matern_ard(const Eigen::VectorXd& u1, const Eigen::VectorXd& u2,
                       const Eigen::VectorXd& scales, double amplitude) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < u1.size(); ++i) {
        const double z = (u1[i] - u2[i]) / scales[i];
        s += z * z;
    }
    const double d = std::sqrt(s);
    const double m = matern52(d);
    return {amplitude * amplitude * m, m, d};
}

Eigen::VectorXd joint_input(const Eigen::VectorXd& x, int r, const KernelSpec& spec) {
    Eigen::VectorXd u(x.size() + 1);
    u.head(x.size()) = x;
    u[x.size()] = warp_resource(r, spec.resource_scale);
    return u;
}

double dkappa_dalpha(double u, double alpha, double beta) {
    return kappa(u, alpha, beta) * (std::log(beta) - std::log(u + beta));
}

double dkappa_dbeta(double u, double alpha, double beta) {
    return kappa(u, alpha, beta) * alpha * u / (beta * (u + beta));
}

}  // namespace

KernelVariant kernel_variant_from_string(const std::string& s) {
    if (s == "matern_joint") return KernelVariant::matern_joint;
    if (s == "expdecay_additive") return KernelVariant::expdecay_additive;
    if (s == "expdecay_fixed") return KernelVariant::expdecay_fixed;
    if (s == "expdecay_learned") return KernelVariant::expdecay_learned;
    throw ConfigError("unknown kernel variant '" + s + "'");
}

std::string kernel_variant_to_string(KernelVariant v) {
    switch (v) {
        case KernelVariant::matern_joint: return "matern_joint";
        case KernelVariant::expdecay_additive: return "expdecay_additive";
        case KernelVariant::expdecay_fixed: return "expdecay_fixed";
        case KernelVariant::expdecay_learned: return "expdecay_learned";
    }
    return "?";
}

double KernelSpec::effective_delta() const {
    switch (variant) {
        case KernelVariant::expdecay_additive: return 0.0;
        case KernelVariant::expdecay_fixed: return 1.0;
        case KernelVariant::expdecay_learned: return delta;
        case KernelVariant::matern_joint: return 0.0;
    }
    return 0.0;
}

int KernelSpec::num_scales(KernelVariant v, int encoded_dim) {
    return v == KernelVariant::matern_joint ? encoded_dim + 1 : encoded_dim;
}

KernelSpec KernelSpec::defaults(KernelVariant v, int encoded_dim, double resource_scale) {
    KernelSpec spec;
    spec.variant = v;
    spec.matern_length_scales = Eigen::VectorXd::Ones(num_scales(v, encoded_dim));
    spec.resource_scale = resource_scale;
    spec.noise_variance = 1e-3;
    spec.delta = v == KernelVariant::expdecay_fixed ? 1.0 : 0.5;
    spec.gamma = 1.0;
    return spec;
}

double kappa(double u, double alpha, double beta) {
    return std::exp(alpha * (std::log(beta) - std::log(u + beta)));
}

double kernel_eval(const Eigen::VectorXd& x1, int r1, const Eigen::VectorXd& x2, int r2,
                   const KernelSpec& spec) {
    if (spec.variant == KernelVariant::matern_joint) {
        return matern_ard(joint_input(x1, r1, spec), joint_input(x2, r2, spec),
                          spec.matern_length_scales, spec.matern_amplitude)
            .value;
    }
    const double rho1 = static_cast<double>(r1) / spec.resource_scale;
    const double rho2 = static_cast<double>(r2) / spec.resource_scale;
    const double k1 = kappa(rho1, spec.alpha, spec.beta);
    const double k2 = kappa(rho2, spec.alpha, spec.beta);
    const double k12 = kappa(rho1 + rho2, spec.alpha, spec.beta);
    const double ktilde = k12 - k1 * k2;
    const double del = spec.effective_delta();
    const double g = spec.gamma - del * spec.mean_constant;
    const double kx =
        matern_ard(x1, x2, spec.matern_length_scales, spec.matern_amplitude).value;
    return g * ktilde * g + kx * (1.0 - del * (k1 + k2 - del * k12));
}

double mean_eval(const Eigen::VectorXd& x, int r, const KernelSpec& spec) {
    (void)x;
    if (spec.variant == KernelVariant::matern_joint) return spec.mean_constant;
    const double kr = kappa(static_cast<double>(r) / spec.resource_scale, spec.alpha, spec.beta);
    const double del = spec.effective_delta();
    return spec.gamma * kr + spec.mean_constant * (1.0 - del * kr);
}

std::vector<ParamEntry> param_layout(const KernelSpec& spec) {
    std::vector<ParamEntry> layout;
    layout.push_back({"noise_variance", ParamTransform::log_positive, 1e-9, 1.0});
    layout.push_back({"matern_amplitude", ParamTransform::log_positive, 0.01, 20.0});
    for (Eigen::Index i = 0; i < spec.matern_length_scales.size(); ++i)
        layout.push_back({"length_scale_" + std::to_string(i), ParamTransform::log_positive, 0.01, 10.0});
    if (spec.variant != KernelVariant::matern_joint) {
        layout.push_back({"alpha", ParamTransform::log_positive, 1e-3, 1e3});
        layout.push_back({"beta", ParamTransform::log_positive, 1e-3, 1e3});
        if (!spec.gamma_fixed)
            layout.push_back({"gamma", ParamTransform::log_positive, 0.05, 10.0});
        if (spec.variant == KernelVariant::expdecay_learned)
            layout.push_back({"delta", ParamTransform::logit_unit, 1e-4, 1.0 - 1e-4});
    }
    layout.push_back({"mean_constant", ParamTransform::identity, -10.0, 10.0});
    return layout;
}

Eigen::VectorXd pack_params(const KernelSpec& spec) {
    const auto layout = param_layout(spec);
    Eigen::VectorXd v(static_cast<Eigen::Index>(layout.size()));
    Eigen::Index i = 0;
    v[i++] = spec.noise_variance;
    v[i++] = spec.matern_amplitude;
    for (Eigen::Index j = 0; j < spec.matern_length_scales.size(); ++j)
        v[i++] = spec.matern_length_scales[j];
    if (spec.variant != KernelVariant::matern_joint) {
        v[i++] = spec.alpha;
        v[i++] = spec.beta;
        if (!spec.gamma_fixed) v[i++] = spec.gamma;
        if (spec.variant == KernelVariant::expdecay_learned) v[i++] = spec.delta;
    }
    v[i++] = spec.mean_constant;
    return v;
}

KernelSpec with_params(const KernelSpec& spec, const Eigen::VectorXd& values) {
    KernelSpec out = spec;
    Eigen::Index i = 0;
    out.noise_variance = values[i++];
    out.matern_amplitude = values[i++];
    for (Eigen::Index j = 0; j < out.matern_length_scales.size(); ++j)
        out.matern_length_scales[j] = values[i++];
    if (spec.variant != KernelVariant::matern_joint) {
        out.alpha = values[i++];
        out.beta = values[i++];
        if (!spec.gamma_fixed) out.gamma = values[i++];
        if (spec.variant == KernelVariant::expdecay_learned) out.delta = values[i++];
    }
    out.mean_constant = values[i++];
    return out;
}

Eigen::VectorXd kernel_grad(const Eigen::VectorXd& x1, int r1, const Eigen::VectorXd& x2, int r2,
                            const KernelSpec& spec) {
    const auto layout = param_layout(spec);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.size()));
    const Eigen::Index nscales = spec.matern_length_scales.size();
    const double a = spec.matern_amplitude;

    if (spec.variant == KernelVariant::matern_joint) {
        const auto u1 = joint_input(x1, r1, spec);
        const auto u2 = joint_input(x2, r2, spec);
        const auto parts = matern_ard(u1, u2, spec.matern_length_scales, a);
        g[1] = 2.0 * a * parts.profile;
        if (parts.dist > 0.0) {
            const double dm = matern52_ddist(parts.dist);
            for (Eigen::Index i = 0; i < nscales; ++i) {
                const double diff = u1[i] - u2[i];
                const double ell = spec.matern_length_scales[i];
                const double dd = -(diff * diff) / (ell * ell * ell * parts.dist);
                g[2 + i] = a * a * dm * dd;
            }
        }
        // mean_constant does not enter this kernel
        return g;
    }

    const double rho1 = static_cast<double>(r1) / spec.resource_scale;
    const double rho2 = static_cast<double>(r2) / spec.resource_scale;
    const double k1 = kappa(rho1, spec.alpha, spec.beta);
    const double k2 = kappa(rho2, spec.alpha, spec.beta);
    const double k12 = kappa(rho1 + rho2, spec.alpha, spec.beta);
    const double ktilde = k12 - k1 * k2;
    const double del = spec.effective_delta();
    const double gfac = spec.gamma - del * spec.mean_constant;
    const double q = 1.0 - del * (k1 + k2 - del * k12);
    const auto parts = matern_ard(x1, x2, spec.matern_length_scales, a);
    const double kx = parts.value;

    // amplitude and length scales act through k_X alone
    g[1] = 2.0 * a * parts.profile * q;
    if (parts.dist > 0.0) {
        const double dm = matern52_ddist(parts.dist);
        for (Eigen::Index i = 0; i < nscales; ++i) {
            const double diff = x1[i] - x2[i];
            const double ell = spec.matern_length_scales[i];
            const double dd = -(diff * diff) / (ell * ell * ell * parts.dist);
            g[2 + i] = a * a * dm * dd * q;
        }
    }

    Eigen::Index idx = 2 + nscales;
    // alpha, beta act through every kappa
    const double dk1_da = dkappa_dalpha(rho1, spec.alpha, spec.beta);
    const double dk2_da = dkappa_dalpha(rho2, spec.alpha, spec.beta);
    const double dk12_da = dkappa_dalpha(rho1 + rho2, spec.alpha, spec.beta);
    const double dktilde_da = dk12_da - k1 * dk2_da - k2 * dk1_da;
    g[idx++] = gfac * gfac * dktilde_da - kx * del * (dk1_da + dk2_da - del * dk12_da);

    const double dk1_db = dkappa_dbeta(rho1, spec.alpha, spec.beta);
    const double dk2_db = dkappa_dbeta(rho2, spec.alpha, spec.beta);
    const double dk12_db = dkappa_dbeta(rho1 + rho2, spec.alpha, spec.beta);
    const double dktilde_db = dk12_db - k1 * dk2_db - k2 * dk1_db;
    g[idx++] = gfac * gfac * dktilde_db - kx * del * (dk1_db + dk2_db - del * dk12_db);

    if (!spec.gamma_fixed) g[idx++] = 2.0 * gfac * ktilde;
    if (spec.variant == KernelVariant::expdecay_learned)
        g[idx++] = -2.0 * gfac * spec.mean_constant * ktilde + kx * (2.0 * del * k12 - k1 - k2);
    // mean_constant enters through gfac
    g[idx] = -2.0 * gfac * del * ktilde;
    return g;
}

Eigen::VectorXd mean_grad(const Eigen::VectorXd& x, int r, const KernelSpec& spec) {
    (void)x;
    const auto layout = param_layout(spec);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.size()));
    if (spec.variant == KernelVariant::matern_joint) {
        g[g.size() - 1] = 1.0;  // mean_constant
        return g;
    }
    const double kr = kappa(static_cast<double>(r) / spec.resource_scale, spec.alpha, spec.beta);
    const double dkr_da = dkappa_dalpha(static_cast<double>(r) / spec.resource_scale, spec.alpha, spec.beta);
    const double dkr_db = dkappa_dbeta(static_cast<double>(r) / spec.resource_scale, spec.alpha, spec.beta);
    const double del = spec.effective_delta();
    const double gfac = spec.gamma - del * spec.mean_constant;

    Eigen::Index idx = 2 + spec.matern_length_scales.size();
    g[idx++] = gfac * dkr_da;  // alpha
    g[idx++] = gfac * dkr_db;  // beta
    if (!spec.gamma_fixed) g[idx++] = kr;
    if (spec.variant == KernelVariant::expdecay_learned) g[idx++] = -spec.mean_constant * kr;
    g[idx] = 1.0 - del * kr;  // mean_constant
    return g;
}

}  // namespace mfhpo
