#include "mfhpo/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

#include "mfhpo/errors.hpp"

namespace mfhpo {
namespace {

constexpr double kLog2Pi = 1.8378770664093455;

Eigen::MatrixXd gram_matrix(const Eigen::MatrixXd& X, const Eigen::VectorXi& R,
                            const KernelSpec& spec) {
    const auto n = X.rows();
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
            const double v = kernel_eval(X.row(i).transpose(), R[i], X.row(j).transpose(), R[j], spec);
            K(i, j) = v;
            K(j, i) = v;
        }
    }
    return K;
}

Eigen::VectorXd mean_vector(const Eigen::MatrixXd& X, const Eigen::VectorXi& R,
                            const KernelSpec& spec) {
    Eigen::VectorXd m(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        m[i] = mean_eval(X.row(i).transpose(), R[i], spec);
    return m;
}

// Cholesky with jitter escalation: start at 1e-10 * mean diagonal, escalate
// x10 up to 1e-4 * mean diagonal, then give up.
Eigen::MatrixXd robust_cholesky(const Eigen::MatrixXd& A) {
    if (!A.allFinite()) throw NumericsError("Gram matrix has non-finite entries");
    const double scale = std::max(A.trace() / static_cast<double>(A.rows()), 1e-300);
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    for (double jitter = 1e-10 * scale; jitter <= 1e-4 * scale * 1.0000001; jitter *= 10.0) {
        Eigen::MatrixXd Aj = A;
        Aj.diagonal().array() += jitter;
        llt.compute(Aj);
        if (llt.info() == Eigen::Success) return llt.matrixL();
    }
    throw NumericsError("Cholesky factorization failed after jitter escalation");
}

void require_nonempty(const std::vector<Observation>& labeled) {
    if (labeled.empty()) throw ProtocolError("GP posterior requires at least one observation");
}

void pack_inputs(const std::vector<Observation>& labeled, Eigen::MatrixXd& X, Eigen::VectorXi& R,
                 Eigen::VectorXd& y) {
    const auto n = static_cast<Eigen::Index>(labeled.size());
    const auto d = labeled.front().x.size();
    X.resize(n, d);
    R.resize(n);
    y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        X.row(i) = labeled[static_cast<std::size_t>(i)].x.transpose();
        R[i] = labeled[static_cast<std::size_t>(i)].r;
        y[i] = labeled[static_cast<std::size_t>(i)].y;
    }
}

double transform_forward(double v, ParamTransform t) {
    switch (t) {
        case ParamTransform::log_positive: return std::log(v);
        case ParamTransform::logit_unit: return std::log(v / (1.0 - v));
        case ParamTransform::identity: return v;
    }
    return v;
}

double transform_backward(double t, ParamTransform tr) {
    switch (tr) {
        case ParamTransform::log_positive: return std::exp(t);
        case ParamTransform::logit_unit: return 1.0 / (1.0 + std::exp(-t));
        case ParamTransform::identity: return t;
    }
    return t;
}

// d(constrained)/d(unconstrained), used to chain gradients into t-space.
double transform_jacobian(double v, ParamTransform t) {
    switch (t) {
        case ParamTransform::log_positive: return v;
        case ParamTransform::logit_unit: return v * (1.0 - v);
        case ParamTransform::identity: return 1.0;
    }
    return 1.0;
}

}  // namespace

PosteriorState fit_posterior(const std::vector<Observation>& labeled, const KernelSpec& spec) {
    require_nonempty(labeled);
    PosteriorState post;
    post.spec = spec;
    Eigen::VectorXd y;
    pack_inputs(labeled, post.inputs_x, post.inputs_r, y);
    Eigen::MatrixXd A = gram_matrix(post.inputs_x, post.inputs_r, spec);
    A.diagonal().array() += spec.noise_variance;
    post.cholesky_factor = robust_cholesky(A);
    const Eigen::VectorXd centered = y - mean_vector(post.inputs_x, post.inputs_r, spec);
    post.solved_targets =
        post.cholesky_factor.triangularView<Eigen::Lower>().solve(centered);
    return post;
}

PosteriorState fantasize(const std::vector<Observation>& labeled,
                         const std::vector<PendingPoint>& pending, const KernelSpec& spec,
                         int num_fantasies, Rng& rng) {
    require_nonempty(labeled);
    if (num_fantasies < 1) throw ProtocolError("fantasize requires M >= 1");
    const PosteriorState base = fit_posterior(labeled, spec);
    const auto n = static_cast<Eigen::Index>(labeled.size());
    const auto p = static_cast<Eigen::Index>(pending.size());
    const auto M = static_cast<Eigen::Index>(num_fantasies);

    if (p == 0) {
        PosteriorState out = base;
        out.solved_targets = base.solved_targets.col(0).replicate(1, M);
        return out;
    }

    const auto d = labeled.front().x.size();
    Eigen::MatrixXd Z(p, d);
    Eigen::VectorXi Rz(p);
    for (Eigen::Index i = 0; i < p; ++i) {
        Z.row(i) = pending[static_cast<std::size_t>(i)].x.transpose();
        Rz[i] = pending[static_cast<std::size_t>(i)].r;
    }

    // Joint predictive of the pending outcomes under the labeled posterior.
    Eigen::MatrixXd Kxz(n, p);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < p; ++j)
            Kxz(i, j) = kernel_eval(base.inputs_x.row(i).transpose(), base.inputs_r[i],
                                    Z.row(j).transpose(), Rz[j], spec);
    Eigen::MatrixXd Kzz = gram_matrix(Z, Rz, spec);
    const Eigen::MatrixXd V = base.cholesky_factor.triangularView<Eigen::Lower>().solve(Kxz);
    Eigen::MatrixXd S = Kzz - V.transpose() * V;
    S.diagonal().array() += spec.noise_variance;  // fantasy targets are observations
    const Eigen::VectorXd mz = mean_vector(Z, Rz, spec);
    const Eigen::VectorXd pred_mean = mz + V.transpose() * base.solved_targets.col(0);
    const Eigen::MatrixXd C = robust_cholesky((S + S.transpose()) / 2.0);

    Eigen::MatrixXd fantasy_targets(p, M);
    for (Eigen::Index j = 0; j < M; ++j) {
        Eigen::VectorXd xi(p);
        for (Eigen::Index i = 0; i < p; ++i) xi[i] = rng.normal();
        fantasy_targets.col(j) = pred_mean + C * xi;
    }

    // Extended representation over labeled + pending.
    PosteriorState out;
    out.spec = spec;
    out.inputs_x.resize(n + p, d);
    out.inputs_x.topRows(n) = base.inputs_x;
    out.inputs_x.bottomRows(p) = Z;
    out.inputs_r.resize(n + p);
    out.inputs_r.head(n) = base.inputs_r;
    out.inputs_r.tail(p) = Rz;

    Eigen::MatrixXd A = gram_matrix(out.inputs_x, out.inputs_r, spec);
    A.diagonal().array() += spec.noise_variance;
    out.cholesky_factor = robust_cholesky(A);

    Eigen::MatrixXd Y(n + p, M);
    for (Eigen::Index i = 0; i < n; ++i)
        Y.row(i).setConstant(labeled[static_cast<std::size_t>(i)].y);
    Y.bottomRows(p) = fantasy_targets;
    const Eigen::VectorXd mu = mean_vector(out.inputs_x, out.inputs_r, spec);
    out.solved_targets =
        out.cholesky_factor.triangularView<Eigen::Lower>().solve(Y - mu.replicate(1, M));
    return out;
}

Prediction predict(const PosteriorState& posterior, const Eigen::VectorXd& x, int r) {
    const auto n = static_cast<Eigen::Index>(posterior.size());
    Eigen::VectorXd k(n);
    for (Eigen::Index i = 0; i < n; ++i)
        k[i] = kernel_eval(posterior.inputs_x.row(i).transpose(), posterior.inputs_r[i], x, r,
                           posterior.spec);
    const Eigen::VectorXd v = posterior.cholesky_factor.triangularView<Eigen::Lower>().solve(k);
    const double prior = kernel_eval(x, r, x, r, posterior.spec);
    const double mu = mean_eval(x, r, posterior.spec);
    Prediction p;
    p.means = (posterior.solved_targets.transpose() * v).array() + mu;
    p.variance = std::max(prior - v.squaredNorm(), 0.0);
    return p;
}

double log_marginal_likelihood(const std::vector<Observation>& labeled, const KernelSpec& spec) {
    const PosteriorState post = fit_posterior(labeled, spec);
    const double quad = post.solved_targets.col(0).squaredNorm();
    const double logdet = post.cholesky_factor.diagonal().array().log().sum();
    return -0.5 * quad - logdet - 0.5 * static_cast<double>(post.size()) * kLog2Pi;
}

LmlValueGrad log_marginal_likelihood_grad(const std::vector<Observation>& labeled,
                                          const KernelSpec& spec) {
    require_nonempty(labeled);
    Eigen::MatrixXd X;
    Eigen::VectorXi R;
    Eigen::VectorXd y;
    pack_inputs(labeled, X, R, y);
    const auto n = X.rows();

    Eigen::MatrixXd A = gram_matrix(X, R, spec);
    A.diagonal().array() += spec.noise_variance;
    const Eigen::MatrixXd L = robust_cholesky(A);
    const Eigen::VectorXd centered = y - mean_vector(X, R, spec);
    const Eigen::VectorXd p = L.triangularView<Eigen::Lower>().solve(centered);
    const Eigen::VectorXd alpha =
        L.transpose().triangularView<Eigen::Upper>().solve(p);

    // A^{-1} via the factor; needed for the trace terms.
    Eigen::MatrixXd Linv = L.triangularView<Eigen::Lower>().solve(
        Eigen::MatrixXd::Identity(n, n));
    Eigen::MatrixXd Ainv = Linv.transpose() * Linv;

    const auto layout = param_layout(spec);
    const auto P = static_cast<Eigen::Index>(layout.size());

    // Per-pair kernel gradients, assembled into dK matrices per parameter.
    std::vector<Eigen::MatrixXd> dK(static_cast<std::size_t>(P),
                                    Eigen::MatrixXd::Zero(n, n));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
            const Eigen::VectorXd g =
                kernel_grad(X.row(i).transpose(), R[i], X.row(j).transpose(), R[j], spec);
            for (Eigen::Index t = 0; t < P; ++t) {
                dK[static_cast<std::size_t>(t)](i, j) = g[t];
                dK[static_cast<std::size_t>(t)](j, i) = g[t];
            }
        }
    }
    // Mean gradients per row.
    Eigen::MatrixXd dMu(n, P);
    for (Eigen::Index i = 0; i < n; ++i)
        dMu.row(i) = mean_grad(X.row(i).transpose(), R[i], spec).transpose();

    LmlValueGrad out;
    out.value = -0.5 * p.squaredNorm() - L.diagonal().array().log().sum() -
                0.5 * static_cast<double>(n) * kLog2Pi;
    out.grad.resize(P);
    for (Eigen::Index t = 0; t < P; ++t) {
        double dk_term;
        if (layout[static_cast<std::size_t>(t)].name == "noise_variance") {
            dk_term = 0.5 * (alpha.squaredNorm() - Ainv.trace());
        } else {
            const auto& D = dK[static_cast<std::size_t>(t)];
            dk_term = 0.5 * (alpha.dot(D * alpha) - Ainv.cwiseProduct(D).sum());
        }
        out.grad[t] = dk_term + dMu.col(t).dot(alpha);
    }
    return out;
}

FitResult fit_hyperparameters(const std::vector<Observation>& labeled, const KernelSpec& tmpl,
                              Rng& rng, const FitOptions& options) {
    require_nonempty(labeled);
    const auto layout = param_layout(tmpl);
    const auto P = static_cast<Eigen::Index>(layout.size());

    auto clamp_constrained = [&](Eigen::VectorXd v) {
        for (Eigen::Index i = 0; i < P; ++i) {
            const auto& e = layout[static_cast<std::size_t>(i)];
            v[i] = std::clamp(v[i], e.lower, e.upper);
        }
        return v;
    };
    auto to_unconstrained = [&](const Eigen::VectorXd& v) {
        Eigen::VectorXd t(P);
        for (Eigen::Index i = 0; i < P; ++i)
            t[i] = transform_forward(v[i], layout[static_cast<std::size_t>(i)].transform);
        return t;
    };
    auto to_constrained = [&](const Eigen::VectorXd& t) {
        Eigen::VectorXd v(P);
        for (Eigen::Index i = 0; i < P; ++i)
            v[i] = transform_backward(t[i], layout[static_cast<std::size_t>(i)].transform);
        return clamp_constrained(v);
    };

    auto objective = [&](const Eigen::VectorXd& t, Eigen::VectorXd* grad_t) -> double {
        const Eigen::VectorXd v = to_constrained(t);
        const KernelSpec spec = with_params(tmpl, v);
        if (!grad_t) return log_marginal_likelihood(labeled, spec);
        const auto vg = log_marginal_likelihood_grad(labeled, spec);
        grad_t->resize(P);
        for (Eigen::Index i = 0; i < P; ++i)
            (*grad_t)[i] =
                vg.grad[i] * transform_jacobian(v[i], layout[static_cast<std::size_t>(i)].transform);
        return vg.value;
    };

    auto random_start = [&]() {
        Eigen::VectorXd v(P);
        for (Eigen::Index i = 0; i < P; ++i) {
            const auto& e = layout[static_cast<std::size_t>(i)];
            switch (e.transform) {
                case ParamTransform::log_positive:
                    v[i] = std::exp(rng.uniform(std::log(e.lower), std::log(e.upper)));
                    break;
                case ParamTransform::logit_unit:
                    v[i] = rng.uniform(e.lower, e.upper);
                    break;
                case ParamTransform::identity:
                    v[i] = std::clamp(rng.normal(), e.lower, e.upper);
                    break;
            }
        }
        return v;
    };

    double best_value = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_t;
    int failures = 0;

    for (int restart = 0; restart < options.restarts; ++restart) {
        Eigen::VectorXd start = restart == 0 ? clamp_constrained(pack_params(tmpl)) : random_start();
        Eigen::VectorXd t = to_unconstrained(start);
        double value;
        Eigen::VectorXd grad;
        try {
            value = objective(t, &grad);
        } catch (const NumericsError&) {
            ++failures;
            continue;
        }

        double step = 0.1;
        for (int iter = 0; iter < options.max_iterations; ++iter) {
            bool improved = false;
            for (int h = 0; h < 20 && !improved; ++h) {
                Eigen::VectorXd trial = t + step * grad;
                double trial_value;
                try {
                    trial_value = objective(trial, nullptr);
                } catch (const NumericsError&) {
                    step *= 0.5;
                    continue;
                }
                if (trial_value > value) {
                    const double gain = trial_value - value;
                    t = trial;
                    value = trial_value;
                    step *= 1.5;
                    improved = true;
                    if (gain < 1e-9 * (1.0 + std::abs(value))) iter = options.max_iterations;
                } else {
                    step *= 0.5;
                }
            }
            if (!improved || step < 1e-10) break;
            try {
                value = objective(t, &grad);
            } catch (const NumericsError&) {
                break;
            }
        }
        if (value > best_value) {
            best_value = value;
            best_t = t;
        }
    }

    FitResult result;
    if (!best_t.size()) {
        result.spec = tmpl;
        result.lml = -std::numeric_limits<double>::infinity();
        result.fell_back = true;
        return result;
    }
    result.spec = with_params(tmpl, to_constrained(best_t));
    result.lml = best_value;
    result.fell_back = false;
    return result;
}

RefitPolicyKind refit_policy_from_string(const std::string& s) {
    if (s == "always") return RefitPolicyKind::always;
    if (s == "every_k") return RefitPolicyKind::every_k;
    if (s == "full_resource_gate") return RefitPolicyKind::full_resource_gate;
    throw ConfigError("unknown refit policy '" + s + "'");
}

bool RefitGate::should_refit(int labeled_size, int full_resource_count) {
    switch (policy_.kind) {
        case RefitPolicyKind::always: return true;
        case RefitPolicyKind::every_k: {
            if (!warmup_done_) {
                if (labeled_size <= policy_.warmup) return true;
                warmup_done_ = true;
            }
            ++updates_after_warmup_;
            return updates_after_warmup_ % std::max(policy_.k, 1) == 0;
        }
        case RefitPolicyKind::full_resource_gate: {
            const bool first = last_full_count_ < 0;
            const bool grew = full_resource_count > last_full_count_;
            last_full_count_ = full_resource_count;
            return first || grew;
        }
    }
    return true;
}

}  // namespace mfhpo
