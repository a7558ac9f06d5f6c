#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "mfhpo/kernels.hpp"
#include "mfhpo/rng.hpp"

namespace mfhpo {

struct Observation {
    Eigen::VectorXd x;
    int r = 1;
    double y = 0.0;
};

struct PendingPoint {
    Eigen::VectorXd x;
    int r = 1;
};

// Labeled and pending (x, r) observations feeding the surrogate.
struct SurrogateDataset {
    std::vector<Observation> labeled;
    std::vector<PendingPoint> pending;
};

// Cholesky representation of the GP posterior: L L^T = K + sigma^2 I and
// P = L^{-1}(Y - mu(X) 1^T). With fantasies present Y has M columns; labeled
// rows are constant across columns.
struct PosteriorState {
    Eigen::MatrixXd inputs_x;         // n x d covariates
    Eigen::VectorXi inputs_r;         // n resource levels
    Eigen::MatrixXd cholesky_factor;  // n x n lower triangular
    Eigen::MatrixXd solved_targets;   // n x M
    KernelSpec spec;

    int size() const { return static_cast<int>(inputs_r.size()); }
    int num_fantasies() const { return static_cast<int>(solved_targets.cols()); }
};

PosteriorState fit_posterior(const std::vector<Observation>& labeled, const KernelSpec& spec);

// Extends a labeled-only posterior with M joint samples of the pending
// outcomes drawn from its predictive (noise included). With no pending the
// columns are plain replicas.
PosteriorState fantasize(const std::vector<Observation>& labeled,
                         const std::vector<PendingPoint>& pending, const KernelSpec& spec,
                         int num_fantasies, Rng& rng);

struct Prediction {
    Eigen::VectorXd means;  // one per fantasy column
    double variance = 0.0;  // common across columns
};

Prediction predict(const PosteriorState& posterior, const Eigen::VectorXd& x, int r);

double log_marginal_likelihood(const std::vector<Observation>& labeled, const KernelSpec& spec);

struct LmlValueGrad {
    double value = 0.0;
    Eigen::VectorXd grad;  // w.r.t. param_layout entries, constrained space
};

LmlValueGrad log_marginal_likelihood_grad(const std::vector<Observation>& labeled,
                                          const KernelSpec& spec);

struct FitOptions {
    int restarts = 5;
    int max_iterations = 80;
};

struct FitResult {
    KernelSpec spec;
    double lml = 0.0;
    bool fell_back = false;  // every restart failed; template returned as-is
};

// Empirical Bayes: multi-restart projected gradient ascent of the marginal
// likelihood in log/logit-transformed coordinates. Deterministic given rng.
FitResult fit_hyperparameters(const std::vector<Observation>& labeled, const KernelSpec& tmpl,
                              Rng& rng, const FitOptions& options = {});

enum class RefitPolicyKind { always, every_k, full_resource_gate };

struct RefitPolicy {
    RefitPolicyKind kind = RefitPolicyKind::always;
    int k = 3;
    int warmup = 10;  // dataset-size threshold below which refits always happen
};

RefitPolicyKind refit_policy_from_string(const std::string& s);

// Stateful gate deciding when hyperparameter refits may be skipped:
// `always`, `every_k` (never skipped until the dataset outgrows the warmup
// threshold, then every k-th update), or `full_resource_gate` (skipped while
// the number of r = r_max datapoints does not grow).
class RefitGate {
public:
    explicit RefitGate(RefitPolicy policy) : policy_(policy) {}

    bool should_refit(int labeled_size, int full_resource_count);

private:
    RefitPolicy policy_;
    long updates_after_warmup_ = 0;
    bool warmup_done_ = false;
    int last_full_count_ = -1;
};

}  // namespace mfhpo
