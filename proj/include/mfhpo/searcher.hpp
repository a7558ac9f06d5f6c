#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mfhpo/gp.hpp"
#include "mfhpo/hp_space.hpp"
#include "mfhpo/kernels.hpp"
#include "mfhpo/rng.hpp"
#include "mfhpo/scheduler.hpp"

namespace mfhpo {

// Which reported (x, r, y) observations enter the surrogate dataset.
enum class DataMode { rungs_only, rungs_and_last, all_epochs };

DataMode data_mode_from_string(const std::string& s);

// Tracks the one in-flight resource per trial: the next rung (or epoch, in
// all_epochs mode) its running job will reach.
class PendingLedger {
public:
    void add(TrialId id, int resource);
    void remove(TrialId id, int resource);
    bool has(TrialId id) const { return entries_.count(id) > 0; }
    int resource(TrialId id) const;
    const std::map<TrialId, int>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

private:
    std::map<TrialId, int> entries_;
};

// Largest rung with at least l_acq observed metrics; lowest rung before any
// rung qualifies.
int choose_r_acq(const std::vector<int>& rungs, const std::map<int, int>& counts, int l_acq);

// Fantasy-averaged EI for minimization: mean over columns of
// sigma * (z Phi(z) + phi(z)), z = (incumbent - mean_j) / sigma.
double expected_improvement(const Eigen::VectorXd& means, double variance, double incumbent);

struct SearcherConfig {
    bool model_based = true;
    DataMode data_mode = DataMode::rungs_only;
    KernelVariant kernel = KernelVariant::expdecay_learned;
    RefitPolicy refit{};
    int fantasy_samples = 10;
    int l_acq = 0;        // 0: number of hyperparameters
    int init_random = 0;  // 0: same as l_acq
    int ei_candidates = 200;
    int ei_refine_top = 5;
    int ei_refine_steps = 20;
    double ei_refine_scale = 0.1;
    bool fix_gamma = false;
    double gamma_value = 0.5;
    bool incumbent_observed = false;  // use best observed y at r_acq instead of posterior mean
    int fit_restarts = 5;
    int fit_max_iterations = 80;
};

// Audit record of the pending-evaluation protocol, used by verification.
struct DataEvent {
    enum class Kind { task_start, pending_added, pending_removed, labeled };
    Kind kind;
    TrialId trial;
    int bracket;
    int resource;
};

class Searcher {
public:
    virtual ~Searcher() = default;

    virtual Config suggest(Rng& rng) = 0;
    virtual void on_task_start(TrialId id, const Config& config, int bracket, int first_pending) = 0;
    virtual void on_promote(TrialId id, int to_rung) = 0;
    // survived: the scheduler let the job continue; next_resource: the rung
    // (or epoch) it will reach next, -1 if none.
    virtual void on_rung_report(TrialId id, int rung, double y, bool survived, int next_resource) = 0;
    // Non-rung epoch observation of a still-running job.
    virtual void on_epoch_report(TrialId id, int epoch, double y) = 0;
};

// Baseline searcher: configurations drawn uniformly at random.
class RandomSearcher : public Searcher {
public:
    explicit RandomSearcher(const ConfigSpace& space) : space_(space) {}

    Config suggest(Rng& rng) override { return sample_random(space_, rng); }
    void on_task_start(TrialId, const Config&, int, int) override {}
    void on_promote(TrialId, int) override {}
    void on_rung_report(TrialId, int, double, bool, int) override {}
    void on_epoch_report(TrialId, int, double) override {}

private:
    const ConfigSpace& space_;
};

// Model-based searcher: joint GP over (x, r) with fantasized pending
// evaluations; proposes configurations by optimizing fantasy-averaged EI at
// r_acq. Falls back to random sampling while cold or on numerical failure.
class GpSearcher : public Searcher {
public:
    GpSearcher(const ConfigSpace& space, RungGeometry geometry, SearcherConfig config);

    Config suggest(Rng& rng) override;
    void on_task_start(TrialId id, const Config& config, int bracket, int first_pending) override;
    void on_promote(TrialId id, int to_rung) override;
    void on_rung_report(TrialId id, int rung, double y, bool survived, int next_resource) override;
    void on_epoch_report(TrialId id, int epoch, double y) override;

    const std::vector<Observation>& labeled() const { return labeled_; }
    std::vector<PendingPoint> pending_points() const;
    const PendingLedger& ledger() const { return ledger_; }
    const std::vector<DataEvent>& protocol_log() const { return log_; }
    const KernelSpec& current_spec() const { return spec_; }
    int r_acq() const { return r_acq_; }

private:
    struct TrialInfo {
        Config config;
        FeatureVector features;
        int bracket = 0;
        int max_labeled = -1;
        std::optional<std::size_t> floating_index;  // rungs_and_last extra slot
    };

    void admit_labeled(TrialId id, int resource, double y, bool is_rung);
    void remove_label_at(std::size_t idx);
    bool cold_start() const;
    Config optimize_ei(const PosteriorState& posterior, int r_acq, double incumbent, Rng& rng);

    const ConfigSpace& space_;
    RungGeometry geometry_;
    SearcherConfig config_;
    std::vector<Observation> labeled_;
    std::vector<TrialId> label_owner_;  // parallel to labeled_
    PendingLedger ledger_;
    std::map<TrialId, TrialInfo> trials_;
    std::map<int, int> rung_counts_;  // labeled metrics per rung level
    std::vector<DataEvent> log_;
    KernelSpec spec_;
    bool has_spec_ = false;
    double y_shift_ = 0.0;
    double y_scale_ = 1.0;
    RefitGate gate_;
    int r_acq_ = 0;
    int l_acq_ = 0;
    int init_random_ = 0;
};

std::unique_ptr<Searcher> make_searcher(const ConfigSpace& space, const RungGeometry& geometry,
                                        const SearcherConfig& config);

}  // namespace mfhpo
