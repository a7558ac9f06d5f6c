#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mfhpo/rng.hpp"

namespace mfhpo {

using TrialId = int;

// Rung levels and their bracket subsets for successive-halving scheduling.
// Rungs are r_min * eta^k; when r_max is not an exact power the top rung is
// clamped to r_max so no evaluation overshoots the available budget. Bracket
// s uses the suffix of the rung ladder starting at index s.
struct RungGeometry {
    int r_min = 1;
    int r_max = 1;
    int eta = 3;
    std::vector<int> rungs;  // ascending, rungs[K] == r_max

    int max_rung_index() const { return static_cast<int>(rungs.size()) - 1; }  // K
    int num_brackets() const { return static_cast<int>(rungs.size()); }        // K + 1
    int top_rung() const { return rungs.back(); }
    int base_rung(int bracket) const { return rungs[static_cast<std::size_t>(bracket)]; }
    // Next rung of bracket `s` after level `rung`; -1 when `rung` is the top.
    int next_rung(int bracket, int rung) const;
    int rung_index(int rung) const;  // index in `rungs`, throws if absent
};

RungGeometry build_geometry(int r_min, int r_max, int eta);
// Degenerate geometry used by plain BO / random search: evaluations always
// run to r_max, no early stopping.
RungGeometry single_rung_geometry(int r_max);

// Unnormalized bracket weights w(s) = (K+1)/(K-s+1) * eta^(K-s) for
// s = 0..num_usable-1, proportional to configs started per bracket in
// synchronous Hyperband.
std::vector<double> bracket_weights(int max_rung_index, int eta, int num_usable);
int sample_bracket(const RungGeometry& geometry, int num_usable, Rng& rng);

// Metric ledger of one rung of one bracket; entries append-only, lower y is
// better throughout.
struct RungRecord {
    int level = 0;
    std::vector<std::pair<TrialId, double>> entries;

    bool contains(TrialId id) const;
    void add(TrialId id, double y);
    std::size_t size() const { return entries.size(); }
};

// True iff y ranks within the best ceil(n/eta) of the n recorded metrics,
// ties resolved in favor of continuing. With fewer than eta records the job
// is always continued. (id, y) must already be recorded.
bool continue_predicate(const RungRecord& record, TrialId id, double y, int eta);

enum class DecisionKind { Continue, Stop, Pause, PromoteExisting, StartNew };

struct SchedulerDecision {
    DecisionKind kind = DecisionKind::Stop;
    TrialId trial = -1;
    int bracket = -1;
    int rung = -1;       // rung the decision refers to (Continue/Promote: target)
    bool complete = false;  // Stop because r_max was reached
};

enum class SchedulerVariant { stopping, promotion, synchronous };

SchedulerVariant scheduler_variant_from_string(const std::string& s);

enum class TrialStatus { running, paused, stopped, completed };

struct TrialState {
    TrialId id = -1;
    int bracket = 0;
    TrialStatus status = TrialStatus::running;
    int last_reported_rung = -1;  // -1 before the first rung report
    int target_rung = 0;          // rung the current/last job runs toward
};

// Pure decision logic over recorded metrics for the three scheduling
// variants. All state is owned by one decision loop; reports must be applied
// in arrival order.
class HbScheduler {
public:
    HbScheduler(RungGeometry geometry, SchedulerVariant variant, int num_brackets = 0);

    const RungGeometry& geometry() const { return geometry_; }
    SchedulerVariant variant() const { return variant_; }
    int usable_brackets() const { return usable_brackets_; }

    // Registers a new trial in the given bracket; returns its id.
    TrialId start_trial(int bracket);

    // Stopping variant: record y at `rung`, decide Continue/Stop.
    SchedulerDecision on_report_stopping(TrialId id, int rung, double y);

    // Promotion variant: record y, pause (or complete at the top rung).
    SchedulerDecision on_report_promotion(TrialId id, int rung, double y);

    // Promotion variant job source: samples a bracket, scans its rungs top
    // down for a promotable paused trial, else starts new.
    SchedulerDecision next_job_promotion(Rng& rng);
    // Same scan with the bracket fixed (used by replay tooling and tests).
    SchedulerDecision promotion_decision(int bracket);

    // Synchronous variant: record y for the slot; then synchronous_step()
    // returns the batch of promote/stop decisions once the rung quota is met
    // (empty otherwise).
    void on_report_synchronous(TrialId id, int rung, double y);
    std::vector<SchedulerDecision> synchronous_step();
    // Next assignment in the current rung, if a slot is open: StartNew for
    // the base rung, PromoteExisting for higher rungs. nullopt = wait at the
    // synchronization point.
    std::optional<SchedulerDecision> next_job_synchronous();

    // Stopping variant job source: always a fresh configuration.
    SchedulerDecision next_job_stopping(Rng& rng);

    void mark_running(TrialId id, int target_rung);

    const TrialState& trial(TrialId id) const;
    const RungRecord& rung_record(int bracket, int rung) const;
    const std::vector<TrialState>& trials() const { return trials_; }

    // Synchronous bookkeeping exposed for tests.
    int sync_bracket() const { return sync_.bracket; }
    int sync_rung_index() const { return sync_.rung_index; }
    std::vector<int> sync_rung_sizes(int bracket) const;

private:
    struct SyncState {
        int bracket = 0;
        int rung_index = 0;          // index within the bracket's rung list
        int assigned = 0;            // slots handed out at the current rung
        std::vector<TrialId> promo_queue;  // trials awaiting assignment at this rung
        std::vector<std::pair<TrialId, double>> reported;  // this rung's results
    };

    RungRecord& record(int bracket, int rung);
    TrialState& trial_mut(TrialId id);
    void check_rung_in_bracket(int bracket, int rung) const;
    void advance_sync_frontier();
    int sync_rung_size(int bracket, int rung_index) const;

    RungGeometry geometry_;
    SchedulerVariant variant_;
    int usable_brackets_;
    std::vector<TrialState> trials_;
    std::map<std::pair<int, int>, RungRecord> records_;  // (bracket, rung level)
    SyncState sync_;
};

}  // namespace mfhpo
