#include "mfhpo/scheduler.hpp"

#include <algorithm>
#include <cmath>

#include "mfhpo/errors.hpp"

namespace mfhpo {

int RungGeometry::next_rung(int bracket, int rung) const {
    const int idx = rung_index(rung);
    if (idx < bracket) throw ProtocolError("rung below bracket base");
    if (idx == max_rung_index()) return -1;
    return rungs[static_cast<std::size_t>(idx) + 1];
}

int RungGeometry::rung_index(int rung) const {
    for (std::size_t i = 0; i < rungs.size(); ++i)
        if (rungs[i] == rung) return static_cast<int>(i);
    throw ProtocolError("resource level " + std::to_string(rung) + " is not a rung");
}

RungGeometry build_geometry(int r_min, int r_max, int eta) {
    if (r_min < 1 || r_min >= r_max)
        throw ConfigError("invalid rung geometry: need 1 <= r_min < r_max");
    if (eta < 2 || eta > 4) throw ConfigError("eta must be in {2, 3, 4}");
    RungGeometry g;
    g.r_min = r_min;
    g.r_max = r_max;
    g.eta = eta;
    // r_min * eta^k while it fits; clamp the top rung to r_max when
    // r_max / r_min is not an exact power of eta.
    long long r = r_min;
    while (r <= r_max) {
        g.rungs.push_back(static_cast<int>(r));
        r *= eta;
    }
    if (g.rungs.back() < r_max) g.rungs.push_back(r_max);
    return g;
}

RungGeometry single_rung_geometry(int r_max) {
    if (r_max < 1) throw ConfigError("r_max must be >= 1");
    RungGeometry g;
    g.r_min = r_max;
    g.r_max = r_max;
    g.eta = 3;
    g.rungs = {r_max};
    return g;
}

std::vector<double> bracket_weights(int max_rung_index, int eta, int num_usable) {
    const int K = max_rung_index;
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(num_usable));
    for (int s = 0; s < num_usable; ++s) {
        w.push_back(static_cast<double>(K + 1) / static_cast<double>(K - s + 1) *
                    std::pow(static_cast<double>(eta), K - s));
    }
    return w;
}

int sample_bracket(const RungGeometry& geometry, int num_usable, Rng& rng) {
    if (num_usable <= 1) return 0;
    const auto w = bracket_weights(geometry.max_rung_index(), geometry.eta, num_usable);
    double total = 0.0;
    for (double v : w) total += v;
    double u = rng.uniform() * total;
    for (int s = 0; s < num_usable; ++s) {
        u -= w[static_cast<std::size_t>(s)];
        if (u < 0.0) return s;
    }
    return num_usable - 1;
}

bool RungRecord::contains(TrialId id) const {
    return std::any_of(entries.begin(), entries.end(),
                       [id](const auto& e) { return e.first == id; });
}

void RungRecord::add(TrialId id, double y) {
    if (contains(id))
        throw ProtocolError("duplicate report for trial " + std::to_string(id) + " at rung " +
                            std::to_string(level));
    entries.emplace_back(id, y);
}

bool continue_predicate(const RungRecord& record, TrialId id, double y, int eta) {
    if (!record.contains(id)) throw ProtocolError("continue_predicate: metric not recorded");
    const std::size_t n = record.size();
    if (n < static_cast<std::size_t>(eta)) return true;
    const std::size_t keep = (n + static_cast<std::size_t>(eta) - 1) / static_cast<std::size_t>(eta);
    std::size_t strictly_better = 0;
    for (const auto& [other, v] : record.entries)
        if (v < y) ++strictly_better;
    // Ties at the cutoff count as in the top fraction.
    return strictly_better < keep;
}

SchedulerVariant scheduler_variant_from_string(const std::string& s) {
    if (s == "stopping") return SchedulerVariant::stopping;
    if (s == "promotion") return SchedulerVariant::promotion;
    if (s == "synchronous") return SchedulerVariant::synchronous;
    throw ConfigError("unknown scheduler variant '" + s + "'");
}

HbScheduler::HbScheduler(RungGeometry geometry, SchedulerVariant variant, int num_brackets)
    : geometry_(std::move(geometry)), variant_(variant) {
    usable_brackets_ = num_brackets > 0 ? std::min(num_brackets, geometry_.num_brackets())
                                        : geometry_.num_brackets();
}

TrialId HbScheduler::start_trial(int bracket) {
    if (bracket < 0 || bracket >= usable_brackets_)
        throw ProtocolError("bracket " + std::to_string(bracket) + " out of range");
    TrialState t;
    t.id = static_cast<TrialId>(trials_.size());
    t.bracket = bracket;
    t.status = TrialStatus::running;
    t.target_rung = geometry_.base_rung(bracket);
    trials_.push_back(t);
    if (variant_ == SchedulerVariant::synchronous) ++sync_.assigned;
    return t.id;
}

RungRecord& HbScheduler::record(int bracket, int rung) {
    auto& rec = records_[{bracket, rung}];
    rec.level = rung;
    return rec;
}

const RungRecord& HbScheduler::rung_record(int bracket, int rung) const {
    static const RungRecord empty;
    auto it = records_.find({bracket, rung});
    return it == records_.end() ? empty : it->second;
}

TrialState& HbScheduler::trial_mut(TrialId id) {
    if (id < 0 || static_cast<std::size_t>(id) >= trials_.size())
        throw ProtocolError("unknown trial " + std::to_string(id));
    return trials_[static_cast<std::size_t>(id)];
}

const TrialState& HbScheduler::trial(TrialId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= trials_.size())
        throw ProtocolError("unknown trial " + std::to_string(id));
    return trials_[static_cast<std::size_t>(id)];
}

void HbScheduler::check_rung_in_bracket(int bracket, int rung) const {
    if (geometry_.rung_index(rung) < bracket)
        throw ProtocolError("rung " + std::to_string(rung) + " not in bracket " +
                            std::to_string(bracket));
}

void HbScheduler::mark_running(TrialId id, int target_rung) {
    auto& t = trial_mut(id);
    t.status = TrialStatus::running;
    t.target_rung = target_rung;
}

SchedulerDecision HbScheduler::on_report_stopping(TrialId id, int rung, double y) {
    auto& t = trial_mut(id);
    if (t.status != TrialStatus::running)
        throw ProtocolError("report for trial " + std::to_string(id) + " which is not running");
    check_rung_in_bracket(t.bracket, rung);
    if (rung <= t.last_reported_rung) throw ProtocolError("report at or below an already reported rung");
    auto& rec = record(t.bracket, rung);
    rec.add(id, y);
    t.last_reported_rung = rung;

    SchedulerDecision d;
    d.trial = id;
    d.bracket = t.bracket;
    if (rung == geometry_.top_rung()) {
        t.status = TrialStatus::completed;
        d.kind = DecisionKind::Stop;
        d.rung = rung;
        d.complete = true;
        return d;
    }
    if (continue_predicate(rec, id, y, geometry_.eta)) {
        const int next = geometry_.next_rung(t.bracket, rung);
        t.target_rung = next;
        d.kind = DecisionKind::Continue;
        d.rung = next;
        return d;
    }
    t.status = TrialStatus::stopped;
    d.kind = DecisionKind::Stop;
    d.rung = rung;
    return d;
}

SchedulerDecision HbScheduler::on_report_promotion(TrialId id, int rung, double y) {
    auto& t = trial_mut(id);
    if (t.status != TrialStatus::running)
        throw ProtocolError("report for trial " + std::to_string(id) + " which is not running");
    check_rung_in_bracket(t.bracket, rung);
    if (rung <= t.last_reported_rung) throw ProtocolError("report at or below an already reported rung");
    record(t.bracket, rung).add(id, y);
    t.last_reported_rung = rung;

    SchedulerDecision d;
    d.trial = id;
    d.bracket = t.bracket;
    d.rung = rung;
    if (rung == geometry_.top_rung()) {
        t.status = TrialStatus::completed;
        d.kind = DecisionKind::Stop;
        d.complete = true;
    } else {
        t.status = TrialStatus::paused;
        d.kind = DecisionKind::Pause;
    }
    return d;
}

SchedulerDecision HbScheduler::promotion_decision(int bracket) {
    const int K = geometry_.max_rung_index();
    // Scan rungs of this bracket from highest promotable level downward.
    for (int idx = K - 1; idx >= bracket; --idx) {
        const int rung = geometry_.rungs[static_cast<std::size_t>(idx)];
        const auto& rec = rung_record(bracket, rung);
        // With fewer than eta metrics recorded at a rung, no promotions happen.
        if (rec.size() < static_cast<std::size_t>(geometry_.eta)) continue;
        TrialId best = -1;
        double best_y = 0.0;
        for (const auto& [id, y] : rec.entries) {
            const auto& t = trials_[static_cast<std::size_t>(id)];
            if (t.status != TrialStatus::paused || t.last_reported_rung != rung) continue;
            if (!continue_predicate(rec, id, y, geometry_.eta)) continue;
            if (best < 0 || y < best_y || (y == best_y && id < best)) {
                best = id;
                best_y = y;
            }
        }
        if (best >= 0) {
            SchedulerDecision d;
            d.kind = DecisionKind::PromoteExisting;
            d.trial = best;
            d.bracket = bracket;
            d.rung = geometry_.next_rung(bracket, rung);
            return d;
        }
    }
    SchedulerDecision d;
    d.kind = DecisionKind::StartNew;
    d.bracket = bracket;
    return d;
}

SchedulerDecision HbScheduler::next_job_promotion(Rng& rng) {
    return promotion_decision(sample_bracket(geometry_, usable_brackets_, rng));
}

SchedulerDecision HbScheduler::next_job_stopping(Rng& rng) {
    SchedulerDecision d;
    d.kind = DecisionKind::StartNew;
    d.bracket = sample_bracket(geometry_, usable_brackets_, rng);
    return d;
}

int HbScheduler::sync_rung_size(int bracket, int rung_index) const {
    const int K = geometry_.max_rung_index();
    const double base = std::ceil(static_cast<double>(K + 1) / static_cast<double>(K - bracket + 1) *
                                  std::pow(static_cast<double>(geometry_.eta), K - bracket));
    int n = static_cast<int>(base);
    for (int i = 0; i < rung_index; ++i) n /= geometry_.eta;
    return std::max(n, 1);
}

std::vector<int> HbScheduler::sync_rung_sizes(int bracket) const {
    std::vector<int> sizes;
    const int levels = geometry_.num_brackets() - bracket;
    for (int i = 0; i < levels; ++i) sizes.push_back(sync_rung_size(bracket, i));
    return sizes;
}

std::optional<SchedulerDecision> HbScheduler::next_job_synchronous() {
    const int rung_level = geometry_.rungs[static_cast<std::size_t>(sync_.bracket + sync_.rung_index)];
    if (sync_.rung_index == 0) {
        if (sync_.assigned < sync_rung_size(sync_.bracket, 0)) {
            SchedulerDecision d;
            d.kind = DecisionKind::StartNew;
            d.bracket = sync_.bracket;
            d.rung = rung_level;
            return d;
        }
        return std::nullopt;
    }
    if (!sync_.promo_queue.empty()) {
        SchedulerDecision d;
        d.kind = DecisionKind::PromoteExisting;
        d.trial = sync_.promo_queue.front();
        sync_.promo_queue.erase(sync_.promo_queue.begin());
        d.bracket = sync_.bracket;
        d.rung = rung_level;
        return d;
    }
    return std::nullopt;
}

void HbScheduler::on_report_synchronous(TrialId id, int rung, double y) {
    auto& t = trial_mut(id);
    if (t.status != TrialStatus::running)
        throw ProtocolError("report for trial " + std::to_string(id) + " which is not running");
    const int expected = geometry_.rungs[static_cast<std::size_t>(sync_.bracket + sync_.rung_index)];
    if (t.bracket != sync_.bracket || rung != expected)
        throw ProtocolError("synchronous report outside the current rung");
    record(t.bracket, rung).add(id, y);
    t.last_reported_rung = rung;
    t.status = TrialStatus::paused;
    sync_.reported.emplace_back(id, y);
}

std::vector<SchedulerDecision> HbScheduler::synchronous_step() {
    std::vector<SchedulerDecision> out;
    const int quota = sync_rung_size(sync_.bracket, sync_.rung_index);
    if (static_cast<int>(sync_.reported.size()) < quota) return out;

    const int local_top = geometry_.num_brackets() - sync_.bracket - 1;
    auto reported = sync_.reported;
    std::sort(reported.begin(), reported.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second < b.second : a.first < b.first;
    });

    if (sync_.rung_index == local_top) {
        // Bracket finished: everything at the top rung is complete.
        for (const auto& [id, y] : reported) {
            trial_mut(id).status = TrialStatus::completed;
            SchedulerDecision d;
            d.kind = DecisionKind::Stop;
            d.trial = id;
            d.bracket = sync_.bracket;
            d.rung = geometry_.rungs[static_cast<std::size_t>(sync_.bracket + sync_.rung_index)];
            d.complete = true;
            out.push_back(d);
        }
        advance_sync_frontier();
        return out;
    }

    const int promote_n = sync_rung_size(sync_.bracket, sync_.rung_index + 1);
    const int next_level = geometry_.rungs[static_cast<std::size_t>(sync_.bracket + sync_.rung_index + 1)];
    sync_.rung_index += 1;
    sync_.reported.clear();
    sync_.promo_queue.clear();
    for (std::size_t i = 0; i < reported.size(); ++i) {
        const auto [id, y] = reported[i];
        SchedulerDecision d;
        d.trial = id;
        d.bracket = sync_.bracket;
        if (static_cast<int>(i) < promote_n) {
            d.kind = DecisionKind::PromoteExisting;
            d.rung = next_level;
            sync_.promo_queue.push_back(id);
        } else {
            trial_mut(id).status = TrialStatus::stopped;
            d.kind = DecisionKind::Stop;
            d.rung = geometry_.rungs[static_cast<std::size_t>(sync_.bracket + sync_.rung_index - 1)];
        }
        out.push_back(d);
    }
    return out;
}

void HbScheduler::advance_sync_frontier() {
    sync_.bracket = (sync_.bracket + 1) % usable_brackets_;
    sync_.rung_index = 0;
    sync_.assigned = 0;
    sync_.reported.clear();
    sync_.promo_queue.clear();
}

}  // namespace mfhpo
