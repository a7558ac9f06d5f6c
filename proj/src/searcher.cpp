#include "mfhpo/searcher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mfhpo/errors.hpp"

namespace mfhpo {
namespace {

double norm_pdf(double z) { return std::exp(-0.5 * z * z) * 0.3989422804014327; }
double norm_cdf(double z) { return 0.5 * std::erfc(-z * 0.7071067811865476); }

}  // namespace

DataMode data_mode_from_string(const std::string& s) {
    if (s == "rungs_only") return DataMode::rungs_only;
    if (s == "rungs_and_last") return DataMode::rungs_and_last;
    if (s == "all_epochs") return DataMode::all_epochs;
    throw ConfigError("unknown data mode '" + s + "'");
}

void PendingLedger::add(TrialId id, int resource) {
    if (entries_.count(id))
        throw ProtocolError("trial " + std::to_string(id) + " already has a pending evaluation");
    entries_[id] = resource;
}

void PendingLedger::remove(TrialId id, int resource) {
    auto it = entries_.find(id);
    if (it == entries_.end() || it->second != resource)
        throw ProtocolError("no pending evaluation for trial " + std::to_string(id) +
                            " at resource " + std::to_string(resource));
    entries_.erase(it);
}

int PendingLedger::resource(TrialId id) const {
    auto it = entries_.find(id);
    if (it == entries_.end())
        throw ProtocolError("trial " + std::to_string(id) + " has no pending evaluation");
    return it->second;
}

int choose_r_acq(const std::vector<int>& rungs, const std::map<int, int>& counts, int l_acq) {
    int best = rungs.front();
    for (int rung : rungs) {
        auto it = counts.find(rung);
        if (it != counts.end() && it->second >= l_acq) best = std::max(best, rung);
    }
    return best;
}

double expected_improvement(const Eigen::VectorXd& means, double variance, double incumbent) {
    if (variance < 0.0) throw ProtocolError("negative variance in expected_improvement");
    const double sigma = std::sqrt(variance);
    double total = 0.0;
    for (Eigen::Index j = 0; j < means.size(); ++j) {
        if (sigma < 1e-12) {
            total += std::max(incumbent - means[j], 0.0);
        } else {
            const double z = (incumbent - means[j]) / sigma;
            total += sigma * (z * norm_cdf(z) + norm_pdf(z));
        }
    }
    return total / static_cast<double>(means.size());
}

GpSearcher::GpSearcher(const ConfigSpace& space, RungGeometry geometry, SearcherConfig config)
    : space_(space),
      geometry_(std::move(geometry)),
      config_(config),
      gate_(config.refit) {
    l_acq_ = config_.l_acq > 0 ? config_.l_acq : static_cast<int>(space_.size());
    init_random_ = config_.init_random > 0 ? config_.init_random : l_acq_;
    spec_ = KernelSpec::defaults(config_.kernel, space_.encoded_dim(),
                                 static_cast<double>(geometry_.r_max));
    if (config_.fix_gamma) {
        spec_.gamma_fixed = true;
        spec_.gamma = config_.gamma_value;
    }
    r_acq_ = geometry_.rungs.front();
}

void GpSearcher::on_task_start(TrialId id, const Config& config, int bracket, int first_pending) {
    if (trials_.count(id)) throw ProtocolError("trial " + std::to_string(id) + " already started");
    TrialInfo info;
    info.config = config;
    info.features = encode(space_, config);
    info.bracket = bracket;
    trials_.emplace(id, std::move(info));
    ledger_.add(id, first_pending);
    log_.push_back({DataEvent::Kind::task_start, id, bracket, first_pending});
    log_.push_back({DataEvent::Kind::pending_added, id, bracket, first_pending});
}

void GpSearcher::on_promote(TrialId id, int to_rung) {
    auto it = trials_.find(id);
    if (it == trials_.end()) throw ProtocolError("promote for unknown trial");
    int pending_at = to_rung;
    if (config_.data_mode == DataMode::all_epochs)
        pending_at = std::min(it->second.max_labeled + 1, to_rung);
    ledger_.add(id, pending_at);
    log_.push_back({DataEvent::Kind::pending_added, id, it->second.bracket, pending_at});
}

void GpSearcher::remove_label_at(std::size_t idx) {
    const std::size_t last = labeled_.size() - 1;
    if (idx != last) {
        labeled_[idx] = std::move(labeled_[last]);
        label_owner_[idx] = label_owner_[last];
        auto& moved_owner = trials_.at(label_owner_[idx]);
        if (moved_owner.floating_index && *moved_owner.floating_index == last)
            moved_owner.floating_index = idx;
    }
    labeled_.pop_back();
    label_owner_.pop_back();
}

void GpSearcher::admit_labeled(TrialId id, int resource, double y, bool is_rung) {
    auto& info = trials_.at(id);
    if (config_.data_mode == DataMode::rungs_and_last) {
        // Keep rung observations plus the single most recent one per trial.
        if (!is_rung && info.floating_index) {
            labeled_[*info.floating_index] = {info.features, resource, y};
        } else {
            if (is_rung && info.floating_index) {
                remove_label_at(*info.floating_index);  // superseded by this rung
                info.floating_index.reset();
            }
            if (!is_rung) info.floating_index = labeled_.size();
            labeled_.push_back({info.features, resource, y});
            label_owner_.push_back(id);
        }
    } else {
        labeled_.push_back({info.features, resource, y});
        label_owner_.push_back(id);
    }
    if (is_rung) rung_counts_[resource] += 1;
    info.max_labeled = std::max(info.max_labeled, resource);
    log_.push_back({DataEvent::Kind::labeled, id, info.bracket, resource});
}

void GpSearcher::on_rung_report(TrialId id, int rung, double y, bool survived, int next_resource) {
    auto it = trials_.find(id);
    if (it == trials_.end()) throw ProtocolError("report for unknown trial");
    ledger_.remove(id, rung);
    log_.push_back({DataEvent::Kind::pending_removed, id, it->second.bracket, rung});
    admit_labeled(id, rung, y, true);
    if (survived && next_resource > 0) {
        const int pend =
            config_.data_mode == DataMode::all_epochs ? rung + 1 : next_resource;
        ledger_.add(id, pend);
        log_.push_back({DataEvent::Kind::pending_added, id, it->second.bracket, pend});
    }
}

void GpSearcher::on_epoch_report(TrialId id, int epoch, double y) {
    auto it = trials_.find(id);
    if (it == trials_.end()) throw ProtocolError("report for unknown trial");
    if (config_.data_mode == DataMode::rungs_only) return;
    if (config_.data_mode == DataMode::all_epochs) {
        ledger_.remove(id, epoch);
        log_.push_back({DataEvent::Kind::pending_removed, id, it->second.bracket, epoch});
        admit_labeled(id, epoch, y, false);
        ledger_.add(id, epoch + 1);
        log_.push_back({DataEvent::Kind::pending_added, id, it->second.bracket, epoch + 1});
        return;
    }
    admit_labeled(id, epoch, y, false);  // rungs_and_last
}

std::vector<PendingPoint> GpSearcher::pending_points() const {
    std::vector<PendingPoint> pending;
    pending.reserve(ledger_.size());
    for (const auto& [id, resource] : ledger_.entries())
        pending.push_back({trials_.at(id).features, resource});
    return pending;
}

bool GpSearcher::cold_start() const {
    auto it = rung_counts_.find(geometry_.rungs.front());
    const int lowest = it == rung_counts_.end() ? 0 : it->second;
    return lowest < init_random_;
}

Config GpSearcher::suggest(Rng& rng) {
    if (!config_.model_based || cold_start() || labeled_.empty())
        return sample_random(space_, rng);
    try {
        // Standardized targets; the transform is frozen between refits so a
        // skipped refit reuses both hyperparameters and scaling.
        int full_resource = 0;
        for (const auto& obs : labeled_)
            if (obs.r == geometry_.r_max) ++full_resource;
        const bool refit =
            gate_.should_refit(static_cast<int>(labeled_.size()), full_resource) || !has_spec_;
        if (refit) {
            double mean = 0.0;
            for (const auto& obs : labeled_) mean += obs.y;
            mean /= static_cast<double>(labeled_.size());
            double var = 0.0;
            for (const auto& obs : labeled_) var += (obs.y - mean) * (obs.y - mean);
            var /= static_cast<double>(labeled_.size());
            y_shift_ = mean;
            y_scale_ = std::sqrt(var) > 1e-12 ? std::sqrt(var) : 1.0;
        }
        std::vector<Observation> std_labeled = labeled_;
        for (auto& obs : std_labeled) obs.y = (obs.y - y_shift_) / y_scale_;
        if (refit) {
            FitOptions opts;
            opts.restarts = config_.fit_restarts;
            opts.max_iterations = config_.fit_max_iterations;
            auto fitted = fit_hyperparameters(std_labeled, spec_, rng, opts);
            spec_ = fitted.spec;
            has_spec_ = true;
        }

        const PosteriorState posterior = fantasize(std_labeled, pending_points(), spec_,
                                                   config_.fantasy_samples, rng);
        r_acq_ = std::max(r_acq_, choose_r_acq(geometry_.rungs, rung_counts_, l_acq_));

        double incumbent = std::numeric_limits<double>::infinity();
        if (config_.incumbent_observed) {
            for (const auto& obs : std_labeled)
                if (obs.r == r_acq_) incumbent = std::min(incumbent, obs.y);
            if (!std::isfinite(incumbent))
                for (const auto& obs : std_labeled) incumbent = std::min(incumbent, obs.y);
        } else {
            std::map<TrialId, bool> seen;
            for (std::size_t i = 0; i < labeled_.size(); ++i) {
                const TrialId owner = label_owner_[i];
                if (seen[owner]) continue;
                seen[owner] = true;
                const auto pred = predict(posterior, trials_.at(owner).features, r_acq_);
                incumbent = std::min(incumbent, pred.means.mean());
            }
        }
        return optimize_ei(posterior, r_acq_, incumbent, rng);
    } catch (const Error&) {
        // The experiment must never block on a surrogate failure.
        return sample_random(space_, rng);
    }
}

Config GpSearcher::optimize_ei(const PosteriorState& posterior, int r_acq, double incumbent,
                               Rng& rng) {
    struct Candidate {
        Config config;
        double ei;
    };
    auto score = [&](const Config& c) {
        const auto pred = predict(posterior, encode(space_, c), r_acq);
        return expected_improvement(pred.means, pred.variance, incumbent);
    };

    std::vector<Candidate> candidates;
    candidates.reserve(static_cast<std::size_t>(config_.ei_candidates));
    for (int i = 0; i < config_.ei_candidates; ++i) {
        Config c = sample_random(space_, rng);
        candidates.push_back({c, score(c)});
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const Candidate& a, const Candidate& b) { return a.ei > b.ei; });

    const int top = std::min<int>(config_.ei_refine_top, static_cast<int>(candidates.size()));
    Candidate best = candidates.front();
    for (int i = 0; i < top; ++i) {
        Candidate cur = candidates[static_cast<std::size_t>(i)];
        double scale = config_.ei_refine_scale;
        for (int step = 0; step < config_.ei_refine_steps; ++step) {
            Config moved = perturb(space_, cur.config, scale, rng);
            const double ei = score(moved);
            if (ei > cur.ei) cur = {std::move(moved), ei};
            scale *= 0.9;
        }
        if (cur.ei > best.ei) best = cur;
    }
    return best.config;
}

std::unique_ptr<Searcher> make_searcher(const ConfigSpace& space, const RungGeometry& geometry,
                                        const SearcherConfig& config) {
    if (!config.model_based) return std::make_unique<RandomSearcher>(space);
    return std::make_unique<GpSearcher>(space, geometry, config);
}

}  // namespace mfhpo
