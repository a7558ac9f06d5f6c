#include "mfhpo/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <optional>
#include <ostream>

#include <nlohmann/json.hpp>

#include "mfhpo/errors.hpp"

namespace mfhpo {
namespace {

struct WorkerJob {
    TrialId trial = -1;
    Config config;
    int bracket = 0;
    int epoch = 0;          // epoch in flight (1-based)
    int target_rung = 0;    // next report boundary
    double completion = 0.0;
    double metric = 0.0;    // result of the epoch in flight
    double seconds = 0.0;
};

class SimLoop {
public:
    SimLoop(const ConfigSpace& space, const Benchmark& benchmark, HbScheduler& scheduler,
            Searcher& searcher, const SimOptions& options)
        : space_(space),
          benchmark_(benchmark),
          scheduler_(scheduler),
          searcher_(searcher),
          options_(options),
          rng_sched_(mix_seed(options.seed, 1)),
          rng_search_(mix_seed(options.seed, 2)),
          jobs_(static_cast<std::size_t>(options.n_workers)),
          idle_since_(static_cast<std::size_t>(options.n_workers), 0.0),
          starved_(static_cast<std::size_t>(options.n_workers), false) {
        trace_.n_workers = options.n_workers;
        trace_.time_budget = options.time_budget;
        trace_.seed = options.seed;
    }

    EventTrace run() {
        if (options_.time_budget <= 0.0) return std::move(trace_);
        double clock = 0.0;
        while (true) {
            if (options_.max_events > 0 &&
                trace_.events.size() >= static_cast<std::size_t>(options_.max_events))
                break;
            assign_idle_workers(clock);
            int w = -1;
            for (int i = 0; i < options_.n_workers; ++i) {
                const auto& job = jobs_[static_cast<std::size_t>(i)];
                if (!job) continue;
                if (w < 0 || job->completion < jobs_[static_cast<std::size_t>(w)]->completion) w = i;
            }
            if (w < 0) break;  // every worker starved at a synchronization point
            const double tc = jobs_[static_cast<std::size_t>(w)]->completion;
            if (tc > options_.time_budget) break;
            clock = tc;
            complete_epoch(w, clock);
        }
        close_idle_intervals(clock);
        return std::move(trace_);
    }

private:

    void close_idle_intervals(double t) {
        for (int w = 0; w < options_.n_workers; ++w) {
            if (starved_[static_cast<std::size_t>(w)] && t > idle_since_[static_cast<std::size_t>(w)])
                trace_.idle_intervals.push_back({w, idle_since_[static_cast<std::size_t>(w)], t});
        }
    }

    void push_event(TraceEvent e) { trace_.events.push_back(std::move(e)); }

    void observe_metric(double t, double y) {
        if (trace_.incumbents.empty() || y < trace_.incumbents.back().y)
            trace_.incumbents.push_back({t, y});
    }

    void begin_epoch(int w, double t, double extra_delay = 0.0) {
        auto& job = *jobs_[static_cast<std::size_t>(w)];
        const auto result = benchmark_.evaluate(job.config, job.epoch);
        job.metric = result.metric;
        job.seconds = result.seconds;
        job.completion = t + extra_delay + result.seconds;
    }

    void assign_idle_workers(double t) {
        for (int w = 0; w < options_.n_workers; ++w) {
            if (jobs_[static_cast<std::size_t>(w)]) continue;
            if (acquire_job(w, t)) {
                if (starved_[static_cast<std::size_t>(w)]) {
                    if (t > idle_since_[static_cast<std::size_t>(w)])
                        trace_.idle_intervals.push_back(
                            {w, idle_since_[static_cast<std::size_t>(w)], t});
                    starved_[static_cast<std::size_t>(w)] = false;
                }
            } else if (!starved_[static_cast<std::size_t>(w)]) {
                starved_[static_cast<std::size_t>(w)] = true;
                idle_since_[static_cast<std::size_t>(w)] = t;
            }
        }
    }

    bool acquire_job(int w, double t) {
        switch (scheduler_.variant()) {
            case SchedulerVariant::stopping: {
                const auto d = scheduler_.next_job_stopping(rng_sched_);
                start_new(w, t, d.bracket, scheduler_.geometry().base_rung(d.bracket));
                return true;
            }
            case SchedulerVariant::promotion: {
                const auto d = scheduler_.next_job_promotion(rng_sched_);
                if (d.kind == DecisionKind::StartNew) {
                    start_new(w, t, d.bracket, scheduler_.geometry().base_rung(d.bracket));
                } else {
                    promote_existing(w, t, d, options_.resume_from_checkpoint);
                }
                return true;
            }
            case SchedulerVariant::synchronous: {
                const auto d = scheduler_.next_job_synchronous();
                if (!d) return false;
                if (d->kind == DecisionKind::StartNew) {
                    start_new(w, t, d->bracket, d->rung);
                } else {
                    promote_existing(w, t, *d, /*from_scratch=*/false);
                }
                return true;
            }
        }
        return false;
    }

    void start_new(int w, double t, int bracket, int first_rung) {
        const Config config = searcher_.suggest(rng_search_);
        const TrialId id = scheduler_.start_trial(bracket);
        scheduler_.mark_running(id, first_rung);
        searcher_.on_task_start(id, config, bracket, first_rung);
        configs_.resize(std::max(configs_.size(), static_cast<std::size_t>(id) + 1));
        configs_[static_cast<std::size_t>(id)] = config;
        observed_max_.resize(configs_.size(), 0);

        TraceEvent e;
        e.t = t;
        e.worker = w;
        e.kind = EventKind::start;
        e.trial = id;
        e.bracket = bracket;
        e.config_key = config_key(space_, config);
        push_event(std::move(e));

        WorkerJob job;
        job.trial = id;
        job.config = config;
        job.bracket = bracket;
        job.epoch = 1;
        job.target_rung = first_rung;
        jobs_[static_cast<std::size_t>(w)] = job;
        begin_epoch(w, t, options_.decision_overhead_sec);
    }

    void promote_existing(int w, double t, const SchedulerDecision& d, bool from_scratch) {
        const TrialId id = d.trial;
        const int from = scheduler_.trial(id).last_reported_rung;
        scheduler_.mark_running(id, d.rung);
        searcher_.on_promote(id, d.rung);

        TraceEvent e;
        e.t = t;
        e.worker = w;
        e.kind = EventKind::promote;
        e.trial = id;
        e.rung = d.rung;
        e.from_rung = from;
        push_event(std::move(e));

        WorkerJob job;
        job.trial = id;
        job.config = configs_[static_cast<std::size_t>(id)];
        job.bracket = d.bracket;
        job.epoch = from_scratch ? 1 : from + 1;
        job.target_rung = d.rung;
        jobs_[static_cast<std::size_t>(w)] = job;
        begin_epoch(w, t, options_.decision_overhead_sec);
    }

    void complete_epoch(int w, double t) {
        auto& job = *jobs_[static_cast<std::size_t>(w)];
        const int epoch = job.epoch;
        const double y = job.metric;

        TraceEvent e;
        e.t = t;
        e.worker = w;
        e.kind = EventKind::epoch_report;
        e.trial = job.trial;
        e.epoch = epoch;
        e.metric = y;
        e.seconds = job.seconds;
        push_event(std::move(e));
        observe_metric(t, y);

        const bool first_time = epoch > observed_max_[static_cast<std::size_t>(job.trial)];
        if (first_time) observed_max_[static_cast<std::size_t>(job.trial)] = epoch;

        if (epoch < job.target_rung) {
            if (first_time) searcher_.on_epoch_report(job.trial, epoch, y);
            job.epoch = epoch + 1;
            begin_epoch(w, t);
            return;
        }
        report_at_rung(w, t, epoch, y);
    }

    void report_at_rung(int w, double t, int rung, double y) {
        auto& job = *jobs_[static_cast<std::size_t>(w)];
        const TrialId id = job.trial;

        TraceEvent rep;
        rep.t = t;
        rep.worker = w;
        rep.kind = EventKind::rung_report;
        rep.trial = id;
        rep.rung = rung;
        rep.metric = y;
        push_event(std::move(rep));

        switch (scheduler_.variant()) {
            case SchedulerVariant::stopping: {
                const auto d = scheduler_.on_report_stopping(id, rung, y);
                const bool survived = d.kind == DecisionKind::Continue;
                searcher_.on_rung_report(id, rung, y, survived, survived ? d.rung : -1);
                if (survived) {
                    job.target_rung = d.rung;
                    job.epoch = rung + 1;
                    begin_epoch(w, t);
                    return;
                }
                TraceEvent e;
                e.t = t;
                e.worker = w;
                e.kind = d.complete ? EventKind::complete : EventKind::stop;
                e.trial = id;
                e.rung = rung;
                push_event(std::move(e));
                jobs_[static_cast<std::size_t>(w)].reset();
                return;
            }
            case SchedulerVariant::promotion: {
                const auto d = scheduler_.on_report_promotion(id, rung, y);
                searcher_.on_rung_report(id, rung, y, false, -1);
                TraceEvent e;
                e.t = t;
                e.worker = w;
                e.kind = d.kind == DecisionKind::Pause ? EventKind::pause : EventKind::complete;
                e.trial = id;
                e.rung = rung;
                push_event(std::move(e));
                jobs_[static_cast<std::size_t>(w)].reset();
                return;
            }
            case SchedulerVariant::synchronous: {
                scheduler_.on_report_synchronous(id, rung, y);
                searcher_.on_rung_report(id, rung, y, false, -1);
                TraceEvent pe;
                pe.t = t;
                pe.worker = w;
                pe.kind = EventKind::pause;  // worker releases at the sync point
                pe.trial = id;
                pe.rung = rung;
                push_event(std::move(pe));
                for (const auto& d : scheduler_.synchronous_step()) {
                    if (d.kind != DecisionKind::Stop) continue;  // promotions surface on pickup
                    TraceEvent e;
                    e.t = t;
                    e.worker = -1;  // master decision, not tied to a worker
                    e.kind = d.complete ? EventKind::complete : EventKind::stop;
                    e.trial = d.trial;
                    e.rung = d.rung;
                    push_event(std::move(e));
                }
                jobs_[static_cast<std::size_t>(w)].reset();
                return;
            }
        }
    }

    const ConfigSpace& space_;
    const Benchmark& benchmark_;
    HbScheduler& scheduler_;
    Searcher& searcher_;
    SimOptions options_;
    Rng rng_sched_;
    Rng rng_search_;
    EventTrace trace_;
    std::vector<std::optional<WorkerJob>> jobs_;
    std::vector<double> idle_since_;
    std::vector<bool> starved_;
    std::vector<Config> configs_;
    std::vector<int> observed_max_;
};

}  // namespace

std::string event_kind_to_string(EventKind k) {
    switch (k) {
        case EventKind::start: return "start";
        case EventKind::epoch_report: return "epoch_report";
        case EventKind::rung_report: return "rung_report";
        case EventKind::stop: return "stop";
        case EventKind::promote: return "promote";
        case EventKind::pause: return "pause";
        case EventKind::complete: return "complete";
    }
    return "?";
}

EventKind event_kind_from_string(const std::string& s) {
    if (s == "start") return EventKind::start;
    if (s == "epoch_report") return EventKind::epoch_report;
    if (s == "rung_report") return EventKind::rung_report;
    if (s == "stop") return EventKind::stop;
    if (s == "promote") return EventKind::promote;
    if (s == "pause") return EventKind::pause;
    if (s == "complete") return EventKind::complete;
    throw DataError("unknown event kind '" + s + "'");
}

EventTrace run_simulation(const ConfigSpace& space, const Benchmark& benchmark,
                          HbScheduler& scheduler, Searcher& searcher, const SimOptions& options) {
    if (options.n_workers < 1) throw ConfigError("n_workers must be >= 1");
    SimLoop loop(space, benchmark, scheduler, searcher, options);
    return loop.run();
}

std::vector<std::pair<double, double>> regret_series(const EventTrace& trace, double y_star) {
    std::vector<std::pair<double, double>> out;
    out.reserve(trace.incumbents.size());
    for (const auto& p : trace.incumbents) out.emplace_back(p.t, p.y - y_star);
    return out;
}

void write_trace_jsonl(const EventTrace& trace, std::ostream& out) {
    nlohmann::json meta{{"meta",
                         {{"n_workers", trace.n_workers},
                          {"time_budget", trace.time_budget},
                          {"seed", trace.seed}}}};
    out << meta.dump() << "\n";
    for (const auto& e : trace.events) {
        nlohmann::json j;
        j["t"] = e.t;
        j["worker"] = e.worker;
        j["kind"] = event_kind_to_string(e.kind);
        j["trial"] = e.trial;
        switch (e.kind) {
            case EventKind::start:
                j["bracket"] = e.bracket;
                j["config"] = e.config_key;
                break;
            case EventKind::epoch_report:
                j["epoch"] = e.epoch;
                j["metric"] = e.metric;
                j["seconds"] = e.seconds;
                break;
            case EventKind::rung_report:
                j["rung"] = e.rung;
                j["metric"] = e.metric;
                break;
            case EventKind::promote:
                j["rung"] = e.rung;
                j["from"] = e.from_rung;
                break;
            default:
                j["rung"] = e.rung;
                break;
        }
        out << j.dump() << "\n";
    }
}

EventTrace read_trace_jsonl(std::istream& in) {
    EventTrace trace;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("invalid trace line: ") + e.what());
        }
        if (first && j.contains("meta")) {
            const auto& m = j.at("meta");
            trace.n_workers = m.value("n_workers", 0);
            trace.time_budget = m.value("time_budget", 0.0);
            trace.seed = m.value("seed", std::uint64_t{0});
            first = false;
            continue;
        }
        first = false;
        TraceEvent e;
        e.t = j.at("t").get<double>();
        e.worker = j.at("worker").get<int>();
        e.kind = event_kind_from_string(j.at("kind").get<std::string>());
        e.trial = j.at("trial").get<TrialId>();
        e.bracket = j.value("bracket", -1);
        e.epoch = j.value("epoch", -1);
        e.rung = j.value("rung", -1);
        e.from_rung = j.value("from", -1);
        e.metric = j.value("metric", std::numeric_limits<double>::quiet_NaN());
        e.seconds = j.value("seconds", std::numeric_limits<double>::quiet_NaN());
        e.config_key = j.value("config", std::string());
        if (e.kind == EventKind::epoch_report) {
            if (trace.incumbents.empty() || e.metric < trace.incumbents.back().y)
                trace.incumbents.push_back({e.t, e.metric});
        }
        trace.events.push_back(std::move(e));
    }
    return trace;
}

}  // namespace mfhpo
