#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "mfhpo/benchmark.hpp"
#include "mfhpo/scheduler.hpp"
#include "mfhpo/searcher.hpp"

namespace mfhpo {

enum class EventKind { start, epoch_report, rung_report, stop, promote, pause, complete };

std::string event_kind_to_string(EventKind k);
EventKind event_kind_from_string(const std::string& s);

struct TraceEvent {
    double t = 0.0;
    int worker = -1;
    EventKind kind = EventKind::start;
    TrialId trial = -1;
    int bracket = -1;                // start
    int epoch = -1;                  // epoch_report
    int rung = -1;                   // rung_report/pause/stop/complete; promote target
    int from_rung = -1;              // promote source
    double metric = std::numeric_limits<double>::quiet_NaN();
    double seconds = std::numeric_limits<double>::quiet_NaN();  // epoch duration
    std::string config_key;          // start only
};

struct IncumbentPoint {
    double t = 0.0;
    double y = 0.0;
};

// A span where a worker asked for work and none was available (synchronous
// scheduling only; asynchronous variants never starve a worker).
struct IdleInterval {
    int worker = -1;
    double begin = 0.0;
    double end = 0.0;
};

// Time-stamped record of one simulated run.
struct EventTrace {
    std::vector<TraceEvent> events;
    std::vector<IncumbentPoint> incumbents;  // running best observed metric
    std::vector<IdleInterval> idle_intervals;
    int n_workers = 0;
    double time_budget = 0.0;
    std::uint64_t seed = 0;

    double last_event_time() const { return events.empty() ? 0.0 : events.back().t; }
};

struct SimOptions {
    int n_workers = 1;
    double time_budget = 0.0;
    std::uint64_t seed = 0;
    // Promotion variant: resume promoted configs from their checkpoint
    // instead of retraining from scratch.
    bool resume_from_checkpoint = false;
    double decision_overhead_sec = 0.0;
    // Safety valve for degenerate benchmarks (e.g. zero-duration epochs);
    // 0 = unlimited.
    long max_events = 0;
};

// Discrete-event loop: n workers pull jobs from the scheduler/searcher pair
// and execute them against the benchmark epoch by epoch, advancing simulated
// wall-clock time by the per-epoch durations. Deterministic given the seed.
EventTrace run_simulation(const ConfigSpace& space, const Benchmark& benchmark,
                          HbScheduler& scheduler, Searcher& searcher, const SimOptions& options);

// Immediate regret r_t = incumbent(t) - y_star as a step function.
std::vector<std::pair<double, double>> regret_series(const EventTrace& trace, double y_star);

void write_trace_jsonl(const EventTrace& trace, std::ostream& out);
EventTrace read_trace_jsonl(std::istream& in);

}  // namespace mfhpo
