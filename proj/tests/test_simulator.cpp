#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mfhpo/benchmark.hpp"
#include "mfhpo/errors.hpp"
#include "mfhpo/simulator.hpp"

using namespace mfhpo;

namespace {

const std::string kRepo = MFHPO_REPO_DIR;

ConfigSpace unit_space(int d) {
    std::vector<Dimension> dims;
    for (int i = 0; i < d; ++i)
        dims.push_back({"x" + std::to_string(i), ContinuousDomain{0.0, 1.0, Scale::linear}});
    return ConfigSpace(std::move(dims));
}

SyntheticSpec quick_synthetic(int r_max) {
    SyntheticSpec s;
    s.r_max = r_max;
    s.seed = 11;
    s.noise_std = 1e-3;
    s.epoch_seconds_lo = 0.4;
    s.epoch_seconds_hi = 1.6;
    return s;
}

EventTrace run_variant(SchedulerVariant variant, const ConfigSpace& space,
                       const Benchmark& bench, int workers, double budget, std::uint64_t seed,
                       int num_brackets = 0) {
    const RungGeometry geom = build_geometry(1, bench.r_max(), 3);
    HbScheduler sched(geom, variant, num_brackets);
    RandomSearcher searcher(space);
    SimOptions opt;
    opt.n_workers = workers;
    opt.time_budget = budget;
    opt.seed = seed;
    return run_simulation(space, bench, sched, searcher, opt);
}

std::string trace_bytes(const EventTrace& trace) {
    std::ostringstream out;
    write_trace_jsonl(trace, out);
    return out.str();
}

}  // namespace

TEST_CASE("single-worker synchronous run replays classic successive halving") {
    const ConfigSpace space = unit_space(2);
    const SyntheticBenchmark bench(space, quick_synthetic(9));
    // bracket 0 only: rung sizes 9 / 3 / 1
    const auto trace = run_variant(SchedulerVariant::synchronous, space, bench, 1, 60.0, 3, 1);

    // gather per-trial rung metrics from the trace
    std::map<int, std::map<int, double>> rung_metrics;  // trial -> rung -> y
    std::map<int, std::set<int>> rungs_reached;
    for (const auto& e : trace.events) {
        if (e.kind == EventKind::rung_report) {
            rung_metrics[e.trial][e.rung] = e.metric;
            rungs_reached[e.trial].insert(e.rung);
        }
    }
    // SH oracle: 9 configs at rung 1, best 3 advance to rung 3, best 1 to rung 9
    std::vector<std::pair<double, int>> at1;
    for (const auto& [trial, m] : rung_metrics)
        if (m.count(1)) at1.push_back({m.at(1), trial});
    REQUIRE(at1.size() >= 9);
    std::vector<std::pair<double, int>> first_gen(at1.begin(), at1.begin() + 9);
    std::sort(first_gen.begin(), first_gen.end());
    for (int i = 0; i < 9; ++i) {
        const int trial = first_gen[static_cast<std::size_t>(i)].second;
        const bool advanced = rungs_reached[trial].count(3) > 0;
        CHECK(advanced == (i < 3));
    }
    std::vector<std::pair<double, int>> at3;
    for (int i = 0; i < 3; ++i) {
        const int trial = first_gen[static_cast<std::size_t>(i)].second;
        at3.push_back({rung_metrics[trial].at(3), trial});
    }
    std::sort(at3.begin(), at3.end());
    for (int i = 0; i < 3; ++i)
        CHECK((rungs_reached[at3[static_cast<std::size_t>(i)].second].count(9) > 0) == (i == 0));
}

TEST_CASE("stopping variant never stops the first eta-1 reporters at a rung") {
    const ConfigSpace space = unit_space(2);
    const SyntheticBenchmark bench(space, quick_synthetic(9));
    const auto trace = run_variant(SchedulerVariant::stopping, space, bench, 4, 300.0, 17);

    std::map<int, int> trial_bracket;
    std::map<std::pair<int, int>, int> reporters;  // (bracket, rung) -> count so far
    std::set<int> stopped;
    for (const auto& e : trace.events) {
        if (e.kind == EventKind::start) trial_bracket[e.trial] = e.bracket;
        if (e.kind == EventKind::rung_report) {
            const int n = ++reporters[{trial_bracket[e.trial], e.rung}];
            if (n <= 2) {
                // must not be immediately stopped at this rung (eta = 3)
                bool stopped_here = false;
                for (const auto& e2 : trace.events) {
                    if (e2.kind == EventKind::stop && e2.trial == e.trial && e2.rung == e.rung &&
                        e2.t == e.t)
                        stopped_here = true;
                }
                CHECK_FALSE(stopped_here);
            }
        }
    }
}

TEST_CASE("worker conservation and per-job time accounting") {
    const ConfigSpace space = unit_space(2);
    const SyntheticBenchmark bench(space, quick_synthetic(9));
    for (auto variant :
         {SchedulerVariant::stopping, SchedulerVariant::promotion, SchedulerVariant::synchronous}) {
        const auto trace = run_variant(variant, space, bench, 3, 200.0, 23);
        REQUIRE(!trace.events.empty());

        struct Segment {
            double begin = 0.0;
            double seconds = 0.0;
            bool open = false;
        };
        std::map<int, Segment> current;  // worker -> open job segment
        for (const auto& e : trace.events) {
            if (e.worker < 0) continue;
            CHECK(e.worker < 3);
            auto& seg = current[e.worker];
            switch (e.kind) {
                case EventKind::start:
                case EventKind::promote:
                    CHECK_FALSE(seg.open);  // no two jobs at once on one worker
                    seg = {e.t, 0.0, true};
                    break;
                case EventKind::epoch_report:
                    CHECK(seg.open);
                    seg.seconds += e.seconds;
                    break;
                case EventKind::stop:
                case EventKind::pause:
                case EventKind::complete: {
                    CHECK(seg.open);
                    // consumed simulated time == sum of executed epoch durations
                    CHECK(e.t - seg.begin == doctest::Approx(seg.seconds).epsilon(1e-9));
                    seg.open = false;
                    break;
                }
                default: break;
            }
        }
    }
}

TEST_CASE("asynchronous variants have no idle-at-quota intervals, synchronous does") {
    const ConfigSpace space = unit_space(2);
    const SyntheticBenchmark bench(space, quick_synthetic(9));
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto stop_trace =
            run_variant(SchedulerVariant::stopping, space, bench, 4, 150.0, seed);
        const auto promo_trace =
            run_variant(SchedulerVariant::promotion, space, bench, 4, 150.0, seed);
        const auto sync_trace =
            run_variant(SchedulerVariant::synchronous, space, bench, 4, 150.0, seed);
        CHECK(stop_trace.idle_intervals.empty());
        CHECK(promo_trace.idle_intervals.empty());
        CHECK(!sync_trace.idle_intervals.empty());
    }
}

TEST_CASE("traces replay byte-identically for identical seeds") {
    const ConfigSpace space = unit_space(3);
    const SyntheticBenchmark bench(space, quick_synthetic(9));
    for (auto variant : {SchedulerVariant::stopping, SchedulerVariant::promotion}) {
        const auto a = run_variant(variant, space, bench, 4, 120.0, 99);
        const auto b = run_variant(variant, space, bench, 4, 120.0, 99);
        CHECK(trace_bytes(a) == trace_bytes(b));
        const auto c = run_variant(variant, space, bench, 4, 120.0, 100);
        CHECK(trace_bytes(a) != trace_bytes(c));
    }
}

TEST_CASE("trace jsonl round-trips through the reader") {
    const ConfigSpace space = unit_space(2);
    const SyntheticBenchmark bench(space, quick_synthetic(9));
    const auto trace = run_variant(SchedulerVariant::stopping, space, bench, 2, 80.0, 7);
    std::ostringstream out;
    write_trace_jsonl(trace, out);
    std::istringstream in(out.str());
    const auto back = read_trace_jsonl(in);
    REQUIRE(back.events.size() == trace.events.size());
    REQUIRE(back.incumbents.size() == trace.incumbents.size());
    for (std::size_t i = 0; i < trace.incumbents.size(); ++i) {
        CHECK(back.incumbents[i].t == trace.incumbents[i].t);
        CHECK(back.incumbents[i].y == trace.incumbents[i].y);
    }
    std::ostringstream out2;
    write_trace_jsonl(back, out2);
    CHECK(out.str() == out2.str());
}

TEST_CASE("zero budget yields an empty trace") {
    const ConfigSpace space = unit_space(2);
    const SyntheticBenchmark bench(space, quick_synthetic(9));
    const auto trace = run_variant(SchedulerVariant::stopping, space, bench, 2, 0.0, 1);
    CHECK(trace.events.empty());
    CHECK(trace.incumbents.empty());
}

namespace {

// Zero-cost epochs: every epoch takes 0 seconds.
class ZeroDurationBenchmark : public Benchmark {
public:
    explicit ZeroDurationBenchmark(const ConfigSpace& space) : space_(space) {}
    EpochResult evaluate(const Config& config, int epoch) const override {
        const double z = encode(space_, config).sum();
        return {z / (1.0 + epoch), 0.0};
    }
    int r_max() const override { return 9; }

private:
    const ConfigSpace& space_;
};

}  // namespace

TEST_CASE("zero-duration epochs stay deterministic under the tie-break rule") {
    const ConfigSpace space = unit_space(2);
    const ZeroDurationBenchmark bench(space);
    const RungGeometry geom = build_geometry(1, 9, 3);
    auto run_once = [&]() {
        HbScheduler sched(geom, SchedulerVariant::stopping);
        RandomSearcher searcher(space);
        SimOptions opt;
        opt.n_workers = 3;
        opt.time_budget = 10.0;
        opt.seed = 5;
        opt.max_events = 5000;
        return trace_bytes(run_simulation(space, bench, sched, searcher, opt));
    };
    const std::string a = run_once();
    CHECK(a == run_once());
    CHECK(a.size() > 1000);  // the cap, not the clock, ended the run
}

TEST_CASE("tabular benchmark loads and returns stored values verbatim") {
    const auto bench = load_tabular(kRepo + "/data/toy_tabular.csv");
    CHECK(bench.r_max() == 4);
    CHECK(bench.num_configs() == 3);
    const Config a{{std::string("a")}};
    CHECK(bench.evaluate(a, 1).metric == doctest::Approx(0.9));
    CHECK(bench.evaluate(a, 4).metric == doctest::Approx(0.3));
    CHECK(bench.evaluate(a, 3).seconds == doctest::Approx(1.5));
    CHECK_THROWS_AS(bench.evaluate(a, 5), ProtocolError);
}

TEST_CASE("tabular loader rejects malformed files with row context") {
    const std::string dir = "./tabular_test_tmp";
    std::filesystem::create_directories(dir);
    auto write_files = [&](const std::string& csv) {
        std::ofstream side(dir + "/t.csv.space.json");
        side << R"({"space": {"dimensions": [{"name": "k", "type": "categorical",
                 "choices": ["a", "b"]}]}, "r_max": 3})";
        side.close();
        std::ofstream f(dir + "/t.csv");
        f << csv;
    };

    // curve shorter than r_max
    write_files("config_key,epoch,metric,seconds\n"
                "[\"a\"],1,0.5,1\n[\"a\"],2,0.4,1\n[\"a\"],3,0.3,1\n"
                "[\"b\"],1,0.5,1\n[\"b\"],2,0.4,1\n");
    CHECK_THROWS_AS(load_tabular(dir + "/t.csv"), DataError);

    // duplicate (config, epoch) row
    write_files("config_key,epoch,metric,seconds\n"
                "[\"a\"],1,0.5,1\n[\"a\"],1,0.5,1\n[\"a\"],2,0.4,1\n[\"a\"],3,0.3,1\n");
    CHECK_THROWS_AS(load_tabular(dir + "/t.csv"), DataError);

    // non-positive duration
    write_files("config_key,epoch,metric,seconds\n"
                "[\"a\"],1,0.5,0\n[\"a\"],2,0.4,1\n[\"a\"],3,0.3,1\n");
    CHECK_THROWS_AS(load_tabular(dir + "/t.csv"), DataError);

    // well-formed file loads
    write_files("config_key,epoch,metric,seconds\n"
                "[\"a\"],1,0.5,1\n[\"a\"],2,0.4,1\n[\"a\"],3,0.3,1\n");
    CHECK_NOTHROW(load_tabular(dir + "/t.csv"));
}

TEST_CASE("off-grid lookups: error by default, nearest neighbor on request") {
    // numeric grid so off-grid queries exist
    const std::string dir = "./tabular_test_tmp2";
    std::filesystem::create_directories(dir);
    {
        std::ofstream side(dir + "/g.csv.space.json");
        side << R"({"space": {"dimensions": [{"name": "x", "type": "continuous",
                  "lower": 0.0, "upper": 1.0, "scale": "linear"}]}, "r_max": 2})";
    }
    {
        std::ofstream f(dir + "/g.csv");
        f << "config_key,epoch,metric,seconds\n";
        for (double x : {0.0, 0.25, 0.5, 0.75, 1.0}) {
            std::ostringstream key;
            key << "[" << x << "]";
            f << key.str() << ",1," << x << ",1\n" << key.str() << ",2," << x << ",1\n";
        }
    }
    const auto strict = load_tabular(dir + "/g.csv");
    CHECK_THROWS_AS(strict.evaluate(Config{{0.3}}, 1), DataError);

    const auto nearest = load_tabular(dir + "/g.csv", "", TabularMatch::nearest);
    // exhaustive-scan oracle: 0.3 is closest to 0.25; 0.9 to 1.0
    CHECK(nearest.evaluate(Config{{0.3}}, 1).metric == doctest::Approx(0.25));
    CHECK(nearest.evaluate(Config{{0.9}}, 1).metric == doctest::Approx(1.0));
}

TEST_CASE("regret series subtracts y_star from the incumbent steps") {
    EventTrace trace;
    trace.incumbents = {{10.0, 0.5}, {20.0, 0.3}};
    const auto r = regret_series(trace, 0.3);
    REQUIRE(r.size() == 2);
    CHECK(r[0] == std::pair<double, double>{10.0, 0.2});
    CHECK(r[1] == std::pair<double, double>{20.0, 0.0});

    const auto zero = regret_series(trace, 0.5);  // y_star equal to first incumbent
    CHECK(zero[0].second == 0.0);
}

TEST_CASE("synthetic benchmark is deterministic per (config, epoch)") {
    const ConfigSpace space = unit_space(4);
    const SyntheticBenchmark bench(space, quick_synthetic(27));
    Rng rng(31);
    for (int i = 0; i < 20; ++i) {
        const Config c = sample_random(space, rng);
        const int epoch = 1 + static_cast<int>(rng.uniform_int(27));
        const auto a = bench.evaluate(c, epoch);
        const auto b = bench.evaluate(c, epoch);
        CHECK(a.metric == b.metric);
        CHECK(a.seconds == b.seconds);
        CHECK(a.seconds > 0.0);
    }
    // curves decay toward the asymptote
    const Config c = sample_random(space, rng);
    const double asym = bench.asymptote(c);
    CHECK(std::abs(bench.evaluate(c, 27).metric - asym) < 0.05);
    CHECK(bench.evaluate(c, 1).metric > asym);
}
