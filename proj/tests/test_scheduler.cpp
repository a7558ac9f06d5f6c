#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "mfhpo/errors.hpp"
#include "mfhpo/scheduler.hpp"
#include "oracles.hpp"
#include "scheduler_driver.hpp"

using namespace mfhpo;

TEST_CASE("rung geometry: exact powers and clamping") {
    const auto g27 = build_geometry(1, 27, 3);
    CHECK(g27.rungs == std::vector<int>{1, 3, 9, 27});
    CHECK(g27.max_rung_index() == 3);
    CHECK(g27.num_brackets() == 4);

    const auto g81 = build_geometry(1, 81, 3);
    CHECK(g81.rungs == std::vector<int>{1, 3, 9, 27, 81});
    CHECK(g81.num_brackets() == 5);

    const auto g200 = build_geometry(1, 200, 3);
    CHECK(g200.rungs == std::vector<int>{1, 3, 9, 27, 81, 200});
    CHECK(g200.top_rung() == 200);
    CHECK(g200.next_rung(0, 81) == 200);

    CHECK_THROWS_AS(build_geometry(27, 27, 3), ConfigError);
    CHECK_THROWS_AS(build_geometry(0, 27, 3), ConfigError);
    CHECK_THROWS_AS(build_geometry(1, 27, 5), ConfigError);

    const auto single = single_rung_geometry(200);
    CHECK(single.rungs == std::vector<int>{200});
}

TEST_CASE("bracket sampling weights match the stated distribution") {
    const auto w3 = bracket_weights(3, 3, 4);
    CHECK(w3[0] == doctest::Approx(27.0));
    CHECK(w3[1] == doctest::Approx(12.0));
    CHECK(w3[2] == doctest::Approx(6.0));
    CHECK(w3[3] == doctest::Approx(4.0));
    const double total = 27 + 12 + 6 + 4;
    CHECK(w3[0] / total == doctest::Approx(27.0 / 49.0));

    const auto w5 = bracket_weights(5, 3, 6);
    CHECK(w5[0] == doctest::Approx(243.0));
    CHECK(w5[5] == doctest::Approx(6.0));

    // K=0 degenerates to a single bracket
    const auto g = single_rung_geometry(5);
    Rng rng(1);
    for (int i = 0; i < 50; ++i) CHECK(sample_bracket(g, 1, rng) == 0);
}

TEST_CASE("empirical bracket frequencies match the distribution (chi-square)") {
    const auto geom = build_geometry(1, 27, 3);
    const auto w = bracket_weights(3, 3, 4);
    double total = 0.0;
    for (double v : w) total += v;
    std::vector<double> probs;
    for (double v : w) probs.push_back(v / total);

    Rng rng(2024);
    std::vector<long> counts(4, 0);
    for (int i = 0; i < 100000; ++i) counts[static_cast<std::size_t>(sample_bracket(geom, 4, rng))]++;
    CHECK(oracle::chi_square_pvalue(counts, probs) > 0.01);
}

TEST_CASE("continue predicate: top third, ties continue, few records continue") {
    RungRecord rec;
    rec.level = 1;
    rec.add(0, 0.30);
    rec.add(1, 0.20);
    rec.add(2, 0.10);
    CHECK(continue_predicate(rec, 2, 0.10, 3));       // rank 1 of 3
    CHECK_FALSE(continue_predicate(rec, 0, 0.30, 3));  // rank 3 of 3

    RungRecord single;
    single.level = 1;
    single.add(7, 0.90);
    CHECK(continue_predicate(single, 7, 0.90, 3));  // fewer than eta records

    RungRecord tied;
    tied.level = 1;
    tied.add(0, 0.10);
    tied.add(1, 0.10);
    tied.add(2, 0.30);
    CHECK(continue_predicate(tied, 0, 0.10, 3));
    CHECK(continue_predicate(tied, 1, 0.10, 3));

    CHECK_THROWS_AS(rec.add(0, 0.5), ProtocolError);  // duplicate entry
}

TEST_CASE("stopping variant decisions") {
    const auto geom = build_geometry(1, 27, 3);
    HbScheduler sched(geom, SchedulerVariant::stopping);
    const TrialId a = sched.start_trial(0);

    // first config ever at rung 1: fewer than eta -> continue to 3
    auto d = sched.on_report_stopping(a, 1, 0.5);
    CHECK(d.kind == DecisionKind::Continue);
    CHECK(d.rung == 3);

    // reaching r_max always stops (complete)
    CHECK(sched.on_report_stopping(a, 3, 0.4).kind == DecisionKind::Continue);
    CHECK(sched.on_report_stopping(a, 9, 0.3).kind == DecisionKind::Continue);
    d = sched.on_report_stopping(a, 27, 0.2);
    CHECK(d.kind == DecisionKind::Stop);
    CHECK(d.complete);

    // duplicate report is a protocol error
    const TrialId b = sched.start_trial(0);
    sched.on_report_stopping(b, 1, 0.6);
    CHECK_THROWS_AS(sched.on_report_stopping(b, 1, 0.6), ProtocolError);
}

TEST_CASE("promotion variant scan order and gating") {
    const auto geom = build_geometry(1, 27, 3);
    HbScheduler sched(geom, SchedulerVariant::promotion);

    // all rungs below eta records: no promotions, start new
    CHECK(sched.promotion_decision(0).kind == DecisionKind::StartNew);

    const TrialId a = sched.start_trial(0);
    const TrialId b = sched.start_trial(0);
    const TrialId c = sched.start_trial(0);
    sched.on_report_promotion(a, 1, 0.1);
    sched.on_report_promotion(b, 1, 0.2);
    sched.on_report_promotion(c, 1, 0.3);

    auto d = sched.promotion_decision(0);
    CHECK(d.kind == DecisionKind::PromoteExisting);
    CHECK(d.trial == a);
    CHECK(d.rung == 3);

    // move a, b, c to rung 3; the scan then prefers the higher rung
    for (TrialId t : {a, b, c}) {
        sched.mark_running(t, 3);
        sched.on_report_promotion(t, 3, t == a ? 0.05 : (t == b ? 0.5 : 0.6));
    }
    d = sched.promotion_decision(0);
    CHECK(d.kind == DecisionKind::PromoteExisting);
    CHECK(d.trial == a);  // best at the highest promotable rung
    CHECK(d.rung == 9);
}

TEST_CASE("synchronous bracket: fixed quotas, promote only when full") {
    const auto geom = build_geometry(1, 9, 3);
    HbScheduler sched(geom, SchedulerVariant::synchronous);
    CHECK(sched.sync_rung_sizes(0) == std::vector<int>{9, 3, 1});

    std::vector<TrialId> ids;
    for (int i = 0; i < 9; ++i) {
        const auto d = sched.next_job_synchronous();
        REQUIRE(d.has_value());
        CHECK(d->kind == DecisionKind::StartNew);
        const TrialId id = sched.start_trial(0);
        sched.mark_running(id, 1);
        ids.push_back(id);
    }
    CHECK_FALSE(sched.next_job_synchronous().has_value());  // quota filled, wait

    // report 8 of 9: no promotions yet
    for (int i = 0; i < 8; ++i) {
        sched.on_report_synchronous(ids[static_cast<std::size_t>(i)], 1, 0.1 * (i + 1));
        CHECK(sched.synchronous_step().empty());
    }
    sched.on_report_synchronous(ids[8], 1, 0.9);
    const auto decisions = sched.synchronous_step();
    int promoted = 0, stopped = 0;
    for (const auto& d : decisions) {
        if (d.kind == DecisionKind::PromoteExisting) ++promoted;
        if (d.kind == DecisionKind::Stop) ++stopped;
    }
    CHECK(promoted == 3);
    CHECK(stopped == 6);
}

TEST_CASE("randomized stopping sequences match the brute-force oracle") {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        std::string diag;
        const bool ok = driver::run_stopping_sequence(seed, 20, &diag);
        INFO(diag);
        CHECK(ok);
    }
}

TEST_CASE("randomized promotion sequences match the brute-force oracle") {
    for (std::uint64_t seed = 100; seed < 160; ++seed) {
        std::string diag;
        const bool ok = driver::run_promotion_sequence(seed, 20, &diag);
        INFO(diag);
        CHECK(ok);
    }
}

TEST_CASE("randomized synchronous sequences match the brute-force oracle") {
    for (std::uint64_t seed = 200; seed < 240; ++seed) {
        std::string diag;
        const bool ok = driver::run_synchronous_sequence(seed, 4, &diag);
        INFO(diag);
        CHECK(ok);
    }
}
