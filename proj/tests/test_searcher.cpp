#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "mfhpo/errors.hpp"
#include "mfhpo/searcher.hpp"

using namespace mfhpo;

namespace {

ConfigSpace unit_space(int d) {
    std::vector<Dimension> dims;
    for (int i = 0; i < d; ++i)
        dims.push_back({"x" + std::to_string(i), ContinuousDomain{0.0, 1.0, Scale::linear}});
    return ConfigSpace(std::move(dims));
}

double bowl(const FeatureVector& z) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        const double d = z[i] - 0.6;
        s += d * d;
    }
    return 0.05 + s / static_cast<double>(z.size());
}

}  // namespace

TEST_CASE("pending ledger holds one resource per trial") {
    PendingLedger ledger;
    ledger.add(1, 9);  // e.g. bracket s=2 with r_min=1, eta=3 starts pending at 9
    CHECK(ledger.resource(1) == 9);
    CHECK_THROWS_AS(ledger.add(1, 27), ProtocolError);
    CHECK_THROWS_AS(ledger.remove(1, 3), ProtocolError);
    ledger.add(2, 1);
    CHECK(ledger.size() == 2);
    ledger.remove(1, 9);
    CHECK_FALSE(ledger.has(1));
    CHECK_THROWS_AS(ledger.resource(1), ProtocolError);
}

TEST_CASE("r_acq rule: largest rung with enough observations") {
    const std::vector<int> rungs{1, 3, 9, 27};
    CHECK(choose_r_acq(rungs, {{1, 10}, {3, 6}, {9, 3}, {27, 0}}, 5) == 3);
    CHECK(choose_r_acq(rungs, {{1, 2}}, 8) == 1);  // fallback: lowest rung
    CHECK(choose_r_acq(rungs, {{1, 50}, {3, 40}, {9, 20}, {27, 12}}, 8) == 27);
}

TEST_CASE("expected improvement closed form") {
    Eigen::VectorXd one(1);
    one << 0.0;
    CHECK(expected_improvement(one, 0.0, 0.0) == 0.0);                 // sigma=0, mean=incumbent
    CHECK(expected_improvement(one, 1.0, 0.0) ==
          doctest::Approx(0.3989422804014327).epsilon(1e-12));         // phi(0)
    // sigma=0 with improvement
    Eigen::VectorXd lower(1);
    lower << -0.4;
    CHECK(expected_improvement(lower, 0.0, 0.0) == doctest::Approx(0.4));
    // strictly increasing in sigma at mean == incumbent
    double prev = 0.0;
    for (double var : {0.1, 0.4, 1.0, 2.0, 4.0}) {
        const double ei = expected_improvement(one, var, 0.0);
        CHECK(ei > prev);
        prev = ei;
    }
    // fantasy averaging
    Eigen::VectorXd means(2);
    means << 0.0, -1.0;
    const double avg = expected_improvement(means, 0.0, 0.0);
    CHECK(avg == doctest::Approx(0.5));
}

TEST_CASE("rung report protocol: label converts pending, survival re-pends") {
    const ConfigSpace space = unit_space(2);
    const RungGeometry geom = build_geometry(1, 27, 3);
    SearcherConfig cfg;
    cfg.model_based = true;
    GpSearcher searcher(space, geom, cfg);
    Rng rng(5);

    const Config c = sample_random(space, rng);
    searcher.on_task_start(0, c, 0, 1);
    CHECK(searcher.ledger().resource(0) == 1);
    CHECK_THROWS_AS(searcher.on_task_start(0, c, 0, 1), ProtocolError);

    // report at an unexpected rung
    CHECK_THROWS_AS(searcher.on_rung_report(0, 3, 0.5, true, 9), ProtocolError);

    searcher.on_rung_report(0, 1, 0.5, true, 3);
    CHECK(searcher.labeled().size() == 1);
    CHECK(searcher.labeled()[0].r == 1);
    CHECK(searcher.ledger().resource(0) == 3);

    // top rung: labeled only, nothing re-pended
    searcher.on_rung_report(0, 3, 0.4, true, 9);
    searcher.on_rung_report(0, 9, 0.35, true, 27);
    searcher.on_rung_report(0, 27, 0.3, false, -1);
    CHECK(searcher.labeled().size() == 4);
    CHECK_FALSE(searcher.ledger().has(0));

    // stopped trial: pending cleared
    searcher.on_task_start(1, c, 0, 1);
    searcher.on_rung_report(1, 1, 0.9, false, -1);
    CHECK_FALSE(searcher.ledger().has(1));
    CHECK(searcher.labeled().size() == 5);

    // promotion: pending at the target rung
    searcher.on_task_start(2, c, 1, 3);
    searcher.on_rung_report(2, 3, 0.2, false, -1);
    searcher.on_promote(2, 9);
    CHECK(searcher.ledger().resource(2) == 9);
}

TEST_CASE("data modes: rungs_and_last keeps one floating observation") {
    const ConfigSpace space = unit_space(2);
    const RungGeometry geom = build_geometry(1, 27, 3);
    SearcherConfig cfg;
    cfg.data_mode = DataMode::rungs_and_last;
    GpSearcher searcher(space, geom, cfg);
    Rng rng(6);
    const Config c = sample_random(space, rng);

    searcher.on_task_start(0, c, 0, 1);
    searcher.on_rung_report(0, 1, 0.5, true, 3);
    searcher.on_epoch_report(0, 2, 0.45);
    CHECK(searcher.labeled().size() == 2);  // rung 1 + floating epoch 2
    searcher.on_rung_report(0, 3, 0.4, true, 9);
    CHECK(searcher.labeled().size() == 2);  // rung 3 supersedes the floating entry
    searcher.on_epoch_report(0, 4, 0.38);
    searcher.on_epoch_report(0, 5, 0.36);
    CHECK(searcher.labeled().size() == 3);  // floating slot replaced in place
    std::map<int, int> by_resource;
    for (const auto& obs : searcher.labeled()) by_resource[obs.r] += 1;
    CHECK(by_resource == std::map<int, int>{{1, 1}, {3, 1}, {5, 1}});
}

TEST_CASE("data modes: all_epochs walks pending epoch by epoch") {
    const ConfigSpace space = unit_space(2);
    const RungGeometry geom = build_geometry(1, 27, 3);
    SearcherConfig cfg;
    cfg.data_mode = DataMode::all_epochs;
    GpSearcher searcher(space, geom, cfg);
    Rng rng(7);
    const Config c = sample_random(space, rng);

    searcher.on_task_start(0, c, 0, 1);
    CHECK(searcher.ledger().resource(0) == 1);
    searcher.on_rung_report(0, 1, 0.5, true, 3);
    CHECK(searcher.ledger().resource(0) == 2);  // next epoch, not next rung
    searcher.on_epoch_report(0, 2, 0.45);
    CHECK(searcher.ledger().resource(0) == 3);
    searcher.on_rung_report(0, 3, 0.4, false, -1);
    CHECK_FALSE(searcher.ledger().has(0));
    CHECK(searcher.labeled().size() == 3);
}

TEST_CASE("cold start suggestions are plain random sampling") {
    const ConfigSpace space = unit_space(3);
    const RungGeometry geom = build_geometry(1, 27, 3);
    SearcherConfig cfg;
    GpSearcher searcher(space, geom, cfg);

    Rng a(42), b(42);
    const Config got = searcher.suggest(a);
    const Config want = sample_random(space, b);
    CHECK(config_key(space, got) == config_key(space, want));
}

TEST_CASE("suggestions are deterministic given the rng") {
    const ConfigSpace space = unit_space(2);
    const RungGeometry geom = build_geometry(1, 27, 3);
    SearcherConfig cfg;
    cfg.fit_restarts = 2;
    cfg.fit_max_iterations = 30;
    cfg.ei_candidates = 50;

    auto run = [&]() {
        GpSearcher searcher(space, geom, cfg);
        Rng data_rng(9);
        for (int i = 0; i < 12; ++i) {
            const Config c = sample_random(space, data_rng);
            searcher.on_task_start(i, c, 0, 1);
            searcher.on_rung_report(i, 1, bowl(encode(space, c)), false, -1);
        }
        Rng rng(1234);
        return config_key(space, searcher.suggest(rng));
    };
    CHECK(run() == run());
}

TEST_CASE("model-based suggestions home in on a planted optimum") {
    const ConfigSpace space = unit_space(3);
    const RungGeometry geom = build_geometry(1, 27, 3);
    SearcherConfig cfg;
    cfg.fit_restarts = 2;
    cfg.fit_max_iterations = 40;
    cfg.ei_candidates = 120;
    cfg.refit.kind = RefitPolicyKind::always;

    int wins = 0;
    const int seeds = 20;
    for (int seed = 0; seed < seeds; ++seed) {
        GpSearcher searcher(space, geom, cfg);
        Rng data_rng(1000 + static_cast<std::uint64_t>(seed));
        for (int i = 0; i < 50; ++i) {
            const Config c = sample_random(space, data_rng);
            const double y = bowl(encode(space, c)) + 1e-3 * data_rng.normal();
            searcher.on_task_start(i, c, 0, 1);
            searcher.on_rung_report(i, 1, y, false, -1);
        }
        Rng rng(500 + static_cast<std::uint64_t>(seed));
        const FeatureVector suggested = encode(space, searcher.suggest(rng));
        const FeatureVector random = encode(space, sample_random(space, data_rng));
        Eigen::VectorXd opt(3);
        opt << 0.6, 0.6, 0.6;
        if ((suggested - opt).norm() < (random - opt).norm()) ++wins;
    }
    // one-sided sign test over 20 seeds: >= 15 wins gives p < 0.05
    CHECK(wins >= 15);
}

TEST_CASE("protocol log records the pending/labeled life cycle") {
    const ConfigSpace space = unit_space(2);
    const RungGeometry geom = build_geometry(1, 9, 3);
    GpSearcher searcher(space, geom, SearcherConfig{});
    Rng rng(8);
    const Config c = sample_random(space, rng);
    searcher.on_task_start(5, c, 0, 1);
    searcher.on_rung_report(5, 1, 0.3, true, 3);

    const auto& log = searcher.protocol_log();
    REQUIRE(log.size() == 5);
    CHECK(log[0].kind == DataEvent::Kind::task_start);
    CHECK(log[1].kind == DataEvent::Kind::pending_added);
    CHECK(log[1].resource == 1);
    CHECK(log[2].kind == DataEvent::Kind::pending_removed);
    CHECK(log[3].kind == DataEvent::Kind::labeled);
    CHECK(log[3].resource == 1);
    CHECK(log[4].kind == DataEvent::Kind::pending_added);
    CHECK(log[4].resource == 3);
}
