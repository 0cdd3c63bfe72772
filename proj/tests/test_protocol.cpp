#include "qkd/protocol.hpp"

#include "qkd/experiment.hpp"

#include <doctest.h>

#include <stdexcept>

#include <cmath>

using namespace qkd;

namespace {
ProtocolConfig defaults() { return ProtocolConfig{}; }
}  // namespace

TEST_CASE("config validation") {
    ProtocolConfig cfg = defaults();
    cfg.validate();
    cfg.dim = 8;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = defaults();
    cfg.time_basis_prob = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("expected tallies: vacuum and background limits") {
    const ProtocolConfig cfg = defaults();
    const DetectorModel det;
    const ReceiverLayout layout;

    SUBCASE("vacuum intensity yields background only") {
        const TallyTable t = simulate_expected(cfg, ChannelModel{10.0}, det, layout);
        const ArmModel m = compute_arm_model(cfg, ChannelModel{10.0}, det, layout);
        CHECK(t.detections[kTime][kVacuum] ==
              doctest::Approx(t.frames[kTime][kVacuum] * m.y0_time).epsilon(1e-12));
        CHECK(t.detections[kPhase][kVacuum] ==
              doctest::Approx(t.frames[kPhase][kVacuum] * m.y0_phase).epsilon(1e-12));
    }

    SUBCASE("opaque channel leaves background expectation everywhere") {
        const TallyTable t = simulate_expected(cfg, ChannelModel{300.0}, det, layout);
        const ArmModel m = compute_arm_model(cfg, ChannelModel{300.0}, det, layout);
        for (int k = 0; k < 3; ++k) {
            CHECK(t.detections[kTime][k] ==
                  doctest::Approx(t.frames[kTime][k] * m.y0_time).epsilon(1e-4));
            CHECK(t.qber(kTime) == doctest::Approx(0.75).epsilon(1e-3));
        }
    }

    SUBCASE("no light and no darks means no detections") {
        DetectorModel silent = det;
        silent.dark_rate = 0.0;
        const TallyTable t = simulate_expected(cfg, ChannelModel{300.0}, silent, layout);
        CHECK(t.detections_total(kTime) < 1.0);
        CHECK(t.detections_total(kPhase) < 1.0);
    }
}

TEST_CASE("expected tallies agree with a step-by-step recomputation") {
    // independent re-derivation of the closed-form chain at 16.6 dB
    const ProtocolConfig cfg = defaults();
    const DetectorModel det;
    const ReceiverLayout layout;
    const ChannelModel ch{16.6};

    const double eta_ch = std::pow(10.0, -16.6 / 10.0);
    const double q_time = 0.9 * eta_ch * det.eta0;

    // per-detector load and live fraction by bisection
    double click = 0.0;
    for (int k = 0; k < 3; ++k)
        click += cfg.intensities.prob[k] *
                 (1.0 - std::exp(-cfg.intensities.mu[k] * q_time / 4.0));
    const double load = cfg.frame_rate * click + det.dark_rate;
    double lo = 0.0, hi = 1.0 / det.dead_time;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (load * (1.0 - mid * det.dead_time) - mid > 0 ? lo : hi) = mid;
    }
    const double sat = 1.0 - lo * det.dead_time;
    const double eta_time = q_time * sat;
    const double y0 = 4.0 * det.dark_rate * cfg.frame_duration() * sat;
    const double q_signal = 1.0 - (1.0 - y0) * std::exp(-0.5 * eta_time);

    const TallyTable t = simulate_expected(cfg, ch, det, layout);
    const double frames_ts = cfg.frames_total * 0.9 * 0.8;
    CHECK(t.frames[kTime][kSignal] == doctest::Approx(frames_ts).epsilon(1e-12));
    CHECK(t.detections[kTime][kSignal] ==
          doctest::Approx(frames_ts * q_signal).epsilon(1e-7));
}

TEST_CASE("saturation bites at low loss") {
    const ProtocolConfig cfg = defaults();
    const DetectorModel det;
    const ReceiverLayout layout;
    const ArmModel low = compute_arm_model(cfg, ChannelModel{4.0}, det, layout);
    const ArmModel high = compute_arm_model(cfg, ChannelModel{16.6}, det, layout);
    CHECK(low.sat_time < high.sat_time);
    CHECK(high.sat_time > 0.85);
    CHECK(low.sat_time < 0.55);
}

TEST_CASE("Monte Carlo is reproducible and shard-deterministic") {
    const ProtocolConfig cfg = defaults();
    const ChannelModel ch{8.0};
    const DetectorModel det;
    const ReceiverLayout layout;

    const MonteCarloResult a = simulate_montecarlo(cfg, ch, det, layout, 50000, 7, 1);
    const MonteCarloResult b = simulate_montecarlo(cfg, ch, det, layout, 50000, 7, 1);
    for (int basis = 0; basis < 2; ++basis)
        for (int k = 0; k < 3; ++k) {
            CHECK(a.tally.detections[basis][k] == b.tally.detections[basis][k]);
            CHECK(a.tally.errors[basis][k] == b.tally.errors[basis][k]);
            CHECK(a.tally.frames[basis][k] == b.tally.frames[basis][k]);
        }
    CHECK(a.sifted.alice[kSignal] == b.sifted.alice[kSignal]);

    const MonteCarloResult c = simulate_montecarlo(cfg, ch, det, layout, 50000, 7, 2);
    const MonteCarloResult d = simulate_montecarlo(cfg, ch, det, layout, 50000, 7, 2);
    CHECK(c.tally.detections_total(kTime) == d.tally.detections_total(kTime));
    CHECK(c.sifted.bob[kSignal] == d.sifted.bob[kSignal]);
}

TEST_CASE("Monte Carlo matches the analytic expectation (one seed)") {
    const ProtocolConfig cfg = defaults();
    const ChannelModel ch{4.0};
    const DetectorModel det;
    const ReceiverLayout layout;
    const std::uint64_t frames = 2'000'000;

    const TallyTable expected =
        simulate_expected(cfg, ch, det, layout).scaled(frames / cfg.frames_total);
    const MonteCarloResult mc = simulate_montecarlo(cfg, ch, det, layout, frames, 3, 2);

    for (int b = 0; b < 2; ++b)
        for (int k = 0; k < 3; ++k) {
            CHECK(poisson_two_sided_tail(expected.detections[b][k],
                                         mc.tally.detections[b][k]) > 5.7e-7);
            CHECK(poisson_two_sided_tail(expected.errors[b][k], mc.tally.errors[b][k]) >
                  5.7e-7);
        }

    // ground truth accounts for every sifted detection
    const auto& truth = *mc.tally.truth;
    for (int b = 0; b < 2; ++b) {
        const double tagged = truth.detections_by_photons[b][0] +
                              truth.detections_by_photons[b][1] +
                              truth.detections_by_photons[b][2];
        CHECK(tagged == mc.tally.detections_total(b));
    }
}

TEST_CASE("noiseless Monte Carlo has zero error rate") {
    ProtocolConfig cfg = defaults();
    cfg.intrinsic_error_time = 0.0;
    cfg.intrinsic_error_phase = 0.0;
    DetectorModel det;
    det.dark_rate = 0.0;
    const MonteCarloResult mc =
        simulate_montecarlo(cfg, ChannelModel{4.0}, det, ReceiverLayout{}, 200000, 5, 1);
    CHECK(mc.tally.errors_total(kTime) == 0.0);
    CHECK(mc.tally.errors_total(kPhase) == 0.0);
    CHECK(mc.tally.detections_total(kTime) > 0.0);
    const SiftResult s = sift(mc.tally, &mc.sifted);
    CHECK(s.qber_time == 0.0);
}

TEST_CASE("sift rejects an empty time-basis key") {
    TallyTable t;
    for (int k = 0; k < 3; ++k) {
        t.frames[kTime][k] = 100;
        t.frames[kPhase][k] = 100;
        t.detections[kPhase][k] = 5;
    }
    CHECK_THROWS_AS(sift(t), std::invalid_argument);
}

TEST_CASE("sift exposes the statistics the key bound consumes") {
    const ProtocolConfig cfg = defaults();
    const MonteCarloResult mc = simulate_montecarlo(cfg, ChannelModel{6.0}, DetectorModel{},
                                                    ReceiverLayout{}, 400000, 11, 2);
    const SiftResult s = sift(mc.tally, &mc.sifted);
    CHECK(s.qber_time == doctest::Approx(mc.tally.qber(kTime)));
    CHECK(s.lambda_obs == doctest::Approx(mc.tally.qber(kPhase)));
    double key_total = 0.0;
    for (int k = 0; k < 3; ++k) key_total += s.key_detections[k];
    CHECK(key_total == mc.tally.detections_total(kTime));
    // symbol strings align with the tallies
    for (int k = 0; k < 3; ++k)
        CHECK(mc.sifted.alice[k].size() == mc.tally.detections[kTime][k]);
}
