#include "qkd/tally.hpp"

#include <doctest.h>

#include <cmath>
#include <stdexcept>

using namespace qkd;

TEST_CASE("intensity set validation and photon-number weights") {
    IntensitySet mu;
    mu.validate();
    // tau_i = sum_k p_k e^{-mu_k} mu_k^i / i!
    double tau0 = 0.0, tau1 = 0.0, tau2 = 0.0;
    for (int k = 0; k < 3; ++k) {
        tau0 += mu.prob[k] * std::exp(-mu.mu[k]);
        tau1 += mu.prob[k] * mu.mu[k] * std::exp(-mu.mu[k]);
        tau2 += mu.prob[k] * 0.5 * mu.mu[k] * mu.mu[k] * std::exp(-mu.mu[k]);
    }
    CHECK(mu.tau(0) == doctest::Approx(tau0).epsilon(1e-14));
    CHECK(mu.tau(1) == doctest::Approx(tau1).epsilon(1e-14));
    CHECK(mu.tau(2) == doctest::Approx(tau2).epsilon(1e-14));

    IntensitySet bad = mu;
    bad.mu = {0.1, 0.5, 0.0};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = mu;
    bad.prob = {0.8, 0.3, 0.1};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

namespace {
TallyTable sample_tally() {
    TallyTable t;
    for (int b = 0; b < 2; ++b)
        for (int k = 0; k < 3; ++k) {
            t.frames[b][k] = 1000.0 * (b + 1) * (k + 1);
            t.detections[b][k] = 100.0 + 10.0 * b + k;
            t.errors[b][k] = 3.0 + b + k;
        }
    return t;
}
}  // namespace

TEST_CASE("tally validation") {
    TallyTable t = sample_tally();
    t.validate();
    t.errors[0][0] = t.detections[0][0] + 1;
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);
    t = sample_tally();
    t.detections[1][2] = t.frames[1][2] + 1;
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);
}

TEST_CASE("tally JSON round trip with canonical names") {
    const TallyTable t = sample_tally();
    const std::string json = tally_to_json(t);
    CHECK(json.find("\"n_Ts\"") != std::string::npos);
    CHECK(json.find("\"m_Pv\"") != std::string::npos);
    CHECK(json.find("\"frames_d\"") != std::string::npos);

    // frames split 2:1 between the bases in sample_tally
    const TallyTable back = tally_from_json(json, 1.0 / 3.0);
    for (int b = 0; b < 2; ++b)
        for (int k = 0; k < 3; ++k) {
            CHECK(back.detections[b][k] == t.detections[b][k]);
            CHECK(back.errors[b][k] == t.errors[b][k]);
            CHECK(back.frames[b][k] == doctest::Approx(t.frames[b][k]).epsilon(1e-12));
        }

    CHECK_THROWS(tally_from_json("{\"schema\":1}", 0.9));
}

TEST_CASE("scaling a tally") {
    TallyTable t = sample_tally();
    t.truth = GroundTruth{};
    t.truth->detections_by_photons[0][1] = 40.0;
    const TallyTable s = t.scaled(2.5);
    CHECK(s.frames[1][0] == doctest::Approx(2.5 * t.frames[1][0]));
    CHECK(s.detections[0][2] == doctest::Approx(2.5 * t.detections[0][2]));
    CHECK(s.truth->detections_by_photons[0][1] == doctest::Approx(100.0));
}
