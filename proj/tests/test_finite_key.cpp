#include "qkd/finite_key.hpp"

#include "qkd/channel.hpp"
#include "qkd/rng.hpp"

#include <doctest.h>

#include <stdexcept>

#include <cmath>

using namespace qkd;

TEST_CASE("4-ary Shannon entropy") {
    CHECK(shannon_entropy_d4(0.0) == 0.0);
    CHECK(std::abs(shannon_entropy_d4(0.75) - 2.0) < 1e-12);
    CHECK(shannon_entropy_d4(1.0) == doctest::Approx(std::log2(3.0)).epsilon(1e-14));
    CHECK(shannon_entropy_d4(0.048) == doctest::Approx(0.3539177739929248).epsilon(1e-12));
    CHECK_THROWS_AS(shannon_entropy_d4(-0.1), std::invalid_argument);
    CHECK_THROWS_AS(shannon_entropy_d4(1.1), std::invalid_argument);

    // concave with the unique maximum 2 at x = 3/4
    double prev = shannon_entropy_d4(0.0);
    for (double x = 0.01; x <= 0.75; x += 0.01) {
        const double h = shannon_entropy_d4(x);
        CHECK(h > prev);
        CHECK(h <= 2.0 + 1e-12);
        prev = h;
    }
    for (double x = 0.76; x <= 1.0; x += 0.01) {
        const double h = shannon_entropy_d4(x);
        CHECK(h < prev);
        prev = h;
    }
    for (double x = 0.05; x < 0.95; x += 0.05) {
        const double mid = shannon_entropy_d4(x);
        const double chord =
            0.5 * (shannon_entropy_d4(x - 0.05) + shannon_entropy_d4(x + 0.05));
        CHECK(mid >= chord);
    }
}

TEST_CASE("finite-key penalty") {
    CHECK(delta_fk(0.5, 1.0) == doctest::Approx(-13.0).epsilon(1e-15));
    CHECK(delta_fk(1e-10, 1e-15) == doctest::Approx(-320.5831690142994).epsilon(1e-12));
    CHECK(delta_fk(1e-9, 1e-15) == doctest::Approx(-294.0077442552005).epsilon(1e-12));
    CHECK_THROWS_AS(delta_fk(0.0, 1e-15), std::invalid_argument);
    CHECK_THROWS_AS(delta_fk(1e-10, -1.0), std::invalid_argument);
}

TEST_CASE("security budget feasibility") {
    SecurityParams p;
    CHECK(p.beta_max() == doctest::Approx(5.555533333333333e-11).epsilon(1e-12));
    p.beta = p.beta_max();
    CHECK(p.feasible());
    p.beta = p.beta_max() * 1.01;
    CHECK(!p.feasible());
}

TEST_CASE("error-correction leakage") {
    CHECK(leak_ec(1e6, 0.0) == 0.0);
    CHECK(leak_ec(1e6, 0.045, 1.15) == doctest::Approx(386501.5984383526).epsilon(1e-12));
    CHECK(leak_ec(1e6, 0.045, 1.0) ==
          doctest::Approx(1e6 * shannon_entropy_d4(0.045)).epsilon(1e-14));
    CHECK_THROWS_AS(leak_ec(1e6, 0.045, 0.9), std::invalid_argument);
}

namespace {

/// Tally from the closed-form channel Y_i = 1 - (1-y0)(1-eta)^i, with the
/// single-photon error yield b1 = e_int*eta + e0*(1-eta)*y0.
TallyTable model_tally(const IntensitySet& mu, double frames_total, double eta,
                       double y0, double e_int) {
    TallyTable t;
    for (int b = 0; b < 2; ++b) {
        const double basis_frames = frames_total * (b == kTime ? 0.9 : 0.1);
        for (int k = 0; k < 3; ++k) {
            const double f = basis_frames * mu.prob[k];
            const double q = expected_gain(mu.mu[k], eta, y0);
            t.frames[b][k] = f;
            t.detections[b][k] = f * q;
            t.errors[b][k] =
                f * q * expected_error_rate(mu.mu[k], eta, y0, e_int);
        }
    }
    return t;
}

}  // namespace

TEST_CASE("decoy bounds recover the true yields in the big-sample limit") {
    IntensitySet mu;
    const double eta = 0.05, y0 = 1e-5, e_int = 0.025;
    const double frames = 1e16;
    const TallyTable t = model_tally(mu, frames, eta, y0, e_int);
    const double beta = 0.5;  // negligible deviations at this sample size

    const DecoyBounds b = decoy_bounds(t, mu, beta);
    const double y1_true = 1.0 - (1.0 - y0) * (1.0 - eta);
    const double n_time_frames = frames * 0.9;

    // vacuum intensity zero isolates the background exactly
    CHECK(b.s0_lower / (n_time_frames * mu.tau(0)) == doctest::Approx(y0).epsilon(1e-4));
    // single-photon bound is a true lower bound and reasonably tight here
    const double s1_true = n_time_frames * mu.tau(1) * y1_true;
    CHECK(b.s1_lower <= s1_true * (1 + 1e-9));
    CHECK(b.s1_lower >= 0.8 * s1_true);

    // phase-basis error bound covers the true single-photon error yield
    const double b1_true = e_int * eta + 0.75 * (1.0 - eta) * y0;
    const double v1_true = frames * 0.1 * mu.tau(1) * b1_true;
    CHECK(b.v1_phase_upper >= v1_true * (1 - 1e-9));
    CHECK(phase_error_observed(b) >= b1_true / y1_true * (1 - 1e-6));
}

TEST_CASE("smaller beta loosens the bounds monotonically") {
    IntensitySet mu;
    const TallyTable t = model_tally(mu, 1e10, 0.05, 1e-5, 0.025);
    double prev_s1 = 1e18;
    for (double beta : {1e-2, 1e-4, 1e-6, 1e-8, 1e-10, 1e-12}) {
        const DecoyBounds b = decoy_bounds(t, mu, beta);
        CHECK(b.s1_lower <= prev_s1 + 1e-9);
        prev_s1 = b.s1_lower;
    }
}

TEST_CASE("inconsistent tallies clamp with a diagnostic") {
    IntensitySet mu;
    TallyTable t = model_tally(mu, 1e8, 0.05, 1e-5, 0.025);
    // vacuum gain far above the decoy gain is unphysical
    t.detections[kTime][kVacuum] = t.frames[kTime][kVacuum] * 0.5;
    t.errors[kTime][kVacuum] = 0.0;
    const DecoyBounds b = decoy_bounds(t, mu, 1e-10);
    CHECK(b.infeasible);
    CHECK(b.s1_lower == 0.0);
}

TEST_CASE("Serfling phase-error correction") {
    CHECK(phase_error_upper(0.02, 1e6, 0.0, 1e-10) == 1.0);
    CHECK(phase_error_upper(0.0, 1e6, 1e4, 1e-10) > 0.0);
    // asymptotics: penalty vanishes as the sample grows
    double prev = 1.0;
    for (double k : {1e3, 1e5, 1e7, 1e9, 1e12}) {
        const double lu = phase_error_upper(0.02, 1e12, k, 1e-10);
        CHECK(lu < prev);
        prev = lu;
    }
    CHECK(phase_error_upper(0.02, 1e12, 1e12, 1e-10) == doctest::Approx(0.02).epsilon(1e-3));
    // monotone decreasing in the key size as well
    CHECK(phase_error_upper(0.02, 1e8, 1e4, 1e-10) <
          phase_error_upper(0.02, 1e5, 1e4, 1e-10));
}

TEST_CASE("key length plug-in") {
    SecurityParams p;
    p.epsilon = 1e-3;
    p.epsilon_cor = std::pow(2.0, -15);
    p.beta = std::pow(2.0, -35);  // delta_fk = -5 - 280 - 15 = -300
    REQUIRE(p.feasible());

    DecoyBounds b;
    b.s0_lower = 0.0;
    b.s1_lower = 1e6;
    KeyLengthReport rep = key_length(b, 0.0, 0.0, p, 2.0);
    CHECK(rep.delta_fk == doctest::Approx(-300.0).epsilon(1e-14));
    CHECK(rep.ell == doctest::Approx(2e6 - 300.0));

    // noise at the entropy ceiling kills the key
    rep = key_length(b, 0.75, 0.0, p, 2.0);
    CHECK(rep.ell == 0.0);
    CHECK(rep.ell_raw < 0.0);

    SecurityParams infeasible = p;
    infeasible.beta = 1.0;
    CHECK_THROWS_AS(key_length(b, 0.0, 0.0, infeasible, 2.0), std::invalid_argument);
}

TEST_CASE("beta optimization against a grid scan") {
    IntensitySet mu;
    SecurityParams params;
    Rng rng(42);
    for (int trial = 0; trial < 5; ++trial) {
        const double eta = 0.002 + 0.05 * rng.uniform();
        const double y0 = 1e-6 + 1e-5 * rng.uniform();
        const double frames = 1e8 + 1e10 * rng.uniform();
        const TallyTable t = model_tally(mu, frames, eta, y0, 0.02 + 0.01 * rng.uniform());

        const auto eval = [&](double beta) {
            return evaluate_tally(t, mu, params, beta, 1.89, 1.15, 100.0);
        };
        const KeyLengthReport best = optimize_beta(eval, params);

        double grid_best = 0.0;
        const double hi = std::log10(params.beta_max());
        for (int i = 0; i < 100; ++i) {
            const double x = -15.0 + (hi + 15.0) * i / 99.0;
            grid_best = std::max(grid_best, eval(std::pow(10.0, x)).ell);
        }
        CHECK(best.ell >= grid_best - 1.0);
        CHECK(4.0 * params.epsilon_cor + 18.0 * best.beta_star <=
              params.epsilon * (1 + 1e-12));
    }
}

TEST_CASE("key length is monotone in every argument") {
    SecurityParams p;
    p.beta = 1e-11;
    DecoyBounds base;
    base.s0_lower = 1e4;
    base.s1_lower = 1e6;
    const double ell0 = key_length(base, 0.05, 1e5, p, 1.89).ell;

    DecoyBounds more = base;
    more.s0_lower *= 2;
    CHECK(key_length(more, 0.05, 1e5, p, 1.89).ell >= ell0);
    more = base;
    more.s1_lower *= 2;
    CHECK(key_length(more, 0.05, 1e5, p, 1.89).ell >= ell0);
    CHECK(key_length(base, 0.05, 1e5, p, 2.0).ell >= ell0);
    CHECK(key_length(base, 0.10, 1e5, p, 1.89).ell <= ell0);
    CHECK(key_length(base, 0.05, 2e5, p, 1.89).ell <= ell0);
}

TEST_CASE("key length grows with the data set") {
    IntensitySet mu;
    SecurityParams params;
    const TallyTable t = model_tally(mu, 1e10, 0.01, 1e-5, 0.025);
    const KeyLengthReport base = best_key_length(t, mu, params, 1.89, 1.15, 100.0);
    const KeyLengthReport doubled =
        best_key_length(t.scaled(2.0), mu, params, 1.89, 1.15, 100.0);
    CHECK(base.ell > 0.0);
    CHECK(doubled.ell >= base.ell);

    // monotone in the overlap parameter too
    const KeyLengthReport ideal = best_key_length(t, mu, params, 2.0, 1.15, 100.0);
    CHECK(ideal.ell >= base.ell);
}

TEST_CASE("report serializes every intermediate") {
    IntensitySet mu;
    SecurityParams params;
    const TallyTable t = model_tally(mu, 1e10, 0.01, 1e-5, 0.025);
    const KeyLengthReport rep = best_key_length(t, mu, params, 1.89, 1.15, 100.0);
    const std::string json = report_to_json(rep);
    for (const char* field : {"ell", "s0_lower", "s1_lower", "lambda_u", "leak_ec",
                              "delta_fk", "beta_star", "rate_bits_per_s"})
        CHECK(json.find(field) != std::string::npos);
}
