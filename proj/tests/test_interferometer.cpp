#include "qkd/interferometer.hpp"

#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <random>

using namespace qkd;

namespace {

Wavepacket packet(std::initializer_list<std::complex<double>> amps) {
    Wavepacket w;
    w.amplitudes.resize(static_cast<Eigen::Index>(amps.size()));
    Eigen::Index i = 0;
    for (const auto& a : amps) w.amplitudes[i++] = a;
    return w;
}

double total_probability(const Wavepacket& w) { return w.amplitudes.squaredNorm(); }

}  // namespace

TEST_CASE("single peak splits without interference") {
    const auto [plus, minus] = di_apply(packet({1.0}), DelayInterferometer{2, 0.0});
    REQUIRE(plus.amplitudes.size() == 3);
    CHECK(plus.amplitudes[0].real() == doctest::Approx(0.5));
    CHECK(plus.amplitudes[1] == std::complex<double>(0.0, 0.0));
    CHECK(plus.amplitudes[2].real() == doctest::Approx(0.5));
    CHECK(minus.amplitudes[0].real() == doctest::Approx(0.5));
    CHECK(minus.amplitudes[2].real() == doctest::Approx(-0.5));
}

TEST_CASE("matched peaks interfere constructively on the plus port") {
    const double r = 1.0 / std::sqrt(2.0);
    const auto [plus, minus] = di_apply(packet({r, 0.0, r}), DelayInterferometer{2, 0.0});
    CHECK(plus.amplitudes[2].real() == doctest::Approx(r).epsilon(1e-14));
    CHECK(std::abs(minus.amplitudes[2]) < 1e-15);
}

TEST_CASE("interferometer conserves energy for random inputs") {
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        Wavepacket w;
        w.amplitudes.resize(6);
        for (int i = 0; i < 6; ++i) w.amplitudes[i] = {u(gen), u(gen)};
        w.amplitudes.normalize();
        DelayInterferometer di;
        di.delay_bins = 1 + trial % 3;
        di.phase = u(gen) * M_PI;
        di.phase_error = 0.05 * u(gen);
        di.splitting_error = 0.1 * u(gen);
        const auto [plus, minus] = di_apply(w, di);
        CHECK(total_probability(plus) + total_probability(minus) ==
              doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("default cascade geometry for d=4") {
    const CascadeConfig cfg = make_cascade(4);
    REQUIRE(cfg.nodes.size() == 3);
    CHECK(cfg.nodes[0].delay_bins == 2);
    CHECK(cfg.nodes[0].phase == 0.0);
    CHECK(cfg.nodes[1].delay_bins == 1);
    CHECK(cfg.nodes[1].phase == 0.0);
    CHECK(cfg.nodes[2].delay_bins == 1);
    CHECK(cfg.nodes[2].phase == doctest::Approx(M_PI / 2));
}

TEST_CASE("phase states light exactly one central bin at 1/4") {
    for (int n = 0; n < 4; ++n) {
        const CascadeResponse r = cascade_response(phase_state(n, 4));
        REQUIRE(r.pdf.cols() == 7);
        CHECK(r.central_bin == 3);
        CHECK(r.total() == doctest::Approx(1.0).epsilon(1e-12));

        int bright = 0;
        double central_mass = 0.0;
        for (int k = 0; k < 4; ++k) {
            const double p = r.central_probability(k);
            central_mass += p;
            if (p > 1e-9) {
                ++bright;
                CHECK(p == doctest::Approx(0.25).epsilon(1e-12));
            }
        }
        CHECK(bright == 1);
        CHECK(r.total() - central_mass == doctest::Approx(0.75).epsilon(1e-9));
    }
}

TEST_CASE("time states reach every detector's central bin at 1/16") {
    // hand propagation: amplitude 1 -> 1/2 per stage-1 path -> 1/4 at the
    // central bin of each leaf, probability 1/16
    for (int n = 0; n < 4; ++n) {
        const CascadeResponse r = cascade_response(time_state(n, 4));
        for (int k = 0; k < 4; ++k)
            CHECK(r.central_probability(k) == doctest::Approx(1.0 / 16).epsilon(1e-12));
        CHECK(r.total() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("central bin map is a bijection") {
    const std::vector<int> map = central_bin_map(4);
    std::vector<bool> seen(4, false);
    for (int n = 0; n < 4; ++n) {
        REQUIRE(map[n] >= 0);
        REQUIRE(map[n] < 4);
        CHECK(!seen[map[n]]);
        seen[map[n]] = true;
    }
    // the tree routes by bit-reversed phase index
    CHECK(map[0] == 0);
    CHECK(map[1] == 2);
    CHECK(map[2] == 1);
    CHECK(map[3] == 3);
}

TEST_CASE("removing the pi/2 offset degenerates the map") {
    CascadeConfig cfg = make_cascade(4);
    cfg.nodes[2].phase = 0.0;
    CHECK_THROWS_AS(central_bin_map(cfg), std::runtime_error);
}

TEST_CASE("d=2 single-interferometer variant") {
    const std::vector<int> map = central_bin_map(2);
    CHECK(map[0] == 0);
    CHECK(map[1] == 1);
    const CascadeResponse r = cascade_response(phase_state(0, 2));
    REQUIRE(r.pdf.cols() == 3);
    CHECK(r.central_probability(0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("d=8 tree still separates all phase states") {
    const std::vector<int> map = central_bin_map(8);
    std::vector<bool> seen(8, false);
    for (int n = 0; n < 8; ++n) {
        CHECK(!seen[map[n]]);
        seen[map[n]] = true;
        const CascadeResponse r = cascade_response(phase_state(n, 8));
        CHECK(r.central_probability(map[n]) == doctest::Approx(1.0 / 8).epsilon(1e-12));
        CHECK(r.total() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("central-bin readout") {
    const std::vector<int> map = central_bin_map(4);
    const PhaseReadout f1 = phase_basis_channel(phase_state(1, 4));
    CHECK(f1.detector[map[1]] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(f1.inconclusive == doctest::Approx(0.75).epsilon(1e-9));

    const PhaseReadout t0 = phase_basis_channel(time_state(0, 4));
    for (int k = 0; k < 4; ++k)
        CHECK(t0.detector[k] == doctest::Approx(1.0 / 16).epsilon(1e-12));
    CHECK(t0.inconclusive == doctest::Approx(0.75).epsilon(1e-9));
    CHECK(t0.detector.sum() + t0.inconclusive == doctest::Approx(1.0).epsilon(1e-12));

    // uniform mixture of the four phase states: 1/16 per detector
    Eigen::VectorXd mix = Eigen::VectorXd::Zero(4);
    for (int n = 0; n < 4; ++n) mix += phase_basis_channel(phase_state(n, 4)).detector;
    mix /= 4.0;
    for (int k = 0; k < 4; ++k)
        CHECK(mix[k] == doctest::Approx(1.0 / 16).epsilon(1e-12));
}

TEST_CASE("MUB cross-check: time states are centrally uniform") {
    // conditional distribution over detectors given the central bin must be
    // uniform, consistent with |<t|f>|^2 = 1/d
    for (int n = 0; n < 4; ++n) {
        const PhaseReadout r = phase_basis_channel(time_state(n, 4));
        const double total = r.detector.sum();
        for (int k = 0; k < 4; ++k)
            CHECK(r.detector[k] / total == doctest::Approx(0.25).epsilon(1e-9));
    }
}

TEST_CASE("cascade-simulated probability matrix matches the MUB ideal") {
    const CascadeConfig cascade = make_cascade(4);
    const std::vector<int> map = central_bin_map(cascade);
    const Eigen::MatrixXd m = probability_matrix(4, [&](const StateVector& s) {
        const PhaseReadout r = phase_basis_channel(s, cascade);
        Eigen::VectorXd p(4);
        for (int n = 0; n < 4; ++n) p[n] = r.detector[map[n]];
        return p;
    });
    for (int r = 0; r < 4; ++r)          // time rows, phase columns
        for (int c = 4; c < 8; ++c) CHECK(m(r, c) == doctest::Approx(0.25).epsilon(1e-9));
    for (int r = 4; r < 8; ++r)          // phase rows measured in phase basis
        for (int c = 4; c < 8; ++c)
            CHECK(m(r, c) == doctest::Approx(r - 4 == c - 4 ? 1.0 : 0.0).epsilon(1e-9));
}

TEST_CASE("frame spill-over stays clear of the next central bin") {
    // a frame's response occupies 2d-1 bins, so it reaches d-1 bins into the
    // following frame and never its central bin (offset d-1 within a frame)
    const CascadeResponse r = cascade_response(phase_state(0, 4));
    const int width = static_cast<int>(r.pdf.cols());
    const int frame_stride = 4;
    CHECK(width == 2 * 4 - 1);
    CHECK(width - frame_stride <= 3);                  // spill into the neighbour
    CHECK(frame_stride + r.central_bin >= width);      // next central bin untouched
}
