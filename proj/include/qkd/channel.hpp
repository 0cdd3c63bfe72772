#pragma once

#include <iosfwd>

namespace qkd {

/// Attenuation-only quantum channel; loss quoted in dB with a fiber
/// equivalence of 0.2 dB/km at telecom wavelengths.
struct ChannelModel {
    double loss_db = 0.0;
    double fiber_db_per_km = 0.2;

    double transmittance() const;
    double fiber_equivalent_km() const { return loss_db / fiber_db_per_km; }
};

double transmittance(double loss_db);

/// Non-paralyzable single-photon detector: peak efficiency eta0, dead time
/// calibrated so the throughput knee sits near 2 Mcounts/s, dark counts,
/// and Gaussian timing jitter.
struct DetectorModel {
    double eta0 = 0.72;
    double dead_time = 100e-9;
    double dark_rate = 150.0;
    double jitter_sigma = 17e-12;
};

/// Receiver topology: basis-choice splitter, 1:N coupler fanning the time
/// arm over N detectors, and the aggregate insertion loss of the phase-arm
/// interferometer tree.
struct ReceiverLayout {
    double basis_split = 0.90;
    int time_arm_fanout = 4;
    int phase_detectors = 4;
    double phase_insertion_loss_db = 2.5;

    double phase_arm_transmittance() const;
};

/// Effective efficiency eta0 / (1 + eta0 * incident_rate * dead_time);
/// monotone non-increasing, detected rate saturates at 1/dead_time.
double efficiency_at_rate(const DetectorModel& det, double incident_rate);

/// Steady-state detected rate (including dark counts) of one detector whose
/// would-be detection rate at peak efficiency is `load`. Solves the
/// self-consistent live-time equation r = (load + dark) * (1 - r*dead_time)
/// by damped iteration to relative tolerance 1e-10.
double saturated_rate(double load, const DetectorModel& det);

/// Same, with the per-arm unsaturated click probability split across the
/// fan-out coupler: load = frame_rate * mean_click_prob / fanout.
double steady_state_detection_rate(const ReceiverLayout& layout,
                                   const DetectorModel& det,
                                   double frame_rate, double mean_click_prob);

/// Live-time fraction at the steady state; multiplies every efficiency.
double saturation_factor(double load, const DetectorModel& det);

/// Weak-coherent-pulse gain Q_mu = 1 - (1 - y0) exp(-eta*mu).
double expected_gain(double mu, double eta, double y0);

/// Error rate E_mu with E*Q = e0*y0 + e_intrinsic*(1 - exp(-eta*mu));
/// background clicks land on a wrong symbol with probability e0 = 3/4.
double expected_error_rate(double mu, double eta, double y0,
                           double e_intrinsic, double e0 = 0.75);

/// Probability that a bin-centered Gaussian arrival falls outside its bin:
/// erfc(bin_width / (2*sqrt(2)*sigma)).
double jitter_misbin_probability(double jitter_sigma, double bin_width);

/// Calibration plot data: incident_rate, efficiency, detected_rate rows on
/// a log grid up to max_rate.
void write_efficiency_curve_csv(const DetectorModel& det, std::ostream& os,
                                double max_rate = 1e9, int points = 200);

}  // namespace qkd
