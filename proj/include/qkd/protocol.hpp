#pragma once

#include "qkd/channel.hpp"
#include "qkd/tally.hpp"

#include <cstdint>

namespace qkd {

/// Prepare-and-measure protocol parameters. Four time bins per frame at a
/// 2.5 GHz bin clock give the 625 MHz frame rate; the receiver chooses the
/// time basis with probability 0.90.
struct ProtocolConfig {
    int dim = 4;
    double bin_width = 400e-12;
    double frame_rate = 625e6;
    double time_basis_prob = 0.90;
    IntensitySet intensities;
    double frames_total = 6.25e10;
    double intrinsic_error_time = 0.03;
    double intrinsic_error_phase = 0.025;

    double frame_duration() const { return dim * bin_width; }
    void validate() const;
};

/// Derived per-arm efficiencies after loss, routing, insertion loss and
/// detector saturation. Exposed so the closed-form chain can be checked
/// piecewise.
struct ArmModel {
    double sat_time = 1.0;   // live-time fraction, time-arm detectors
    double sat_phase = 1.0;  // live-time fraction, phase-arm detectors
    double eta_time = 0.0;   // per-photon detection probability, time basis
    double eta_phase = 0.0;  // per-photon conclusive probability, phase basis
    double y0_time = 0.0;    // background click probability per frame
    double y0_phase = 0.0;   // background central-bin click probability per frame
    double e_time = 0.0;     // intrinsic time error incl. jitter mis-binning
    double e_phase = 0.0;
};

ArmModel compute_arm_model(const ProtocolConfig& cfg, const ChannelModel& channel,
                           const DetectorModel& det, const ReceiverLayout& layout);

/// Mean-value tallies of the full session (deterministic).
TallyTable simulate_expected(const ProtocolConfig& cfg, const ChannelModel& channel,
                             const DetectorModel& det,
                             const ReceiverLayout& layout = ReceiverLayout{});

struct MonteCarloResult {
    TallyTable tally;
    SiftedBlock sifted;
};

/// Per-frame Monte Carlo with ground-truth photon-number tagging.
/// Reproducible given (seed, shards); shards run independently (dead-time
/// coupling stays within a shard) and merge by summation, so they may be
/// executed in parallel.
MonteCarloResult simulate_montecarlo(const ProtocolConfig& cfg,
                                     const ChannelModel& channel,
                                     const DetectorModel& det,
                                     const ReceiverLayout& layout,
                                     std::uint64_t frames, std::uint64_t seed,
                                     int shards = 1);

struct SiftResult {
    std::array<double, 3> key_detections{};  // time basis, per intensity
    std::array<double, 3> key_errors{};
    double lambda_obs = 0.0;  // observed phase-basis error rate
    double qber_time = 0.0;
};

/// Basis-matched statistics consumed by the key-length analysis. Throws if
/// the time-basis raw key is empty.
SiftResult sift(const TallyTable& tally, const SiftedBlock* block = nullptr);

}  // namespace qkd
