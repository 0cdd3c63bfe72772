#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace qkd {

/// Three-intensity decoy source: signal > decoy > vacuum means with the
/// per-frame selection probabilities.
struct IntensitySet {
    std::array<double, 3> mu = {0.5, 0.01, 0.0};
    std::array<double, 3> prob = {0.8, 0.1, 0.1};

    /// Probability that an emitted frame carries exactly i photons,
    /// marginal over the intensity choice.
    double tau(int i) const;

    void validate() const;
};

constexpr int kSignal = 0;
constexpr int kDecoy = 1;
constexpr int kVacuum = 2;
constexpr int kTime = 0;
constexpr int kPhase = 1;

/// Detections tagged by emitted photon number (0, 1, >=2); available in
/// Monte Carlo mode where the ground truth is known.
struct GroundTruth {
    std::array<std::array<double, 3>, 2> detections_by_photons{};  // [basis][0,1,2+]
    std::array<double, 2> single_photon_errors{};                  // [basis]
};

/// Observed statistics per (basis, intensity): frames sent, sifted
/// detections, errors among them. Values are doubles so that analytic
/// expectations and integer Monte Carlo counts share one type.
struct TallyTable {
    std::array<std::array<double, 3>, 2> frames{};
    std::array<std::array<double, 3>, 2> detections{};
    std::array<std::array<double, 3>, 2> errors{};
    std::optional<GroundTruth> truth;

    double frames_total(int basis) const;
    double detections_total(int basis) const;
    double errors_total(int basis) const;
    double qber(int basis) const;

    void validate() const;

    TallyTable scaled(double factor) const;
};

/// JSON with the canonical flat field names (frames_s/d/v totals per
/// intensity; n_Ts .. m_Pv per basis-intensity cell) so that externally
/// measured data can replace the simulation. Loading splits the per-
/// intensity frame totals with the time-basis probability.
std::string tally_to_json(const TallyTable& t);
TallyTable tally_from_json(const std::string& text, double time_basis_prob);

/// Aligned time-basis symbol strings (values 0..3) for both parties, kept
/// per intensity, plus the observed error rates.
struct SiftedBlock {
    std::array<std::vector<std::uint8_t>, 3> alice;
    std::array<std::vector<std::uint8_t>, 3> bob;
    double qber_time = 0.0;
    double qber_phase = 0.0;
};

}  // namespace qkd
