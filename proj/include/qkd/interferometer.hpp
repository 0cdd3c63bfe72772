#pragma once

#include "qkd/qudit.hpp"

#include <iosfwd>
#include <utility>
#include <vector>

namespace qkd {

/// Complex amplitudes on a global time-bin grid. Delays extend the grid to
/// the right; index 0 is the first bin of the input frame.
struct Wavepacket {
    double bin_width = 400e-12;
    Eigen::VectorXcd amplitudes;
};

/// Unequal-path interferometer acting on the bin grid. The composite of the
/// two internal 50/50 splitters is
///   plus[t]  = (w[t] + e^{i phi} w[t - delay]) / 2
///   minus[t] = (w[t] - e^{i phi} w[t - delay]) / 2
/// `phase_error` shifts phi and `splitting_error` offsets both splitter
/// angles from pi/4; both default to ideal.
struct DelayInterferometer {
    int delay_bins = 1;
    double phase = 0.0;
    double phase_error = 0.0;
    double splitting_error = 0.0;
};

/// Propagate through one interferometer. Returns (plus port, minus port);
/// output grids are `delay_bins` longer than the input.
std::pair<Wavepacket, Wavepacket> di_apply(const Wavepacket& w,
                                           const DelayInterferometer& di);

/// Binary tree of interferometers resolving the d phase states (d a power
/// of two). Nodes are stored heap-style: nodes[0] is the input stage with
/// delay d/2; a node at depth s has delay d/2^(s+1) and the delayed-arm
/// phase 2*pi*r/2^(s+1), where r is the phase-index residue class selected
/// by the branch. For d=4 this is the three-interferometer tree with delays
/// (2, 1, 1) and phases (0, 0, pi/2).
struct CascadeConfig {
    int dim = 4;
    std::vector<DelayInterferometer> nodes;
};

CascadeConfig make_cascade(int d = 4);

/// Per-detector output probability distributions. pdf(k, j) is the
/// probability that detector k fires in output bin j; a single-frame input
/// spreads over 2d-1 bins and all d peaks interfere only in `central_bin`
/// (= d-1).
struct CascadeResponse {
    Eigen::MatrixXd pdf;
    int central_bin = 0;

    double central_probability(int detector) const { return pdf(detector, central_bin); }
    double total() const { return pdf.sum(); }
};

CascadeResponse cascade_response(const StateVector& s, const CascadeConfig& cfg);
CascadeResponse cascade_response(const StateVector& s);

/// Bijection phase index -> detector id, established by propagating every
/// |f_n> and locating its constructive central bin. Throws if the
/// configuration does not separate the states.
std::vector<int> central_bin_map(const CascadeConfig& cfg);
std::vector<int> central_bin_map(int d = 4);

/// Central-bin-only readout: conclusive probability per detector plus the
/// inconclusive remainder (all mass outside the central bin).
struct PhaseReadout {
    Eigen::VectorXd detector;
    double inconclusive = 0.0;
};

PhaseReadout phase_basis_channel(const StateVector& s, const CascadeConfig& cfg);
PhaseReadout phase_basis_channel(const StateVector& s);

/// CSV rows: detector,bin,probability.
void write_response_csv(const CascadeResponse& r, std::ostream& os);

}  // namespace qkd
