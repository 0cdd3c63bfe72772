#include "qkd/interferometer.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace qkd {

std::pair<Wavepacket, Wavepacket> di_apply(const Wavepacket& w,
                                           const DelayInterferometer& di) {
    if (di.delay_bins < 0) throw std::invalid_argument("di_apply: negative delay");
    const auto n = w.amplitudes.size();
    const auto out_n = n + di.delay_bins;
    Wavepacket plus{w.bin_width, Eigen::VectorXcd::Zero(out_n)};
    Wavepacket minus{w.bin_width, Eigen::VectorXcd::Zero(out_n)};

    const double theta = M_PI / 4.0 + di.splitting_error;
    const double c = std::cos(theta), s = std::sin(theta);
    const std::complex<double> arm = std::polar(1.0, di.phase + di.phase_error);

    for (Eigen::Index t = 0; t < out_n; ++t) {
        const std::complex<double> direct = t < n ? w.amplitudes[t] : 0.0;
        const std::complex<double> delayed =
            t >= di.delay_bins ? w.amplitudes[t - di.delay_bins] : 0.0;
        plus.amplitudes[t] = c * c * direct + s * s * arm * delayed;
        minus.amplitudes[t] = s * c * direct - c * s * arm * delayed;
    }
    return {std::move(plus), std::move(minus)};
}

CascadeConfig make_cascade(int d) {
    if (d < 2 || (d & (d - 1)) != 0)
        throw std::invalid_argument("make_cascade: dimension must be a power of two >= 2");
    CascadeConfig cfg;
    cfg.dim = d;
    cfg.nodes.resize(d - 1);
    // Heap layout: node i (1-based) at depth s = floor(log2(i)). The path
    // bits below the leading 1 of i select the residue class r whose phase
    // states reach this node; the delayed arm carries phase 2*pi*r/2^(s+1).
    for (int i = 1; i < d; ++i) {
        int depth = 0;
        while ((i >> (depth + 1)) != 0) ++depth;
        int r = 0;
        for (int j = 0; j < depth; ++j) {
            const int bit = (i >> (depth - 1 - j)) & 1;
            r |= bit << j;
        }
        DelayInterferometer di;
        di.delay_bins = d >> (depth + 1);
        di.phase = 2.0 * M_PI * r / static_cast<double>(1 << (depth + 1));
        cfg.nodes[i - 1] = di;
    }
    return cfg;
}

CascadeResponse cascade_response(const StateVector& s, const CascadeConfig& cfg) {
    const int d = cfg.dim;
    if (s.size() != d) throw std::invalid_argument("cascade_response: wrong state dimension");
    if (static_cast<int>(cfg.nodes.size()) != d - 1)
        throw std::invalid_argument("cascade_response: malformed cascade");

    // Propagate port wavepackets down the heap; slot i holds the input of
    // node i (1-based), slots d..2d-1 are the detector outputs.
    std::vector<Wavepacket> slot(2 * d);
    slot[1] = Wavepacket{400e-12, s};
    for (int i = 1; i < d; ++i) {
        auto [plus, minus] = di_apply(slot[i], cfg.nodes[i - 1]);
        slot[2 * i] = std::move(plus);
        slot[2 * i + 1] = std::move(minus);
    }

    CascadeResponse resp;
    resp.central_bin = d - 1;
    resp.pdf = Eigen::MatrixXd::Zero(d, 2 * d - 1);
    for (int k = 0; k < d; ++k) {
        const auto& out = slot[d + k].amplitudes;
        for (Eigen::Index j = 0; j < out.size() && j < 2 * d - 1; ++j)
            resp.pdf(k, j) = std::norm(out[j]);
    }
    return resp;
}

CascadeResponse cascade_response(const StateVector& s) {
    return cascade_response(s, make_cascade(static_cast<int>(s.size())));
}

std::vector<int> central_bin_map(const CascadeConfig& cfg) {
    const int d = cfg.dim;
    std::vector<int> map(d, -1);
    std::vector<bool> used(d, false);
    for (int n = 0; n < d; ++n) {
        const CascadeResponse resp = cascade_response(phase_state(n, d), cfg);
        int best = 0;
        for (int k = 1; k < d; ++k)
            if (resp.central_probability(k) > resp.central_probability(best)) best = k;
        // The matched detector must carry essentially all central-bin mass.
        double central_total = 0.0;
        for (int k = 0; k < d; ++k) central_total += resp.central_probability(k);
        if (used[best] || resp.central_probability(best) < 0.999 * central_total)
            throw std::runtime_error(
                "central_bin_map: degenerate detector map (check cascade phases)");
        map[n] = best;
        used[best] = true;
    }
    return map;
}

std::vector<int> central_bin_map(int d) { return central_bin_map(make_cascade(d)); }

PhaseReadout phase_basis_channel(const StateVector& s, const CascadeConfig& cfg) {
    const CascadeResponse resp = cascade_response(s, cfg);
    PhaseReadout out;
    out.detector = resp.pdf.col(resp.central_bin);
    out.inconclusive = resp.total() - out.detector.sum();
    return out;
}

PhaseReadout phase_basis_channel(const StateVector& s) {
    return phase_basis_channel(s, make_cascade(static_cast<int>(s.size())));
}

void write_response_csv(const CascadeResponse& r, std::ostream& os) {
    os << "detector,bin,probability\n";
    char buf[64];
    for (Eigen::Index k = 0; k < r.pdf.rows(); ++k) {
        for (Eigen::Index j = 0; j < r.pdf.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", r.pdf(k, j));
            os << k << ',' << j << ',' << buf << '\n';
        }
    }
}

}  // namespace qkd
