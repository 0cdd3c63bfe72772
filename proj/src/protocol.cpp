#include "qkd/protocol.hpp"

#include "qkd/interferometer.hpp"
#include "qkd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>
#include <vector>

namespace qkd {

void ProtocolConfig::validate() const {
    if (dim != 4) throw std::invalid_argument("protocol simulation requires dim = 4");
    if (bin_width <= 0.0 || frame_rate <= 0.0 || frames_total <= 0.0)
        throw std::invalid_argument("protocol config: non-positive scale parameter");
    if (time_basis_prob <= 0.0 || time_basis_prob >= 1.0)
        throw std::invalid_argument("protocol config: basis probability outside (0, 1)");
    if (intrinsic_error_time < 0.0 || intrinsic_error_time > 1.0 ||
        intrinsic_error_phase < 0.0 || intrinsic_error_phase > 1.0)
        throw std::invalid_argument("protocol config: intrinsic error outside [0, 1]");
    intensities.validate();
}

ArmModel compute_arm_model(const ProtocolConfig& cfg, const ChannelModel& channel,
                           const DetectorModel& det, const ReceiverLayout& layout) {
    cfg.validate();
    if (layout.phase_detectors != cfg.dim)
        throw std::invalid_argument("receiver needs one phase detector per dimension");
    if (layout.time_arm_fanout < 1)
        throw std::invalid_argument("time-arm fanout must be >= 1");
    const double eta_ch = channel.transmittance();
    const int d = cfg.dim;

    // Per-photon click probability in each arm at peak detector efficiency.
    const double q_time = layout.basis_split * eta_ch * det.eta0;
    const double q_phase =
        (1.0 - layout.basis_split) * eta_ch * layout.phase_arm_transmittance() * det.eta0;

    // Unsaturated click rate per detector (photons spread over the fan-out).
    auto arm_load = [&](double q, int fanout) {
        double click = 0.0;
        for (int k = 0; k < 3; ++k)
            click += cfg.intensities.prob[k] *
                     (1.0 - std::exp(-cfg.intensities.mu[k] * q / fanout));
        return cfg.frame_rate * click;
    };

    ArmModel m;
    m.sat_time = saturation_factor(arm_load(q_time, layout.time_arm_fanout), det);
    m.sat_phase = saturation_factor(arm_load(q_phase, layout.phase_detectors), det);

    m.eta_time = q_time * m.sat_time;
    m.eta_phase = q_phase * m.sat_phase / d;  // central-bin acceptance 1/d

    // Dark counts: any bin of the frame window counts in the time basis;
    // only the central output bin is conclusive in the phase basis.
    m.y0_time = layout.time_arm_fanout * det.dark_rate * cfg.frame_duration() * m.sat_time;
    m.y0_phase = layout.phase_detectors * det.dark_rate * cfg.bin_width * m.sat_phase;

    m.e_time = cfg.intrinsic_error_time +
               jitter_misbin_probability(det.jitter_sigma, cfg.bin_width);
    m.e_phase = cfg.intrinsic_error_phase;
    return m;
}

TallyTable simulate_expected(const ProtocolConfig& cfg, const ChannelModel& channel,
                             const DetectorModel& det, const ReceiverLayout& layout) {
    const ArmModel m = compute_arm_model(cfg, channel, det, layout);

    TallyTable t;
    for (int k = 0; k < 3; ++k) {
        const double mu = cfg.intensities.mu[k];
        const double pk = cfg.intensities.prob[k];

        const double frames_t = cfg.frames_total * cfg.time_basis_prob * pk;
        const double q_t = expected_gain(mu, m.eta_time, m.y0_time);
        t.frames[kTime][k] = frames_t;
        t.detections[kTime][k] = frames_t * q_t;
        t.errors[kTime][k] =
            t.detections[kTime][k] * expected_error_rate(mu, m.eta_time, m.y0_time, m.e_time);

        const double frames_p = cfg.frames_total * (1.0 - cfg.time_basis_prob) * pk;
        const double q_p = expected_gain(mu, m.eta_phase, m.y0_phase);
        t.frames[kPhase][k] = frames_p;
        t.detections[kPhase][k] = frames_p * q_p;
        t.errors[kPhase][k] =
            t.detections[kPhase][k] * expected_error_rate(mu, m.eta_phase, m.y0_phase, m.e_phase);
    }
    return t;
}

namespace {

/// Cumulative (detector, bin) tables for sampling the cascade output of
/// each prepared state.
struct CascadeTables {
    int d = 4;
    int bins = 7;
    // [basis][symbol] -> flat cumulative distribution over detector*bins
    std::vector<std::vector<double>> cdf;
    std::vector<int> phase_to_detector;
    std::vector<int> detector_to_phase;

    explicit CascadeTables(int dim) : d(dim), bins(2 * dim - 1) {
        const CascadeConfig cascade = make_cascade(dim);
        phase_to_detector = central_bin_map(cascade);
        detector_to_phase.assign(dim, 0);
        for (int n = 0; n < dim; ++n) detector_to_phase[phase_to_detector[n]] = n;
        cdf.resize(2 * dim);
        for (int b = 0; b < 2; ++b)
            for (int s = 0; s < dim; ++s) {
                const StateVector state =
                    b == kTime ? time_state(s, dim) : phase_state(s, dim);
                const CascadeResponse resp = cascade_response(state, cascade);
                auto& flat = cdf[b * dim + s];
                flat.resize(dim * bins);
                double acc = 0.0;
                for (int det = 0; det < dim; ++det)
                    for (int j = 0; j < bins; ++j) {
                        acc += resp.pdf(det, j);
                        flat[det * bins + j] = acc;
                    }
                // Lossless tree: total is 1; force the last edge exact.
                flat.back() = 1.0;
            }
    }

    // Returns (detector, output bin).
    std::pair<int, int> sample(int basis, int symbol, double u) const {
        const auto& flat = cdf[basis * d + symbol];
        const auto it = std::lower_bound(flat.begin(), flat.end(), u);
        const int idx = static_cast<int>(it - flat.begin());
        return {idx / bins, idx % bins};
    }
};

struct ShardResult {
    TallyTable tally;
    SiftedBlock sifted;
};

ShardResult run_shard(const ProtocolConfig& cfg, const ChannelModel& channel,
                      const DetectorModel& det, const ReceiverLayout& layout,
                      const CascadeTables& tables, std::uint64_t frames,
                      std::uint64_t seed) {
    ShardResult out;
    out.tally.truth = GroundTruth{};
    Rng rng(seed);

    const int d = cfg.dim;
    const double eta_ch = channel.transmittance();
    const double p_time_det = eta_ch * det.eta0;
    const double p_phase_det = eta_ch * layout.phase_arm_transmittance() * det.eta0;
    const double e_time = cfg.intrinsic_error_time +
                          jitter_misbin_probability(det.jitter_sigma, cfg.bin_width);
    const double e_phase = cfg.intrinsic_error_phase;

    const int n_time_det = layout.time_arm_fanout;
    const int n_phase_det = layout.phase_detectors;
    const double frame_dt = 1.0 / cfg.frame_rate;
    const double tau = cfg.bin_width;
    const double p_dark_frame =
        (n_time_det + n_phase_det) * det.dark_rate * cfg.frame_duration();

    std::vector<double> live_time(n_time_det, -1.0);
    std::vector<double> live_phase(n_phase_det, -1.0);

    const auto& mu = cfg.intensities.mu;
    const auto& pk = cfg.intensities.prob;

    for (std::uint64_t i = 0; i < frames; ++i) {
        const double t0 = static_cast<double>(i) * frame_dt;

        const double u_int = rng.uniform();
        const int k = u_int < pk[0] ? 0 : (u_int < pk[0] + pk[1] ? 1 : 2);
        const int basis = rng.uniform() < cfg.time_basis_prob ? kTime : kPhase;
        const unsigned photons = rng.poisson(mu[k]);
        out.tally.frames[basis][k] += 1.0;

        int symbol = -1;
        unsigned time_bins_hit = 0;     // bitmask of clicked time-arm bins
        unsigned phase_dets_hit = 0;    // bitmask of conclusive phase detectors

        for (unsigned p = 0; p < photons; ++p) {
            if (rng.uniform() < layout.basis_split) {
                // time arm
                if (rng.uniform() >= p_time_det) continue;
                const int det_id = static_cast<int>(rng.uniform_int(n_time_det));
                if (symbol < 0) symbol = static_cast<int>(rng.uniform_int(d));
                int bin;
                if (basis == kTime) {
                    bin = symbol;
                    if (rng.uniform() < e_time)
                        bin = (bin + 1 + static_cast<int>(rng.uniform_int(d - 1))) % d;
                } else {
                    bin = static_cast<int>(rng.uniform_int(d));
                }
                const double t = t0 + (bin + 0.5) * tau;
                if (t >= live_time[det_id]) {
                    live_time[det_id] = t + det.dead_time;
                    time_bins_hit |= 1u << bin;
                }
            } else {
                // phase arm, propagated through the interferometer tree
                if (rng.uniform() >= p_phase_det) continue;
                if (symbol < 0) symbol = static_cast<int>(rng.uniform_int(d));
                auto [det_id, obin] = tables.sample(basis, symbol, rng.uniform());
                const bool conclusive = obin == d - 1;
                if (conclusive && basis == kPhase && rng.uniform() < e_phase)
                    det_id = (det_id + 1 + static_cast<int>(rng.uniform_int(d - 1))) % d;
                const double t = t0 + (obin + 0.5) * tau;
                if (t >= live_phase[det_id]) {
                    live_phase[det_id] = t + det.dead_time;
                    if (conclusive) phase_dets_hit |= 1u << det_id;
                }
            }
        }

        // At most one dark count per frame matters at these rates.
        const double u_dark = rng.uniform();
        if (u_dark < p_dark_frame) {
            const int which =
                static_cast<int>(u_dark / p_dark_frame * (n_time_det + n_phase_det));
            const int bin = static_cast<int>(rng.uniform_int(d));
            const double t = t0 + (bin + 0.5) * tau;
            if (which < n_time_det) {
                if (t >= live_time[which]) {
                    live_time[which] = t + det.dead_time;
                    time_bins_hit |= 1u << bin;
                }
            } else {
                const int det_id = which - n_time_det;
                if (t >= live_phase[det_id]) {
                    live_phase[det_id] = t + det.dead_time;
                    // The last bin of the frame window is the central output
                    // bin of this frame.
                    if (bin == d - 1) phase_dets_hit |= 1u << det_id;
                }
            }
        }

        if (basis == kTime && time_bins_hit != 0) {
            if (symbol < 0) symbol = static_cast<int>(rng.uniform_int(d));
            const int hits = std::popcount(time_bins_hit);
            int pick = hits == 1 ? 0 : static_cast<int>(rng.uniform_int(hits));
            int bob_symbol = -1;
            for (int b = 0; b < d; ++b)
                if (time_bins_hit & (1u << b))
                    if (pick-- == 0) { bob_symbol = b; break; }
            out.tally.detections[kTime][k] += 1.0;
            const bool err = bob_symbol != symbol;
            if (err) out.tally.errors[kTime][k] += 1.0;
            const int photon_class = photons >= 2 ? 2 : static_cast<int>(photons);
            out.tally.truth->detections_by_photons[kTime][photon_class] += 1.0;
            if (photons == 1 && err) out.tally.truth->single_photon_errors[kTime] += 1.0;
            out.sifted.alice[k].push_back(static_cast<std::uint8_t>(symbol));
            out.sifted.bob[k].push_back(static_cast<std::uint8_t>(bob_symbol));
        } else if (basis == kPhase && phase_dets_hit != 0) {
            if (symbol < 0) symbol = static_cast<int>(rng.uniform_int(d));
            const int hits = std::popcount(phase_dets_hit);
            int pick = hits == 1 ? 0 : static_cast<int>(rng.uniform_int(hits));
            int bob_det = -1;
            for (int b = 0; b < d; ++b)
                if (phase_dets_hit & (1u << b))
                    if (pick-- == 0) { bob_det = b; break; }
            out.tally.detections[kPhase][k] += 1.0;
            const bool err = tables.detector_to_phase[bob_det] != symbol;
            if (err) out.tally.errors[kPhase][k] += 1.0;
            const int photon_class = photons >= 2 ? 2 : static_cast<int>(photons);
            out.tally.truth->detections_by_photons[kPhase][photon_class] += 1.0;
            if (photons == 1 && err) out.tally.truth->single_photon_errors[kPhase] += 1.0;
        }
    }
    return out;
}

}  // namespace

MonteCarloResult simulate_montecarlo(const ProtocolConfig& cfg,
                                     const ChannelModel& channel,
                                     const DetectorModel& det,
                                     const ReceiverLayout& layout,
                                     std::uint64_t frames, std::uint64_t seed,
                                     int shards) {
    cfg.validate();
    if (layout.phase_detectors != cfg.dim)
        throw std::invalid_argument("receiver needs one phase detector per dimension");
    if (frames == 0) throw std::invalid_argument("simulate_montecarlo: zero frames");
    if (shards < 1) throw std::invalid_argument("simulate_montecarlo: shards must be >= 1");

    const CascadeTables tables(cfg.dim);

    std::vector<ShardResult> parts(shards);
    const std::uint64_t chunk = frames / shards;
    std::vector<std::thread> workers;
    for (int s = 0; s < shards; ++s) {
        const std::uint64_t n = s + 1 == shards ? frames - chunk * (shards - 1) : chunk;
        const std::uint64_t shard_seed = split_seed(seed, static_cast<std::uint64_t>(s));
        if (shards == 1) {
            parts[s] = run_shard(cfg, channel, det, layout, tables, n, shard_seed);
        } else {
            workers.emplace_back([&, s, n, shard_seed] {
                parts[s] = run_shard(cfg, channel, det, layout, tables, n, shard_seed);
            });
        }
    }
    for (auto& w : workers) w.join();

    MonteCarloResult out;
    out.tally.truth = GroundTruth{};
    for (auto& part : parts) {
        for (int b = 0; b < 2; ++b)
            for (int k = 0; k < 3; ++k) {
                out.tally.frames[b][k] += part.tally.frames[b][k];
                out.tally.detections[b][k] += part.tally.detections[b][k];
                out.tally.errors[b][k] += part.tally.errors[b][k];
            }
        for (int b = 0; b < 2; ++b) {
            for (int i = 0; i < 3; ++i)
                out.tally.truth->detections_by_photons[b][i] +=
                    part.tally.truth->detections_by_photons[b][i];
            out.tally.truth->single_photon_errors[b] +=
                part.tally.truth->single_photon_errors[b];
        }
        for (int k = 0; k < 3; ++k) {
            auto& a = out.sifted.alice[k];
            auto& bvec = out.sifted.bob[k];
            a.insert(a.end(), part.sifted.alice[k].begin(), part.sifted.alice[k].end());
            bvec.insert(bvec.end(), part.sifted.bob[k].begin(), part.sifted.bob[k].end());
        }
    }
    out.sifted.qber_time = out.tally.qber(kTime);
    out.sifted.qber_phase = out.tally.qber(kPhase);
    return out;
}

SiftResult sift(const TallyTable& tally, const SiftedBlock* block) {
    tally.validate();
    if (tally.detections_total(kTime) <= 0.0)
        throw std::invalid_argument("sift: time-basis raw key is empty");
    SiftResult r;
    for (int k = 0; k < 3; ++k) {
        r.key_detections[k] = tally.detections[kTime][k];
        r.key_errors[k] = tally.errors[kTime][k];
    }
    r.qber_time = tally.qber(kTime);
    r.lambda_obs = tally.qber(kPhase);
    if (block) {
        for (int k = 0; k < 3; ++k)
            if (block->alice[k].size() != block->bob[k].size())
                throw std::invalid_argument("sift: misaligned key blocks");
    }
    return r;
}

}  // namespace qkd
