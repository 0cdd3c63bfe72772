#include "qkd/finite_key.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qkd {

double shannon_entropy_d4(double x) {
    if (x < 0.0 || x > 1.0) throw std::invalid_argument("shannon_entropy_d4: x outside [0, 1]");
    double h = 0.0;
    if (x > 0.0) h -= x * std::log2(x / 3.0);
    if (x < 1.0) h -= (1.0 - x) * std::log2(1.0 - x);
    return h;
}

double delta_fk(double beta, double epsilon_cor) {
    if (beta <= 0.0 || beta > 1.0 || epsilon_cor <= 0.0 || epsilon_cor > 1.0)
        throw std::invalid_argument("delta_fk: parameters must be in (0, 1]");
    return -5.0 + 8.0 * std::log2(beta) + std::log2(epsilon_cor);
}

namespace {

struct BasisBounds {
    double y0_lower = 0.0;
    double y1_lower = 0.0;
    double b1_upper = 0.0;  // single-photon error yield, upper
    bool clamped_negative = false;
};

double count_dev(double n, double log_term) { return std::sqrt(n * log_term / 2.0); }

/// Upward deviations carry an additive ln(1/beta) so that an empty cell
/// still admits the Poisson zero-count upper confidence bound; the term is
/// negligible for well-populated cells.
double count_dev_up(double n, double log_term) {
    return std::sqrt(n * log_term / 2.0) + log_term;
}

/// Vacuum + weak decoy bounds on the vacuum and single-photon yields of one
/// basis, with per-observable count deviations at confidence 1 - beta.
BasisBounds basis_decoy(const TallyTable& t, int basis, const IntensitySet& mu,
                        double log_term) {
    const double mu_s = mu.mu[kSignal], mu_d = mu.mu[kDecoy], mu_v = mu.mu[kVacuum];
    if (!(mu_s > mu_d + mu_v))
        throw std::invalid_argument("decoy_bounds: requires mu_signal > mu_decoy + mu_vacuum");

    double q_lo[3], q_hi[3];
    for (int k = 0; k < 3; ++k) {
        const double frames = t.frames[basis][k];
        if (frames <= 0.0) throw std::invalid_argument("decoy_bounds: empty intensity cell");
        const double n = t.detections[basis][k];
        q_lo[k] = std::max(0.0, n - count_dev(n, log_term)) / frames;
        q_hi[k] = std::min(frames, n + count_dev_up(n, log_term)) / frames;
    }

    BasisBounds out;

    double y0 = (mu_d * std::exp(mu_v) * q_lo[kVacuum] -
                 mu_v * std::exp(mu_d) * q_hi[kDecoy]) /
                (mu_d - mu_v);
    if (y0 < 0.0) {
        y0 = 0.0;
        out.clamped_negative = true;
    }
    out.y0_lower = std::min(y0, 1.0);

    const double denom = mu_s * (mu_d - mu_v) - mu_d * mu_d + mu_v * mu_v;
    double y1 = mu_s *
                (std::exp(mu_d) * q_lo[kDecoy] - std::exp(mu_v) * q_hi[kVacuum] -
                 (mu_d * mu_d - mu_v * mu_v) / (mu_s * mu_s) *
                     (std::exp(mu_s) * q_hi[kSignal] - out.y0_lower)) /
                denom;
    if (y1 < 0.0) {
        y1 = 0.0;
        out.clamped_negative = true;
    }
    out.y1_lower = std::min(y1, 1.0);

    // Single-photon error yield: errors at decoy minus errors at vacuum.
    double w_hi_d, w_lo_v;
    {
        const double m_d = t.errors[basis][kDecoy];
        const double m_v = t.errors[basis][kVacuum];
        w_hi_d = std::min(t.frames[basis][kDecoy], m_d + count_dev_up(m_d, log_term)) /
                 t.frames[basis][kDecoy];
        w_lo_v = std::max(0.0, m_v - count_dev(m_v, log_term)) / t.frames[basis][kVacuum];
    }
    const double b1 = (std::exp(mu_d) * w_hi_d - std::exp(mu_v) * w_lo_v) / (mu_d - mu_v);
    out.b1_upper = std::clamp(b1, 0.0, 1.0);

    return out;
}

}  // namespace

DecoyBounds decoy_bounds(const TallyTable& tally, const IntensitySet& mu,
                         double beta) {
    if (beta <= 0.0 || beta >= 1.0)
        throw std::invalid_argument("decoy_bounds: beta outside (0, 1)");
    mu.validate();
    const double log_term = std::log(1.0 / beta);

    const BasisBounds time = basis_decoy(tally, kTime, mu, log_term);
    const BasisBounds phase = basis_decoy(tally, kPhase, mu, log_term);

    const double tau0 = mu.tau(0), tau1 = mu.tau(1);
    const double n_time = tally.detections_total(kTime);
    const double n_phase = tally.detections_total(kPhase);

    DecoyBounds out;
    out.s0_lower = std::clamp(tally.frames_total(kTime) * tau0 * time.y0_lower, 0.0, n_time);
    out.s1_lower = std::clamp(tally.frames_total(kTime) * tau1 * time.y1_lower, 0.0, n_time);
    out.s1_phase_lower =
        std::clamp(tally.frames_total(kPhase) * tau1 * phase.y1_lower, 0.0, n_phase);
    out.v1_phase_upper =
        std::clamp(tally.frames_total(kPhase) * tau1 * phase.b1_upper, 0.0, n_phase);
    out.infeasible = time.clamped_negative || phase.clamped_negative;
    return out;
}

double phase_error_observed(const DecoyBounds& bounds) {
    if (bounds.s1_phase_lower <= 0.0) return 1.0;
    return std::clamp(bounds.v1_phase_upper / bounds.s1_phase_lower, 0.0, 1.0);
}

double phase_error_upper(double lambda_obs, double s1_key, double s1_sample,
                         double beta) {
    if (beta <= 0.0 || beta >= 1.0)
        throw std::invalid_argument("phase_error_upper: beta outside (0, 1)");
    if (s1_key <= 0.0 || s1_sample <= 0.0) return 1.0;
    const double n = s1_key, k = s1_sample;
    const double gamma =
        std::sqrt((n + k) * (n + 1.0) * std::log(1.0 / beta) / (2.0 * k * n * n));
    return std::clamp(lambda_obs + gamma, 0.0, 1.0);
}

double leak_ec(double n_key, double qber_time, double f_ec) {
    if (f_ec < 1.0) throw std::invalid_argument("leak_ec: f_ec must be >= 1");
    if (n_key < 0.0) throw std::invalid_argument("leak_ec: negative key size");
    return f_ec * n_key * shannon_entropy_d4(qber_time);
}

KeyLengthReport key_length(const DecoyBounds& bounds, double lambda_u,
                           double leak, const SecurityParams& params,
                           double c_overlap) {
    if (!params.feasible())
        throw std::invalid_argument("key_length: infeasible security parameters");
    KeyLengthReport rep;
    rep.s0 = bounds.s0_lower;
    rep.s1 = bounds.s1_lower;
    rep.lambda_u = lambda_u;
    rep.leak_ec = leak;
    rep.delta_fk = delta_fk(params.beta, params.epsilon_cor);
    rep.beta_star = params.beta;
    rep.bounds_infeasible = bounds.infeasible;
    rep.ell_raw = 2.0 * rep.s0 + rep.s1 * (c_overlap - shannon_entropy_d4(lambda_u)) +
                  rep.delta_fk - leak;
    rep.ell = std::max(0.0, std::floor(rep.ell_raw));
    return rep;
}

KeyLengthReport optimize_beta(
    const std::function<KeyLengthReport(double)>& evaluate,
    const SecurityParams& params) {
    const double beta_max = params.beta_max();
    if (!(beta_max > 1e-15))
        throw std::invalid_argument("optimize_beta: empty feasible beta interval");

    const double lo = -15.0;
    const double hi = std::log10(beta_max);
    const double tol = 1e-4 / std::log(10.0);  // relative tolerance in beta

    const auto value = [&evaluate, beta_max](double x) {
        return evaluate(std::min(std::pow(10.0, x), beta_max));
    };

    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    KeyLengthReport r1 = value(x1), r2 = value(x2);
    while (b - a > tol) {
        if (r1.ell_raw >= r2.ell_raw) {
            b = x2;
            x2 = x1;
            r2 = r1;
            x1 = b - inv_phi * (b - a);
            r1 = value(x1);
        } else {
            a = x1;
            x1 = x2;
            r1 = r2;
            x2 = a + inv_phi * (b - a);
            r2 = value(x2);
        }
    }
    // The length is frequently monotone in beta; make sure the boundary wins
    // when it should.
    KeyLengthReport best = r1.ell_raw >= r2.ell_raw ? r1 : r2;
    for (double x : {lo, hi}) {
        KeyLengthReport edge = value(x);
        if (edge.ell_raw > best.ell_raw) best = edge;
    }
    return best;
}

KeyLengthReport evaluate_tally(const TallyTable& tally, const IntensitySet& mu,
                               const SecurityParams& params, double beta,
                               double c_overlap, double f_ec,
                               double session_seconds) {
    SecurityParams p = params;
    p.beta = beta;
    const DecoyBounds bounds = decoy_bounds(tally, mu, beta);
    const double lambda_obs = phase_error_observed(bounds);
    const double lambda_u =
        phase_error_upper(lambda_obs, bounds.s1_lower, bounds.s1_phase_lower, beta);
    const double leak = leak_ec(tally.detections_total(kTime), tally.qber(kTime), f_ec);
    KeyLengthReport rep = key_length(bounds, lambda_u, leak, p, c_overlap);
    if (session_seconds > 0.0) rep.rate_bits_per_s = rep.ell / session_seconds;
    return rep;
}

KeyLengthReport best_key_length(const TallyTable& tally, const IntensitySet& mu,
                                const SecurityParams& params, double c_overlap,
                                double f_ec, double session_seconds) {
    return optimize_beta(
        [&](double beta) {
            return evaluate_tally(tally, mu, params, beta, c_overlap, f_ec,
                                  session_seconds);
        },
        params);
}

std::string report_to_json(const KeyLengthReport& r) {
    nlohmann::json j;
    j["ell"] = r.ell;
    j["ell_raw"] = r.ell_raw;
    j["s0_lower"] = r.s0;
    j["s1_lower"] = r.s1;
    j["lambda_u"] = r.lambda_u;
    j["leak_ec"] = r.leak_ec;
    j["delta_fk"] = r.delta_fk;
    j["beta_star"] = r.beta_star;
    j["rate_bits_per_s"] = r.rate_bits_per_s;
    j["bounds_infeasible"] = r.bounds_infeasible;
    return j.dump(2);
}

}  // namespace qkd
