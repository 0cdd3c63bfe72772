#pragma once

#include "qkd/tally.hpp"

#include <functional>
#include <string>

namespace qkd {

/// Security budget. The statistical confidence parameter beta is spent on
/// the concentration bounds; feasibility requires 4*epsilon_cor + 18*beta
/// <= epsilon.
struct SecurityParams {
    double epsilon = 1e-9;
    double epsilon_cor = 1e-15;
    double beta = 1e-11;

    double beta_max() const { return (epsilon - 4.0 * epsilon_cor) / 18.0; }
    bool feasible() const {
        // 1-ulp slack so beta = beta_max survives a log/exp round trip
        return beta > 0.0 && epsilon_cor > 0.0 && beta <= beta_max() * (1.0 + 1e-12);
    }
};

/// H(x) = -x log2(x/3) - (1-x) log2(1-x), the symbol entropy for a 4-ary
/// alphabet; endpoints by continuous limit (H(0)=0, H(1)=log2 3), maximum
/// 2 at x = 3/4.
double shannon_entropy_d4(double x);

/// Finite-key penalty -log2(32 beta^-8 / epsilon_cor)
///                  = -5 + 8 log2(beta) + log2(epsilon_cor).
double delta_fk(double beta, double epsilon_cor);

/// Decoy-state bounds converted to counts of the raw key. `infeasible`
/// marks bounds that were negative before clamping (inconsistent tallies).
struct DecoyBounds {
    double s0_lower = 0.0;        // vacuum detections in the time-basis key
    double s1_lower = 0.0;        // single-photon detections in the key
    double s1_phase_lower = 0.0;  // single-photon conclusive phase detections
    double v1_phase_upper = 0.0;  // single-photon phase errors, upper bound
    bool infeasible = false;
};

/// Three-intensity (vacuum + weak decoy) closed-form bounds with Hoeffding
/// deviations of sqrt(n * ln(1/beta) / 2) counts per observable.
DecoyBounds decoy_bounds(const TallyTable& tally, const IntensitySet& mu,
                         double beta);

/// Observed single-photon phase error rate v1_upper / s1_phase_lower,
/// clamped to [0, 1]; 1 when the sample bound is empty.
double phase_error_observed(const DecoyBounds& bounds);

/// Upper bound on the key's single-photon phase error rate: lambda_obs
/// plus a Serfling random-sampling-without-replacement deviation
///   gamma = sqrt((n+k)(n+1) ln(1/beta) / (2 k n^2)),
/// k = s1_sample, n = s1_key. Vacuous (1) when either count is zero.
double phase_error_upper(double lambda_obs, double s1_key, double s1_sample,
                         double beta);

/// Error-correction disclosure model: f_ec * n_key * H(qber), in bits.
double leak_ec(double n_key, double qber_time, double f_ec = 1.15);

struct KeyLengthReport {
    double ell = 0.0;       // secret key length, bits (floored, >= 0)
    double ell_raw = 0.0;   // pre-floor value, for optimization/diagnostics
    double s0 = 0.0;
    double s1 = 0.0;
    double lambda_u = 0.0;
    double leak_ec = 0.0;
    double delta_fk = 0.0;
    double beta_star = 0.0;
    double rate_bits_per_s = 0.0;
    bool bounds_infeasible = false;
};

/// Secret key length
///   ell = floor(2 s0 + s1 [c - H(lambda_u)] + Delta_FK - leak_EC),
/// clamped to zero when negative.
KeyLengthReport key_length(const DecoyBounds& bounds, double lambda_u,
                           double leak, const SecurityParams& params,
                           double c_overlap);

/// Numerical maximization of the key length over beta: golden-section
/// search on log10(beta) in [-15, log10(beta_max)] to relative tolerance
/// 1e-4 in beta.
KeyLengthReport optimize_beta(
    const std::function<KeyLengthReport(double)>& evaluate,
    const SecurityParams& params);

/// Full chain from observed tallies at a fixed beta: decoy bounds, phase
/// error bound, leakage, Eq. of the key length.
KeyLengthReport evaluate_tally(const TallyTable& tally, const IntensitySet& mu,
                               const SecurityParams& params, double beta,
                               double c_overlap, double f_ec,
                               double session_seconds);

/// evaluate_tally maximized over beta.
KeyLengthReport best_key_length(const TallyTable& tally, const IntensitySet& mu,
                                const SecurityParams& params, double c_overlap,
                                double f_ec, double session_seconds);

std::string report_to_json(const KeyLengthReport& r);

}  // namespace qkd
