#pragma once

#include "qkd/config.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace qkd {

struct SweepRow {
    double loss_db = 0.0;
    double km_equivalent = 0.0;
    double qber_time = 0.0;
    double qber_phase = 0.0;
    double s0 = 0.0;
    double s1 = 0.0;
    double lambda_u = 0.0;
    double ell = 0.0;
    double rate_mbps = 0.0;
    // audit fields carried into the JSON report
    double leak_ec = 0.0;
    double delta_fk = 0.0;
    double beta_star = 0.0;
};

struct SweepReport {
    std::vector<SweepRow> rows;  // sorted by loss; zero-rate rows retained
};

/// Key rate at every loss in cfg.sweep_loss_db. Analytic mode is
/// deterministic; Monte Carlo mode simulates cfg.montecarlo_frames frames
/// and rescales the tallies to frames_total before the key-length bound.
/// When cfg.tally_json names a file, those measured statistics are used
/// instead of any simulation.
SweepReport run_sweep(const RunConfig& cfg);

/// Measured tallies injected via cfg.tally_json.
TallyTable load_tally(const RunConfig& cfg);

/// One loss point of the sweep.
SweepRow evaluate_loss(const RunConfig& cfg, double loss_db);

void write_sweep_csv(const SweepReport& r, std::ostream& os);
std::string sweep_to_json(const SweepReport& r);

struct ValidationOptions {
    std::vector<std::uint64_t> seeds;
    std::uint64_t frames = 1'000'000;
    /// Test hook: deliberately biases the decoy estimate upward so the
    /// coverage check must fail (negative control).
    bool bias_hook = false;
};

struct ValidationReport {
    int seeds_total = 0;
    int consistency_failures = 0;  // seeds with any cell outside the 5-sigma band
    int coverage_trials = 0;
    int s1_violations = 0;      // decoy bound above the tagged truth
    int lambda_violations = 0;  // true single-photon phase error above lambda_u
    bool consistency_pass = false;
    bool coverage_pass = false;
    bool pass = false;
};

/// Monte-Carlo-vs-analytic consistency plus bound-coverage statistics over
/// the given seeds.
ValidationReport run_validation(const RunConfig& cfg, const ValidationOptions& opt);

std::string validation_to_json(const ValidationReport& r);

/// Two-sided tail probability of observing `observed` under a Poisson law
/// with the given mean; the consistency check accepts a cell when this is
/// at least the 5-sigma Gaussian tail. Exposed for tests.
double poisson_two_sided_tail(double mean, double observed);

}  // namespace qkd
