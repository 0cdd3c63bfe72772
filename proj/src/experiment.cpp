#include "qkd/experiment.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace qkd {

namespace {

TallyTable tallies_for(const RunConfig& cfg, double loss_db) {
    if (!cfg.tally_json.empty()) return load_tally(cfg);
    RunConfig local = cfg;
    local.channel.loss_db = loss_db;
    if (cfg.mode == "montecarlo") {
        MonteCarloResult mc =
            simulate_montecarlo(local.protocol, local.channel, local.detector,
                                local.receiver, local.montecarlo_frames, local.seed,
                                local.shards);
        const double scale =
            local.protocol.frames_total / static_cast<double>(local.montecarlo_frames);
        return mc.tally.scaled(scale);
    }
    return simulate_expected(local.protocol, local.channel, local.detector, local.receiver);
}

}  // namespace

TallyTable load_tally(const RunConfig& cfg) {
    std::ifstream in(cfg.tally_json);
    if (!in) throw std::runtime_error("cannot open tally file: " + cfg.tally_json);
    std::stringstream ss;
    ss << in.rdbuf();
    return tally_from_json(ss.str(), cfg.protocol.time_basis_prob);
}

SweepRow evaluate_loss(const RunConfig& cfg, double loss_db) {
    const TallyTable tally = tallies_for(cfg, loss_db);
    const KeyLengthReport rep =
        best_key_length(tally, cfg.protocol.intensities, cfg.security,
                        cfg.effective_overlap_c(), cfg.f_ec, cfg.session_seconds);
    SweepRow row;
    row.loss_db = loss_db;
    row.km_equivalent = loss_db / cfg.channel.fiber_db_per_km;
    row.qber_time = tally.qber(kTime);
    row.qber_phase = tally.qber(kPhase);
    row.s0 = rep.s0;
    row.s1 = rep.s1;
    row.lambda_u = rep.lambda_u;
    row.ell = rep.ell;
    row.rate_mbps = rep.rate_bits_per_s / 1e6;
    row.leak_ec = rep.leak_ec;
    row.delta_fk = rep.delta_fk;
    row.beta_star = rep.beta_star;
    return row;
}

SweepReport run_sweep(const RunConfig& cfg) {
    cfg.validate();
    SweepReport report;
    if (!cfg.tally_json.empty()) {
        // injected measurement: one row at the configured loss
        report.rows.push_back(evaluate_loss(cfg, cfg.channel.loss_db));
        return report;
    }
    std::vector<double> losses = cfg.sweep_loss_db;
    std::sort(losses.begin(), losses.end());
    report.rows.reserve(losses.size());
    for (const double loss : losses) report.rows.push_back(evaluate_loss(cfg, loss));
    return report;
}

void write_sweep_csv(const SweepReport& r, std::ostream& os) {
    os << "loss_db,km_equivalent,qber_time,qber_phase,s0,s1,lambda_u,ell,rate_mbps\n";
    char buf[256];
    for (const auto& row : r.rows) {
        std::snprintf(buf, sizeof buf,
                      "%.6g,%.6g,%.8g,%.8g,%.10g,%.10g,%.8g,%.10g,%.8g\n",
                      row.loss_db, row.km_equivalent, row.qber_time, row.qber_phase,
                      row.s0, row.s1, row.lambda_u, row.ell, row.rate_mbps);
        os << buf;
    }
}

std::string sweep_to_json(const SweepReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows) {
        rows.push_back({{"loss_db", row.loss_db},
                        {"km_equivalent", row.km_equivalent},
                        {"qber_time", row.qber_time},
                        {"qber_phase", row.qber_phase},
                        {"s0", row.s0},
                        {"s1", row.s1},
                        {"lambda_u", row.lambda_u},
                        {"ell", row.ell},
                        {"rate_mbps", row.rate_mbps},
                        {"leak_ec", row.leak_ec},
                        {"delta_fk", row.delta_fk},
                        {"beta_star", row.beta_star}});
    }
    nlohmann::json j;
    j["rows"] = rows;
    return j.dump(2);
}

double poisson_two_sided_tail(double mean, double observed) {
    if (mean < 0.0) return 0.0;
    const double dev = std::abs(observed - mean);
    if (dev == 0.0) return 1.0;
    if (mean > 400.0) {  // Gaussian regime
        return std::erfc(dev / (std::sqrt(2.0 * mean)));
    }
    // P(|X - mean| >= dev) by direct summation.
    const double lo = mean - dev, hi = mean + dev;
    double p = std::exp(-mean);
    double inside = 0.0;
    for (int k = 0; k <= static_cast<int>(mean + dev) + 1; ++k) {
        if (k > lo && k < hi) inside += p;
        p *= mean / (k + 1);
        if (k > hi && p < 1e-300) break;
    }
    return std::clamp(1.0 - inside, 0.0, 1.0);
}

ValidationReport run_validation(const RunConfig& cfg, const ValidationOptions& opt) {
    cfg.validate();
    if (opt.seeds.empty())
        throw std::invalid_argument("run_validation: seed list is empty");

    ValidationReport rep;
    rep.seeds_total = static_cast<int>(opt.seeds.size());
    rep.coverage_trials = rep.seeds_total;

    // Analytic expectation scaled to the Monte Carlo size.
    const TallyTable expected_full =
        simulate_expected(cfg.protocol, cfg.channel, cfg.detector, cfg.receiver);
    const double scale =
        static_cast<double>(opt.frames) / cfg.protocol.frames_total;
    const TallyTable expected = expected_full.scaled(scale);

    constexpr double kFiveSigmaTail = 5.733e-7;  // two-sided Gaussian 5 sigma
    const double beta = cfg.security.beta_max();

    std::mutex mu_rep;
    std::atomic<size_t> cursor{0};
    auto worker = [&] {
        for (;;) {
            const size_t i = cursor.fetch_add(1);
            if (i >= opt.seeds.size()) return;
            const std::uint64_t seed = opt.seeds[i];
            MonteCarloResult mc =
                simulate_montecarlo(cfg.protocol, cfg.channel, cfg.detector,
                                    cfg.receiver, opt.frames, seed, 1);

            bool cell_fail = false;
            for (int b = 0; b < 2 && !cell_fail; ++b)
                for (int k = 0; k < 3 && !cell_fail; ++k) {
                    if (poisson_two_sided_tail(expected.detections[b][k],
                                               mc.tally.detections[b][k]) < kFiveSigmaTail)
                        cell_fail = true;
                    if (poisson_two_sided_tail(expected.errors[b][k],
                                               mc.tally.errors[b][k]) < kFiveSigmaTail)
                        cell_fail = true;
                }

            DecoyBounds bounds = decoy_bounds(mc.tally, cfg.protocol.intensities, beta);
            double lambda_u = phase_error_upper(phase_error_observed(bounds),
                                                bounds.s1_lower, bounds.s1_phase_lower,
                                                beta);
            if (opt.bias_hook) {
                // claim every raw-key detection is a single photon; strictly
                // above the tagged truth whenever any vacuum or multi-photon
                // detection occurred
                bounds.s1_lower = std::max(1.0, mc.tally.detections_total(kTime));
                lambda_u = 0.0;
            }

            const auto& truth = *mc.tally.truth;
            const bool s1_bad =
                bounds.s1_lower > truth.detections_by_photons[kTime][1] + 1e-9;
            bool lambda_bad = false;
            if (truth.detections_by_photons[kPhase][1] > 0.0) {
                const double true_rate = truth.single_photon_errors[kPhase] /
                                         truth.detections_by_photons[kPhase][1];
                lambda_bad = true_rate > lambda_u + 1e-12;
            }

            std::lock_guard lock(mu_rep);
            rep.consistency_failures += cell_fail ? 1 : 0;
            rep.s1_violations += s1_bad ? 1 : 0;
            rep.lambda_violations += lambda_bad ? 1 : 0;
        }
    };

    const unsigned n_threads =
        std::min<unsigned>(std::max(1u, std::thread::hardware_concurrency()),
                           static_cast<unsigned>(opt.seeds.size()));
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    rep.consistency_pass =
        rep.consistency_failures <= rep.seeds_total - static_cast<int>(
            std::ceil(0.99 * rep.seeds_total));
    auto coverage_ok = [&](int violations) {
        const double trials = rep.coverage_trials;
        const double rate = violations / trials;
        const double sigma = std::sqrt(std::max(rate * (1.0 - rate), 0.0) / trials);
        return rate <= 10.0 * beta + 3.0 * sigma;
    };
    rep.coverage_pass = coverage_ok(rep.s1_violations) && coverage_ok(rep.lambda_violations);
    rep.pass = rep.consistency_pass && rep.coverage_pass;
    return rep;
}

std::string validation_to_json(const ValidationReport& r) {
    nlohmann::json j;
    j["seeds_total"] = r.seeds_total;
    j["consistency_failures"] = r.consistency_failures;
    j["coverage_trials"] = r.coverage_trials;
    j["s1_violations"] = r.s1_violations;
    j["lambda_violations"] = r.lambda_violations;
    j["consistency_pass"] = r.consistency_pass;
    j["coverage_pass"] = r.coverage_pass;
    j["pass"] = r.pass;
    return j.dump(2);
}

}  // namespace qkd
