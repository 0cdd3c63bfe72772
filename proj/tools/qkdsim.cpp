// Command-line front end: key-rate sweeps, state/interferometer data dumps,
// Monte Carlo validation, and a two-party reconciliation demo over TCP.

#include "qkd/channel.hpp"
#include "qkd/config.hpp"
#include "qkd/experiment.hpp"
#include "qkd/interferometer.hpp"
#include "qkd/link.hpp"
#include "qkd/qudit.hpp"
#include "qkd/rng.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitValidation = 4;

qkd::RunConfig load_or_default(const std::string& path) {
    if (path.empty()) return qkd::default_config();
    return qkd::load_config(path);
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    return os;
}

int cmd_sweep(const std::string& config_path, std::string out_prefix,
              const std::vector<double>& loss_override, const std::string& mode) {
    qkd::RunConfig cfg = load_or_default(config_path);
    if (!loss_override.empty()) cfg.sweep_loss_db = loss_override;
    if (!mode.empty()) cfg.mode = mode;
    cfg.validate();
    const qkd::SweepReport report = qkd::run_sweep(cfg);
    if (out_prefix.empty()) out_prefix = "sweep";
    {
        auto os = open_out(out_prefix + ".csv");
        qkd::write_sweep_csv(report, os);
    }
    {
        auto os = open_out(out_prefix + ".json");
        os << qkd::sweep_to_json(report) << '\n';
    }
    qkd::write_sweep_csv(report, std::cout);
    return kExitOk;
}

int cmd_states(const std::string& config_path, int d, std::string out_prefix) {
    qkd::RunConfig cfg = load_or_default(config_path);
    if (out_prefix.empty()) out_prefix = "states";
    {
        auto os = open_out(out_prefix + "_probability_matrix.csv");
        const qkd::CascadeConfig cascade = qkd::make_cascade(d);
        const std::vector<int> map = qkd::central_bin_map(cascade);
        // Phase outcomes re-labelled by phase index through the detector map.
        Eigen::MatrixXd m = qkd::probability_matrix(d, [&](const qkd::StateVector& s) {
            const qkd::PhaseReadout r = qkd::phase_basis_channel(s, cascade);
            Eigen::VectorXd p(d);
            for (int n = 0; n < d; ++n) p[n] = r.detector[map[n]];
            return p;
        });
        qkd::write_matrix_csv(m, os);
    }
    for (int n = 0; n < d; ++n) {
        auto os = open_out(out_prefix + "_cascade_f" + std::to_string(n) + ".csv");
        qkd::write_response_csv(qkd::cascade_response(qkd::phase_state(n, d)), os);
    }
    {
        auto os = open_out(out_prefix + "_detector_efficiency.csv");
        qkd::write_efficiency_curve_csv(cfg.detector, os);
    }
    std::cout << "wrote " << out_prefix << "_probability_matrix.csv, " << d
              << " cascade PDF files, and the detector efficiency curve\n";
    return kExitOk;
}

int cmd_validate(const std::string& config_path, const std::vector<std::uint64_t>& seeds,
                 std::uint64_t frames, bool bias_hook, const std::string& out) {
    qkd::RunConfig cfg = load_or_default(config_path);
    cfg.validate();
    qkd::ValidationOptions opt;
    opt.seeds = seeds;
    opt.frames = frames != 0 ? frames : cfg.montecarlo_frames;
    opt.bias_hook = bias_hook;
    const qkd::ValidationReport report = qkd::run_validation(cfg, opt);
    const std::string json = qkd::validation_to_json(report);
    if (!out.empty()) open_out(out) << json << '\n';
    std::cout << json << '\n';
    return report.pass ? kExitOk : kExitValidation;
}

/// Synthetic per-frame records for the reconciliation demo: Alice's full
/// send log and Bob's detections with the configured error rates.
void make_demo_records(const qkd::RunConfig& cfg, std::uint64_t frames,
                       std::uint64_t seed,
                       std::vector<qkd::link::FrameRecord>& alice,
                       std::vector<qkd::link::FrameRecord>& bob) {
    qkd::Rng rng(seed);
    const double detect_prob = 0.5;  // demo-scale channel
    for (std::uint64_t i = 0; i < frames; ++i) {
        qkd::link::FrameRecord a;
        a.index = i;
        a.basis = rng.bernoulli(cfg.protocol.time_basis_prob) ? 0 : 1;
        a.symbol = static_cast<std::uint8_t>(rng.uniform_int(4));
        alice.push_back(a);
        if (!rng.bernoulli(detect_prob)) continue;
        qkd::link::FrameRecord b = a;
        b.basis = rng.bernoulli(cfg.protocol.time_basis_prob) ? 0 : 1;
        const double err = b.basis == 0 ? cfg.protocol.intrinsic_error_time
                                        : cfg.protocol.intrinsic_error_phase;
        if (rng.bernoulli(err))
            b.symbol = static_cast<std::uint8_t>((b.symbol + 1 + rng.uniform_int(3)) % 4);
        bob.push_back(b);
    }
}

int cmd_link_demo(const std::string& config_path, bool listen, const std::string& host,
                  std::uint16_t port, std::uint64_t frames,
                  const std::string& transcript_path) {
    qkd::RunConfig cfg = load_or_default(config_path);
    cfg.validate();

    std::vector<qkd::link::FrameRecord> alice, bob;
    make_demo_records(cfg, frames, cfg.seed, alice, bob);

    qkd::link::SessionConfig session;
    session.tag_bits = qkd::link::tag_bits_for(cfg.security.epsilon_cor);
    session.sampler_seed = qkd::split_seed(cfg.seed, 100);
    session.hash_seed = qkd::split_seed(cfg.seed, 101);

    std::unique_ptr<qkd::link::ByteStream> stream;
    qkd::link::Role role;
    if (listen) {
        qkd::link::TcpListener listener(port);
        std::cout << "listening on 127.0.0.1:" << listener.port() << '\n';
        stream = listener.accept();
        role = qkd::link::Role::Alice;
    } else {
        stream = qkd::link::tcp_connect(host, port);
        role = qkd::link::Role::Bob;
    }

    const auto& records = role == qkd::link::Role::Alice ? alice : bob;
    qkd::link::RecordingStream recording(*stream);
    const qkd::link::SessionResult res =
        qkd::link::run_session(role, recording, records, session);

    if (!transcript_path.empty()) {
        auto os = open_out(transcript_path);
        qkd::link::dump_transcript_hex(recording.sent(), os);
    }

    if (!res.verified) {
        std::cout << "ABORT: " << res.abort_reason << '\n';
        return kExitRuntime;
    }
    std::cout << "verified key symbols: " << res.key.size() << " ("
              << 2 * res.key.size() << " bits)\n"
              << "time QBER estimate:   " << res.qber_estimate << '\n'
              << "phase QBER estimate:  " << res.qber_phase << '\n'
              << "disclosed bits:       " << res.ledger.disclosed_bits << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Time-bin qudit QKD simulator"};
    app.require_subcommand(1);

    std::string config_path, out, mode, host = "127.0.0.1";
    std::vector<double> losses;
    std::vector<std::uint64_t> seeds;
    std::uint64_t frames = 0;
    std::uint16_t port = 0;
    int dim = 4;
    bool bias_hook = false, listen = false, init_config = false;

    auto* sweep = app.add_subcommand("sweep", "key rate vs channel loss");
    sweep->add_option("--config", config_path, "config file");
    sweep->add_option("--out", out, "output prefix (.csv/.json)");
    sweep->add_option("--loss", losses, "override sweep loss list (dB)");
    sweep->add_option("--mode", mode, "analytic | montecarlo");
    sweep->add_flag("--init-config", init_config, "print a config template and exit");

    auto* states = app.add_subcommand("states", "probability matrix and cascade PDFs");
    states->add_option("--config", config_path, "config file");
    states->add_option("--d", dim, "dimension (2, 4, or 8)")->check(CLI::IsMember({2, 4, 8}));
    states->add_option("--out", out, "output prefix");

    auto* validate = app.add_subcommand("validate", "Monte Carlo consistency and coverage");
    validate->add_option("--config", config_path, "config file");
    validate->add_option("--seeds", seeds, "seed list");
    validate->add_option("--frames", frames, "frames per run");
    validate->add_option("--out", out, "JSON report path");
    validate->add_flag("--bias-hook", bias_hook, "negative control: bias the estimator");

    auto* link = app.add_subcommand("link-demo", "two-party reconciliation over TCP");
    link->add_option("--config", config_path, "config file");
    link->add_flag("--listen", listen, "act as Alice and wait for a peer");
    link->add_option("--host", host, "peer address (connect side)");
    link->add_option("--port", port, "TCP port");
    link->add_option("--frames", frames, "demo frames");
    std::string transcript_path;
    link->add_option("--transcript", transcript_path, "hex transcript dump path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (sweep->parsed()) {
            if (init_config) {
                std::cout << qkd::config_template();
                return kExitOk;
            }
            return cmd_sweep(config_path, out, losses, mode);
        }
        if (states->parsed()) return cmd_states(config_path, dim, out);
        if (validate->parsed()) {
            if (seeds.empty()) throw qkd::ConfigError(0, "validate requires --seeds");
            return cmd_validate(config_path, seeds, frames, bias_hook, out);
        }
        if (link->parsed())
            return cmd_link_demo(config_path, listen, host, port,
                                 frames != 0 ? frames : 20000, transcript_path);
    } catch (const qkd::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const qkd::link::ProtocolError& e) {
        std::cerr << "ABORT: " << e.what() << '\n';
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitConfig;
}
