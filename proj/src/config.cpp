#include "qkd/config.hpp"

#include "qkd/qudit.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace qkd {

void RunConfig::validate() const {
    protocol.validate();
    if (channel.loss_db < 0.0) throw std::invalid_argument("channel loss must be >= 0");
    if (detector.eta0 <= 0.0 || detector.eta0 > 1.0)
        throw std::invalid_argument("detector efficiency outside (0, 1]");
    if (detector.dead_time < 0.0 || detector.dark_rate < 0.0 || detector.jitter_sigma < 0.0)
        throw std::invalid_argument("detector rates/times must be >= 0");
    if (receiver.basis_split <= 0.0 || receiver.basis_split >= 1.0)
        throw std::invalid_argument("receiver basis split outside (0, 1)");
    if (receiver.time_arm_fanout < 1) throw std::invalid_argument("fanout must be >= 1");
    if (receiver.phase_detectors != protocol.dim)
        throw std::invalid_argument("phase arm needs one detector per dimension");
    if (security.epsilon <= 0.0 || security.epsilon >= 1.0 ||
        security.epsilon_cor <= 0.0 || security.epsilon_cor >= 1.0)
        throw std::invalid_argument("security parameters outside (0, 1)");
    if (security.beta_max() <= 0.0)
        throw std::invalid_argument("security budget infeasible: 4*eps_cor >= eps");
    if (f_ec < 1.0) throw std::invalid_argument("error correction efficiency must be >= 1");
    if (session_seconds <= 0.0) throw std::invalid_argument("session duration must be > 0");
    if (mode != "analytic" && mode != "montecarlo")
        throw std::invalid_argument("mode must be analytic or montecarlo");
    if (montecarlo_frames == 0) throw std::invalid_argument("montecarlo_frames must be > 0");
    if (shards < 1) throw std::invalid_argument("shards must be >= 1");
    if (overlap_c <= 0.0 || overlap_c > std::log2(static_cast<double>(protocol.dim)) + 1e-9)
        throw std::invalid_argument("overlap parameter outside (0, log2 d]");
}

double RunConfig::effective_overlap_c() const {
    if (overlap_matrix_csv.empty()) return overlap_c;
    std::ifstream in(overlap_matrix_csv);
    if (!in) throw std::runtime_error("cannot open overlap matrix: " + overlap_matrix_csv);
    return overlap_parameter(read_matrix_csv(in));
}

RunConfig default_config() { return RunConfig{}; }

namespace {

struct Parser {
    RunConfig cfg;
    std::set<std::string> seen;
    bool version_seen = false;

    static std::string trim(const std::string& s) {
        size_t a = s.find_first_not_of(" \t\r");
        size_t b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? "" : s.substr(a, b - a + 1);
    }

    static double number(const std::string& v, int line) {
        try {
            size_t used = 0;
            const double x = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument("trailing characters");
            return x;
        } catch (const std::exception&) {
            throw ConfigError(line, "expected a number, got '" + v + "'");
        }
    }

    static std::string string_value(const std::string& v, int line) {
        if (v.size() < 2 || v.front() != '"' || v.back() != '"')
            throw ConfigError(line, "expected a quoted string");
        return v.substr(1, v.size() - 2);
    }

    static std::vector<double> array_value(const std::string& v, int line) {
        if (v.size() < 2 || v.front() != '[' || v.back() != ']')
            throw ConfigError(line, "expected an array [..]");
        std::vector<double> out;
        std::string body = v.substr(1, v.size() - 2);
        std::stringstream ss(body);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (!item.empty()) out.push_back(number(item, line));
        }
        return out;
    }

    void apply(const std::string& section, const std::string& key,
               const std::string& value, int line) {
        const std::string full = section.empty() ? key : section + "." + key;
        if (!seen.insert(full).second) throw ConfigError(line, "duplicate key " + full);

        auto num = [&] { return number(value, line); };

        if (full == "config_version") {
            if (num() != 1.0) throw ConfigError(line, "unsupported config_version");
            version_seen = true;
        } else if (full == "protocol.dimension") cfg.protocol.dim = static_cast<int>(num());
        else if (full == "protocol.bin_width_ps") cfg.protocol.bin_width = num() * 1e-12;
        else if (full == "protocol.frame_rate_mhz") cfg.protocol.frame_rate = num() * 1e6;
        else if (full == "protocol.time_basis_prob") cfg.protocol.time_basis_prob = num();
        else if (full == "protocol.signal_mu") cfg.protocol.intensities.mu[kSignal] = num();
        else if (full == "protocol.decoy_mu") cfg.protocol.intensities.mu[kDecoy] = num();
        else if (full == "protocol.vacuum_mu") cfg.protocol.intensities.mu[kVacuum] = num();
        else if (full == "protocol.signal_prob") cfg.protocol.intensities.prob[kSignal] = num();
        else if (full == "protocol.decoy_prob") cfg.protocol.intensities.prob[kDecoy] = num();
        else if (full == "protocol.vacuum_prob") cfg.protocol.intensities.prob[kVacuum] = num();
        else if (full == "protocol.frames_total") cfg.protocol.frames_total = num();
        else if (full == "protocol.intrinsic_error_time") cfg.protocol.intrinsic_error_time = num();
        else if (full == "protocol.intrinsic_error_phase") cfg.protocol.intrinsic_error_phase = num();
        else if (full == "channel.loss_db") cfg.channel.loss_db = num();
        else if (full == "channel.fiber_db_per_km") cfg.channel.fiber_db_per_km = num();
        else if (full == "detector.efficiency") cfg.detector.eta0 = num();
        else if (full == "detector.dead_time_ns") cfg.detector.dead_time = num() * 1e-9;
        else if (full == "detector.dark_rate_hz") cfg.detector.dark_rate = num();
        else if (full == "detector.jitter_sigma_ps") cfg.detector.jitter_sigma = num() * 1e-12;
        else if (full == "receiver.basis_split") cfg.receiver.basis_split = num();
        else if (full == "receiver.time_arm_fanout") cfg.receiver.time_arm_fanout = static_cast<int>(num());
        else if (full == "receiver.phase_detectors") cfg.receiver.phase_detectors = static_cast<int>(num());
        else if (full == "receiver.phase_insertion_loss_db") cfg.receiver.phase_insertion_loss_db = num();
        else if (full == "security.epsilon") cfg.security.epsilon = num();
        else if (full == "security.epsilon_cor") cfg.security.epsilon_cor = num();
        else if (full == "security.overlap_c") cfg.overlap_c = num();
        else if (full == "security.overlap_matrix_csv") cfg.overlap_matrix_csv = string_value(value, line);
        else if (full == "security.error_correction_efficiency") cfg.f_ec = num();
        else if (full == "run.mode") cfg.mode = string_value(value, line);
        else if (full == "run.session_seconds") cfg.session_seconds = num();
        else if (full == "run.sweep_loss_db") cfg.sweep_loss_db = array_value(value, line);
        else if (full == "run.tally_json") cfg.tally_json = string_value(value, line);
        else if (full == "run.montecarlo_frames") cfg.montecarlo_frames = static_cast<std::uint64_t>(num());
        else if (full == "run.seed") cfg.seed = static_cast<std::uint64_t>(num());
        else if (full == "run.shards") cfg.shards = static_cast<int>(num());
        else throw ConfigError(line, "unknown key " + full);
    }
};

}  // namespace

RunConfig parse_config_text(const std::string& text) {
    Parser p;
    std::stringstream ss(text);
    std::string raw;
    std::string section;
    int line = 0;
    while (std::getline(ss, raw)) {
        ++line;
        std::string s = raw;
        // strip comments outside quotes
        bool quoted = false;
        for (size_t i = 0; i < s.size(); ++i) {
            if (s[i] == '"') quoted = !quoted;
            if (s[i] == '#' && !quoted) {
                s.resize(i);
                break;
            }
        }
        s = Parser::trim(s);
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw ConfigError(line, "unterminated section header");
            section = Parser::trim(s.substr(1, s.size() - 2));
            if (section.empty()) throw ConfigError(line, "empty section name");
            continue;
        }
        const size_t eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError(line, "expected key = value");
        const std::string key = Parser::trim(s.substr(0, eq));
        const std::string value = Parser::trim(s.substr(eq + 1));
        if (key.empty() || value.empty()) throw ConfigError(line, "expected key = value");
        p.apply(section, key, value, line);
    }
    if (!p.version_seen) throw ConfigError(0, "missing required key config_version");
    try {
        p.cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(0, e.what());
    }
    return p.cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(0, "cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string config_template() {
    return R"(config_version = 1

[protocol]
dimension = 4
bin_width_ps = 400
frame_rate_mhz = 625
time_basis_prob = 0.90
signal_mu = 0.5
decoy_mu = 0.01
vacuum_mu = 0.0
signal_prob = 0.8
decoy_prob = 0.1
vacuum_prob = 0.1
frames_total = 6.25e10
intrinsic_error_time = 0.03
intrinsic_error_phase = 0.025

[channel]
loss_db = 4.0
fiber_db_per_km = 0.2

[detector]
efficiency = 0.72
dead_time_ns = 100
dark_rate_hz = 150
jitter_sigma_ps = 17

[receiver]
basis_split = 0.90
time_arm_fanout = 4
phase_detectors = 4
phase_insertion_loss_db = 2.5

[security]
epsilon = 1e-9
epsilon_cor = 1e-15
overlap_c = 1.89
error_correction_efficiency = 1.15

[run]
mode = "analytic"           # analytic | montecarlo
session_seconds = 100
sweep_loss_db = [4, 8, 10, 14, 16.6]
montecarlo_frames = 10000000
seed = 1
shards = 2
)";
}

}  // namespace qkd
