#pragma once

#include "qkd/channel.hpp"
#include "qkd/finite_key.hpp"
#include "qkd/protocol.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace qkd {

struct ConfigError : std::runtime_error {
    ConfigError(int line_, const std::string& what_)
        : std::runtime_error("config line " + std::to_string(line_) + ": " + what_),
          line(line_) {}
    int line = 0;
};

/// Everything one experiment needs: physical models, security parameters,
/// and run orchestration. Populated from a TOML-style key-value file with
/// a versioned schema; unknown keys are rejected.
struct RunConfig {
    ProtocolConfig protocol;
    ChannelModel channel{4.0, 0.2};
    DetectorModel detector;
    ReceiverLayout receiver;
    SecurityParams security;

    double overlap_c = 1.89;
    std::string overlap_matrix_csv;  // optional calibration matrix; overrides overlap_c
    double f_ec = 1.15;
    double session_seconds = 100.0;

    std::string mode = "analytic";  // "analytic" | "montecarlo"
    std::vector<double> sweep_loss_db = {4.0, 8.0, 10.0, 14.0, 16.6};
    std::string tally_json;  // measured tallies to analyze instead of simulating
    std::uint64_t montecarlo_frames = 10'000'000;
    std::uint64_t seed = 1;
    int shards = 2;

    void validate() const;

    /// Overlap parameter actually used: calibration matrix when given,
    /// otherwise the configured constant.
    double effective_overlap_c() const;
};

RunConfig default_config();
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);

/// The default configuration serialized in file form (for --init-config).
std::string config_template();

}  // namespace qkd
