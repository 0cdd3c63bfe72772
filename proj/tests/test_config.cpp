#include "qkd/config.hpp"

#include "qkd/qudit.hpp"

#include <doctest.h>

#include <cstdio>
#include <fstream>

using namespace qkd;

TEST_CASE("the template parses back to the defaults") {
    const RunConfig cfg = parse_config_text(config_template());
    const RunConfig def = default_config();
    CHECK(cfg.protocol.frames_total == def.protocol.frames_total);
    CHECK(cfg.channel.loss_db == def.channel.loss_db);
    CHECK(cfg.detector.dead_time == doctest::Approx(def.detector.dead_time));
    CHECK(cfg.overlap_c == def.overlap_c);
    CHECK(cfg.sweep_loss_db == def.sweep_loss_db);
    CHECK(cfg.mode == "analytic");
}

TEST_CASE("values override defaults") {
    const std::string text = R"(config_version = 1
[channel]
loss_db = 12.5
[protocol]
signal_mu = 0.61   # trailing comment
[run]
sweep_loss_db = [1, 2.5, 30]
mode = "montecarlo"
)";
    const RunConfig cfg = parse_config_text(text);
    CHECK(cfg.channel.loss_db == 12.5);
    CHECK(cfg.protocol.intensities.mu[kSignal] == 0.61);
    CHECK(cfg.sweep_loss_db == std::vector<double>{1.0, 2.5, 30.0});
    CHECK(cfg.mode == "montecarlo");
}

TEST_CASE("diagnostics carry line numbers") {
    try {
        parse_config_text("config_version = 1\n[channel]\nflux_capacitor = 3\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.line == 3);
        CHECK(std::string(e.what()).find("flux_capacitor") != std::string::npos);
    }

    CHECK_THROWS_AS(parse_config_text("config_version = 1\nloss_db == 3\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[channel]\nloss_db = 3\n"), ConfigError);  // no version
    CHECK_THROWS_AS(parse_config_text("config_version = 2\n"), ConfigError);
    CHECK_THROWS_AS(
        parse_config_text("config_version = 1\n[channel]\nloss_db = 1\nloss_db = 2\n"),
        ConfigError);
    CHECK_THROWS_AS(parse_config_text("config_version = 1\n[channel]\nloss_db = abc\n"),
                    ConfigError);
    // schema violations surface as config errors too
    CHECK_THROWS_AS(parse_config_text("config_version = 1\n[protocol]\nsignal_mu = 0.005\n"),
                    ConfigError);
}

TEST_CASE("calibration matrix overrides the overlap constant") {
    const char* path = "test_overlap_matrix.csv";
    {
        std::ofstream os(path);
        Eigen::MatrixXd m = probability_matrix(4);
        m(2, 5) = std::pow(2.0, -1.93);
        write_matrix_csv(m, os);
    }
    RunConfig cfg = default_config();
    CHECK(cfg.effective_overlap_c() == cfg.overlap_c);
    cfg.overlap_matrix_csv = path;
    CHECK(cfg.effective_overlap_c() == doctest::Approx(1.93).epsilon(1e-12));
    std::remove(path);
}
