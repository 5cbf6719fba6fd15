#include "selfstorm/run_config.hpp"

#include <doctest.h>

#include <string>

using namespace selfstorm;

TEST_CASE("defaults validate and resolve shared fields") {
    RunConfig c;
    CHECK_NOTHROW(c.validate());
    c.seed = 9;
    c.geometry.scale_factor = 2;
    CHECK(c.resolved_model().scale_factor == 2);
    CHECK(c.resolved_train().seed == 9);
}

TEST_CASE("parse reads sections, comments and every value type") {
    const std::string text =
        "# comment\n"
        "[run]\n"
        "seed = 17\n"
        "[scene]\n"
        "structure = random   # inline\n"
        "noise = false\n"
        "activation_prob = 0.25\n"
        "[train]\n"
        "plateau_stop = 0.01\n"
        "[ista]\n"
        "step_rule = literal_2L\n"
        "[output]\n"
        "format = raw\n";
    const RunConfig c = parse_run_config(text);
    CHECK(c.seed == 17);
    CHECK(c.scene.structure == SceneStructure::random);
    CHECK(!c.noise);
    CHECK(c.scene.activation_prob == 0.25);
    REQUIRE(c.train.plateau_stop.has_value());
    CHECK(*c.train.plateau_stop == 0.01);
    CHECK(c.ista.step_rule == StepRule::literal_2L);
    CHECK(c.output_format == StackFormat::raw);
}

TEST_CASE("echo round-trips through the parser") {
    RunConfig c;
    c.seed = 123456789012345ULL;
    c.psf.fwhm_px = 1.0 / 3.0;
    c.train.plateau_stop = 0.125;
    c.scene.curve_width_nm = 62.5;
    c.ista.lambda = 0.1;
    const std::string echo = echo_run_config(c);
    const RunConfig back = parse_run_config(echo);
    CHECK(echo_run_config(back) == echo);
    CHECK(back.psf.fwhm_px == c.psf.fwhm_px);
    CHECK(back.ista.lambda == 0.1);
    CHECK(echo.find("[model]") != std::string::npos);
    for (const std::string& key : run_config_keys()) {
        const std::string k = key.substr(key.find('.') + 1);
        CHECK(echo.find(k + " = ") != std::string::npos);
    }
}

TEST_CASE("parse rejects unknown or malformed input with line numbers") {
    auto message = [](const std::string& text) {
        try {
            parse_run_config(text, "cfg");
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(message("[run]\nbogus = 1\n").find("cfg:2") != std::string::npos);
    CHECK(message("[run]\nbogus = 1\n").find("unknown key") != std::string::npos);
    CHECK(message("[nowhere]\n").find("unknown section") != std::string::npos);
    CHECK(message("seed = 1\n").find("outside") != std::string::npos);
    CHECK(message("[run]\nseed = 1\nseed = 2\n").find("duplicate") != std::string::npos);
    CHECK(message("[run]\nseed = x\n").find("integer") != std::string::npos);
    CHECK(message("[psf]\nfwhm_px = 1.5e\n").find("number") != std::string::npos);
    CHECK(message("[run]\nseed\n").find("key = value") != std::string::npos);
}

TEST_CASE("validation names the offending section") {
    RunConfig c;
    c.scene.frame_count = 0;
    try {
        c.validate();
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("scene") != std::string::npos);
    }
    c = {};
    c.train.epochs = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.psf.kernel_size = 4;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("dotted overrides") {
    RunConfig c;
    set_run_config_value(c, "train.epochs", "3");
    CHECK(c.train.epochs == 3);
    set_run_config_value(c, "train.plateau_stop", "none");
    CHECK(!c.train.plateau_stop.has_value());
    CHECK_THROWS_AS(set_run_config_value(c, "train.nothing", "3"), ConfigError);
    CHECK_THROWS_AS(set_run_config_value(c, "epochs", "3"), ConfigError);
    CHECK_THROWS_AS(set_run_config_value(c, "output.format", "png"), ConfigError);
}
