#include <catch_amalgamated.hpp>

#include <string>

#include "telesim/config.hpp"

using namespace telesim;
using Catch::Matchers::ContainsSubstring;

namespace {

std::string error_of(const std::string& text) {
    try {
        parse_config_string(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("an empty file gives the reference scenario") {
    const ScenarioConfig c = parse_config_string("");
    const ScenarioConfig ref = reference_scenario();
    CHECK(c.dt == ref.dt);
    CHECK(c.duration == ref.duration);
    CHECK(c.loss.alpha == ref.loss.alpha);
    CHECK(c.b == ref.b);
    CHECK(c.op.kind == ref.op.kind);
}

TEST_CASE("values, lists, comments and sections are read") {
    const ScenarioConfig c = parse_config_string(
        "\xEF\xBB\xBF# scenario\n"
        "[robot]\n"
        "model = two_link   ; trailing comment\n"
        "link_lengths = 1.0, 0.8\n"
        "link_masses = 1.5,0.7\n"
        "gravity = false\n"
        "\n"
        "[gains]\n"
        "b = 1.2, 0.8\n"
        "lambda = 1, 2\n"
        "[loss]\n"
        "mode = fourier_corrected\n"
        "harmonics = 32\n"
        "rate = 0.05\n"
        "[sim]\n"
        "q_m0 = 0.3, -0.2\n"
        "seed = 18446744073709551615\n"
        "operator_term = subtract\n");
    CHECK(c.master.kind == RobotKind::TwoLink);
    CHECK(c.master.link.l2 == 0.8);
    CHECK(c.slave.link.m1 == 1.5);
    CHECK_FALSE(c.master.link.gravity);
    CHECK(c.b == std::vector<double>{1.2, 0.8});
    CHECK(c.lambda == std::vector<double>{1.0, 2.0});
    CHECK(c.loss.mode == LossMode::FourierCorrected);
    CHECK(c.loss.harmonics == 32);
    CHECK(c.loss.alpha == Catch::Approx(0.5));
    CHECK(c.q_m0 == std::vector<double>{0.3, -0.2});
    CHECK(c.seed == 18446744073709551615ull);
    CHECK(c.operator_term == OperatorTerm::Subtract);
    CHECK(c.dof() == 2);
}

TEST_CASE("custom gains require the custom mode") {
    const ScenarioConfig c = parse_config_string("[gains]\nb = 1.2\nmode = custom\nK_m = 2.4\nK_s = 0.6\n");
    CHECK_FALSE(c.matched_gains);
    CHECK(c.K_m == std::vector<double>{2.4});
    CHECK_THAT(error_of("[gains]\nb = 1.2\nK_m = 2.4\n"), ContainsSubstring("gains.K_m") && ContainsSubstring("line 3"));
}

TEST_CASE("malformed lines report their line number") {
    CHECK_THAT(error_of("[sim]\ndt = 1e-4\nduration\n"), ContainsSubstring("line 3"));
    CHECK_THAT(error_of("[sim\n"), ContainsSubstring("line 1"));
    CHECK_THAT(error_of("dt = 1\n"), ContainsSubstring("line 1"));
    CHECK_THAT(error_of("[sim]\n = 3\n"), ContainsSubstring("line 2"));
}

TEST_CASE("unknown and duplicate keys are rejected") {
    CHECK_THAT(error_of("[sim]\ndt = 1e-4\nstep = 3\n"), ContainsSubstring("sim.step") && ContainsSubstring("line 3"));
    CHECK_THAT(error_of("[physics]\nmass = 1\n"), ContainsSubstring("physics.mass"));
    CHECK_THAT(error_of("[sim]\ndt = 1e-4\n\ndt = 2e-4\n"),
               ContainsSubstring("sim.dt") && ContainsSubstring("line 4") && ContainsSubstring("line 2"));
}

TEST_CASE("bad values name the key and line") {
    CHECK_THAT(error_of("[sim]\ndt = fast\n"), ContainsSubstring("sim.dt") && ContainsSubstring("line 2"));
    CHECK_THAT(error_of("[sim]\ndt = 1e-4x\n"), ContainsSubstring("sim.dt"));
    CHECK_THAT(error_of("[loss]\nharmonics = 2.5\n"), ContainsSubstring("loss.harmonics"));
    CHECK_THAT(error_of("[environment]\nenabled = maybe\n"), ContainsSubstring("environment.enabled"));
    CHECK_THAT(error_of("[loss]\nmode = sawtooth\n"),
               ContainsSubstring("loss.mode") && ContainsSubstring("fourier_corrected"));
    CHECK_THAT(error_of("[gains]\nb = 1.2,,3\n"), ContainsSubstring("gains.b"));
}

TEST_CASE("validation failures point at the offending key") {
    CHECK_THAT(error_of("[loss]\nperiod = 10\nalpha = 10\n"),
               ContainsSubstring("loss.alpha") && ContainsSubstring("line 3"));
    CHECK_THAT(error_of("[robot]\nmass = -1\n"), ContainsSubstring("robot.mass") && ContainsSubstring("line 2"));
    CHECK_THAT(error_of("[loss]\nalpha = 0.5\nrate = 0.05\n"), ContainsSubstring("loss.rate"));
    CHECK_THAT(error_of("[sim]\ndt = 0\n"), ContainsSubstring("sim.dt"));
    CHECK_THAT(error_of("[sim]\ntail_fraction = 1.5\n"), ContainsSubstring("sim.tail_fraction"));
    CHECK_THAT(error_of("[robot]\nlink_lengths = 1\n"), ContainsSubstring("robot.link_lengths"));
    CHECK_THAT(error_of("[robot]\nmodel = two_link\n[gains]\nb = 1, 2, 3\n"), ContainsSubstring("gains.b"));
}

TEST_CASE("separate backward loss profile") {
    const ScenarioConfig c = parse_config_string("[loss]\nalpha = 0.2\nbackward_alpha = 0.7\nbackward_phase = 3\n");
    REQUIRE(c.backward_loss.has_value());
    CHECK(c.backward_loss->alpha == 0.7);
    CHECK(c.backward_loss->phase == 3.0);
    CHECK(c.loss.alpha == 0.2);
}

TEST_CASE("missing files are reported") {
    CHECK_THROWS_WITH(load_config("/nonexistent/scenario.ini"), ContainsSubstring("/nonexistent/scenario.ini"));
}
