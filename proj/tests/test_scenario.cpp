#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "iotemu/scenario.hpp"

using namespace iotemu::harness;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& tag) {
    fs::path d = fs::temp_directory_path() / ("iotemu_scn_" + tag);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST_CASE("scenario text parsing") {
    auto s = Scenario::parse_text(
        "# comment\n"
        "kind = SimRun\n"
        "name= quick \n"
        "seeds = 4\n"
        "total=1024  # trailing comment\n");
    CHECK(s.kind == ScenarioKind::SimRun);
    CHECK(s.name == "quick");
    CHECK(s.parameters.at("seeds") == "4");
    CHECK(s.parameters.at("total") == "1024");

    auto j = Scenario::parse_text(R"({"kind":"ModelRun","N":110000,"Omega":3417112576,"mu":27})");
    CHECK(j.kind == ScenarioKind::ModelRun);
    CHECK(j.name == "ModelRun");  // defaults to the kind
    CHECK(j.parameters.at("N") == "110000");

    CHECK_THROWS_AS(Scenario::parse_text("kind = Nonsense\n"), std::invalid_argument);
    CHECK_THROWS_AS(Scenario::parse_text("name = missing-kind\n"), std::invalid_argument);
    CHECK_THROWS_AS(Scenario::parse_file("/nonexistent/file.scn"), std::invalid_argument);
}

TEST_CASE("validation schemas") {
    Scenario ok;
    ok.kind = ScenarioKind::ProtocolDemo;
    CHECK(validate_scenario(ok).empty());

    Scenario sim;
    sim.kind = ScenarioKind::SimRun;
    auto violations = validate_scenario(sim);
    REQUIRE(violations.size() == 1);
    CHECK(violations[0] == "seeds");

    sim.parameters["seeds"] = "abc";
    violations = validate_scenario(sim);
    REQUIRE(violations.size() == 1);
    CHECK(violations[0].find("seeds") == 0);

    Scenario spoof;
    spoof.kind = ScenarioKind::SpoofTrial;
    violations = validate_scenario(spoof);
    CHECK(violations.size() == 3);  // trials, bot_interval_s, camera_interval_s

    Scenario model;
    model.kind = ScenarioKind::ModelRun;
    model.parameters = {{"N", "1000"}, {"Omega", "100000"}, {"mu", "10"}};
    CHECK(validate_scenario(model).empty());

    Scenario sim2;
    sim2.kind = ScenarioKind::SimRun;
    sim2.parameters = {{"seeds", "2"}, {"congestion", "quadratic"}};
    violations = validate_scenario(sim2);
    REQUIRE(violations.size() == 1);
    CHECK(violations[0].find("congestion") == 0);
}

TEST_CASE("run_scenario rejects invalid scenarios") {
    Scenario sim;
    sim.kind = ScenarioKind::SimRun;
    sim.output_dir = fresh_dir("invalid").string();
    CHECK_THROWS_AS(run_scenario(sim), std::invalid_argument);
}

TEST_CASE("model scenario writes a curve and a report") {
    Scenario s;
    s.kind = ScenarioKind::ModelRun;
    s.name = "model-check";
    s.parameters = {{"N", "110000"}, {"Omega", "3417112576"}, {"mu", "27"},
                    {"beta", "0.2"}, {"alpha", "3"},          {"t_end_s", "172800"}};
    auto dir = fresh_dir("model");
    s.output_dir = dir.string();
    auto report = run_scenario(s);
    CHECK(report.ok);
    CHECK(report.scenario == "model-check");
    CHECK(report.metrics.at("final_infected") > 100000);
    CHECK(fs::exists(dir / "model.csv"));
    CHECK(fs::exists(dir / "report.json"));
    auto parsed = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(parsed.at("ok") == true);
    CHECK(parsed.at("scenario") == "model-check");
}

TEST_CASE("scenario reruns are byte-identical") {
    Scenario s;
    s.kind = ScenarioKind::SimRun;
    s.parameters = {{"seeds", "3"}, {"seed", "42"}, {"max_time_s", "120"}};
    auto d1 = fresh_dir("repro1");
    auto d2 = fresh_dir("repro2");
    s.output_dir = d1.string();
    auto r1 = run_scenario(s);
    s.output_dir = d2.string();
    auto r2 = run_scenario(s);
    REQUIRE(r1.ok);
    REQUIRE(r2.ok);
    std::string c1 = slurp(d1 / "curve.csv");
    std::string c2 = slurp(d2 / "curve.csv");
    CHECK(!c1.empty());
    CHECK(c1 == c2);
    CHECK(r1.metrics.at("time_to_99pct") == r2.metrics.at("time_to_99pct"));

    Scenario m;
    m.kind = ScenarioKind::ModelRun;
    m.parameters = {{"N", "1270"}, {"Omega", "65536"}, {"mu", "160"},
                    {"t_end_s", "60"}};
    auto d3 = fresh_dir("repro3");
    auto d4 = fresh_dir("repro4");
    m.output_dir = d3.string();
    REQUIRE(run_scenario(m).ok);
    m.output_dir = d4.string();
    REQUIRE(run_scenario(m).ok);
    CHECK(slurp(d3 / "model.csv") == slurp(d4 / "model.csv"));
}

TEST_CASE("compare scenario interpolates the model onto observed times") {
    // Use a model run as the observed input.
    Scenario m;
    m.kind = ScenarioKind::ModelRun;
    m.parameters = {{"N", "1270"}, {"Omega", "65536"}, {"mu", "160"},
                    {"t_end_s", "60"}};
    auto obs_dir = fresh_dir("cmp_obs");
    m.output_dir = obs_dir.string();
    REQUIRE(run_scenario(m).ok);

    Scenario c;
    c.kind = ScenarioKind::CompareRun;
    c.parameters = {{"N", "1270"},
                    {"Omega", "65536"},
                    {"mu", "160"},
                    {"observed", (obs_dir / "model.csv").string()}};
    auto dir = fresh_dir("cmp");
    c.output_dir = dir.string();
    auto report = run_scenario(c);
    REQUIRE(report.ok);
    std::ifstream in(dir / "compare.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "t_seconds,model_infected,observed_infected");
    // Same parameters: model and observed columns agree closely.
    std::string line;
    while (std::getline(in, line)) {
        double t, model_i, obs_i;
        REQUIRE(std::sscanf(line.c_str(), "%lf,%lf,%lf", &t, &model_i, &obs_i) == 3);
        CHECK(std::abs(model_i - obs_i) < 0.01 * 1270);
    }
}

TEST_CASE("module failure is reported, not thrown") {
    Scenario c;
    c.kind = ScenarioKind::CompareRun;
    c.parameters = {{"N", "1270"},
                    {"Omega", "65536"},
                    {"mu", "160"},
                    {"observed", "/nonexistent/observed.csv"}};
    auto dir = fresh_dir("fail");
    c.output_dir = dir.string();
    auto report = run_scenario(c);
    CHECK(!report.ok);
    CHECK(!report.failure.empty());
    CHECK(fs::exists(dir / "report.json"));  // partial artifacts preserved
}
