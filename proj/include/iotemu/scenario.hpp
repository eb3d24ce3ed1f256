#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace iotemu::harness {

enum class ScenarioKind {
    ProtocolDemo,
    SpoofTrial,
    ScanDemo,
    BruteDemo,
    SimRun,
    ModelRun,
    CompareRun,
};

std::optional<ScenarioKind> scenario_kind_from_string(const std::string& s);
std::string to_string(ScenarioKind kind);

// A named experiment: a kind plus a flat parameter map, validated against the
// kind's schema before execution.
struct Scenario {
    std::string name;
    ScenarioKind kind = ScenarioKind::ProtocolDemo;
    std::map<std::string, std::string> parameters;
    std::string output_dir = ".";

    // Accepts "key = value" lines (# comments) or a JSON object.
    static Scenario parse_file(const std::string& path);
    static Scenario parse_text(const std::string& text);
};

struct RunReport {
    std::string scenario;
    double started = 0;
    double finished = 0;
    bool ok = false;
    std::string failure;
    std::map<std::string, double> metrics;
    std::vector<std::string> artifacts;

    nlohmann::json to_json() const;
};

// Full schema check; no side effects. Empty result means valid.
std::vector<std::string> validate_scenario(const Scenario& s);

// Executes the scenario in-process (servers on loopback, ephemeral ports) and
// writes artifacts plus report.json under output_dir.
RunReport run_scenario(const Scenario& s);

}  // namespace iotemu::harness
