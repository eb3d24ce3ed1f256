#include "iotemu/scenario.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "iotemu/attacks.hpp"
#include "iotemu/botsim.hpp"
#include "iotemu/camera.hpp"
#include "iotemu/cloud_servers.hpp"
#include "iotemu/controller.hpp"
#include "iotemu/propagation.hpp"

namespace iotemu::harness {

namespace fs = std::filesystem;
using nlohmann::json;

std::optional<ScenarioKind> scenario_kind_from_string(const std::string& s) {
    if (s == "ProtocolDemo") return ScenarioKind::ProtocolDemo;
    if (s == "SpoofTrial") return ScenarioKind::SpoofTrial;
    if (s == "ScanDemo") return ScenarioKind::ScanDemo;
    if (s == "BruteDemo") return ScenarioKind::BruteDemo;
    if (s == "SimRun") return ScenarioKind::SimRun;
    if (s == "ModelRun") return ScenarioKind::ModelRun;
    if (s == "CompareRun") return ScenarioKind::CompareRun;
    return std::nullopt;
}

std::string to_string(ScenarioKind kind) {
    switch (kind) {
        case ScenarioKind::ProtocolDemo: return "ProtocolDemo";
        case ScenarioKind::SpoofTrial: return "SpoofTrial";
        case ScenarioKind::ScanDemo: return "ScanDemo";
        case ScenarioKind::BruteDemo: return "BruteDemo";
        case ScenarioKind::SimRun: return "SimRun";
        case ScenarioKind::ModelRun: return "ModelRun";
        case ScenarioKind::CompareRun: return "CompareRun";
    }
    return "?";
}

Scenario Scenario::parse_text(const std::string& text) {
    Scenario s;
    std::map<std::string, std::string> kv;
    size_t first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        json j = json::parse(text);
        for (auto& [key, value] : j.items()) {
            if (value.is_string())
                kv[key] = value.get<std::string>();
            else
                kv[key] = value.dump();
        }
    } else {
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) {
            size_t hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            size_t eq = line.find('=');
            if (eq == std::string::npos) continue;
            auto trim = [](std::string v) {
                size_t b = v.find_first_not_of(" \t\r");
                size_t e = v.find_last_not_of(" \t\r");
                return b == std::string::npos ? std::string{} : v.substr(b, e - b + 1);
            };
            std::string key = trim(line.substr(0, eq));
            std::string value = trim(line.substr(eq + 1));
            if (!key.empty()) kv[key] = value;
        }
    }
    if (auto it = kv.find("name"); it != kv.end()) {
        s.name = it->second;
        kv.erase(it);
    }
    if (auto it = kv.find("kind"); it != kv.end()) {
        auto kind = scenario_kind_from_string(it->second);
        if (!kind) throw std::invalid_argument("unknown scenario kind: " + it->second);
        s.kind = *kind;
        kv.erase(it);
    } else {
        throw std::invalid_argument("scenario missing 'kind'");
    }
    if (auto it = kv.find("output_dir"); it != kv.end()) {
        s.output_dir = it->second;
        kv.erase(it);
    }
    s.parameters = std::move(kv);
    if (s.name.empty()) s.name = to_string(s.kind);
    return s;
}

Scenario Scenario::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open scenario file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str());
}

namespace {

struct ParamReader {
    const std::map<std::string, std::string>& p;
    std::vector<std::string>* violations = nullptr;  // validate mode

    std::string str(const std::string& key, const std::string& fallback = "",
                    bool required = false) const {
        auto it = p.find(key);
        if (it != p.end()) return it->second;
        if (required && violations) violations->push_back(key);
        if (required && !violations)
            throw std::invalid_argument("missing parameter: " + key);
        return fallback;
    }

    double num(const std::string& key, double fallback = 0, bool required = false) const {
        auto it = p.find(key);
        if (it == p.end()) {
            if (required && violations) violations->push_back(key);
            if (required && !violations)
                throw std::invalid_argument("missing parameter: " + key);
            return fallback;
        }
        try {
            return std::stod(it->second);
        } catch (const std::exception&) {
            if (violations)
                violations->push_back(key + " (not a number)");
            else
                throw std::invalid_argument("parameter " + key + " is not a number");
            return fallback;
        }
    }
};

uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

double unix_now() {
    return std::chrono::duration<double>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

void check_schema(const Scenario& s, std::vector<std::string>& violations) {
    ParamReader r{s.parameters, &violations};
    switch (s.kind) {
        case ScenarioKind::ProtocolDemo:
            r.str("password", "", false);
            break;
        case ScenarioKind::SpoofTrial:
            r.num("trials", 0, true);
            r.num("bot_interval_s", 0, true);
            r.num("camera_interval_s", 0, true);
            r.num("time_factor", 1.0, false);
            break;
        case ScenarioKind::ScanDemo:
            r.str("prefix", "", true);
            r.str("from", "", true);
            r.str("to", "", true);
            r.num("live", 0, false);
            break;
        case ScenarioKind::BruteDemo:
            r.str("password", "", true);
            r.str("space", "", true);
            break;
        case ScenarioKind::SimRun:
            r.num("seeds", 0, true);
            r.num("total", 0, false);
            r.num("max_time_s", 0, false);
            if (std::string c = r.str("congestion", "none"); c != "none" && c != "rate-scaling")
                violations.push_back("congestion (expected none|rate-scaling)");
            break;
        case ScenarioKind::ModelRun:
            r.num("N", 0, true);
            r.num("Omega", 0, true);
            r.num("mu", 0, true);
            r.num("t_end_s", 0, false);
            break;
        case ScenarioKind::CompareRun:
            r.num("N", 0, true);
            r.num("Omega", 0, true);
            r.num("mu", 0, true);
            r.str("observed", "", true);
            break;
    }
}

model::ModelParams model_params_from(const ParamReader& r) {
    model::ModelParams p;
    p.N = r.num("N", 0, true);
    p.Omega = r.num("Omega", 0, true);
    p.mu = r.num("mu", 0, true);
    p.beta = r.num("beta", 0);
    p.alpha = r.num("alpha", 0);
    p.I0 = r.num("I0", 1);
    double q = r.num("q", -1);
    if (q >= 0)
        p.q = q;
    else
        p.q = model::compute_q(static_cast<int>(r.num("dict", 62)),
                               static_cast<int>(r.num("attempts", 10)));
    return p;
}

botsim::SimConfig sim_config_from(const ParamReader& r, uint64_t seed) {
    botsim::SimConfig cfg;
    cfg.population.total_addresses = static_cast<uint64_t>(r.num("total", 65536));
    cfg.population.open_telnet_fraction = r.num("open_fraction", 6325.0 / 65536.0);
    cfg.population.vulnerable_fraction_of_open = r.num("vuln_fraction", 1270.0 / 6325.0);
    cfg.population.dictionary_size = static_cast<uint32_t>(r.num("dict", 62));
    cfg.population.seed = seed;
    double wl_lo = r.num("whitelist_lo", -1), wl_hi = r.num("whitelist_hi", -1);
    if (wl_lo >= 0 && wl_hi > wl_lo)
        cfg.population.whitelist.push_back({static_cast<uint64_t>(wl_lo),
                                            static_cast<uint64_t>(wl_hi)});
    cfg.bot.attempt_limit = static_cast<uint32_t>(r.num("attempts", 10));
    cfg.bot.probe_batch_size = static_cast<uint32_t>(r.num("batch", 160));
    cfg.initial_bots = static_cast<uint32_t>(r.num("initial_bots", 1));
    cfg.stop.fraction = r.num("stop_fraction", 0.99);
    cfg.stop.max_time_ms = static_cast<int64_t>(r.num("max_time_s", 600) * 1000);
    std::string congestion = r.str("congestion", "none");
    if (congestion == "rate-scaling")
        cfg.congestion = botsim::CongestionModel::rate_scaling(r.num("alpha", 3),
                                                               r.num("beta", 0.2));
    return cfg;
}

// One spoofing race: real camera vs spoof bot, controller opening at a
// uniformly random time within one camera re-registration period.
bool spoof_trial_once(double bot_interval_s, double camera_interval_s,
                      const std::string& password, double open_at_s) {
    cloud::CloudHarness cloudh = cloud::CloudHarness::start(
        {.lease_seconds = camera_interval_s * 3 + 5});
    std::string mac = "74da38aa0001";

    endpoint::Camera::Config cam_cfg;
    cam_cfg.identity.mac = mac;
    cam_cfg.identity.password = password;
    cam_cfg.servers = {cloudh.registration->cmd_addr(), cloudh.registration->camera_addr()};
    cam_cfg.reregister_interval =
        net::Millis{static_cast<int64_t>(camera_interval_s * 1000)};
    endpoint::Camera camera(cam_cfg, cloudh.log);
    camera.start();
    for (int i = 0; i < 200 && !camera.registered_once(); ++i)
        std::this_thread::sleep_for(std::chrono::milliseconds(10));

    attack::SpoofOptions spoof_opts;
    spoof_opts.registration_cmd = cloudh.registration->cmd_addr();
    spoof_opts.registration_camera = cloudh.registration->camera_addr();
    spoof_opts.register_interval = net::Millis{static_cast<int64_t>(bot_interval_s * 1000)};
    spoof_opts.deadline =
        net::Millis{static_cast<int64_t>((camera_interval_s + 5.0) * 1000)};
    std::optional<attack::CapturedCredential> captured;
    std::thread bot([&] { captured = attack::spoof_device(mac, spoof_opts, cloudh.log); });

    std::this_thread::sleep_for(
        std::chrono::milliseconds(static_cast<int64_t>(open_at_s * 1000)));
    endpoint::ControllerConfig ctl;
    ctl.target_mac = mac;
    ctl.password = password;
    ctl.registration_controller = cloudh.registration->controller_addr();
    endpoint::controller_fetch_image(ctl, cloudh.log);

    bot.join();
    camera.stop();
    cloudh.stop();
    return captured && captured->password == password;
}

RunReport run_protocol_demo(const Scenario& s, const fs::path& out_dir) {
    ParamReader r{s.parameters};
    std::string password = r.str("password", "1234");
    RunReport report;
    cloud::CloudHarness cloudh = cloud::CloudHarness::start();
    cloudh.log->open_file((out_dir / "events.jsonl").string());
    std::string mac = "74da38aa0001";
    endpoint::Camera::Config cam_cfg;
    cam_cfg.identity.mac = mac;
    cam_cfg.identity.password = password;
    cam_cfg.servers = {cloudh.registration->cmd_addr(), cloudh.registration->camera_addr()};
    endpoint::Camera camera(cam_cfg, cloudh.log);
    camera.start();
    for (int i = 0; i < 300 && !camera.registered_once(); ++i)
        std::this_thread::sleep_for(std::chrono::milliseconds(10));

    endpoint::ControllerConfig ctl;
    ctl.target_mac = mac;
    ctl.password = password;
    ctl.registration_controller = cloudh.registration->controller_addr();
    auto good = endpoint::controller_fetch_image(ctl, cloudh.log);
    ctl.password = password + "x";
    auto bad = endpoint::controller_fetch_image(ctl, cloudh.log);
    camera.stop();
    cloudh.stop();
    report.metrics["fetch_ok"] = good.status == endpoint::FetchStatus::Ok &&
                                         good.image == endpoint::image_fixture()
                                     ? 1
                                     : 0;
    report.metrics["wrong_password_rejected"] =
        bad.status == endpoint::FetchStatus::AuthFailure ? 1 : 0;
    report.ok = report.metrics["fetch_ok"] == 1 &&
                report.metrics["wrong_password_rejected"] == 1;
    report.artifacts.push_back((out_dir / "events.jsonl").string());
    return report;
}

RunReport run_spoof_trial(const Scenario& s, const fs::path& out_dir) {
    ParamReader r{s.parameters};
    int trials = static_cast<int>(r.num("trials", 0, true));
    double factor = r.num("time_factor", 1.0);
    double bot_interval = r.num("bot_interval_s", 0, true) * factor;
    double camera_interval = r.num("camera_interval_s", 0, true) * factor;
    uint64_t seed = static_cast<uint64_t>(r.num("seed", 1));
    std::string password = r.str("password", "s3cretPW");

    uint64_t rng_state = seed;
    std::mt19937_64 rng(splitmix64(rng_state));
    std::uniform_real_distribution<double> uniform(0.0, camera_interval);

    auto log = std::make_shared<EventLog>();
    log->open_file((out_dir / "trials.jsonl").string());
    int successes = 0;
    for (int t = 0; t < trials; ++t) {
        double open_at = uniform(rng);
        bool ok = spoof_trial_once(bot_interval, camera_interval, password, open_at);
        log->emit("harness", "spoof_trial",
                  {{"trial", t}, {"open_at_s", open_at}, {"captured", ok}});
        if (ok) ++successes;
    }
    RunReport report;
    report.metrics["trials"] = trials;
    report.metrics["success_count"] = successes;
    report.metrics["success_rate"] = trials > 0 ? double(successes) / trials : 0;
    report.ok = true;
    report.artifacts.push_back((out_dir / "trials.jsonl").string());
    return report;
}

RunReport run_scan_demo(const Scenario& s, const fs::path& out_dir) {
    ParamReader r{s.parameters};
    attack::ScanRange range{r.str("prefix", "", true), r.str("from", "", true),
                            r.str("to", "", true)};
    range.validate();
    int live = static_cast<int>(r.num("live", 3));
    uint64_t seed = static_cast<uint64_t>(r.num("seed", 1));

    cloud::CloudHarness cloudh = cloud::CloudHarness::start();
    cloudh.log->open_file((out_dir / "events.jsonl").string());
    // Spread the live cameras across the range.
    std::vector<std::unique_ptr<endpoint::Camera>> cameras;
    uint64_t rng_state = seed;
    std::vector<uint64_t> picks;
    while (picks.size() < static_cast<size_t>(live)) {
        uint64_t idx = splitmix64(rng_state) % range.size();
        if (std::find(picks.begin(), picks.end(), idx) == picks.end())
            picks.push_back(idx);
    }
    for (uint64_t idx : picks) {
        endpoint::Camera::Config cfg;
        cfg.identity.mac = range.mac_at(idx);
        cfg.servers = {cloudh.registration->cmd_addr(), cloudh.registration->camera_addr()};
        cameras.push_back(std::make_unique<endpoint::Camera>(cfg, cloudh.log));
        cameras.back()->start();
    }
    for (auto& cam : cameras)
        for (int i = 0; i < 300 && !cam->registered_once(); ++i)
            std::this_thread::sleep_for(std::chrono::milliseconds(10));

    attack::ScanOptions opts;
    opts.registration_controller = cloudh.registration->controller_addr();
    opts.probes_per_second = r.num("rate", 100);
    auto results = attack::scan_devices(range, opts, cloudh.log);

    std::ofstream csv(out_dir / "scan.csv");
    csv << "mac,outcome\n";
    size_t online = 0;
    for (const auto& res : results) {
        const char* o = res.outcome == attack::ProbeOutcome::Online    ? "online"
                        : res.outcome == attack::ProbeOutcome::Offline ? "offline"
                                                                       : "unknown";
        if (res.outcome == attack::ProbeOutcome::Online) ++online;
        csv << res.mac << "," << o << "\n";
    }
    for (auto& cam : cameras) cam->stop();
    cloudh.stop();
    RunReport report;
    report.metrics["probed"] = static_cast<double>(results.size());
    report.metrics["online"] = static_cast<double>(online);
    report.ok = online == static_cast<size_t>(live);
    report.artifacts.push_back((out_dir / "scan.csv").string());
    return report;
}

RunReport run_brute_demo(const Scenario& s, const fs::path& out_dir) {
    ParamReader r{s.parameters};
    std::string password = r.str("password", "", true);
    std::string space = r.str("space", "", true);

    cloud::CloudHarness cloudh = cloud::CloudHarness::start();
    cloudh.log->open_file((out_dir / "events.jsonl").string());
    std::string mac = "74da38aa0001";
    endpoint::Camera::Config cfg;
    cfg.identity.mac = mac;
    cfg.identity.password = password;
    cfg.servers = {cloudh.registration->cmd_addr(), cloudh.registration->camera_addr()};
    cfg.relay_read_timeout = net::Millis{120'000};
    endpoint::Camera camera(cfg, cloudh.log);
    camera.start();
    for (int i = 0; i < 300 && !camera.registered_once(); ++i)
        std::this_thread::sleep_for(std::chrono::milliseconds(10));

    attack::CandidateSpace candidates;
    if (space.rfind("pin", 0) == 0)
        candidates = attack::pin_space(std::stoi(space.substr(3)));
    else if (space.rfind("wordlist:", 0) == 0)
        candidates = attack::wordlist_file_space(space.substr(9));
    else
        throw std::invalid_argument("unknown space: " + space);
    attack::BruteOptions opts;
    opts.registration_controller = cloudh.registration->controller_addr();
    auto result = attack::brute_force(mac, candidates, opts, cloudh.log);
    camera.stop();
    cloudh.stop();
    RunReport report;
    report.metrics["found"] = result.found ? 1 : 0;
    report.metrics["attempts"] = static_cast<double>(result.attempts);
    report.ok = result.found && result.password == password;
    report.artifacts.push_back((out_dir / "events.jsonl").string());
    return report;
}

RunReport run_sim(const Scenario& s, const fs::path& out_dir) {
    ParamReader r{s.parameters};
    uint64_t seed = static_cast<uint64_t>(r.num("seed", 1));
    uint32_t seeds = static_cast<uint32_t>(r.num("seeds", 1, true));
    botsim::SimConfig cfg = sim_config_from(r, seed);
    double frac = cfg.stop.fraction > 0 ? cfg.stop.fraction : 0.99;
    auto ens = botsim::run_ensemble(cfg, seeds, frac);
    std::string out_name = r.str("out", "curve.csv");
    botsim::write_ensemble_csv((out_dir / out_name).string(), ens);
    RunReport report;
    if (ens.mean_time_to_fraction)
        report.metrics["time_to_99pct"] = *ens.mean_time_to_fraction;
    report.metrics["final_mean_infected"] = ens.mean_infected.back();
    report.ok = true;
    report.artifacts.push_back((out_dir / out_name).string());
    return report;
}

RunReport run_model(const Scenario& s, const fs::path& out_dir) {
    ParamReader r{s.parameters};
    model::ModelParams p = model_params_from(r);
    double t_end = r.num("t_end_s", r.num("t_end_h", 48) * 3600.0);
    double step = r.num("step_s", t_end / 100000.0);
    auto curve = model::integrate(model::rhs_congested, p,
                                  {t_end, step, r.num("sample_s", t_end / 2000.0)});
    std::string out_name = r.str("out", "model.csv");
    model::write_curve_csv((out_dir / out_name).string(), curve);
    RunReport report;
    report.metrics["final_infected"] = curve.final_infected();
    report.ok = true;
    report.artifacts.push_back((out_dir / out_name).string());
    return report;
}

RunReport run_compare(const Scenario& s, const fs::path& out_dir) {
    ParamReader r{s.parameters};
    model::ModelParams p = model_params_from(r);
    auto observed = model::read_curve_csv(r.str("observed", "", true));
    if (observed.empty()) throw std::invalid_argument("observed curve is empty");
    double t_end = observed.samples.back().t;
    auto curve = model::integrate(model::rhs_congested, p,
                                  {t_end, t_end / 100000.0, t_end / 4000.0});
    std::string out_name = r.str("out", "compare.csv");
    std::ofstream out(out_dir / out_name);
    out << "t_seconds,model_infected,observed_infected\n";
    size_t j = 1;
    char buf[128];
    for (const auto& obs : observed.samples) {
        while (j + 1 < curve.samples.size() && curve.samples[j].t < obs.t) ++j;
        const auto& a = curve.samples[j - 1];
        const auto& b = curve.samples[j];
        double model_i = b.t == a.t ? b.infected
                                    : a.infected + (obs.t - a.t) / (b.t - a.t) *
                                                       (b.infected - a.infected);
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f\n", obs.t, model_i, obs.infected);
        out << buf;
    }
    RunReport report;
    report.metrics["observed_samples"] = static_cast<double>(observed.samples.size());
    report.ok = true;
    report.artifacts.push_back((out_dir / out_name).string());
    return report;
}

}  // namespace

std::vector<std::string> validate_scenario(const Scenario& s) {
    std::vector<std::string> violations;
    check_schema(s, violations);
    return violations;
}

json RunReport::to_json() const {
    return json{{"scenario", scenario}, {"started", started},   {"finished", finished},
                {"ok", ok},             {"failure", failure},    {"metrics", metrics},
                {"artifacts", artifacts}};
}

RunReport run_scenario(const Scenario& s) {
    auto violations = validate_scenario(s);
    if (!violations.empty()) {
        std::string all;
        for (const auto& v : violations) all += v + "; ";
        throw std::invalid_argument("scenario invalid: " + all);
    }
    fs::path out_dir(s.output_dir);
    fs::create_directories(out_dir);
    RunReport report;
    double started = unix_now();
    try {
        switch (s.kind) {
            case ScenarioKind::ProtocolDemo: report = run_protocol_demo(s, out_dir); break;
            case ScenarioKind::SpoofTrial: report = run_spoof_trial(s, out_dir); break;
            case ScenarioKind::ScanDemo: report = run_scan_demo(s, out_dir); break;
            case ScenarioKind::BruteDemo: report = run_brute_demo(s, out_dir); break;
            case ScenarioKind::SimRun: report = run_sim(s, out_dir); break;
            case ScenarioKind::ModelRun: report = run_model(s, out_dir); break;
            case ScenarioKind::CompareRun: report = run_compare(s, out_dir); break;
        }
    } catch (const std::exception& e) {
        report.ok = false;
        report.failure = e.what();
    }
    report.scenario = s.name;
    report.started = started;
    report.finished = unix_now();
    std::ofstream rf(out_dir / "report.json");
    rf << report.to_json().dump(2) << "\n";
    return report;
}

}  // namespace iotemu::harness
