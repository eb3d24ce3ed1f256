// iotemu: IP camera cloud-protocol emulator, attack demos against local
// servers, and Mirai-style propagation simulation and modeling.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "iotemu/attacks.hpp"
#include "iotemu/botsim.hpp"
#include "iotemu/camera.hpp"
#include "iotemu/cloud_servers.hpp"
#include "iotemu/controller.hpp"
#include "iotemu/propagation.hpp"
#include "iotemu/scenario.hpp"

using namespace iotemu;

namespace {

std::atomic<bool> g_interrupted{false};
void on_signal(int) { g_interrupted.store(true); }

bool g_allow_external = false;

net::Addr parse_addr(const std::string& s, const char* what) {
    net::Addr a = net::Addr::parse(s);
    if (!a.is_loopback() && !g_allow_external)
        throw CLI::ValidationError(std::string(what) +
                                   ": non-loopback address requires --allow-external");
    return a;
}

std::shared_ptr<EventLog> make_log(const std::string& path, bool verbose) {
    auto log = std::make_shared<EventLog>();
    if (!path.empty()) log->open_file(path);
    if (verbose) log->set_echo(true);
    return log;
}

model::ModelParams read_model_params(double N, double Omega, double mu, double q,
                                     double beta, double alpha, double I0, int dict,
                                     int attempts) {
    model::ModelParams p;
    p.N = N;
    p.Omega = Omega;
    p.mu = mu;
    p.q = q >= 0 ? q : model::compute_q(dict, attempts);
    p.beta = beta;
    p.alpha = alpha;
    p.I0 = I0;
    return p;
}

int wait_for_interrupt() {
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_interrupted.load())
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"IP camera cloud protocol emulator and botnet propagation toolkit"};
    app.require_subcommand(1);
    app.add_flag("--allow-external", g_allow_external,
                 "permit sockets on non-loopback addresses");
    std::string log_path;
    bool verbose = false;
    app.add_option("--log", log_path, "mirror events to this JSON-lines file");
    app.add_flag("-v,--verbose", verbose, "echo events to stderr");

    // serve: both cloud services until interrupted.
    auto* serve = app.add_subcommand("serve", "run the registration and relay servers");
    std::string bind_ip = "127.0.0.1";
    uint16_t cmd_port = 8760, camera_port = 8765, controller_port = 8766;
    uint16_t relay_udp_port = 8761, relay_tcp_port = 8762;
    double lease_s = 25 * 60.0;
    serve->add_option("--bind", bind_ip, "bind address")->capture_default_str();
    serve->add_option("--cmd-port", cmd_port)->capture_default_str();
    serve->add_option("--camera-port", camera_port)->capture_default_str();
    serve->add_option("--controller-port", controller_port)->capture_default_str();
    serve->add_option("--relay-udp-port", relay_udp_port)->capture_default_str();
    serve->add_option("--relay-tcp-port", relay_tcp_port)->capture_default_str();
    serve->add_option("--lease-seconds", lease_s, "online lease window")
        ->capture_default_str();

    // camera: one emulated camera endpoint.
    auto* camera = app.add_subcommand("camera", "run an emulated camera endpoint");
    std::string cam_mac, cam_password = "1234", cmd_addr_s, camera_addr_s;
    double reregister_s = 120;
    camera->add_option("--mac", cam_mac, "12 hex chars")->required();
    camera->add_option("--password", cam_password)->capture_default_str();
    camera->add_option("--cmd-addr", cmd_addr_s, "registration command host:port")
        ->required();
    camera->add_option("--camera-addr", camera_addr_s, "registration camera host:port")
        ->required();
    camera->add_option("--interval", reregister_s, "re-registration period, seconds")
        ->capture_default_str();

    // controller: fetch one image.
    auto* controller = app.add_subcommand("controller", "fetch an image as a controller");
    std::string ctl_mac, ctl_password = "1234", controller_addr_s, image_out;
    controller->add_option("--mac", ctl_mac)->required();
    controller->add_option("--password", ctl_password)->capture_default_str();
    controller
        ->add_option("--controller-addr", controller_addr_s,
                     "registration controller host:port")
        ->required();
    controller->add_option("--out", image_out, "write the image here");

    // attack scan | brute | spoof.
    auto* attack_cmd = app.add_subcommand("attack", "run an attack against the servers");
    attack_cmd->require_subcommand(1);
    auto* scan = attack_cmd->add_subcommand("scan", "enumerate a MAC range");
    std::string scan_prefix, scan_from, scan_to, scan_controller_s;
    double scan_rate = 100;
    scan->add_option("--prefix", scan_prefix, "6 hex vendor prefix")->required();
    scan->add_option("--from", scan_from, "6 hex suffix, inclusive")->required();
    scan->add_option("--to", scan_to, "6 hex suffix, inclusive")->required();
    scan->add_option("--controller-addr", scan_controller_s)->required();
    scan->add_option("--rate", scan_rate, "probes per second")->capture_default_str();

    auto* brute = attack_cmd->add_subcommand("brute", "guess a camera password");
    std::string brute_mac, brute_space = "pin4", brute_controller_s;
    brute->add_option("--mac", brute_mac)->required();
    brute
        ->add_option("--space", brute_space,
                     "pinN for N-digit PINs, or wordlist:FILE")
        ->capture_default_str();
    brute->add_option("--controller-addr", brute_controller_s)->required();

    auto* spoof = attack_cmd->add_subcommand("spoof", "capture credentials by spoofing");
    std::string spoof_mac, spoof_cmd_s, spoof_camera_s;
    double spoof_interval_s = 10, spoof_deadline_s = 0;
    spoof->add_option("--mac", spoof_mac, "victim MAC")->required();
    spoof->add_option("--cmd-addr", spoof_cmd_s)->required();
    spoof->add_option("--camera-addr", spoof_camera_s)->required();
    spoof->add_option("--interval", spoof_interval_s, "re-registration period, seconds")
        ->capture_default_str();
    spoof->add_option("--deadline", spoof_deadline_s, "give up after, seconds (0: never)")
        ->capture_default_str();

    // sim run.
    auto* sim = app.add_subcommand("sim", "discrete-event propagation simulation");
    auto* sim_run = sim->add_subcommand("run", "run an ensemble and write a curve CSV");
    uint64_t sim_total = 65536, sim_seed = 1;
    uint32_t sim_seeds = 1, sim_dict = 62, sim_attempts = 10, sim_bots = 1;
    double sim_open_frac = 6325.0 / 65536.0, sim_vuln_frac = 1270.0 / 6325.0;
    double sim_stop_frac = 0.99, sim_max_time_s = 600;
    double sim_alpha = 0, sim_beta = 0;
    std::string sim_congestion = "none", sim_out = "curve.csv";
    sim_run->add_option("--total", sim_total, "address-space size")->capture_default_str();
    sim_run->add_option("--open-fraction", sim_open_frac)->capture_default_str();
    sim_run->add_option("--vuln-fraction", sim_vuln_frac, "fraction of open devices")
        ->capture_default_str();
    sim_run->add_option("--dict", sim_dict)->capture_default_str();
    sim_run->add_option("--attempts", sim_attempts)->capture_default_str();
    sim_run->add_option("--initial-bots", sim_bots)->capture_default_str();
    sim_run->add_option("--seed", sim_seed)->capture_default_str();
    sim_run->add_option("--seeds", sim_seeds, "ensemble size")->capture_default_str();
    sim_run->add_option("--stop-fraction", sim_stop_frac)->capture_default_str();
    sim_run->add_option("--max-time", sim_max_time_s, "seconds")->capture_default_str();
    sim_run->add_option("--congestion", sim_congestion, "none | rate-scaling")
        ->capture_default_str();
    sim_run->add_option("--alpha", sim_alpha)->capture_default_str();
    sim_run->add_option("--beta", sim_beta)->capture_default_str();
    sim_run->add_option("--out", sim_out)->capture_default_str();

    // model integrate | fit.
    auto* model_cmd = app.add_subcommand("model", "infection-rate ODE models");
    model_cmd->require_subcommand(1);
    double m_N = 110000, m_Omega = 3417112576.0, m_mu = 27, m_q = -1;
    double m_beta = 0, m_alpha = 0, m_I0 = 1;
    int m_dict = 62, m_attempts = 10;
    auto add_model_params = [&](CLI::App* cmd) {
        cmd->add_option("--N", m_N, "vulnerable devices")->capture_default_str();
        cmd->add_option("--Omega", m_Omega, "address-space size")->capture_default_str();
        cmd->add_option("--mu", m_mu, "probes per second per bot")->capture_default_str();
        cmd->add_option("--q", m_q, "credential success probability (-1: from dict)")
            ->capture_default_str();
        cmd->add_option("--beta", m_beta)->capture_default_str();
        cmd->add_option("--alpha", m_alpha)->capture_default_str();
        cmd->add_option("--I0", m_I0)->capture_default_str();
        cmd->add_option("--dict", m_dict)->capture_default_str();
        cmd->add_option("--attempts", m_attempts)->capture_default_str();
    };
    auto* integrate_cmd = model_cmd->add_subcommand("integrate", "integrate and write CSV");
    add_model_params(integrate_cmd);
    double m_t_end_s = 48 * 3600.0, m_step_s = 0, m_sample_s = 0;
    std::string model_out = "model.csv";
    integrate_cmd->add_option("--t-end", m_t_end_s, "seconds")->capture_default_str();
    integrate_cmd->add_option("--step", m_step_s, "seconds (0: t_end/100000)")
        ->capture_default_str();
    integrate_cmd->add_option("--sample", m_sample_s, "seconds (0: t_end/2000)")
        ->capture_default_str();
    integrate_cmd->add_option("--out", model_out)->capture_default_str();

    auto* fit_cmd = model_cmd->add_subcommand("fit", "fit free parameters to a curve");
    add_model_params(fit_cmd);
    std::string fit_observed, fit_free = "mu";
    fit_cmd->add_option("--observed", fit_observed, "CSV t_seconds,infected")->required();
    fit_cmd->add_option("--free", fit_free, "comma list of mu,beta,alpha,q")
        ->capture_default_str();

    // scenario run | validate.
    auto* scenario_cmd = app.add_subcommand("scenario", "named experiment files");
    scenario_cmd->require_subcommand(1);
    auto* scenario_run = scenario_cmd->add_subcommand("run", "execute a scenario file");
    auto* scenario_validate =
        scenario_cmd->add_subcommand("validate", "check a scenario file");
    std::string scenario_path, scenario_out_dir;
    scenario_run->add_option("file", scenario_path, "scenario file")->required();
    scenario_run->add_option("--output-dir", scenario_out_dir,
                             "overrides the file's output_dir");
    std::string validate_path;
    scenario_validate->add_option("file", validate_path, "scenario file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*serve) {
            uint32_t ip = net::Addr::parse_ip(bind_ip);
            if ((ip >> 24) != 127 && !g_allow_external) {
                std::cerr << "refusing non-loopback bind without --allow-external\n";
                return 2;
            }
            cloud::CloudHarness::Options opts;
            opts.bind_ip = ip;
            opts.cmd_port = cmd_port;
            opts.camera_port = camera_port;
            opts.controller_port = controller_port;
            opts.relay_udp_port = relay_udp_port;
            opts.relay_tcp_port = relay_tcp_port;
            opts.lease_seconds = lease_s;
            auto h = cloud::CloudHarness::start(opts);
            if (!log_path.empty()) h.log->open_file(log_path);
            h.log->set_echo(verbose);
            std::cout << "registration cmd " << h.registration->cmd_addr().to_string()
                      << " camera " << h.registration->camera_addr().to_string()
                      << " controller " << h.registration->controller_addr().to_string()
                      << "\nrelay udp " << h.relay->udp_addr().to_string() << " tcp "
                      << h.relay->tcp_addr().to_string() << std::endl;
            wait_for_interrupt();
            h.stop();
            return 0;
        }
        if (*camera) {
            endpoint::Camera::Config cfg;
            cfg.identity.mac = cam_mac;
            cfg.identity.password = cam_password;
            cfg.identity.validate();
            cfg.servers.registration_cmd = parse_addr(cmd_addr_s, "--cmd-addr");
            cfg.servers.registration_camera = parse_addr(camera_addr_s, "--camera-addr");
            cfg.reregister_interval =
                net::Millis{static_cast<int64_t>(reregister_s * 1000)};
            endpoint::Camera cam(cfg, make_log(log_path, verbose));
            cam.start();
            std::cout << "camera " << cam_mac << " running" << std::endl;
            wait_for_interrupt();
            cam.stop();
            return 0;
        }
        if (*controller) {
            endpoint::ControllerConfig cfg;
            cfg.target_mac = ctl_mac;
            cfg.password = ctl_password;
            cfg.registration_controller =
                parse_addr(controller_addr_s, "--controller-addr");
            auto res = endpoint::controller_fetch_image(cfg, make_log(log_path, verbose));
            switch (res.status) {
                case endpoint::FetchStatus::Ok: {
                    if (!image_out.empty()) {
                        std::ofstream out(image_out, std::ios::binary);
                        out.write(res.image.data(),
                                  static_cast<std::streamsize>(res.image.size()));
                    }
                    std::cout << "image " << res.image.size() << " bytes" << std::endl;
                    return 0;
                }
                case endpoint::FetchStatus::CameraOffline:
                    std::cerr << "camera offline\n";
                    return 1;
                case endpoint::FetchStatus::AuthFailure:
                    std::cerr << "authorization failed\n";
                    return 1;
                default:
                    std::cerr << "fetch failed: " << res.error << "\n";
                    return 1;
            }
        }
        if (*scan) {
            attack::ScanRange range{scan_prefix, scan_from, scan_to};
            range.validate();
            attack::ScanOptions opts;
            opts.registration_controller = parse_addr(scan_controller_s, "--controller-addr");
            opts.probes_per_second = scan_rate;
            auto results =
                attack::scan_devices(range, opts, make_log(log_path, verbose));
            size_t online = 0;
            for (const auto& r : results) {
                const char* o = r.outcome == attack::ProbeOutcome::Online    ? "online"
                                : r.outcome == attack::ProbeOutcome::Offline ? "offline"
                                                                             : "unknown";
                if (r.outcome == attack::ProbeOutcome::Online) ++online;
                std::cout << r.mac << " " << o << "\n";
            }
            std::cout << online << "/" << results.size() << " online" << std::endl;
            return 0;
        }
        if (*brute) {
            attack::CandidateSpace space;
            if (brute_space.rfind("pin", 0) == 0)
                space = attack::pin_space(std::stoi(brute_space.substr(3)));
            else if (brute_space.rfind("wordlist:", 0) == 0)
                space = attack::wordlist_file_space(brute_space.substr(9));
            else {
                std::cerr << "unknown --space: " << brute_space << "\n";
                return 2;
            }
            attack::BruteOptions opts;
            opts.registration_controller =
                parse_addr(brute_controller_s, "--controller-addr");
            auto res = attack::brute_force(brute_mac, std::move(space), opts,
                                           make_log(log_path, verbose));
            if (res.found) {
                std::cout << "password " << res.password << " after " << res.attempts
                          << " attempts" << std::endl;
                return 0;
            }
            std::cerr << "exhausted after " << res.attempts << " attempts\n";
            return 1;
        }
        if (*spoof) {
            attack::SpoofOptions opts;
            opts.registration_cmd = parse_addr(spoof_cmd_s, "--cmd-addr");
            opts.registration_camera = parse_addr(spoof_camera_s, "--camera-addr");
            opts.register_interval =
                net::Millis{static_cast<int64_t>(spoof_interval_s * 1000)};
            opts.deadline = net::Millis{static_cast<int64_t>(spoof_deadline_s * 1000)};
            auto cap = attack::spoof_device(spoof_mac, opts, make_log(log_path, verbose));
            if (cap) {
                std::cout << "captured " << cap->username << ":" << cap->password
                          << " for " << cap->mac << std::endl;
                return 0;
            }
            std::cerr << "no credentials captured\n";
            return 1;
        }
        if (*sim_run) {
            botsim::SimConfig cfg;
            cfg.population.total_addresses = sim_total;
            cfg.population.open_telnet_fraction = sim_open_frac;
            cfg.population.vulnerable_fraction_of_open = sim_vuln_frac;
            cfg.population.dictionary_size = sim_dict;
            cfg.population.seed = sim_seed;
            cfg.bot.attempt_limit = sim_attempts;
            cfg.initial_bots = sim_bots;
            cfg.stop.fraction = sim_stop_frac;
            cfg.stop.max_time_ms = static_cast<int64_t>(sim_max_time_s * 1000);
            if (sim_congestion == "rate-scaling")
                cfg.congestion = botsim::CongestionModel::rate_scaling(sim_alpha, sim_beta);
            else if (sim_congestion != "none") {
                std::cerr << "unknown --congestion: " << sim_congestion << "\n";
                return 2;
            }
            auto ens = botsim::run_ensemble(cfg, sim_seeds,
                                            sim_stop_frac > 0 ? sim_stop_frac : 0.99);
            botsim::write_ensemble_csv(sim_out, ens);
            if (ens.mean_time_to_fraction)
                std::cout << "mean time to stop fraction: " << *ens.mean_time_to_fraction
                          << " s" << std::endl;
            std::cout << "final mean infected: " << ens.mean_infected.back() << "\n"
                      << "wrote " << sim_out << std::endl;
            return 0;
        }
        if (*integrate_cmd) {
            model::ModelParams p = read_model_params(m_N, m_Omega, m_mu, m_q, m_beta,
                                                     m_alpha, m_I0, m_dict, m_attempts);
            double step = m_step_s > 0 ? m_step_s : m_t_end_s / 100000.0;
            double sample = m_sample_s > 0 ? m_sample_s : m_t_end_s / 2000.0;
            auto curve =
                model::integrate(model::rhs_congested, p, {m_t_end_s, step, sample});
            model::write_curve_csv(model_out, curve);
            std::cout << "final infected: " << curve.final_infected() << "\nwrote "
                      << model_out << std::endl;
            return 0;
        }
        if (*fit_cmd) {
            model::ModelParams known = read_model_params(
                m_N, m_Omega, m_mu, m_q, m_beta, m_alpha, m_I0, m_dict, m_attempts);
            if (known.q < 0) known.q = model::compute_q(m_dict, m_attempts);
            model::FitOptions opts;
            std::stringstream ss(fit_free);
            std::string tok;
            while (std::getline(ss, tok, ',')) {
                if (tok == "mu") opts.free.push_back(model::FreeParam::Mu);
                else if (tok == "beta") opts.free.push_back(model::FreeParam::Beta);
                else if (tok == "alpha") opts.free.push_back(model::FreeParam::Alpha);
                else if (tok == "q") opts.free.push_back(model::FreeParam::Q);
                else {
                    std::cerr << "unknown free parameter: " << tok << "\n";
                    return 2;
                }
            }
            auto observed = model::read_curve_csv(fit_observed);
            auto fit = model::fit_params(observed, known, opts);
            std::printf("mu=%.6g q=%.6g beta=%.6g alpha=%.6g sse=%.6g\n", fit.params.mu,
                        fit.params.q, fit.params.beta, fit.params.alpha, fit.residual);
            return 0;
        }
        if (*scenario_run) {
            harness::Scenario s = harness::Scenario::parse_file(scenario_path);
            // Default output directory: --output-dir, then the scenario file,
            // then $IOTEMU_OUTPUT_DIR, then the working directory.
            if (const char* env = std::getenv("IOTEMU_OUTPUT_DIR");
                env && *env && s.output_dir == ".")
                s.output_dir = env;
            if (!scenario_out_dir.empty()) s.output_dir = scenario_out_dir;
            auto violations = harness::validate_scenario(s);
            if (!violations.empty()) {
                for (const auto& v : violations)
                    std::cerr << "invalid: " << v << "\n";
                return 2;
            }
            auto report = harness::run_scenario(s);
            std::cout << report.to_json().dump(2) << std::endl;
            return report.ok ? 0 : 1;
        }
        if (*scenario_validate) {
            harness::Scenario s = harness::Scenario::parse_file(validate_path);
            auto violations = harness::validate_scenario(s);
            if (violations.empty()) {
                std::cout << "ok" << std::endl;
                return 0;
            }
            for (const auto& v : violations) std::cout << "invalid: " << v << "\n";
            return 2;
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    return 2;
}
