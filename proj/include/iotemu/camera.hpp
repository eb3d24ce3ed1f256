#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "iotemu/event_log.hpp"
#include "iotemu/net.hpp"
#include "iotemu/wire.hpp"

namespace iotemu::endpoint {

// Identity of one emulated camera. The username is hardcoded; only the
// password is user-settable (1..63 chars).
struct CameraIdentity {
    std::string mac;
    std::string password = "1234";
    std::string alias = "cam";
    std::string model = "IC-3116W";
    std::string firmware = "1.0.0";
    std::string serial = "0000000000";

    static constexpr const char* kUsername = "admin";
    static constexpr size_t kMaxPasswordLen = 63;

    void validate() const;  // throws std::invalid_argument
};

struct ServerAddrs {
    net::Addr registration_cmd;
    net::Addr registration_camera;  // code 3000/1010 port
};

// Fixed JPEG test fixture served for /mobile.jpg.
const std::string& image_fixture();

constexpr const char* kImageUrl = "/mobile.jpg";
constexpr const char* kTelnetCgiUrl = "/camera-cgi/private/telnetd.cgi?action=start";

// Pure request handler: checks the auth field, then routes on the url field.
// Used by the camera endpoint and directly unit-testable.
struct RequestContext {
    bool telnet_started = false;
};
wire::WireMessage handle_request(const CameraIdentity& id,
                                 const wire::WireMessage& req,
                                 RequestContext& ctx);

// Long-running camera endpoint: registers with the cloud, repeats the
// registration on a timer, reacts to 2020 forwards by opening a relay
// connection, and answers relayed requests. Starting the telnet CGI spins up
// a minimal line-based telnet login on an ephemeral port.
class Camera {
public:
    struct Config {
        CameraIdentity identity;
        ServerAddrs servers;
        net::Millis reregister_interval{20 * 60 * 1000};
        net::Millis udp_timeout{1000};
        net::Millis relay_read_timeout{30'000};
        net::Millis backoff_cap{60'000};
    };

    Camera(Config cfg, std::shared_ptr<EventLog> log);
    ~Camera();

    void start();
    void stop();

    bool telnet_started() const;
    std::optional<net::Addr> telnet_addr() const;
    size_t registration_count() const { return registrations_.load(); }
    bool registered_once() const { return registrations_.load() > 0; }

private:
    void run();
    bool register_once(net::UdpSocket& sock);
    void handle_2020(const wire::WireMessage& fwd);
    void relay_session(net::Addr relay_tcp, std::string relay_id);
    void start_telnet();
    void telnet_loop();

    Config cfg_;
    std::shared_ptr<EventLog> log_;
    std::atomic<bool> stop_{false};
    std::atomic<size_t> registrations_{0};
    std::thread thread_;
    std::mutex relay_mu_;
    std::vector<std::thread> relay_threads_;
    mutable std::mutex telnet_mu_;
    RequestContext ctx_;
    std::unique_ptr<net::TcpListener> telnet_listener_;
    std::thread telnet_thread_;
    std::mt19937_64 rng_{std::random_device{}()};
};

}  // namespace iotemu::endpoint
