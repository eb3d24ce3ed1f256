#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "iotemu/event_log.hpp"
#include "iotemu/net.hpp"
#include "iotemu/registry.hpp"
#include "iotemu/wire.hpp"

namespace iotemu::cloud {

// Relays bytes verbatim between a camera connection and a controller
// connection sharing the same (MAC, relay ID). Sends no acknowledgment to
// either side. The first frame on a connection identifies the session:
//   code 7000, fields mac, relay_id, role ("camera" | "controller").
class RelayServer {
public:
    struct Config {
        net::Addr udp_bind = net::Addr::loopback(0);
        net::Addr tcp_bind = net::Addr::loopback(0);
        net::Millis idle_timeout{60'000};
        size_t buffer_cap = 64 * 1024;  // bytes held for an unpaired side
    };

    RelayServer(Config cfg, std::shared_ptr<EventLog> log);
    ~RelayServer();

    void start();
    void stop();

    net::Addr udp_addr() const { return udp_sock_.local_addr(); }
    net::Addr tcp_addr() const { return listener_.local_addr(); }
    size_t open_sessions() const;

private:
    struct Session {
        std::shared_ptr<net::TcpSocket> camera;
        std::shared_ptr<net::TcpSocket> controller;
        std::string camera_buf;      // bytes from camera awaiting controller
        std::string controller_buf;  // bytes from controller awaiting camera
        std::mutex mu;
        bool dead = false;
    };

    void udp_loop();
    void accept_loop();
    void handle_connection(std::shared_ptr<net::TcpSocket> conn);
    void teardown(const std::string& key, std::shared_ptr<Session> s);

    Config cfg_;
    std::shared_ptr<EventLog> log_;
    net::UdpSocket udp_sock_;
    net::TcpListener listener_;
    std::atomic<bool> stop_{false};
    std::thread udp_thread_;
    std::thread accept_thread_;
    std::mutex conn_mu_;
    std::vector<std::thread> conn_threads_;
    mutable std::mutex sessions_mu_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::mt19937_64 rng_{std::random_device{}()};
};

// Tracks camera online status and brokers controller queries. Three UDP
// sockets: the command port (command values 1/2/10), the camera status port
// (codes 3000/1010/1020) and the controller status port (codes
// 3000/2030/2040/5000/2020-forward).
class RegistrationServer {
public:
    struct Config {
        net::Addr cmd_bind = net::Addr::loopback(0);
        net::Addr camera_bind = net::Addr::loopback(0);
        net::Addr controller_bind = net::Addr::loopback(0);
        double lease_seconds = 25 * 60.0;
        // Advertised command relay server addresses.
        net::Addr relay_udp;
        net::Addr relay_tcp;
    };

    RegistrationServer(Config cfg, std::shared_ptr<EventLog> log);
    ~RegistrationServer();

    void start();
    void stop();

    net::Addr cmd_addr() const { return cmd_sock_.local_addr(); }
    net::Addr camera_addr() const { return camera_sock_.local_addr(); }
    net::Addr controller_addr() const { return controller_sock_.local_addr(); }

    std::vector<DeviceSnapshot> registry_snapshot() const { return registry_.snapshot(); }
    const DeviceRegistry& registry() const { return registry_; }

private:
    void cmd_loop();
    void camera_loop();
    void controller_loop();
    void handle_cmd(net::UdpSocket& sock, const wire::WireMessage& msg, net::Addr src);
    void handle_camera(const wire::WireMessage& msg, net::Addr src);
    void handle_controller(const wire::WireMessage& msg, net::Addr src);
    void reply(net::UdpSocket& sock, const wire::WireMessage& msg, net::Addr dst);
    uint64_t rng_word();

    Config cfg_;
    std::shared_ptr<EventLog> log_;
    DeviceRegistry registry_;
    net::UdpSocket cmd_sock_;
    net::UdpSocket camera_sock_;
    net::UdpSocket controller_sock_;
    std::atomic<bool> stop_{false};
    std::thread cmd_thread_;
    std::thread camera_thread_;
    std::thread controller_thread_;
    std::mutex rng_mu_;
    std::mt19937_64 rng_{std::random_device{}()};
};

// Both cloud services on loopback with ephemeral ports, wired together.
struct CloudHarness {
    std::shared_ptr<EventLog> log;
    std::unique_ptr<RelayServer> relay;
    std::unique_ptr<RegistrationServer> registration;

    struct Options {
        double lease_seconds = 25 * 60.0;
        net::Millis relay_idle_timeout{60'000};
        uint16_t cmd_port = 0;
        uint16_t camera_port = 0;
        uint16_t controller_port = 0;
        uint16_t relay_udp_port = 0;
        uint16_t relay_tcp_port = 0;
        uint32_t bind_ip = 0x7f000001u;
    };

    static CloudHarness start(Options opts);
    static CloudHarness start() { return start(Options{}); }
    void stop();
};

}  // namespace iotemu::cloud
