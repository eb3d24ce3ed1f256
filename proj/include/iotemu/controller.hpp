#pragma once

#include <memory>
#include <optional>
#include <random>
#include <string>

#include "iotemu/event_log.hpp"
#include "iotemu/net.hpp"
#include "iotemu/wire.hpp"

namespace iotemu::endpoint {

struct ControllerConfig {
    std::string target_mac;
    std::string alias = "cam";
    std::string password;
    net::Addr registration_controller;  // code 3000/2030 port
    net::Millis udp_timeout{2000};
    net::Millis relay_timeout{3000};
};

enum class FetchStatus { Ok, CameraOffline, AuthFailure, RelayTimeout, ProtocolError };

struct FetchResult {
    FetchStatus status;
    std::string image;  // decoded bytes when status == Ok
    std::string error;
};

struct DiscoveryResult {
    net::Addr camera;
    net::Addr relay_tcp;
    std::string relay_id;
    std::string model, alias, firmware;
};

// One controller-side conversation: discovery (3000+2030) followed by a relay
// TCP session over which any number of requests can be issued. Every request
// re-sends the credentials.
class ControllerSession {
public:
    ControllerSession(ControllerConfig cfg, std::shared_ptr<EventLog> log);

    // STEP 5. Returns nullopt when the cloud answers 5000 (camera offline).
    std::optional<DiscoveryResult> discover();

    // STEP 6: attach to the relay using the discovered relay id.
    void open_relay();
    bool relay_open() const { return relay_.valid(); }

    // STEP 7-8 over the open relay session.
    FetchResult request(const std::string& url, const std::string& username,
                        const std::string& password);

    void close();

private:
    ControllerConfig cfg_;
    std::shared_ptr<EventLog> log_;
    net::UdpSocket udp_;
    std::optional<DiscoveryResult> discovery_;
    net::TcpSocket relay_;
    std::mt19937_64 rng_;
};

// End-to-end image fetch: discovery, relay attach, one authenticated request.
FetchResult controller_fetch_image(const ControllerConfig& cfg,
                                   std::shared_ptr<EventLog> log);

// Relay IDs are the camera MAC plus a timestamp.
std::string make_relay_id(const std::string& mac);

}  // namespace iotemu::endpoint
