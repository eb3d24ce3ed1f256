#include "iotemu/controller.hpp"

#include <chrono>

#include "iotemu/camera.hpp"

namespace iotemu::endpoint {

using net::Addr;
using net::Millis;
using wire::WireMessage;

std::string make_relay_id(const std::string& mac) {
    auto now = std::chrono::duration_cast<std::chrono::microseconds>(
                   std::chrono::system_clock::now().time_since_epoch())
                   .count();
    return mac + "-" + std::to_string(now);
}

ControllerSession::ControllerSession(ControllerConfig cfg, std::shared_ptr<EventLog> log)
    : cfg_(std::move(cfg)),
      log_(std::move(log)),
      udp_(Addr::loopback(0)),
      rng_(std::random_device{}()) {}

std::optional<DiscoveryResult> ControllerSession::discover() {
    WireMessage hello = WireMessage::code(3000);
    hello.add("mac", cfg_.target_mac);
    udp_.send_to(wire::encode(hello, rng_()), cfg_.registration_controller);

    Addr local = udp_.local_addr();
    WireMessage query = WireMessage::code(2030);
    query.add("mac", cfg_.target_mac)
        .add("lan_ip", local.ip_string())
        .add("lan_port", std::to_string(local.port))
        .add("fw", "1.0.0")
        .add("relay_id", make_relay_id(cfg_.target_mac));
    udp_.send_to(wire::encode(query, rng_()), cfg_.registration_controller);

    auto deadline = std::chrono::steady_clock::now() + cfg_.udp_timeout;
    while (std::chrono::steady_clock::now() < deadline) {
        auto got = udp_.recv_from(Millis{20});
        if (!got) continue;
        try {
            WireMessage msg = wire::decode(got->first);
            if (msg.is_code(5000)) return std::nullopt;
            if (msg.is_code(2040)) {
                DiscoveryResult r;
                r.camera = Addr{Addr::parse_ip(msg.get("camera_ip")),
                                static_cast<uint16_t>(std::stoi(msg.get("camera_port")))};
                r.relay_tcp = Addr{Addr::parse_ip(msg.get("relay_ip")),
                                   static_cast<uint16_t>(std::stoi(msg.get("relay_port")))};
                r.relay_id = msg.get("relay_id");
                r.model = msg.get("model");
                r.alias = msg.get("alias");
                r.firmware = msg.get("fw");
                discovery_ = r;
                return r;
            }
        } catch (const wire::WireError&) {
        }
    }
    throw net::NetError("discovery timed out");
}

void ControllerSession::open_relay() {
    if (!discovery_) throw std::logic_error("open_relay before successful discover");
    // The direct-UDP path is modeled as always failing; go straight to TCP.
    relay_ = net::TcpSocket::connect(discovery_->relay_tcp, Millis{2000});
    WireMessage attach = WireMessage::code(7000);
    attach.add("mac", cfg_.target_mac)
        .add("relay_id", discovery_->relay_id)
        .add("role", "controller");
    relay_.send_frame(wire::encode(attach, rng_()));
}

FetchResult ControllerSession::request(const std::string& url,
                                       const std::string& username,
                                       const std::string& password) {
    if (!relay_.valid()) return {FetchStatus::ProtocolError, "", "relay not open"};
    WireMessage req = WireMessage::code(7010);
    req.add("url", url).add("auth", wire::encode_auth(username, password));
    try {
        relay_.send_frame(wire::encode(req, rng_()));
        auto frame = relay_.recv_frame(cfg_.relay_timeout);
        if (!frame) return {FetchStatus::RelayTimeout, "", "no response over relay"};
        WireMessage resp = wire::decode(*frame);
        const std::string& status = resp.get("status");
        if (status == "ok") {
            std::string image;
            if (const std::string* b64 = resp.find("image"))
                image = wire::base64_decode(*b64);
            return {FetchStatus::Ok, image, ""};
        }
        if (status == "auth_failure") return {FetchStatus::AuthFailure, "", ""};
        return {FetchStatus::ProtocolError, "", "status=" + status};
    } catch (const std::exception& e) {
        return {FetchStatus::ProtocolError, "", e.what()};
    }
}

void ControllerSession::close() {
    if (relay_.valid()) relay_.shutdown();
}

FetchResult controller_fetch_image(const ControllerConfig& cfg,
                                   std::shared_ptr<EventLog> log) {
    ControllerSession session(cfg, log);
    try {
        auto disc = session.discover();
        if (!disc) {
            log->emit("controller", "camera_offline", {{"mac", cfg.target_mac}});
            return {FetchStatus::CameraOffline, "", ""};
        }
        session.open_relay();
        auto result = session.request(kImageUrl, CameraIdentity::kUsername, cfg.password);
        session.close();
        log->emit("controller", "fetch",
                  {{"mac", cfg.target_mac}, {"status", static_cast<int>(result.status)}});
        return result;
    } catch (const std::exception& e) {
        return {FetchStatus::ProtocolError, "", e.what()};
    }
}

}  // namespace iotemu::endpoint
