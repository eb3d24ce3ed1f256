#include "iotemu/camera.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <stdexcept>

#include "iotemu/registry.hpp"

namespace iotemu::endpoint {

using net::Addr;
using net::Millis;
using wire::WireMessage;

void CameraIdentity::validate() const {
    if (!cloud::valid_mac(mac)) throw std::invalid_argument("mac must be 12 hex chars");
    if (password.empty() || password.size() > kMaxPasswordLen)
        throw std::invalid_argument("password must be 1..63 chars");
}

const std::string& image_fixture() {
    static const std::string fixture = [] {
        // Minimal JPEG-shaped byte fixture: SOI, JFIF APP0, payload, EOI.
        std::string s;
        const unsigned char head[] = {0xff, 0xd8, 0xff, 0xe0, 0x00, 0x10, 'J', 'F',
                                      'I',  'F',  0x00, 0x01, 0x01, 0x00, 0x00, 0x01,
                                      0x00, 0x01, 0x00, 0x00};
        s.assign(reinterpret_cast<const char*>(head), sizeof(head));
        for (int i = 0; i < 96; ++i) s += static_cast<char>((i * 37 + 11) & 0xff);
        s += static_cast<char>(0xff);
        s += static_cast<char>(0xd9);
        return s;
    }();
    return fixture;
}

WireMessage handle_request(const CameraIdentity& id, const WireMessage& req,
                           RequestContext& ctx) {
    WireMessage resp = WireMessage::code(7020);
    const std::string* url = req.find("url");
    const std::string* auth = req.find("auth");
    if (!url || !auth) {
        resp.add("status", "malformed");
        return resp;
    }
    bool ok = false;
    try {
        auto [user, pass] = wire::decode_auth(*auth);
        ok = user == CameraIdentity::kUsername && pass == id.password;
    } catch (const wire::WireError&) {
        ok = false;
    }
    if (!ok) {
        resp.add("status", "auth_failure");
        return resp;
    }
    if (*url == kImageUrl) {
        resp.add("status", "ok").add("image", wire::base64_encode(image_fixture()));
    } else if (*url == kTelnetCgiUrl) {
        ctx.telnet_started = true;
        resp.add("status", "ok").add("telnet", "started");
    } else {
        resp.add("status", "not_found");
    }
    return resp;
}

Camera::Camera(Config cfg, std::shared_ptr<EventLog> log)
    : cfg_(std::move(cfg)), log_(std::move(log)) {
    cfg_.identity.validate();
}

Camera::~Camera() { stop(); }

void Camera::start() {
    thread_ = std::thread([this] { run(); });
}

void Camera::stop() {
    if (stop_.exchange(true)) return;
    if (thread_.joinable()) thread_.join();
    std::vector<std::thread> relays;
    {
        std::lock_guard lock(relay_mu_);
        relays.swap(relay_threads_);
    }
    for (auto& t : relays)
        if (t.joinable()) t.join();
    if (telnet_thread_.joinable()) telnet_thread_.join();
}

bool Camera::telnet_started() const {
    std::lock_guard lock(telnet_mu_);
    return ctx_.telnet_started;
}

std::optional<Addr> Camera::telnet_addr() const {
    std::lock_guard lock(telnet_mu_);
    if (!telnet_listener_) return std::nullopt;
    return telnet_listener_->local_addr();
}

void Camera::run() {
    net::UdpSocket sock(Addr::loopback(0));
    auto next_register = std::chrono::steady_clock::now();
    Millis backoff{1000};
    while (!stop_) {
        auto now = std::chrono::steady_clock::now();
        if (now >= next_register) {
            if (register_once(sock)) {
                registrations_.fetch_add(1);
                next_register = now + cfg_.reregister_interval;
                backoff = Millis{1000};
            } else {
                next_register = now + backoff;
                backoff = std::min(backoff * 2, cfg_.backoff_cap);
                log_->emit("camera", "register_retry",
                           {{"mac", cfg_.identity.mac}, {"backoff_ms", backoff.count()}});
            }
        }
        auto got = sock.recv_from(Millis{50});
        if (!got) continue;
        try {
            WireMessage msg = wire::decode(got->first);
            if (msg.is_code(2020)) handle_2020(msg);
        } catch (const wire::WireError&) {
            // garbage datagram, ignore
        }
    }
}

// STEP 1-4 against the cloud; returns false on any missing reply.
bool Camera::register_once(net::UdpSocket& sock) {
    const auto& id = cfg_.identity;
    auto await_code = [&](int code) -> std::optional<WireMessage> {
        auto deadline = std::chrono::steady_clock::now() + cfg_.udp_timeout;
        while (std::chrono::steady_clock::now() < deadline && !stop_) {
            auto got = sock.recv_from(Millis{20});
            if (!got) continue;
            try {
                WireMessage msg = wire::decode(got->first);
                if (msg.is_code(2020)) {
                    handle_2020(msg);  // can interleave with registration replies
                    continue;
                }
                if ((code >= 1000 && msg.is_code(code)) ||
                    (code < 1000 && msg.is_command(code)))
                    return msg;
            } catch (const wire::WireError&) {
            }
        }
        return std::nullopt;
    };
    auto uuid = [&] { return "uuid-" + std::to_string(rng_()); };
    try {
        // STEP 1: register with the registration server, learn the relay addr.
        WireMessage hello = WireMessage::command(1);
        hello.add("id", uuid());
        sock.send_to(wire::encode(hello, rng_()), cfg_.servers.registration_cmd);
        auto rep = await_code(10);
        if (!rep) return false;
        Addr relay_udp{Addr::parse_ip(rep->get("relay_ip")),
                       static_cast<uint16_t>(std::stoi(rep->get("relay_port")))};
        // STEP 2: register with the command relay server.
        WireMessage hello2 = WireMessage::command(1);
        hello2.add("id", uuid());
        sock.send_to(wire::encode(hello2, rng_()), relay_udp);
        if (!await_code(10)) return false;
        // STEP 3: tell the registration server the relay registration is done.
        WireMessage done = WireMessage::command(2);
        done.add("id", uuid());
        sock.send_to(wire::encode(done, rng_()), cfg_.servers.registration_cmd);
        // STEP 4: online notice + camera info, expect 1020.
        WireMessage online = WireMessage::code(3000);
        online.add("mac", id.mac);
        sock.send_to(wire::encode(online, rng_()), cfg_.servers.registration_camera);
        Addr local = sock.local_addr();
        WireMessage info = WireMessage::code(1010);
        info.add("mac", id.mac)
            .add("model", id.model)
            .add("type", "camera")
            .add("alias", id.alias)
            .add("lan_ip", local.ip_string())
            .add("lan_port", std::to_string(local.port))
            .add("serial", id.serial)
            .add("fw", id.firmware)
            .add("status", "online");
        sock.send_to(wire::encode(info, rng_()), cfg_.servers.registration_camera);
        auto ack = await_code(1020);
        if (!ack) return false;
        log_->emit("camera", "registered", {{"mac", id.mac}});
        return true;
    } catch (const std::exception& e) {
        log_->emit("camera", "register_error", {{"mac", id.mac}, {"error", e.what()}});
        return false;
    }
}

void Camera::handle_2020(const WireMessage& fwd) {
    try {
        Addr relay_tcp{Addr::parse_ip(fwd.get("relay_ip")),
                       static_cast<uint16_t>(std::stoi(fwd.get("relay_port")))};
        std::string relay_id = fwd.get("relay_id");
        log_->emit("camera", "relay_invite",
                   {{"mac", cfg_.identity.mac}, {"relay_id", relay_id}});
        std::lock_guard lock(relay_mu_);
        relay_threads_.emplace_back(
            [this, relay_tcp, relay_id] { relay_session(relay_tcp, relay_id); });
    } catch (const std::exception& e) {
        log_->emit("camera", "bad_2020", {{"error", e.what()}});
    }
}

void Camera::relay_session(Addr relay_tcp, std::string relay_id) {
    try {
        auto conn = net::TcpSocket::connect(relay_tcp, Millis{2000});
        WireMessage attach = WireMessage::code(7000);
        attach.add("mac", cfg_.identity.mac).add("relay_id", relay_id).add("role", "camera");
        conn.send_frame(wire::encode(attach, rng_()));
        auto idle_deadline =
            std::chrono::steady_clock::now() + cfg_.relay_read_timeout;
        while (!stop_) {
            auto frame = conn.recv_frame(Millis{100});
            if (!frame) {
                if (std::chrono::steady_clock::now() > idle_deadline) break;
                continue;
            }
            idle_deadline = std::chrono::steady_clock::now() + cfg_.relay_read_timeout;
            WireMessage req = wire::decode(*frame);
            WireMessage resp;
            bool start_telnet_now = false;
            {
                std::lock_guard lock(telnet_mu_);
                bool before = ctx_.telnet_started;
                resp = handle_request(cfg_.identity, req, ctx_);
                start_telnet_now = !before && ctx_.telnet_started;
            }
            if (start_telnet_now) start_telnet();
            conn.send_frame(wire::encode(resp, rng_()));
            log_->emit("camera", "request_served",
                       {{"mac", cfg_.identity.mac},
                        {"url", req.find("url") ? *req.find("url") : ""},
                        {"status", resp.get("status")}});
        }
        conn.shutdown();
    } catch (const std::exception& e) {
        log_->emit("camera", "relay_error",
                   {{"mac", cfg_.identity.mac}, {"error", e.what()}});
    }
}

void Camera::start_telnet() {
    {
        std::lock_guard lock(telnet_mu_);
        if (telnet_listener_) return;
        telnet_listener_ = std::make_unique<net::TcpListener>(Addr::loopback(0));
    }
    log_->emit("camera", "telnet_started",
               {{"mac", cfg_.identity.mac}, {"addr", telnet_addr()->to_string()}});
    telnet_thread_ = std::thread([this] { telnet_loop(); });
}

namespace {
// Reads a CRLF/LF-terminated line, stripping the terminator.
std::optional<std::string> read_line(net::TcpSocket& conn, Millis timeout) {
    std::string line;
    auto deadline = std::chrono::steady_clock::now() + timeout;
    while (std::chrono::steady_clock::now() < deadline) {
        auto data = conn.recv_some(1, Millis{50});
        if (!data) continue;
        if (data->empty()) return std::nullopt;
        char c = (*data)[0];
        if (c == '\n') {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            return line;
        }
        line += c;
    }
    return std::nullopt;
}
}  // namespace

void Camera::telnet_loop() {
    // Fixed telnet credentials, independent of the camera password.
    constexpr const char* kUser = "admin";
    constexpr const char* kPass = "1234";
    while (!stop_) {
        std::optional<net::TcpSocket> conn;
        {
            std::lock_guard lock(telnet_mu_);
            if (!telnet_listener_) return;
        }
        conn = telnet_listener_->accept(Millis{100});
        if (!conn) continue;
        try {
            conn->send_all("login: ");
            auto user = read_line(*conn, Millis{5000});
            if (!user) continue;
            conn->send_all("Password: ");
            auto pass = read_line(*conn, Millis{5000});
            if (!pass) continue;
            if (*user == kUser && *pass == kPass) {
                conn->send_all("Welcome\n# ");
                // Echo shell until the client goes away.
                while (!stop_) {
                    auto line = read_line(*conn, Millis{5000});
                    if (!line) break;
                    conn->send_all(*line + "\n# ");
                }
            } else {
                conn->send_all("Login incorrect\n");
            }
        } catch (const net::NetError&) {
        }
    }
}

}  // namespace iotemu::endpoint
