#include "iotemu/cloud_servers.hpp"

namespace iotemu::cloud {

using net::Addr;
using net::Millis;
using wire::WireMessage;

namespace {
constexpr Millis kPollSlice{100};

std::string session_key(const std::string& mac, const std::string& relay_id) {
    return mac + "|" + relay_id;
}
}  // namespace

// ---------------------------------------------------------------------------
// RelayServer

RelayServer::RelayServer(Config cfg, std::shared_ptr<EventLog> log)
    : cfg_(cfg),
      log_(std::move(log)),
      udp_sock_(cfg.udp_bind),
      listener_(cfg.tcp_bind) {}

RelayServer::~RelayServer() { stop(); }

void RelayServer::start() {
    udp_thread_ = std::thread([this] { udp_loop(); });
    accept_thread_ = std::thread([this] { accept_loop(); });
}

void RelayServer::stop() {
    if (stop_.exchange(true)) return;
    {
        std::lock_guard lock(sessions_mu_);
        for (auto& [key, s] : sessions_) {
            std::lock_guard slock(s->mu);
            s->dead = true;
            if (s->camera) s->camera->shutdown();
            if (s->controller) s->controller->shutdown();
        }
        sessions_.clear();
    }
    if (udp_thread_.joinable()) udp_thread_.join();
    if (accept_thread_.joinable()) accept_thread_.join();
    std::vector<std::thread> threads;
    {
        std::lock_guard lock(conn_mu_);
        threads.swap(conn_threads_);
    }
    for (auto& t : threads)
        if (t.joinable()) t.join();
}

size_t RelayServer::open_sessions() const {
    std::lock_guard lock(sessions_mu_);
    return sessions_.size();
}

void RelayServer::udp_loop() {
    while (!stop_) {
        auto got = udp_sock_.recv_from(kPollSlice);
        if (!got) continue;
        try {
            WireMessage msg = wire::decode(got->first);
            if (msg.is_command(1)) {
                Addr self = udp_addr();
                WireMessage rep = WireMessage::command(10);
                rep.add("id", msg.get("id"))
                    .add("peer_ip", got->second.ip_string())
                    .add("peer_port", std::to_string(got->second.port))
                    .add("relay_ip", self.ip_string())
                    .add("relay_port", std::to_string(self.port));
                udp_sock_.send_to(wire::encode(rep, rng_()), got->second);
                log_->emit("relay", "udp_register", {{"src", got->second.to_string()}});
            } else {
                log_->emit("relay", "udp_unknown",
                           {{"src", got->second.to_string()}, {"value", msg.value}});
            }
        } catch (const wire::WireError& e) {
            log_->emit("relay", "udp_dropped", {{"error", e.what()}});
        }
    }
}

void RelayServer::accept_loop() {
    while (!stop_) {
        auto conn = listener_.accept(kPollSlice);
        if (!conn) continue;
        auto shared = std::make_shared<net::TcpSocket>(std::move(*conn));
        std::lock_guard lock(conn_mu_);
        conn_threads_.emplace_back([this, shared] { handle_connection(shared); });
    }
}

void RelayServer::handle_connection(std::shared_ptr<net::TcpSocket> conn) {
    std::string key;
    std::shared_ptr<Session> session;
    bool is_camera = false;
    try {
        auto first = conn->recv_frame(Millis{10'000});
        if (!first) return;  // attach deadline
        WireMessage msg = wire::decode(*first);
        if (!msg.is_code(7000)) throw wire::WireError("expected attach code 7000");
        const std::string& mac = msg.get("mac");
        const std::string& relay_id = msg.get("relay_id");
        const std::string& role = msg.get("role");
        if (role != "camera" && role != "controller")
            throw wire::WireError("unknown role: " + role);
        if (relay_id.rfind(mac, 0) != 0)
            throw wire::WireError("relay_id does not begin with mac");
        is_camera = role == "camera";
        key = session_key(mac, relay_id);
        {
            std::lock_guard lock(sessions_mu_);
            auto it = sessions_.find(key);
            if (it == sessions_.end()) {
                session = std::make_shared<Session>();
                sessions_[key] = session;
            } else {
                session = it->second;
            }
        }
        {
            std::lock_guard slock(session->mu);
            auto& slot = is_camera ? session->camera : session->controller;
            if (slot || session->dead) {
                log_->emit("relay", "attach_rejected", {{"key", key}, {"role", role}});
                conn->shutdown();
                return;
            }
            slot = conn;
            // Bytes the peer sent before we attached; delivered under the lock
            // so they cannot be reordered with fresh peer data.
            auto& backlog = is_camera ? session->controller_buf : session->camera_buf;
            if (!backlog.empty()) {
                conn->send_all(backlog);
                backlog.clear();
            }
        }
        log_->emit("relay", "attach", {{"key", key}, {"role", role}});
    } catch (const std::exception& e) {
        log_->emit("relay", "attach_failed", {{"error", e.what()}});
        conn->shutdown();
        return;
    }

    // Verbatim pipe: everything read from this side goes to the peer.
    Millis idle{0};
    try {
        while (!stop_) {
            auto data = conn->recv_some(64 * 1024, kPollSlice);
            if (!data) {
                idle += kPollSlice;
                if (idle >= cfg_.idle_timeout) break;
                std::lock_guard slock(session->mu);
                if (session->dead) break;
                continue;
            }
            idle = Millis{0};
            if (data->empty()) break;  // peer closed
            std::shared_ptr<net::TcpSocket> peer;
            {
                std::lock_guard slock(session->mu);
                if (session->dead) break;
                peer = is_camera ? session->controller : session->camera;
                if (!peer) {
                    auto& backlog = is_camera ? session->camera_buf : session->controller_buf;
                    if (backlog.size() + data->size() <= cfg_.buffer_cap)
                        backlog += *data;
                    else
                        log_->emit("relay", "buffer_overflow", {{"key", key}});
                    continue;
                }
            }
            peer->send_all(*data);
        }
    } catch (const net::NetError&) {
        // peer reset or shut down; fall through to teardown
    }
    teardown(key, session);
}

void RelayServer::teardown(const std::string& key, std::shared_ptr<Session> s) {
    {
        std::lock_guard lock(sessions_mu_);
        sessions_.erase(key);
    }
    bool was_dead;
    {
        std::lock_guard slock(s->mu);
        was_dead = s->dead;
        s->dead = true;
        if (s->camera) s->camera->shutdown();
        if (s->controller) s->controller->shutdown();
    }
    if (!was_dead) log_->emit("relay", "session_closed", {{"key", key}});
}

// ---------------------------------------------------------------------------
// RegistrationServer

RegistrationServer::RegistrationServer(Config cfg, std::shared_ptr<EventLog> log)
    : cfg_(cfg),
      log_(std::move(log)),
      registry_(cfg.lease_seconds),
      cmd_sock_(cfg.cmd_bind),
      camera_sock_(cfg.camera_bind),
      controller_sock_(cfg.controller_bind) {}

RegistrationServer::~RegistrationServer() { stop(); }

void RegistrationServer::start() {
    cmd_thread_ = std::thread([this] { cmd_loop(); });
    camera_thread_ = std::thread([this] { camera_loop(); });
    controller_thread_ = std::thread([this] { controller_loop(); });
}

void RegistrationServer::stop() {
    if (stop_.exchange(true)) return;
    if (cmd_thread_.joinable()) cmd_thread_.join();
    if (camera_thread_.joinable()) camera_thread_.join();
    if (controller_thread_.joinable()) controller_thread_.join();
}

uint64_t RegistrationServer::rng_word() {
    std::lock_guard lock(rng_mu_);
    return rng_();
}

void RegistrationServer::reply(net::UdpSocket& sock, const WireMessage& msg, Addr dst) {
    sock.send_to(wire::encode(msg, rng_word()), dst);
}

void RegistrationServer::cmd_loop() {
    while (!stop_) {
        auto got = cmd_sock_.recv_from(kPollSlice);
        if (!got) continue;
        try {
            handle_cmd(cmd_sock_, wire::decode(got->first), got->second);
        } catch (const wire::WireError& e) {
            log_->emit("registration", "dropped", {{"error", e.what()}});
        }
    }
}

void RegistrationServer::handle_cmd(net::UdpSocket& sock, const WireMessage& msg, Addr src) {
    if (msg.is_command(1)) {
        WireMessage rep = WireMessage::command(10);
        rep.add("id", msg.get("id"))
            .add("peer_ip", src.ip_string())
            .add("peer_port", std::to_string(src.port))
            .add("relay_ip", cfg_.relay_udp.ip_string())
            .add("relay_port", std::to_string(cfg_.relay_udp.port));
        reply(sock, rep, src);
        log_->emit("registration", "cmd1", {{"src", src.to_string()}});
    } else if (msg.is_command(2)) {
        // Registered-with-relay notice; the MAC only arrives later in the 1010,
        // so this is recorded as an event and no reply is sent.
        log_->emit("registration", "cmd2", {{"src", src.to_string()}});
    } else {
        log_->emit("registration", "unknown_cmd",
                   {{"src", src.to_string()}, {"value", msg.value}});
    }
}

void RegistrationServer::camera_loop() {
    while (!stop_) {
        auto got = camera_sock_.recv_from(kPollSlice);
        if (!got) continue;
        try {
            handle_camera(wire::decode(got->first), got->second);
        } catch (const wire::WireError& e) {
            log_->emit("registration", "dropped", {{"error", e.what()}});
        }
    }
}

void RegistrationServer::handle_camera(const WireMessage& msg, Addr src) {
    if (msg.is_code(3000)) {
        log_->emit("registration", "pending_online", {{"src", src.to_string()}});
        return;
    }
    if (msg.is_code(1010)) {
        DeviceRecord rec;
        rec.mac = msg.get("mac");
        if (!valid_mac(rec.mac)) throw wire::WireError("bad mac: " + rec.mac);
        rec.wan_addr = src;
        if (auto* v = msg.find("lan_ip"))
            rec.lan_addr = Addr{Addr::parse_ip(*v),
                                static_cast<uint16_t>(std::stoi(msg.get("lan_port")))};
        if (auto* v = msg.find("model")) rec.model = *v;
        if (auto* v = msg.find("type")) rec.type = *v;
        if (auto* v = msg.find("alias")) rec.alias = *v;
        if (auto* v = msg.find("fw")) rec.firmware = *v;
        if (auto* v = msg.find("serial")) rec.serial = *v;
        rec.last_seen = DeviceRegistry::now_seconds();
        registry_.upsert(rec);
        WireMessage rep = WireMessage::code(1020);
        rep.add("mac", rec.mac).add("status", "online");
        reply(camera_sock_, rep, src);
        log_->emit("registration", "device_online",
                   {{"mac", rec.mac}, {"src", src.to_string()}});
        return;
    }
    log_->emit("registration", "unknown_code",
               {{"src", src.to_string()}, {"value", msg.value}});
}

void RegistrationServer::controller_loop() {
    while (!stop_) {
        auto got = controller_sock_.recv_from(kPollSlice);
        if (!got) continue;
        try {
            handle_controller(wire::decode(got->first), got->second);
        } catch (const wire::WireError& e) {
            log_->emit("registration", "dropped", {{"error", e.what()}});
        }
    }
}

void RegistrationServer::handle_controller(const WireMessage& msg, Addr src) {
    if (msg.is_code(3000)) {
        log_->emit("registration", "controller_hello", {{"src", src.to_string()}});
        return;
    }
    if (msg.is_code(2030)) {
        const std::string& mac = msg.get("mac");
        const std::string& relay_id = msg.get("relay_id");
        auto snap = registry_.lookup(mac);
        if (!snap || snap->status == DeviceStatus::Offline) {
            reply(controller_sock_, WireMessage::code(5000), src);
            log_->emit("registration", "query_offline", {{"mac", mac}});
            return;
        }
        const DeviceRecord& rec = snap->record;
        WireMessage rep = WireMessage::code(2040);
        rep.add("mac", mac)
            .add("camera_ip", rec.wan_addr.ip_string())
            .add("camera_port", std::to_string(rec.wan_addr.port))
            .add("relay_ip", cfg_.relay_tcp.ip_string())
            .add("relay_port", std::to_string(cfg_.relay_tcp.port))
            .add("relay_id", relay_id)
            .add("fw", rec.firmware)
            .add("model", rec.model)
            .add("type", rec.type)
            .add("alias", rec.alias)
            .add("status", "online");
        reply(controller_sock_, rep, src);
        // Augmented forward so the camera learns the relay ID. Best effort,
        // sent once, no retries.
        WireMessage fwd = WireMessage::code(2020);
        fwd.add("mac", mac)
            .add("relay_id", relay_id)
            .add("camera_ip", rec.wan_addr.ip_string())
            .add("camera_port", std::to_string(rec.wan_addr.port))
            .add("controller_ip", src.ip_string())
            .add("controller_port", std::to_string(src.port))
            .add("relay_ip", cfg_.relay_tcp.ip_string())
            .add("relay_port", std::to_string(cfg_.relay_tcp.port));
        controller_sock_.send_to(wire::encode(fwd, rng_word()), rec.wan_addr);
        log_->emit("registration", "query_online",
                   {{"mac", mac}, {"camera", rec.wan_addr.to_string()}});
        return;
    }
    log_->emit("registration", "unknown_code",
               {{"src", src.to_string()}, {"value", msg.value}});
}

// ---------------------------------------------------------------------------
// CloudHarness

CloudHarness CloudHarness::start(Options opts) {
    CloudHarness h;
    h.log = std::make_shared<EventLog>();
    RelayServer::Config rcfg;
    rcfg.udp_bind = Addr{opts.bind_ip, opts.relay_udp_port};
    rcfg.tcp_bind = Addr{opts.bind_ip, opts.relay_tcp_port};
    rcfg.idle_timeout = opts.relay_idle_timeout;
    h.relay = std::make_unique<RelayServer>(rcfg, h.log);
    h.relay->start();
    RegistrationServer::Config cfg;
    cfg.cmd_bind = Addr{opts.bind_ip, opts.cmd_port};
    cfg.camera_bind = Addr{opts.bind_ip, opts.camera_port};
    cfg.controller_bind = Addr{opts.bind_ip, opts.controller_port};
    cfg.lease_seconds = opts.lease_seconds;
    cfg.relay_udp = h.relay->udp_addr();
    cfg.relay_tcp = h.relay->tcp_addr();
    h.registration = std::make_unique<RegistrationServer>(cfg, h.log);
    h.registration->start();
    return h;
}

void CloudHarness::stop() {
    if (registration) registration->stop();
    if (relay) relay->stop();
}

}  // namespace iotemu::cloud
