#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "iotemu/controller.hpp"
#include "iotemu/event_log.hpp"
#include "iotemu/net.hpp"

namespace iotemu::attack {

// MAC enumeration range: fixed 6-hex vendor prefix plus an inclusive suffix
// interval.
struct ScanRange {
    std::string vendor_prefix;  // 6 hex chars
    std::string start_suffix;   // 6 hex chars
    std::string end_suffix;     // 6 hex chars, >= start

    void validate() const;  // throws std::invalid_argument
    uint64_t size() const;
    std::string mac_at(uint64_t index) const;
};

enum class ProbeOutcome { Online, Offline, Unknown };

struct ScanResult {
    std::string mac;
    ProbeOutcome outcome;
};

struct ScanOptions {
    net::Addr registration_controller;
    double probes_per_second = 100.0;
    net::Millis probe_timeout{1000};
    uint64_t range_cap = 1 << 16;
};

// Sends a 2030 probe per MAC and classifies the reply (2040 online, 5000
// offline, timeout unknown). Results come back sorted by MAC.
std::vector<ScanResult> scan_devices(const ScanRange& range, const ScanOptions& opts,
                                     std::shared_ptr<EventLog> log);

// Password candidate generator; returns nullopt when exhausted.
using CandidateSpace = std::function<std::optional<std::string>()>;

CandidateSpace pin_space(int digits);
CandidateSpace wordlist_space(std::vector<std::string> words);
CandidateSpace charset_space(std::string alphabet, size_t max_len);
CandidateSpace wordlist_file_space(const std::string& path);

struct BruteOptions {
    net::Addr registration_controller;
    int relay_retry_limit = 3;
};

struct BruteResult {
    bool found = false;
    std::string password;
    uint64_t attempts = 0;
};

// Iterates candidates through repeated relay image requests; stops at the
// first candidate answered with an image.
BruteResult brute_force(const std::string& mac, CandidateSpace candidates,
                        const BruteOptions& opts, std::shared_ptr<EventLog> log);

struct CapturedCredential {
    std::string mac;
    std::string username;
    std::string password;
    double captured_at = 0;  // unix seconds
};

struct SpoofOptions {
    net::Addr registration_cmd;
    net::Addr registration_camera;
    net::Millis register_interval{10'000};
    net::Millis deadline{0};  // 0: wait forever
};

// Registers a fake camera under the victim MAC until a relayed controller
// request arrives, then decodes its auth field, answers with an authorization
// failure, and stops re-registering.
std::optional<CapturedCredential> spoof_device(const std::string& mac,
                                               const SpoofOptions& opts,
                                               std::shared_ptr<EventLog> log);

}  // namespace iotemu::attack
