#pragma once

#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "iotemu/net.hpp"

namespace iotemu::cloud {

bool valid_mac(const std::string& mac);  // exactly 12 hex characters

enum class DeviceStatus { Online, Offline };

// Cloud-side registration state of one camera identity.
struct DeviceRecord {
    std::string mac;
    net::Addr lan_addr;
    net::Addr wan_addr;
    std::string model;
    std::string type;
    std::string alias;
    std::string firmware;
    std::string serial;
    double last_seen = 0;  // seconds on the registry clock
    bool relay_registered = false;

    bool operator==(const DeviceRecord&) const = default;
};

struct DeviceSnapshot {
    DeviceRecord record;
    DeviceStatus status;
};

// Thread-safe MAC-keyed device table. A record is Online while its last
// registration is within the lease window. Registration is last-writer-wins:
// whoever sent the most recent camera-info packet owns the addresses.
class DeviceRegistry {
public:
    explicit DeviceRegistry(double lease_seconds = 25 * 60.0)
        : lease_seconds_(lease_seconds) {}

    void upsert(DeviceRecord rec);
    void mark_relay_registered(const std::string& mac);
    std::optional<DeviceSnapshot> lookup(const std::string& mac) const;
    std::vector<DeviceSnapshot> snapshot() const;
    void clear();

    double lease_seconds() const { return lease_seconds_; }
    static double now_seconds();

private:
    DeviceStatus status_of(const DeviceRecord& rec, double now) const;

    double lease_seconds_;
    mutable std::mutex mu_;
    std::vector<DeviceRecord> records_;
};

}  // namespace iotemu::cloud
