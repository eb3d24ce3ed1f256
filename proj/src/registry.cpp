#include "iotemu/registry.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>

namespace iotemu::cloud {

bool valid_mac(const std::string& mac) {
    return mac.size() == 12 &&
           std::all_of(mac.begin(), mac.end(),
                       [](unsigned char c) { return std::isxdigit(c); });
}

double DeviceRegistry::now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

void DeviceRegistry::upsert(DeviceRecord rec) {
    std::lock_guard lock(mu_);
    for (auto& r : records_) {
        if (r.mac == rec.mac) {
            rec.relay_registered = rec.relay_registered || r.relay_registered;
            r = std::move(rec);
            return;
        }
    }
    records_.push_back(std::move(rec));
}

void DeviceRegistry::mark_relay_registered(const std::string& mac) {
    std::lock_guard lock(mu_);
    for (auto& r : records_)
        if (r.mac == mac) r.relay_registered = true;
}

DeviceStatus DeviceRegistry::status_of(const DeviceRecord& rec, double now) const {
    return (now - rec.last_seen) <= lease_seconds_ ? DeviceStatus::Online
                                                   : DeviceStatus::Offline;
}

std::optional<DeviceSnapshot> DeviceRegistry::lookup(const std::string& mac) const {
    std::lock_guard lock(mu_);
    double now = now_seconds();
    for (const auto& r : records_)
        if (r.mac == mac) return DeviceSnapshot{r, status_of(r, now)};
    return std::nullopt;
}

std::vector<DeviceSnapshot> DeviceRegistry::snapshot() const {
    std::lock_guard lock(mu_);
    double now = now_seconds();
    std::vector<DeviceSnapshot> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back({r, status_of(r, now)});
    return out;
}

void DeviceRegistry::clear() {
    std::lock_guard lock(mu_);
    records_.clear();
}

}  // namespace iotemu::cloud
