#include "iotemu/event_log.hpp"

#include <chrono>
#include <iostream>

namespace iotemu {

void EventLog::open_file(const std::string& path) {
    std::lock_guard lock(mu_);
    file_.open(path, std::ios::out | std::ios::trunc);
}

void EventLog::emit(const std::string& source, const std::string& kind,
                    nlohmann::json detail) {
    double now = std::chrono::duration<double>(
                     std::chrono::system_clock::now().time_since_epoch())
                     .count();
    std::lock_guard lock(mu_);
    nlohmann::json ev{{"seq", seq_++},
                      {"ts", now},
                      {"source", source},
                      {"kind", kind},
                      {"detail", std::move(detail)}};
    if (file_.is_open()) file_ << ev.dump() << "\n" << std::flush;
    if (echo_) std::cerr << ev.dump() << "\n";
    events_.push_back(std::move(ev));
}

void EventLog::set_echo(bool on) {
    std::lock_guard lock(mu_);
    echo_ = on;
}

std::vector<nlohmann::json> EventLog::events() const {
    std::lock_guard lock(mu_);
    return events_;
}

std::vector<nlohmann::json> EventLog::events_of_kind(const std::string& kind) const {
    std::lock_guard lock(mu_);
    std::vector<nlohmann::json> out;
    for (const auto& e : events_)
        if (e.at("kind") == kind) out.push_back(e);
    return out;
}

size_t EventLog::count(const std::string& kind) const {
    std::lock_guard lock(mu_);
    size_t n = 0;
    for (const auto& e : events_)
        if (e.at("kind") == kind) ++n;
    return n;
}

}  // namespace iotemu
