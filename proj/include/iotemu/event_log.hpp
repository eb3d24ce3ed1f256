#pragma once

#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

namespace iotemu {

// JSON-lines event sink. Events carry a monotonic sequence number and a
// wall-clock timestamp; consumers (tests, the CLI) read them back in order.
class EventLog {
public:
    EventLog() = default;

    // Optional file mirror; events are always kept in memory too.
    void open_file(const std::string& path);

    // Also print each event to stderr.
    void set_echo(bool on);

    void emit(const std::string& source, const std::string& kind,
              nlohmann::json detail = nlohmann::json::object());

    std::vector<nlohmann::json> events() const;
    std::vector<nlohmann::json> events_of_kind(const std::string& kind) const;
    size_t count(const std::string& kind) const;

private:
    mutable std::mutex mu_;
    std::vector<nlohmann::json> events_;
    std::ofstream file_;
    bool echo_ = false;
    uint64_t seq_ = 0;
};

}  // namespace iotemu
