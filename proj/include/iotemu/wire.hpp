#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace iotemu::wire {

// Errors raised by the codec. Servers catch these and drop the datagram;
// endpoints surface them as protocol failures.
class WireError : public std::runtime_error {
public:
    explicit WireError(const std::string& what) : std::runtime_error(what) {}
};

enum class Kind { Command, Code };

// One key/value protocol packet. The first serialized segment carries either
// an "opcode" (command value) or a "code" value; the remaining fields follow
// in insertion order. Keys are ASCII tokens; values are bytes excluding the
// '<' and '>' delimiters.
struct WireMessage {
    Kind kind = Kind::Command;
    int value = 0;
    std::vector<std::pair<std::string, std::string>> fields;

    static WireMessage command(int v) { return WireMessage{Kind::Command, v, {}}; }
    static WireMessage code(int v) { return WireMessage{Kind::Code, v, {}}; }

    WireMessage& add(std::string key, std::string val) {
        fields.emplace_back(std::move(key), std::move(val));
        return *this;
    }

    const std::string* find(const std::string& key) const {
        for (const auto& [k, v] : fields)
            if (k == key) return &v;
        return nullptr;
    }

    // Throws WireError if the field is absent.
    const std::string& get(const std::string& key) const;

    bool is_command(int v) const { return kind == Kind::Command && value == v; }
    bool is_code(int v) const { return kind == Kind::Code && value == v; }

    bool operator==(const WireMessage&) const = default;
};

// Per-packet obfuscation shift, recoverable from the first wire byte.
struct ShiftAmount {
    int k;
    explicit ShiftAmount(int k_) : k(k_) {
        if (k < 1 || k > 7) throw WireError("shift amount out of range [1,7]");
    }
};

std::string serialize(const WireMessage& msg);
WireMessage parse(const std::string& plain);

std::string obfuscate(const std::string& plain, ShiftAmount k);
std::string deobfuscate(const std::string& obfuscated);

// Convenience: serialize+obfuscate with a per-packet random shift, and the
// inverse. `encode` draws k from the supplied RNG value (any uint64).
std::string encode(const WireMessage& msg, uint64_t rng_word);
WireMessage decode(const std::string& obfuscated);

// "username:password" in standard Base64, as carried in the "auth" field.
std::string encode_auth(const std::string& username, const std::string& password);
std::pair<std::string, std::string> decode_auth(const std::string& b64);

std::string base64_encode(const std::string& bytes);
std::string base64_decode(const std::string& b64);

}  // namespace iotemu::wire
