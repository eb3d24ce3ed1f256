#include "iotemu/wire.hpp"

#include <algorithm>
#include <array>
#include <charconv>

namespace iotemu::wire {

namespace {

constexpr char kOpen = '<';   // byte 60
constexpr char kClose = '>';

bool valid_key(const std::string& key) {
    if (key.empty()) return false;
    return std::all_of(key.begin(), key.end(), [](unsigned char c) {
        return c > 0x20 && c < 0x7f && c != kOpen && c != kClose;
    });
}

bool valid_value(const std::string& val) {
    return std::all_of(val.begin(), val.end(),
                       [](char c) { return c != kOpen && c != kClose; });
}

int parse_int(const std::string& s) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw WireError("non-numeric command/code value: " + s);
    return v;
}

}  // namespace

const std::string& WireMessage::get(const std::string& key) const {
    const std::string* v = find(key);
    if (!v) throw WireError("missing field: " + key);
    return *v;
}

std::string serialize(const WireMessage& msg) {
    std::string out;
    out += kOpen;
    out += msg.kind == Kind::Command ? "opcode" : "code";
    out += kClose;
    out += std::to_string(msg.value);
    for (const auto& [key, val] : msg.fields) {
        if (!valid_key(key)) throw WireError("malformed field key: " + key);
        if (key == "opcode" || key == "code")
            throw WireError("reserved key in field list: " + key);
        if (!valid_value(val)) throw WireError("malformed value for key: " + key);
        out += kOpen;
        out += key;
        out += kClose;
        out += val;
    }
    // Every key appears exactly once.
    for (size_t i = 0; i < msg.fields.size(); ++i)
        for (size_t j = i + 1; j < msg.fields.size(); ++j)
            if (msg.fields[i].first == msg.fields[j].first)
                throw WireError("duplicate key: " + msg.fields[i].first);
    return out;
}

WireMessage parse(const std::string& plain) {
    if (plain.empty() || plain[0] != kOpen)
        throw WireError("message does not begin with '<'");
    WireMessage msg;
    bool have_kind = false;
    size_t pos = 0;
    while (pos < plain.size()) {
        if (plain[pos] != kOpen) throw WireError("expected '<' at offset " + std::to_string(pos));
        size_t close = plain.find(kClose, pos + 1);
        if (close == std::string::npos) throw WireError("unterminated key");
        std::string key = plain.substr(pos + 1, close - pos - 1);
        if (!valid_key(key)) throw WireError("malformed field key: " + key);
        size_t next = plain.find(kOpen, close + 1);
        if (next == std::string::npos) next = plain.size();
        std::string val = plain.substr(close + 1, next - close - 1);
        if (key == "opcode" || key == "code") {
            if (have_kind) throw WireError("message carries more than one opcode/code value");
            msg.kind = key == "opcode" ? Kind::Command : Kind::Code;
            msg.value = parse_int(val);
            have_kind = true;
        } else {
            if (!have_kind) throw WireError("first segment must be opcode or code");
            if (msg.find(key)) throw WireError("duplicate key: " + key);
            msg.fields.emplace_back(std::move(key), std::move(val));
        }
        pos = next;
    }
    if (!have_kind) throw WireError("empty message");
    return msg;
}

std::string obfuscate(const std::string& plain, ShiftAmount k) {
    if (plain.empty() || plain[0] != kOpen)
        throw WireError("plaintext does not begin with '<'");
    std::string out(plain.size(), '\0');
    for (size_t i = 0; i < plain.size(); ++i)
        out[i] = static_cast<char>(static_cast<unsigned char>(plain[i]) + k.k);
    return out;
}

std::string deobfuscate(const std::string& obfuscated) {
    if (obfuscated.empty()) throw WireError("empty wire data");
    int k = static_cast<unsigned char>(obfuscated[0]) - static_cast<unsigned char>(kOpen);
    if (k < 1 || k > 7) throw WireError("not obfuscated: recovered shift " + std::to_string(k));
    std::string out(obfuscated.size(), '\0');
    for (size_t i = 0; i < obfuscated.size(); ++i)
        out[i] = static_cast<char>(static_cast<unsigned char>(obfuscated[i]) - k);
    return out;
}

std::string encode(const WireMessage& msg, uint64_t rng_word) {
    return obfuscate(serialize(msg), ShiftAmount(1 + static_cast<int>(rng_word % 7)));
}

WireMessage decode(const std::string& obfuscated) {
    return parse(deobfuscate(obfuscated));
}

namespace {
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const std::string& bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        uint32_t n = (static_cast<unsigned char>(bytes[i]) << 16) |
                     (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                     static_cast<unsigned char>(bytes[i + 2]);
        out += kB64[(n >> 18) & 63];
        out += kB64[(n >> 12) & 63];
        out += kB64[(n >> 6) & 63];
        out += kB64[n & 63];
    }
    size_t rem = bytes.size() - i;
    if (rem == 1) {
        uint32_t n = static_cast<unsigned char>(bytes[i]) << 16;
        out += kB64[(n >> 18) & 63];
        out += kB64[(n >> 12) & 63];
        out += "==";
    } else if (rem == 2) {
        uint32_t n = (static_cast<unsigned char>(bytes[i]) << 16) |
                     (static_cast<unsigned char>(bytes[i + 1]) << 8);
        out += kB64[(n >> 18) & 63];
        out += kB64[(n >> 12) & 63];
        out += kB64[(n >> 6) & 63];
        out += '=';
    }
    return out;
}

std::string base64_decode(const std::string& b64) {
    std::array<int8_t, 256> rev;
    rev.fill(-1);
    for (int i = 0; i < 64; ++i) rev[static_cast<unsigned char>(kB64[i])] = static_cast<int8_t>(i);
    if (b64.size() % 4 != 0) throw WireError("bad base64 length");
    std::string out;
    out.reserve(b64.size() / 4 * 3);
    for (size_t i = 0; i < b64.size(); i += 4) {
        int vals[4];
        int pad = 0;
        for (int j = 0; j < 4; ++j) {
            char c = b64[i + j];
            if (c == '=') {
                if (i + 4 != b64.size() || j < 2) throw WireError("bad base64 padding");
                vals[j] = 0;
                ++pad;
            } else {
                vals[j] = rev[static_cast<unsigned char>(c)];
                if (vals[j] < 0 || pad > 0) throw WireError("bad base64 character");
            }
        }
        uint32_t n = (vals[0] << 18) | (vals[1] << 12) | (vals[2] << 6) | vals[3];
        out += static_cast<char>((n >> 16) & 0xff);
        if (pad < 2) out += static_cast<char>((n >> 8) & 0xff);
        if (pad < 1) out += static_cast<char>(n & 0xff);
    }
    return out;
}

std::string encode_auth(const std::string& username, const std::string& password) {
    if (username.find(':') != std::string::npos)
        throw WireError("username must not contain ':'");
    if (password.find(':') != std::string::npos)
        throw WireError("password must not contain ':'");
    return base64_encode(username + ":" + password);
}

std::pair<std::string, std::string> decode_auth(const std::string& b64) {
    std::string plain = base64_decode(b64);
    size_t sep = plain.find(':');
    if (sep == std::string::npos) throw WireError("auth field missing ':' separator");
    return {plain.substr(0, sep), plain.substr(sep + 1)};
}

}  // namespace iotemu::wire
