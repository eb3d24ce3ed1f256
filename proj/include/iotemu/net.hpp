#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

namespace iotemu::net {

class NetError : public std::runtime_error {
public:
    explicit NetError(const std::string& what) : std::runtime_error(what) {}
};

// IPv4 endpoint, host byte order.
struct Addr {
    uint32_t ip = 0;
    uint16_t port = 0;

    static Addr loopback(uint16_t port) { return Addr{0x7f000001u, port}; }
    static Addr parse(const std::string& host_port);      // "1.2.3.4:56"
    static uint32_t parse_ip(const std::string& dotted);

    std::string ip_string() const;
    std::string to_string() const;

    bool is_loopback() const { return (ip >> 24) == 127; }
    bool operator==(const Addr&) const = default;
};

// Move-only fd wrapper.
class Fd {
public:
    Fd() = default;
    explicit Fd(int fd) : fd_(fd) {}
    Fd(Fd&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
    Fd& operator=(Fd&& o) noexcept;
    ~Fd() { close(); }
    int get() const { return fd_; }
    bool valid() const { return fd_ >= 0; }
    void close();

private:
    int fd_ = -1;
};

using Millis = std::chrono::milliseconds;

class UdpSocket {
public:
    UdpSocket() = default;
    // Binds to bind_addr; port 0 picks an ephemeral port.
    explicit UdpSocket(Addr bind_addr);

    Addr local_addr() const;
    void send_to(const std::string& payload, Addr dst);
    // Returns nullopt on timeout. timeout <= 0 blocks indefinitely.
    std::optional<std::pair<std::string, Addr>> recv_from(Millis timeout);
    void shutdown();  // unblocks pending recv
    bool valid() const { return fd_.valid(); }

private:
    Fd fd_;
};

class TcpSocket {
public:
    TcpSocket() = default;
    explicit TcpSocket(Fd fd) : fd_(std::move(fd)) {}
    static TcpSocket connect(Addr dst, Millis timeout);

    void send_all(const std::string& bytes);
    // Up to max_len bytes; empty string on orderly peer close, nullopt on timeout.
    std::optional<std::string> recv_some(size_t max_len, Millis timeout);

    // Length-prefixed frames: u32 big-endian length, then payload.
    void send_frame(const std::string& payload);
    std::optional<std::string> recv_frame(Millis timeout);

    Addr local_addr() const;
    void shutdown();
    bool valid() const { return fd_.valid(); }
    int fd() const { return fd_.get(); }

private:
    Fd fd_;
    std::string pending_;  // bytes read past the last frame boundary
};

class TcpListener {
public:
    TcpListener() = default;
    explicit TcpListener(Addr bind_addr);
    Addr local_addr() const;
    std::optional<TcpSocket> accept(Millis timeout);
    void shutdown();
    bool valid() const { return fd_.valid(); }

private:
    Fd fd_;
};

// Frame helpers shared by TcpSocket and tests.
std::string frame_prefix(uint32_t len);
constexpr size_t kMaxFrame = 16 * 1024 * 1024;

}  // namespace iotemu::net
