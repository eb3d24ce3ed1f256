#include "iotemu/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace iotemu::net {

namespace {

sockaddr_in to_sockaddr(Addr a) {
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_addr.s_addr = htonl(a.ip);
    sa.sin_port = htons(a.port);
    return sa;
}

Addr from_sockaddr(const sockaddr_in& sa) {
    return Addr{ntohl(sa.sin_addr.s_addr), ntohs(sa.sin_port)};
}

Addr local_addr_of(int fd) {
    sockaddr_in sa{};
    socklen_t len = sizeof(sa);
    if (::getsockname(fd, reinterpret_cast<sockaddr*>(&sa), &len) != 0)
        throw NetError(std::string("getsockname: ") + std::strerror(errno));
    return from_sockaddr(sa);
}

// Returns true when readable, false on timeout.
bool wait_readable(int fd, Millis timeout) {
    pollfd p{fd, POLLIN, 0};
    int to = timeout.count() <= 0 ? -1 : static_cast<int>(timeout.count());
    for (;;) {
        int rc = ::poll(&p, 1, to);
        if (rc > 0) return true;
        if (rc == 0) return false;
        if (errno != EINTR) throw NetError(std::string("poll: ") + std::strerror(errno));
    }
}

}  // namespace

uint32_t Addr::parse_ip(const std::string& dotted) {
    in_addr a{};
    if (::inet_pton(AF_INET, dotted.c_str(), &a) != 1)
        throw NetError("bad IPv4 address: " + dotted);
    return ntohl(a.s_addr);
}

Addr Addr::parse(const std::string& host_port) {
    size_t sep = host_port.rfind(':');
    if (sep == std::string::npos) throw NetError("expected host:port, got " + host_port);
    std::string host = host_port.substr(0, sep);
    int port = std::stoi(host_port.substr(sep + 1));
    if (port < 0 || port > 65535) throw NetError("port out of range in " + host_port);
    if (host == "localhost") host = "127.0.0.1";
    return Addr{parse_ip(host), static_cast<uint16_t>(port)};
}

std::string Addr::ip_string() const {
    in_addr a{};
    a.s_addr = htonl(ip);
    char buf[INET_ADDRSTRLEN];
    ::inet_ntop(AF_INET, &a, buf, sizeof(buf));
    return buf;
}

std::string Addr::to_string() const { return ip_string() + ":" + std::to_string(port); }

Fd& Fd::operator=(Fd&& o) noexcept {
    if (this != &o) {
        close();
        fd_ = o.fd_;
        o.fd_ = -1;
    }
    return *this;
}

void Fd::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

UdpSocket::UdpSocket(Addr bind_addr) {
    int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd < 0) throw NetError(std::string("socket: ") + std::strerror(errno));
    fd_ = Fd(fd);
    sockaddr_in sa = to_sockaddr(bind_addr);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) != 0)
        throw NetError("bind " + bind_addr.to_string() + ": " + std::strerror(errno));
}

Addr UdpSocket::local_addr() const { return local_addr_of(fd_.get()); }

void UdpSocket::send_to(const std::string& payload, Addr dst) {
    sockaddr_in sa = to_sockaddr(dst);
    ssize_t n = ::sendto(fd_.get(), payload.data(), payload.size(), 0,
                         reinterpret_cast<sockaddr*>(&sa), sizeof(sa));
    if (n < 0) throw NetError(std::string("sendto: ") + std::strerror(errno));
}

std::optional<std::pair<std::string, Addr>> UdpSocket::recv_from(Millis timeout) {
    if (!wait_readable(fd_.get(), timeout)) return std::nullopt;
    char buf[65536];
    sockaddr_in sa{};
    socklen_t len = sizeof(sa);
    ssize_t n = ::recvfrom(fd_.get(), buf, sizeof(buf), 0,
                           reinterpret_cast<sockaddr*>(&sa), &len);
    if (n < 0) {
        if (errno == ECONNREFUSED || errno == EAGAIN) return std::nullopt;
        throw NetError(std::string("recvfrom: ") + std::strerror(errno));
    }
    return std::make_pair(std::string(buf, static_cast<size_t>(n)), from_sockaddr(sa));
}

void UdpSocket::shutdown() { fd_.close(); }

TcpSocket TcpSocket::connect(Addr dst, Millis timeout) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw NetError(std::string("socket: ") + std::strerror(errno));
    Fd guard(fd);
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    sockaddr_in sa = to_sockaddr(dst);
    ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) | O_NONBLOCK);
    int rc = ::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof(sa));
    if (rc != 0 && errno != EINPROGRESS)
        throw NetError("connect " + dst.to_string() + ": " + std::strerror(errno));
    if (rc != 0) {
        pollfd p{fd, POLLOUT, 0};
        int to = timeout.count() <= 0 ? -1 : static_cast<int>(timeout.count());
        if (::poll(&p, 1, to) <= 0)
            throw NetError("connect " + dst.to_string() + ": timeout");
        int err = 0;
        socklen_t len = sizeof(err);
        ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        if (err != 0)
            throw NetError("connect " + dst.to_string() + ": " + std::strerror(err));
    }
    ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) & ~O_NONBLOCK);
    return TcpSocket(std::move(guard));
}

void TcpSocket::send_all(const std::string& bytes) {
    size_t off = 0;
    while (off < bytes.size()) {
        ssize_t n = ::send(fd_.get(), bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw NetError(std::string("send: ") + std::strerror(errno));
        }
        off += static_cast<size_t>(n);
    }
}

std::optional<std::string> TcpSocket::recv_some(size_t max_len, Millis timeout) {
    if (!pending_.empty()) {
        std::string out = std::move(pending_);
        pending_.clear();
        if (out.size() > max_len) {
            pending_ = out.substr(max_len);
            out.resize(max_len);
        }
        return out;
    }
    if (!wait_readable(fd_.get(), timeout)) return std::nullopt;
    std::string buf(max_len, '\0');
    ssize_t n = ::recv(fd_.get(), buf.data(), buf.size(), 0);
    if (n < 0) {
        if (errno == ECONNRESET) return std::string{};
        throw NetError(std::string("recv: ") + std::strerror(errno));
    }
    buf.resize(static_cast<size_t>(n));
    return buf;
}

std::string frame_prefix(uint32_t len) {
    std::string p(4, '\0');
    p[0] = static_cast<char>((len >> 24) & 0xff);
    p[1] = static_cast<char>((len >> 16) & 0xff);
    p[2] = static_cast<char>((len >> 8) & 0xff);
    p[3] = static_cast<char>(len & 0xff);
    return p;
}

void TcpSocket::send_frame(const std::string& payload) {
    if (payload.size() > kMaxFrame) throw NetError("frame too large");
    send_all(frame_prefix(static_cast<uint32_t>(payload.size())) + payload);
}

std::optional<std::string> TcpSocket::recv_frame(Millis timeout) {
    auto deadline = std::chrono::steady_clock::now() + timeout;
    auto remaining = [&]() -> Millis {
        if (timeout.count() <= 0) return Millis{0};
        auto r = std::chrono::duration_cast<Millis>(deadline - std::chrono::steady_clock::now());
        return r.count() < 1 ? Millis{1} : r;
    };
    auto need = [&](size_t n) -> bool {  // grow pending_ to at least n bytes
        while (pending_.size() < n) {
            if (timeout.count() > 0 && std::chrono::steady_clock::now() >= deadline) return false;
            if (!wait_readable(fd_.get(), remaining())) return false;
            char buf[65536];
            ssize_t got = ::recv(fd_.get(), buf, sizeof(buf), 0);
            if (got < 0) {
                if (errno == EINTR) continue;
                if (errno == ECONNRESET) throw NetError("connection reset");
                throw NetError(std::string("recv: ") + std::strerror(errno));
            }
            if (got == 0) throw NetError("connection closed mid-frame");
            pending_.append(buf, static_cast<size_t>(got));
        }
        return true;
    };
    if (pending_.empty()) {
        // Distinguish orderly close before any frame bytes.
        if (!wait_readable(fd_.get(), timeout)) return std::nullopt;
        char buf[65536];
        ssize_t got = ::recv(fd_.get(), buf, sizeof(buf), 0);
        if (got < 0) throw NetError(std::string("recv: ") + std::strerror(errno));
        if (got == 0) throw NetError("connection closed");
        pending_.append(buf, static_cast<size_t>(got));
    }
    if (!need(4)) return std::nullopt;
    uint32_t len = (static_cast<unsigned char>(pending_[0]) << 24) |
                   (static_cast<unsigned char>(pending_[1]) << 16) |
                   (static_cast<unsigned char>(pending_[2]) << 8) |
                   static_cast<unsigned char>(pending_[3]);
    if (len > kMaxFrame) throw NetError("frame too large");
    if (!need(4 + len)) return std::nullopt;
    std::string payload = pending_.substr(4, len);
    pending_.erase(0, 4 + len);
    return payload;
}

Addr TcpSocket::local_addr() const { return local_addr_of(fd_.get()); }

void TcpSocket::shutdown() {
    // Unblocks a reader in another thread; the fd is released by the destructor
    // once no thread holds a reference.
    if (fd_.valid()) ::shutdown(fd_.get(), SHUT_RDWR);
}

TcpListener::TcpListener(Addr bind_addr) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw NetError(std::string("socket: ") + std::strerror(errno));
    fd_ = Fd(fd);
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in sa = to_sockaddr(bind_addr);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) != 0)
        throw NetError("bind " + bind_addr.to_string() + ": " + std::strerror(errno));
    if (::listen(fd, 64) != 0)
        throw NetError(std::string("listen: ") + std::strerror(errno));
}

Addr TcpListener::local_addr() const { return local_addr_of(fd_.get()); }

std::optional<TcpSocket> TcpListener::accept(Millis timeout) {
    if (!wait_readable(fd_.get(), timeout)) return std::nullopt;
    int fd = ::accept(fd_.get(), nullptr, nullptr);
    if (fd < 0) {
        if (errno == EINVAL || errno == EBADF) return std::nullopt;  // shut down
        throw NetError(std::string("accept: ") + std::strerror(errno));
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return TcpSocket(Fd(fd));
}

void TcpListener::shutdown() { fd_.close(); }

}  // namespace iotemu::net
