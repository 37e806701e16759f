#include "tfl/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstring>
#include <sstream>

namespace tfl::transport {

void CaptureLog::append(const Endpoint& src, const Endpoint& dst,
                        std::span<const std::uint8_t> frame) {
    auto now = std::chrono::duration_cast<std::chrono::microseconds>(
                   std::chrono::system_clock::now().time_since_epoch())
                   .count();
    std::lock_guard lock(mutex_);
    records_.push_back({now, src, dst, Bytes(frame.begin(), frame.end())});
}

std::vector<CaptureRecord> CaptureLog::snapshot() const {
    std::lock_guard lock(mutex_);
    return records_;
}

std::size_t CaptureLog::frame_count() const {
    std::lock_guard lock(mutex_);
    return records_.size();
}

std::size_t CaptureLog::total_bytes() const {
    std::lock_guard lock(mutex_);
    std::size_t total = 0;
    for (const auto& r : records_) total += r.frame.size();
    return total;
}

std::string CaptureLog::export_lines() const {
    std::lock_guard lock(mutex_);
    std::ostringstream out;
    for (const auto& r : records_) {
        out << r.timestamp_us << ',' << r.source.str() << ',' << r.destination.str() << ','
            << base64url_encode(r.frame) << '\n';
    }
    return out.str();
}

std::vector<ScanHit> scan_capture(const CaptureLog& log, const std::vector<Bytes>& needles) {
    std::vector<ScanHit> hits;
    auto records = log.snapshot();
    for (std::size_t n = 0; n < needles.size(); ++n) {
        const auto& needle = needles[n];
        if (needle.empty()) continue;
        for (std::size_t f = 0; f < records.size(); ++f) {
            const auto& frame = records[f].frame;
            auto it = std::search(frame.begin(), frame.end(), needle.begin(), needle.end());
            if (it != frame.end()) hits.push_back({n, f});
        }
    }
    return hits;
}

class LoopbackListener : public Listener {
  public:
    LoopbackListener(LoopbackTransport* owner, std::string key)
        : owner_(owner), key_(std::move(key)) {}
    ~LoopbackListener() override {
        std::lock_guard lock(owner_->mutex_);
        owner_->handlers_.erase(key_);
    }

  private:
    LoopbackTransport* owner_;
    std::string key_;
};

std::unique_ptr<Listener> LoopbackTransport::bind(const Endpoint& endpoint, Handler handler) {
    std::lock_guard lock(mutex_);
    const std::string key = endpoint.str();
    if (handlers_.contains(key)) throw AddressInUse("endpoint already bound: " + key);
    handlers_.emplace(key, std::move(handler));
    return std::make_unique<LoopbackListener>(this, key);
}

void LoopbackTransport::send(const Endpoint& source, const Endpoint& destination,
                             std::span<const std::uint8_t> frame) {
    if (frame.size() > kMaxFrame) throw FrameTooLarge("frame exceeds 16 MiB");
    Handler handler;
    {
        std::lock_guard lock(mutex_);
        auto it = handlers_.find(destination.str());
        if (it == handlers_.end())
            throw Unreachable("no listener at " + destination.str());
        handler = it->second;
    }
    capture_.append(source, destination, frame);
    handler(frame);
}

// --- TCP backend ---

namespace {

struct Fd {
    int fd = -1;
    Fd() = default;
    explicit Fd(int f) : fd(f) {}
    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;
    Fd(Fd&& other) noexcept : fd(other.fd) { other.fd = -1; }
    ~Fd() {
        if (fd >= 0) ::close(fd);
    }
};

bool read_exact(int fd, std::uint8_t* buf, std::size_t len) {
    std::size_t got = 0;
    while (got < len) {
        ssize_t n = ::recv(fd, buf + got, len - got, 0);
        if (n <= 0) return false;
        got += static_cast<std::size_t>(n);
    }
    return true;
}

bool write_exact(int fd, const std::uint8_t* buf, std::size_t len) {
    std::size_t sent = 0;
    while (sent < len) {
        ssize_t n = ::send(fd, buf + sent, len - sent, MSG_NOSIGNAL);
        if (n <= 0) return false;
        sent += static_cast<std::size_t>(n);
    }
    return true;
}

class TcpListener : public Listener {
  public:
    TcpListener(const Endpoint& endpoint, Handler handler) : handler_(std::move(handler)) {
        listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (listen_fd_ < 0) throw TransportError("socket() failed");
        int one = 1;
        ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(endpoint.port);
        if (::inet_pton(AF_INET, endpoint.host.c_str(), &addr.sin_addr) != 1) {
            ::close(listen_fd_);
            throw TransportError("bad listen address: " + endpoint.host);
        }
        if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
            ::close(listen_fd_);
            throw AddressInUse("cannot bind " + endpoint.str());
        }
        if (::listen(listen_fd_, 64) != 0) {
            ::close(listen_fd_);
            throw TransportError("listen() failed on " + endpoint.str());
        }
        accept_thread_ = std::thread([this] { accept_loop(); });
    }

    ~TcpListener() override {
        running_ = false;
        ::shutdown(listen_fd_, SHUT_RDWR);
        ::close(listen_fd_);
        if (accept_thread_.joinable()) accept_thread_.join();
    }

  private:
    void accept_loop() {
        while (running_) {
            int conn = ::accept(listen_fd_, nullptr, nullptr);
            if (conn < 0) break;
            Fd guard(conn);
            std::uint8_t header[4];
            if (!read_exact(conn, header, 4)) continue;
            std::uint32_t len = (std::uint32_t(header[0]) << 24) |
                                (std::uint32_t(header[1]) << 16) |
                                (std::uint32_t(header[2]) << 8) | std::uint32_t(header[3]);
            if (len > kMaxFrame) continue;
            Bytes frame(len);
            if (!read_exact(conn, frame.data(), len)) continue;
            // Handlers for one endpoint are never invoked concurrently.
            std::lock_guard lock(handler_mutex_);
            try {
                handler_(frame);
            } catch (...) {
                // Inbound frame handling must not take down the listener.
            }
        }
    }

    Handler handler_;
    int listen_fd_ = -1;
    std::atomic<bool> running_{true};
    std::mutex handler_mutex_;
    std::thread accept_thread_;
};

}  // namespace

TcpTransport::~TcpTransport() = default;

std::unique_ptr<Listener> TcpTransport::bind(const Endpoint& endpoint, Handler handler) {
    return std::make_unique<TcpListener>(endpoint, std::move(handler));
}

void TcpTransport::send(const Endpoint& source, const Endpoint& destination,
                        std::span<const std::uint8_t> frame) {
    if (frame.size() > kMaxFrame) throw FrameTooLarge("frame exceeds 16 MiB");

    Fd sock(::socket(AF_INET, SOCK_STREAM, 0));
    if (sock.fd < 0) throw TransportError("socket() failed");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(destination.port);
    if (::inet_pton(AF_INET, destination.host.c_str(), &addr.sin_addr) != 1)
        throw Unreachable("bad destination address: " + destination.host);
    if (::connect(sock.fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
        throw Unreachable("cannot connect to " + destination.str());

    std::uint8_t header[4] = {
        static_cast<std::uint8_t>((frame.size() >> 24) & 0xff),
        static_cast<std::uint8_t>((frame.size() >> 16) & 0xff),
        static_cast<std::uint8_t>((frame.size() >> 8) & 0xff),
        static_cast<std::uint8_t>(frame.size() & 0xff),
    };
    if (!write_exact(sock.fd, header, 4) || !write_exact(sock.fd, frame.data(), frame.size()))
        throw Unreachable("send failed to " + destination.str());
    capture_.append(source, destination, frame);
}

}  // namespace tfl::transport
