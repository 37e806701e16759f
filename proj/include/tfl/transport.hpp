#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "tfl/encoding.hpp"

namespace tfl::transport {

struct TransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct AddressInUse : TransportError {
    using TransportError::TransportError;
};
struct Unreachable : TransportError {
    using TransportError::TransportError;
};
struct FrameTooLarge : TransportError {
    using TransportError::TransportError;
};

inline constexpr std::size_t kMaxFrame = 16 * 1024 * 1024;

struct Endpoint {
    std::string host;
    std::uint16_t port = 0;

    std::string str() const { return host + ":" + std::to_string(port); }
    auto operator<=>(const Endpoint&) const = default;
};

struct CaptureRecord {
    std::int64_t timestamp_us = 0;
    Endpoint source;
    Endpoint destination;
    Bytes frame;
};

// Append-only record of every frame the transport carried, both backends.
class CaptureLog {
  public:
    void append(const Endpoint& src, const Endpoint& dst, std::span<const std::uint8_t> frame);
    std::vector<CaptureRecord> snapshot() const;
    std::size_t frame_count() const;
    std::size_t total_bytes() const;

    // One line per frame: ts,src,dst,base64url(frame)
    std::string export_lines() const;

  private:
    mutable std::mutex mutex_;
    std::vector<CaptureRecord> records_;
};

struct ScanHit {
    std::size_t needle_index = 0;
    std::size_t frame_index = 0;
};

// Every occurrence of any needle as a contiguous substring of any frame.
std::vector<ScanHit> scan_capture(const CaptureLog& log, const std::vector<Bytes>& needles);

using Handler = std::function<void(std::span<const std::uint8_t>)>;

class Listener {
  public:
    virtual ~Listener() = default;
};

class Transport {
  public:
    virtual ~Transport() = default;
    virtual std::unique_ptr<Listener> bind(const Endpoint& endpoint, Handler handler) = 0;
    virtual void send(const Endpoint& source, const Endpoint& destination,
                      std::span<const std::uint8_t> frame) = 0;
    // Synchronous transports deliver before send() returns.
    virtual bool synchronous() const = 0;

    CaptureLog& capture() { return capture_; }
    const CaptureLog& capture() const { return capture_; }

  protected:
    CaptureLog capture_;
};

// In-process delivery in deterministic order; handlers run on the caller's
// thread before send() returns.
class LoopbackTransport : public Transport {
  public:
    std::unique_ptr<Listener> bind(const Endpoint& endpoint, Handler handler) override;
    void send(const Endpoint& source, const Endpoint& destination,
              std::span<const std::uint8_t> frame) override;
    bool synchronous() const override { return true; }

  private:
    friend class LoopbackListener;
    std::mutex mutex_;
    std::map<std::string, Handler> handlers_;
};

// Real TCP sockets; frames are a 4-byte big-endian length prefix followed by
// the envelope bytes. Delivery is at-most-once with an error on failure.
class TcpTransport : public Transport {
  public:
    ~TcpTransport() override;
    std::unique_ptr<Listener> bind(const Endpoint& endpoint, Handler handler) override;
    void send(const Endpoint& source, const Endpoint& destination,
              std::span<const std::uint8_t> frame) override;
    bool synchronous() const override { return false; }
};

}  // namespace tfl::transport
