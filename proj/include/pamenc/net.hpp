#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "pamenc/wire.hpp"

namespace pamenc {

inline constexpr std::chrono::milliseconds kDefaultProtocolTimeout{15};

// Owns a file descriptor.
class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& other) noexcept : fd_(other.release()) {}
  Fd& operator=(Fd&& other) noexcept;
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { reset(); }

  int get() const { return fd_; }
  int release();
  void reset();
  explicit operator bool() const { return fd_ >= 0; }

 private:
  int fd_ = -1;
};

void send_frame(int fd, const Frame& frame);
void send_bytes(int fd, std::span<const std::uint8_t> bytes);

// With idle_wait unset the whole frame must arrive before the deadline.
// With idle_wait set, waiting for the first byte polls `stop` every tick and
// never times out; the deadline then starts at the first byte.
Frame receive_frame(int fd, std::chrono::milliseconds timeout, const std::atomic<bool>* stop = nullptr,
                    bool idle_wait = false);

struct ServiceOptions {
  std::string bind_address = "127.0.0.1";
  std::uint16_t port = 0;  // 0 picks an ephemeral port
  std::chrono::milliseconds timeout = kDefaultProtocolTimeout;
};

struct ServiceStats {
  std::uint64_t sessions = 0;
  std::uint64_t evaluations = 0;
  std::uint64_t errors = 0;
};

// Evaluates encrypted requests against Enc(Phi). Holds no secret key and
// sees no plaintext. One thread per connection.
class ControllerService {
 public:
  ControllerService(EncryptedPhi enc_phi, PublicKey key, ServiceOptions options = {});
  ~ControllerService();
  ControllerService(const ControllerService&) = delete;
  ControllerService& operator=(const ControllerService&) = delete;

  void start();
  void stop();
  // Blocks until stop() is called from another thread or a signal handler flag is set.
  void wait(const std::atomic<bool>& external_stop);

  std::uint16_t port() const { return port_; }
  ServiceStats stats() const;

 private:
  void accept_loop();
  void serve(int fd);

  EncryptedPhi enc_phi_;
  PublicKey key_;
  ServiceOptions options_;
  Fd listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;

  struct Connection {
    Fd fd;
    std::thread worker;
    std::atomic<bool> done{false};
  };
  mutable std::mutex mu_;
  std::list<Connection> connections_;
  ServiceStats stats_;
};

class DeviceSession {
 public:
  static DeviceSession connect(const std::string& host, std::uint16_t port, const PublicKey& key,
                               std::chrono::milliseconds timeout = kDefaultProtocolTimeout);

  DeviceSession(DeviceSession&&) = default;
  DeviceSession& operator=(DeviceSession&&) = default;
  ~DeviceSession();

  ProductMatrix evaluate(const EncryptedXi& xi);
  // Sends BYE and closes; safe to call twice.
  void close();

 private:
  DeviceSession(Fd fd, PublicKey key, std::chrono::milliseconds timeout)
      : fd_(std::move(fd)), key_(key), timeout_(timeout) {}

  Fd fd_;
  PublicKey key_;
  std::chrono::milliseconds timeout_;
};

}  // namespace pamenc
