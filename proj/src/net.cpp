#include "pamenc/net.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace pamenc {
namespace {

using Clock = std::chrono::steady_clock;
constexpr std::chrono::milliseconds kTick{50};

[[noreturn]] void raise_errno(const std::string& what) {
  const int err = errno;
  if (err == EPIPE || err == ECONNRESET) throw ProtocolError(ErrorCode::connection_closed, what + ": " + std::strerror(err));
  throw ProtocolError(ErrorCode::io_error, what + ": " + std::strerror(err));
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

// Waits until fd is readable. Returns false when the deadline passes or stop is set.
bool wait_readable(int fd, std::optional<Clock::time_point> deadline, const std::atomic<bool>* stop) {
  while (true) {
    if (stop && stop->load()) return false;
    int wait_ms = static_cast<int>(kTick.count());
    if (deadline) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(*deadline - Clock::now()).count();
      if (left <= 0) return false;
      wait_ms = static_cast<int>(std::min<long long>(left, stop ? kTick.count() : left));
    }
    pollfd p{fd, POLLIN, 0};
    const int rc = ::poll(&p, 1, wait_ms);
    if (rc < 0) {
      if (errno == EINTR) continue;
      raise_errno("poll");
    }
    if (rc > 0) return true;
  }
}

void read_exact(int fd, std::uint8_t* buf, std::size_t n, std::optional<Clock::time_point> deadline,
                const std::atomic<bool>* stop) {
  std::size_t got = 0;
  while (got < n) {
    if (!wait_readable(fd, deadline, stop)) {
      if (stop && stop->load()) throw ProtocolError(ErrorCode::connection_closed, "service is stopping");
      throw ProtocolError(ErrorCode::timeout, "no complete frame within the protocol timeout");
    }
    const ssize_t rc = ::recv(fd, buf + got, n - got, 0);
    if (rc == 0) throw ProtocolError(ErrorCode::connection_closed, "peer closed the connection");
    if (rc < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      raise_errno("recv");
    }
    got += static_cast<std::size_t>(rc);
  }
}

}  // namespace

Fd& Fd::operator=(Fd&& other) noexcept {
  if (this != &other) {
    reset();
    fd_ = other.release();
  }
  return *this;
}

int Fd::release() {
  const int fd = fd_;
  fd_ = -1;
  return fd;
}

void Fd::reset() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void send_bytes(int fd, std::span<const std::uint8_t> bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t rc = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (rc < 0) {
      if (errno == EINTR) continue;
      raise_errno("send");
    }
    sent += static_cast<std::size_t>(rc);
  }
}

void send_frame(int fd, const Frame& frame) { send_bytes(fd, encode_frame(frame)); }

Frame receive_frame(int fd, std::chrono::milliseconds timeout, const std::atomic<bool>* stop, bool idle_wait) {
  std::array<std::uint8_t, kFrameHeaderSize> header{};
  std::optional<Clock::time_point> deadline;
  if (idle_wait) {
    read_exact(fd, header.data(), 1, std::nullopt, stop);
    deadline = Clock::now() + timeout;
    read_exact(fd, header.data() + 1, header.size() - 1, deadline, stop);
  } else {
    deadline = Clock::now() + timeout;
    read_exact(fd, header.data(), header.size(), deadline, stop);
  }
  const auto length = check_frame_length(header);
  std::vector<std::uint8_t> body(length);
  read_exact(fd, body.data(), body.size(), deadline, stop);
  return decode_frame_body(body);
}

ControllerService::ControllerService(EncryptedPhi enc_phi, PublicKey key, ServiceOptions options)
    : enc_phi_(enc_phi), key_(key), options_(std::move(options)) {}

ControllerService::~ControllerService() { stop(); }

void ControllerService::start() {
  Fd sock(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!sock) raise_errno("socket");
  int one = 1;
  ::setsockopt(sock.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(options_.port);
  if (::inet_pton(AF_INET, options_.bind_address.c_str(), &addr.sin_addr) != 1) {
    throw ProtocolError(ErrorCode::io_error, "bad IPv4 bind address '" + options_.bind_address + "'");
  }
  if (::bind(sock.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) raise_errno("bind");
  if (::listen(sock.get(), 16) < 0) raise_errno("listen");

  socklen_t len = sizeof addr;
  if (::getsockname(sock.get(), reinterpret_cast<sockaddr*>(&addr), &len) < 0) raise_errno("getsockname");
  port_ = ntohs(addr.sin_port);
  listener_ = std::move(sock);
  stopping_ = false;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void ControllerService::stop() {
  stopping_ = true;
  if (acceptor_.joinable()) acceptor_.join();
  std::list<Connection> finished;
  {
    std::lock_guard lock(mu_);
    finished.splice(finished.end(), connections_);
  }
  for (auto& c : finished) {
    if (c.worker.joinable()) c.worker.join();
  }
  listener_.reset();
}

void ControllerService::wait(const std::atomic<bool>& external_stop) {
  while (!external_stop.load() && !stopping_.load()) std::this_thread::sleep_for(kTick);
}

ServiceStats ControllerService::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

void ControllerService::accept_loop() {
  while (!stopping_.load()) {
    {
      // Reap finished sessions so their threads do not pile up.
      std::lock_guard lock(mu_);
      for (auto it = connections_.begin(); it != connections_.end();) {
        if (it->done.load()) {
          it->worker.join();
          it = connections_.erase(it);
        } else {
          ++it;
        }
      }
    }
    if (!wait_readable(listener_.get(), Clock::now() + kTick, &stopping_)) continue;
    Fd client(::accept4(listener_.get(), nullptr, nullptr, SOCK_CLOEXEC));
    if (!client) continue;
    set_nodelay(client.get());

    std::lock_guard lock(mu_);
    auto& conn = connections_.emplace_back();
    conn.fd = std::move(client);
    ++stats_.sessions;
    conn.worker = std::thread([this, &conn] {
      serve(conn.fd.get());
      conn.fd.reset();
      conn.done = true;
    });
  }
}

void ControllerService::serve(int fd) {
  try {
    const Frame hello = receive_frame(fd, options_.timeout, &stopping_, true);
    if (hello.type != MessageType::hello) {
      throw ProtocolError(ErrorCode::unexpected_message, "session must open with HELLO");
    }
    if (parse_hello(hello) != key_) {
      throw ProtocolError(ErrorCode::key_mismatch, "device key does not match the encrypted controller");
    }
    send_frame(fd, hello_ack_frame({key_.p, static_cast<std::uint16_t>(kPsiSize), static_cast<std::uint16_t>(kXiSize)}));

    while (true) {
      const Frame f = receive_frame(fd, options_.timeout, &stopping_, true);
      if (f.type == MessageType::bye) return;
      if (f.type != MessageType::eval_request) {
        throw ProtocolError(ErrorCode::unexpected_message, "expected EVAL_REQUEST or BYE");
      }
      const auto xi = parse_eval_request(f, key_.p);
      send_frame(fd, eval_response_frame(enc_eval(enc_phi_, xi, key_.p)));
      std::lock_guard lock(mu_);
      ++stats_.evaluations;
    }
  } catch (const ProtocolError& e) {
    if (e.code() != ErrorCode::connection_closed) {
      {
        std::lock_guard lock(mu_);
        ++stats_.errors;
      }
      try {
        send_frame(fd, error_frame(e.code(), e.what()));
      } catch (const ProtocolError&) {
      }
    }
  }
}

DeviceSession DeviceSession::connect(const std::string& host, std::uint16_t port, const PublicKey& key,
                                     std::chrono::milliseconds timeout) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const auto service = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0) {
    throw ProtocolError(ErrorCode::io_error, "resolve " + host + ": " + ::gai_strerror(rc));
  }
  std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, &::freeaddrinfo);

  Fd sock;
  for (auto* ai = res; ai; ai = ai->ai_next) {
    Fd s(::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol));
    if (s && ::connect(s.get(), ai->ai_addr, ai->ai_addrlen) == 0) {
      sock = std::move(s);
      break;
    }
  }
  if (!sock) raise_errno("connect " + host + ":" + service);
  set_nodelay(sock.get());

  // The handshake is not on the control-step deadline; allow it a second.
  const auto handshake = std::max(timeout, std::chrono::milliseconds{1000});
  send_frame(sock.get(), hello_frame(key));
  const auto ack = parse_hello_ack(receive_frame(sock.get(), handshake));
  if (ack.p != key.p || ack.rows != kPsiSize || ack.cols != kXiSize) {
    throw ProtocolError(ErrorCode::key_mismatch, "service acknowledged a different modulus or shape");
  }
  return DeviceSession(std::move(sock), key, timeout);
}

DeviceSession::~DeviceSession() { close(); }

ProductMatrix DeviceSession::evaluate(const EncryptedXi& xi) {
  if (!fd_) throw ProtocolError(ErrorCode::connection_closed, "session is closed");
  try {
    send_frame(fd_.get(), eval_request_frame(xi));
    return parse_eval_response(receive_frame(fd_.get(), timeout_), key_.p);
  } catch (const ProtocolError&) {
    fd_.reset();
    throw;
  }
}

void DeviceSession::close() {
  if (!fd_) return;
  try {
    send_frame(fd_.get(), bye_frame());
  } catch (const ProtocolError&) {
  }
  fd_.reset();
}

}  // namespace pamenc
