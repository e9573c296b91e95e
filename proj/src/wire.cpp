#include "pamenc/wire.hpp"

#include <algorithm>

namespace pamenc {
namespace {

void expect_type(const Frame& f, MessageType t) {
  if (f.type == MessageType::error && t != MessageType::error) raise_error_frame(f);
  if (f.type != t) {
    throw ProtocolError(ErrorCode::unexpected_message,
                        "expected message type " + std::to_string(static_cast<int>(t)) + ", got " +
                            std::to_string(static_cast<int>(f.type)));
  }
}

}  // namespace

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::malformed_frame: return "malformed_frame";
    case ErrorCode::version_mismatch: return "version_mismatch";
    case ErrorCode::timeout: return "timeout";
    case ErrorCode::unexpected_message: return "unexpected_message";
    case ErrorCode::invalid_ciphertext: return "invalid_ciphertext";
    case ErrorCode::frame_too_large: return "frame_too_large";
    case ErrorCode::connection_closed: return "connection_closed";
    case ErrorCode::key_mismatch: return "key_mismatch";
    case ErrorCode::io_error: return "io_error";
  }
  return "unknown";
}

ProtocolError::ProtocolError(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
  const std::size_t length = 3 + frame.payload.size();
  if (length > kMaxFrameLength) throw ProtocolError(ErrorCode::frame_too_large, "outgoing frame too large");
  std::vector<std::uint8_t> out;
  out.reserve(kFrameHeaderSize + length);
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(length >> shift));
  out.push_back(static_cast<std::uint8_t>(frame.type));
  out.push_back(static_cast<std::uint8_t>(frame.version >> 8));
  out.push_back(static_cast<std::uint8_t>(frame.version));
  out.insert(out.end(), frame.payload.begin(), frame.payload.end());
  return out;
}

std::uint32_t check_frame_length(std::span<const std::uint8_t, kFrameHeaderSize> header) {
  const std::uint32_t length = (std::uint32_t{header[0]} << 24) | (std::uint32_t{header[1]} << 16) |
                               (std::uint32_t{header[2]} << 8) | std::uint32_t{header[3]};
  if (length < 3) throw ProtocolError(ErrorCode::malformed_frame, "frame length " + std::to_string(length) + " < 3");
  if (length > kMaxFrameLength) {
    throw ProtocolError(ErrorCode::frame_too_large, "frame length " + std::to_string(length) + " exceeds limit");
  }
  return length;
}

Frame decode_frame_body(std::span<const std::uint8_t> body) {
  if (body.size() < 3) throw ProtocolError(ErrorCode::malformed_frame, "frame body shorter than 3 bytes");
  Frame f;
  const auto type = body[0];
  f.version = static_cast<std::uint16_t>((body[1] << 8) | body[2]);
  if (f.version != kProtocolVersion) {
    throw ProtocolError(ErrorCode::version_mismatch, "peer speaks version " + std::to_string(f.version) +
                                                         ", expected " + std::to_string(kProtocolVersion));
  }
  if (type < static_cast<std::uint8_t>(MessageType::hello) || type > static_cast<std::uint8_t>(MessageType::bye)) {
    throw ProtocolError(ErrorCode::malformed_frame, "unknown message type " + std::to_string(type));
  }
  f.type = static_cast<MessageType>(type);
  f.payload.assign(body.begin() + 3, body.end());
  return f;
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFrameHeaderSize) throw ProtocolError(ErrorCode::malformed_frame, "truncated frame header");
  const auto length = check_frame_length(bytes.first<kFrameHeaderSize>());
  if (bytes.size() != kFrameHeaderSize + length) {
    throw ProtocolError(ErrorCode::malformed_frame, "frame length does not match the bytes supplied");
  }
  return decode_frame_body(bytes.subspan(kFrameHeaderSize));
}

void PayloadWriter::u8(std::uint8_t v) { out_.push_back(v); }

void PayloadWriter::u16(std::uint16_t v) {
  out_.push_back(static_cast<std::uint8_t>(v >> 8));
  out_.push_back(static_cast<std::uint8_t>(v));
}

void PayloadWriter::element(u64 v) {
  std::uint16_t n = 0;
  for (u64 t = v; t; t >>= 8) ++n;
  u16(n);
  for (int i = n - 1; i >= 0; --i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void PayloadWriter::ciphertext(const Ciphertext& ct) {
  element(ct.c1);
  element(ct.c2);
}

void PayloadWriter::bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }

std::span<const std::uint8_t> PayloadReader::need(std::size_t n) {
  if (in_.size() < n) throw ProtocolError(ErrorCode::malformed_frame, "payload truncated");
  auto head = in_.first(n);
  in_ = in_.subspan(n);
  return head;
}

std::uint8_t PayloadReader::u8() { return need(1)[0]; }

std::uint16_t PayloadReader::u16() {
  const auto b = need(2);
  return static_cast<std::uint16_t>((b[0] << 8) | b[1]);
}

u64 PayloadReader::element() {
  const auto n = u16();
  if (n > 8) throw ProtocolError(ErrorCode::invalid_ciphertext, "group element wider than 64 bits");
  const auto b = need(n);
  if (n > 0 && b[0] == 0) throw ProtocolError(ErrorCode::invalid_ciphertext, "group element not minimally encoded");
  u64 v = 0;
  for (auto byte : b) v = (v << 8) | byte;
  return v;
}

Ciphertext PayloadReader::ciphertext(u64 p) {
  const Ciphertext ct{element(), element()};
  if (ct.c1 == 0 || ct.c1 >= p || ct.c2 == 0 || ct.c2 >= p) {
    throw ProtocolError(ErrorCode::invalid_ciphertext, "ciphertext component outside [1, p-1]");
  }
  return ct;
}

std::string PayloadReader::bytes(std::size_t n) {
  const auto b = need(n);
  return {b.begin(), b.end()};
}

void PayloadReader::expect_end() const {
  if (!in_.empty()) throw ProtocolError(ErrorCode::malformed_frame, "trailing bytes in payload");
}

Frame hello_frame(const PublicKey& key) {
  PayloadWriter w;
  w.element(key.p);
  w.element(key.g);
  w.element(key.h);
  return {MessageType::hello, kProtocolVersion, w.take()};
}

PublicKey parse_hello(const Frame& f) {
  expect_type(f, MessageType::hello);
  PayloadReader r(f.payload);
  PublicKey key{r.element(), r.element(), r.element()};
  r.expect_end();
  return key;
}

Frame hello_ack_frame(const HelloAck& ack) {
  PayloadWriter w;
  w.element(ack.p);
  w.u16(ack.rows);
  w.u16(ack.cols);
  return {MessageType::hello_ack, kProtocolVersion, w.take()};
}

HelloAck parse_hello_ack(const Frame& f) {
  expect_type(f, MessageType::hello_ack);
  PayloadReader r(f.payload);
  HelloAck ack;
  ack.p = r.element();
  ack.rows = r.u16();
  ack.cols = r.u16();
  r.expect_end();
  return ack;
}

Frame eval_request_frame(const EncryptedXi& xi) {
  PayloadWriter w;
  w.u16(static_cast<std::uint16_t>(xi.size()));
  for (const auto& ct : xi) w.ciphertext(ct);
  return {MessageType::eval_request, kProtocolVersion, w.take()};
}

EncryptedXi parse_eval_request(const Frame& f, u64 p) {
  expect_type(f, MessageType::eval_request);
  PayloadReader r(f.payload);
  if (r.u16() != kXiSize) throw ProtocolError(ErrorCode::malformed_frame, "request must carry 18 ciphertexts");
  EncryptedXi xi;
  for (auto& ct : xi) ct = r.ciphertext(p);
  r.expect_end();
  return xi;
}

Frame eval_response_frame(const ProductMatrix& products) {
  PayloadWriter w;
  w.u16(static_cast<std::uint16_t>(kPsiSize));
  w.u16(static_cast<std::uint16_t>(kXiSize));
  for (const auto& row : products) {
    for (const auto& ct : row) w.ciphertext(ct);
  }
  return {MessageType::eval_response, kProtocolVersion, w.take()};
}

ProductMatrix parse_eval_response(const Frame& f, u64 p) {
  expect_type(f, MessageType::eval_response);
  PayloadReader r(f.payload);
  const auto rows = r.u16();
  const auto cols = r.u16();
  if (rows != kPsiSize || cols != kXiSize) throw ProtocolError(ErrorCode::malformed_frame, "response must be 5x18");
  ProductMatrix out;
  for (auto& row : out) {
    for (auto& ct : row) ct = r.ciphertext(p);
  }
  r.expect_end();
  return out;
}

Frame error_frame(ErrorCode code, std::string_view message) {
  PayloadWriter w;
  w.u16(static_cast<std::uint16_t>(code));
  const auto n = static_cast<std::uint16_t>(std::min<std::size_t>(message.size(), 1024));
  w.u16(n);
  w.bytes(message.substr(0, n));
  return {MessageType::error, kProtocolVersion, w.take()};
}

void raise_error_frame(const Frame& f) {
  PayloadReader r(f.payload);
  const auto code = r.u16();
  const auto n = r.u16();
  const auto msg = r.bytes(n);
  if (code < 1 || code > static_cast<std::uint16_t>(ErrorCode::io_error)) {
    throw ProtocolError(ErrorCode::malformed_frame, "peer sent unknown error code " + std::to_string(code));
  }
  throw ProtocolError(static_cast<ErrorCode>(code), "peer reported: " + msg);
}

Frame bye_frame() { return {MessageType::bye, kProtocolVersion, {}}; }

}  // namespace pamenc
