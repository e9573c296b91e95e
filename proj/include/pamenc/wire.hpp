#pragma once

// Frame layout (all integers big-endian):
//   u32 length   bytes that follow this field (type + version + payload)
//   u8  type
//   u16 version
//   payload
// A group element is a u16 byte count followed by its minimal big-endian
// magnitude; a ciphertext is two such elements (c1, c2).

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pamenc/crypto.hpp"

namespace pamenc {

inline constexpr std::uint16_t kProtocolVersion = 1;
inline constexpr std::size_t kFrameHeaderSize = 4;
inline constexpr std::size_t kMaxFrameLength = 1u << 20;

enum class MessageType : std::uint8_t {
  hello = 1,          // device -> service: public key (p, g, h)
  hello_ack = 2,      // service -> device: p, rows, cols
  eval_request = 3,   // u16 count, then count ciphertexts of xi
  eval_response = 4,  // u16 rows, u16 cols, then rows*cols product ciphertexts, row-major
  error = 5,          // u16 code, u16 length, UTF-8 message
  bye = 6,            // empty
};

enum class ErrorCode : std::uint16_t {
  malformed_frame = 1,
  version_mismatch = 2,
  timeout = 3,
  unexpected_message = 4,
  invalid_ciphertext = 5,
  frame_too_large = 6,
  connection_closed = 7,
  key_mismatch = 8,
  io_error = 9,
};

std::string_view error_code_name(ErrorCode code);

class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(ErrorCode code, const std::string& what);
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

struct Frame {
  MessageType type = MessageType::bye;
  std::uint16_t version = kProtocolVersion;
  std::vector<std::uint8_t> payload;
};

std::vector<std::uint8_t> encode_frame(const Frame& frame);

// Validates a length field read off the wire; returns it.
std::uint32_t check_frame_length(std::span<const std::uint8_t, kFrameHeaderSize> header);

// Decodes the bytes after the length field. Unknown types and short bodies
// are malformed_frame; a foreign version is version_mismatch.
Frame decode_frame_body(std::span<const std::uint8_t> body);

// Whole-frame convenience, header included.
Frame decode_frame(std::span<const std::uint8_t> bytes);

class PayloadWriter {
 public:
  void u8(std::uint8_t v);
  void u16(std::uint16_t v);
  void element(u64 v);
  void ciphertext(const Ciphertext& ct);
  void bytes(std::string_view s);
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class PayloadReader {
 public:
  explicit PayloadReader(std::span<const std::uint8_t> in) : in_(in) {}
  std::uint8_t u8();
  std::uint16_t u16();
  u64 element();
  Ciphertext ciphertext(u64 p);  // components must lie in [1, p-1]
  std::string bytes(std::size_t n);
  void expect_end() const;

 private:
  std::span<const std::uint8_t> need(std::size_t n);
  std::span<const std::uint8_t> in_;
};

Frame hello_frame(const PublicKey& key);
PublicKey parse_hello(const Frame& f);

struct HelloAck {
  u64 p = 0;
  std::uint16_t rows = 0;
  std::uint16_t cols = 0;
};
Frame hello_ack_frame(const HelloAck& ack);
HelloAck parse_hello_ack(const Frame& f);

Frame eval_request_frame(const EncryptedXi& xi);
EncryptedXi parse_eval_request(const Frame& f, u64 p);

Frame eval_response_frame(const ProductMatrix& products);
ProductMatrix parse_eval_response(const Frame& f, u64 p);

Frame error_frame(ErrorCode code, std::string_view message);
// Rethrows the peer's error as a ProtocolError.
[[noreturn]] void raise_error_frame(const Frame& f);

Frame bye_frame();

}  // namespace pamenc
