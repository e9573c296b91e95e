#pragma once

// ElGamal over the full multiplicative group of a safe prime, sized for
// demonstration (at most 64-bit moduli). Not production cryptography.

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "pamenc/controller_poly.hpp"

namespace pamenc {

class CryptoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Encoded or decrypted magnitude outside the representable centered range.
class OverflowError : public CryptoError {
 public:
  using CryptoError::CryptoError;
};

using u64 = std::uint64_t;

u64 mulmod(u64 a, u64 b, u64 m);
u64 powmod(u64 base, u64 exp, u64 m);
// Deterministic Miller-Rabin, exact for all 64-bit inputs.
bool is_prime(u64 n);

// ChaCha20 keystream (libsodium) keyed from a 64-bit seed, or from the OS.
class RandomSource {
 public:
  explicit RandomSource(u64 seed);
  static RandomSource from_os();

  u64 next_u64();
  // Uniform in [lo, hi] by rejection sampling.
  u64 uniform(u64 lo, u64 hi);

 private:
  RandomSource() = default;
  void refill();

  std::array<unsigned char, 32> key_{};
  std::array<unsigned char, 64> block_{};
  std::uint32_t counter_ = 0;
  std::size_t used_ = 64;
};

struct PublicKey {
  u64 p = 0;
  u64 g = 0;
  u64 h = 0;

  bool operator==(const PublicKey&) const = default;
};

struct ElGamalKeys {
  u64 p = 0;
  u64 g = 0;
  u64 h = 0;
  u64 s = 0;

  PublicKey public_key() const { return {p, g, h}; }
  bool operator==(const ElGamalKeys&) const = default;
};

inline constexpr int kMinKeyBits = 16;
inline constexpr int kMaxKeyBits = 64;

// p = 2q + 1 with q prime and p exactly `bits` wide; g a primitive root;
// s uniform in [2, p-2]; h = g^s.
ElGamalKeys keygen(int bits, RandomSource& rng);
ElGamalKeys keygen(int bits, u64 seed);

// Throws CryptoError unless p is a safe prime, g generates the group and h = g^s.
void validate(const PublicKey& key);
void validate(const ElGamalKeys& keys);

struct Ciphertext {
  u64 c1 = 0;
  u64 c2 = 0;

  bool operator==(const Ciphertext&) const = default;
};

struct EncodingParams {
  double delta_xi = 1e8;
  double delta_phi = 1e8;
};

// round-half-away(v * delta), 0 -> 1, negatives as p - |m|.
u64 encode(double v, double delta, u64 p);
// Centered representative divided by delta.
double decode(u64 m, double delta, u64 p);
// Centered representative as a signed integer.
std::int64_t centered(u64 m, u64 p);

Ciphertext encrypt(u64 m, const PublicKey& key, RandomSource& rng);
Ciphertext encrypt_with_nonce(u64 m, const PublicKey& key, u64 nonce);
u64 decrypt(const Ciphertext& ct, const ElGamalKeys& keys);
Ciphertext hom_mul(const Ciphertext& a, const Ciphertext& b, u64 p);

template <typename T>
using Grid = std::array<std::array<T, kXiSize>, kPsiSize>;
using EncryptedPhi = Grid<Ciphertext>;
using ProductMatrix = Grid<Ciphertext>;
using EncryptedXi = std::array<Ciphertext, kXiSize>;

EncryptedPhi enc_matrix(const PhiMatrix& phi, const EncodingParams& params, const PublicKey& key, RandomSource& rng);
EncryptedXi encrypt_xi(const XiVector& xi, const EncodingParams& params, const PublicKey& key, RandomSource& rng);

// Elementwise products only; column j uses xi_j.
ProductMatrix enc_eval(const EncryptedPhi& enc_phi, const EncryptedXi& enc_xi, u64 p);

// Magnitude limits on the controller inputs and states feeding xi.
struct XiBounds {
  double Kref = 10.0;
  double theta = kAngleLimit;
  double pressure = kPressureMax;
  double x_theta = 5.0;
  double x_F = 400.0;

  std::array<double, kXiSize> per_entry() const;
};

// Largest |Phi_ij * xi_j| the session can decode, fixed at setup.
struct OverflowGuard {
  double max_product = 0.0;
  XiBounds bounds{};

  // Throws OverflowError naming the first entry outside bounds.
  void check_xi(const XiVector& xi) const;
};

// Throws OverflowError if some scaled product could reach p/2.
OverflowGuard make_overflow_guard(const PhiMatrix& phi, const EncodingParams& params, u64 p,
                                  const XiBounds& bounds = {});

// Products whose plaintext factor is exactly zero. encode() has to send 0 to
// 1, so such a product decodes to the other factor / delta instead of 0. The
// decrypting side knows Phi and xi and can drop those entries.
using ZeroMask = Grid<bool>;
ZeroMask known_zeros(const PhiMatrix& phi, const XiVector& xi);

// Decrypts every product not masked out, decodes with delta_xi * delta_phi and
// sums each row left to right. With a guard, a decoded product beyond its
// bound is treated as a scale misconfiguration and throws OverflowError.
Psi dec_plus(const ProductMatrix& products, const EncodingParams& params, const ElGamalKeys& keys,
             const OverflowGuard* guard = nullptr, const ZeroMask* zeros = nullptr);

// Key files: `name = 0x...` lines; the secret file adds s.
void save_public_key(const std::filesystem::path& path, const PublicKey& key);
void save_secret_key(const std::filesystem::path& path, const ElGamalKeys& keys);
PublicKey load_public_key(const std::filesystem::path& path);
ElGamalKeys load_secret_key(const std::filesystem::path& path);

// 90 lines of `c1 c2` in hex, row-major.
void save_encrypted_phi(const std::filesystem::path& path, const EncryptedPhi& enc);
EncryptedPhi load_encrypted_phi(const std::filesystem::path& path, u64 p);

}  // namespace pamenc
