#include "pamenc/crypto.hpp"

#include <sodium.h>

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>

namespace pamenc {
namespace {

__extension__ using u128 = unsigned __int128;

void ensure_sodium() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (sodium_init() < 0) throw CryptoError("libsodium initialisation failed");
  });
}

constexpr std::array<u64, 12> kWitnesses{2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};

constexpr std::array<u64, 24> kSmallPrimes{3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37, 41,
                                           43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97};

bool survives_sieve(u64 n) {
  for (u64 sp : kSmallPrimes) {
    if (n == sp) return true;
    if (n % sp == 0) return false;
  }
  return true;
}

std::string hex(u64 v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "0x%016" PRIx64, v);
  return buf;
}

u64 parse_hex(const std::string& text, const std::string& where) {
  std::size_t pos = 0;
  u64 v = 0;
  try {
    v = std::stoull(text, &pos, 16);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != text.size()) throw CryptoError(where + ": bad hex value '" + text + "'");
  return v;
}

void check_message(u64 m, u64 p) {
  if (m == 0 || m >= p) throw CryptoError("plaintext outside [1, p-1]");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CryptoError("cannot write " + path.string());
  out << text;
  if (!out) throw CryptoError("write failed for " + path.string());
}

}  // namespace

u64 mulmod(u64 a, u64 b, u64 m) {
  return static_cast<u64>(static_cast<u128>(a) * b % m);
}

u64 powmod(u64 base, u64 exp, u64 m) {
  if (m == 1) return 0;
  u64 result = 1;
  base %= m;
  while (exp) {
    if (exp & 1) result = mulmod(result, base, m);
    base = mulmod(base, base, m);
    exp >>= 1;
  }
  return result;
}

bool is_prime(u64 n) {
  if (n < 2) return false;
  for (u64 w : kWitnesses) {
    if (n % w == 0) return n == w;
  }
  u64 d = n - 1;
  int r = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++r;
  }
  for (u64 a : kWitnesses) {
    u64 x = powmod(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (int i = 1; i < r; ++i) {
      x = mulmod(x, x, n);
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

RandomSource::RandomSource(u64 seed) {
  ensure_sodium();
  for (std::size_t i = 0; i < 8; ++i) key_[i] = static_cast<unsigned char>(seed >> (8 * i));
}

RandomSource RandomSource::from_os() {
  ensure_sodium();
  RandomSource r;
  randombytes_buf(r.key_.data(), r.key_.size());
  return r;
}

void RandomSource::refill() {
  static constexpr std::array<unsigned char, crypto_stream_chacha20_ietf_NONCEBYTES> nonce{};
  block_.fill(0);
  crypto_stream_chacha20_ietf_xor_ic(block_.data(), block_.data(), block_.size(), nonce.data(), counter_++,
                                     key_.data());
  used_ = 0;
}

u64 RandomSource::next_u64() {
  if (used_ + 8 > block_.size()) refill();
  u64 v = 0;
  for (std::size_t i = 0; i < 8; ++i) v |= static_cast<u64>(block_[used_ + i]) << (8 * i);
  used_ += 8;
  return v;
}

u64 RandomSource::uniform(u64 lo, u64 hi) {
  if (lo > hi) throw CryptoError("uniform: empty range");
  const u64 span = hi - lo;
  if (span == ~u64{0}) return next_u64();
  const u64 n = span + 1;
  const u64 limit = ~u64{0} - (~u64{0} % n);  // reject the biased tail
  u64 v = 0;
  do {
    v = next_u64();
  } while (v >= limit);
  return lo + v % n;
}

ElGamalKeys keygen(int bits, RandomSource& rng) {
  if (bits < kMinKeyBits || bits > kMaxKeyBits) {
    throw CryptoError("key size must be between " + std::to_string(kMinKeyBits) + " and " +
                      std::to_string(kMaxKeyBits) + " bits");
  }
  const u64 q_lo = u64{1} << (bits - 2);
  const u64 q_hi = (u64{1} << (bits - 1)) - 1;
  constexpr long kMaxCandidates = 50'000'000;
  for (long attempt = 0; attempt < kMaxCandidates; ++attempt) {
    const u64 q = rng.uniform(q_lo, q_hi) | 1;
    const u64 p = 2 * q + 1;
    if (!survives_sieve(q) || !survives_sieve(p)) continue;
    if (!is_prime(q) || !is_prime(p)) continue;

    ElGamalKeys k;
    k.p = p;
    do {
      k.g = rng.uniform(2, p - 2);
    } while (powmod(k.g, 2, p) == 1 || powmod(k.g, q, p) == 1);
    k.s = rng.uniform(2, p - 2);
    k.h = powmod(k.g, k.s, p);
    return k;
  }
  throw CryptoError("safe prime search exhausted its candidate budget");
}

ElGamalKeys keygen(int bits, u64 seed) {
  RandomSource rng(seed);
  return keygen(bits, rng);
}

void validate(const PublicKey& key) {
  const u64 p = key.p;
  if (p < (u64{1} << (kMinKeyBits - 1)) || !is_prime(p) || !is_prime((p - 1) / 2)) {
    throw CryptoError("modulus is not a safe prime of at least 16 bits");
  }
  const u64 q = (p - 1) / 2;
  if (key.g <= 1 || key.g >= p || powmod(key.g, 2, p) == 1 || powmod(key.g, q, p) == 1) {
    throw CryptoError("g does not generate the multiplicative group");
  }
  if (key.h == 0 || key.h >= p) throw CryptoError("h outside [1, p-1]");
}

void validate(const ElGamalKeys& keys) {
  validate(keys.public_key());
  if (keys.s < 1 || keys.s >= keys.p - 1) throw CryptoError("secret exponent outside [1, p-2]");
  if (powmod(keys.g, keys.s, keys.p) != keys.h) throw CryptoError("h != g^s mod p");
}

u64 encode(double v, double delta, u64 p) {
  const double scaled = std::round(v * delta);  // half away from zero
  if (!std::isfinite(scaled) || std::abs(scaled) >= static_cast<double>(p / 2)) {
    throw OverflowError("value " + std::to_string(v) + " scaled by " + std::to_string(delta) +
                        " does not fit the centered range of p");
  }
  auto m0 = static_cast<std::int64_t>(scaled);
  if (m0 == 0) m0 = 1;
  return m0 > 0 ? static_cast<u64>(m0) : p - static_cast<u64>(-m0);
}

std::int64_t centered(u64 m, u64 p) {
  return m <= p / 2 ? static_cast<std::int64_t>(m) : -static_cast<std::int64_t>(p - m);
}

double decode(u64 m, double delta, u64 p) { return static_cast<double>(centered(m, p)) / delta; }

Ciphertext encrypt_with_nonce(u64 m, const PublicKey& key, u64 nonce) {
  check_message(m, key.p);
  return {powmod(key.g, nonce, key.p), mulmod(m, powmod(key.h, nonce, key.p), key.p)};
}

Ciphertext encrypt(u64 m, const PublicKey& key, RandomSource& rng) {
  return encrypt_with_nonce(m, key, rng.uniform(1, key.p - 2));
}

u64 decrypt(const Ciphertext& ct, const ElGamalKeys& keys) {
  const u64 shared = powmod(ct.c1, keys.s, keys.p);
  return mulmod(ct.c2, powmod(shared, keys.p - 2, keys.p), keys.p);
}

Ciphertext hom_mul(const Ciphertext& a, const Ciphertext& b, u64 p) {
  return {mulmod(a.c1, b.c1, p), mulmod(a.c2, b.c2, p)};
}

EncryptedPhi enc_matrix(const PhiMatrix& phi, const EncodingParams& params, const PublicKey& key,
                        RandomSource& rng) {
  EncryptedPhi out;
  for (std::size_t i = 0; i < kPsiSize; ++i) {
    for (std::size_t j = 0; j < kXiSize; ++j) {
      u64 m = 0;
      try {
        m = encode(phi.m[i][j], params.delta_phi, key.p);
      } catch (const OverflowError& e) {
        throw OverflowError("Phi(" + std::to_string(i + 1) + "," + std::to_string(j + 1) + "): " + e.what());
      }
      out[i][j] = encrypt(m, key, rng);
    }
  }
  return out;
}

EncryptedXi encrypt_xi(const XiVector& xi, const EncodingParams& params, const PublicKey& key, RandomSource& rng) {
  EncryptedXi out;
  for (std::size_t j = 0; j < kXiSize; ++j) {
    u64 m = 0;
    try {
      m = encode(xi.v[j], params.delta_xi, key.p);
    } catch (const OverflowError& e) {
      throw OverflowError("xi(" + std::to_string(j + 1) + "): " + e.what());
    }
    out[j] = encrypt(m, key, rng);
  }
  return out;
}

ProductMatrix enc_eval(const EncryptedPhi& enc_phi, const EncryptedXi& enc_xi, u64 p) {
  ProductMatrix out;
  for (std::size_t i = 0; i < kPsiSize; ++i) {
    for (std::size_t j = 0; j < kXiSize; ++j) out[i][j] = hom_mul(enc_phi[i][j], enc_xi[j], p);
  }
  return out;
}

std::array<double, kXiSize> XiBounds::per_entry() const {
  const double th = theta;
  return {Kref,        Kref * th * th, th,      th, x_theta, th * th,  th * th, x_theta * th, th * th * th,
          th * th * th, x_theta * th * th, pressure, th * pressure, pressure, th * pressure, 1.0, x_F, x_F};
}

void OverflowGuard::check_xi(const XiVector& xi) const {
  const auto b = bounds.per_entry();
  for (std::size_t j = 0; j < kXiSize; ++j) {
    if (!(std::abs(xi.v[j]) <= b[j])) {
      throw OverflowError("xi(" + std::to_string(j + 1) + ") = " + std::to_string(xi.v[j]) +
                          " exceeds the session bound " + std::to_string(b[j]));
    }
  }
}

OverflowGuard make_overflow_guard(const PhiMatrix& phi, const EncodingParams& params, u64 p,
                                  const XiBounds& bounds) {
  OverflowGuard guard;
  guard.bounds = bounds;
  const auto b = bounds.per_entry();
  long double worst = 0.0L;
  for (std::size_t i = 0; i < kPsiSize; ++i) {
    for (std::size_t j = 0; j < kXiSize; ++j) {
      guard.max_product = std::max(guard.max_product, std::abs(phi.m[i][j]) * b[j]);
      // Encoded magnitudes after rounding (and the 0 -> 1 substitution).
      const long double a = std::abs(static_cast<long double>(phi.m[i][j])) * params.delta_phi + 1.0L;
      const long double x = static_cast<long double>(b[j]) * params.delta_xi + 1.0L;
      worst = std::max(worst, a * x);
    }
  }
  if (worst >= static_cast<long double>(p / 2)) {
    throw OverflowError("scaled product bound " + std::to_string(static_cast<double>(worst)) +
                        " reaches p/2 = " + std::to_string(static_cast<double>(p / 2)) +
                        "; use a larger key or smaller scaling factors");
  }
  return guard;
}

ZeroMask known_zeros(const PhiMatrix& phi, const XiVector& xi) {
  ZeroMask mask{};
  for (std::size_t i = 0; i < kPsiSize; ++i) {
    for (std::size_t j = 0; j < kXiSize; ++j) mask[i][j] = phi.m[i][j] == 0.0 || xi.v[j] == 0.0;
  }
  return mask;
}

Psi dec_plus(const ProductMatrix& products, const EncodingParams& params, const ElGamalKeys& keys,
             const OverflowGuard* guard, const ZeroMask* zeros) {
  const double scale = params.delta_xi * params.delta_phi;
  Psi psi{};
  for (std::size_t i = 0; i < kPsiSize; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < kXiSize; ++j) {
      if (zeros && (*zeros)[i][j]) continue;
      const double v = decode(decrypt(products[i][j], keys), scale, keys.p);
      if (guard && std::abs(v) > guard->max_product * (1.0 + 1e-6) + 1e-6) {
        throw OverflowError("decoded product (" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ") = " +
                            std::to_string(v) + " exceeds the session bound; scaling is misconfigured");
      }
      sum += v;
    }
    psi[i] = sum;
  }
  return psi;
}

void save_public_key(const std::filesystem::path& path, const PublicKey& key) {
  write_text(path, "p = " + hex(key.p) + "\ng = " + hex(key.g) + "\nh = " + hex(key.h) + "\n");
}

void save_secret_key(const std::filesystem::path& path, const ElGamalKeys& keys) {
  write_text(path, "p = " + hex(keys.p) + "\ng = " + hex(keys.g) + "\nh = " + hex(keys.h) + "\ns = " +
                       hex(keys.s) + "\n");
}

PublicKey load_public_key(const std::filesystem::path& path) {
  const auto kv = KeyValues::load(path);
  kv.reject_unknown({"p", "g", "h", "s"});
  PublicKey key{kv.hex("p"), kv.hex("g"), kv.hex("h")};
  validate(key);
  return key;
}

ElGamalKeys load_secret_key(const std::filesystem::path& path) {
  const auto kv = KeyValues::load(path);
  kv.reject_unknown({"p", "g", "h", "s"});
  if (!kv.contains("s")) throw CryptoError(path.string() + ": not a secret key file (no s)");
  ElGamalKeys keys{kv.hex("p"), kv.hex("g"), kv.hex("h"), kv.hex("s")};
  validate(keys);
  return keys;
}

void save_encrypted_phi(const std::filesystem::path& path, const EncryptedPhi& enc) {
  std::string text;
  for (const auto& row : enc) {
    for (const auto& ct : row) text += hex(ct.c1) + " " + hex(ct.c2) + "\n";
  }
  write_text(path, text);
}

EncryptedPhi load_encrypted_phi(const std::filesystem::path& path, u64 p) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CryptoError("cannot open " + path.string());
  EncryptedPhi enc;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = path.string() + ":" + std::to_string(n + 1);
    if (n == kPsiSize * kXiSize) throw CryptoError(where + ": more than 90 ciphertexts");
    std::istringstream ss(line);
    std::string a, b, extra;
    if (!(ss >> a >> b) || (ss >> extra)) throw CryptoError(where + ": expected `c1 c2`");
    const Ciphertext ct{parse_hex(a, where), parse_hex(b, where)};
    if (ct.c1 == 0 || ct.c1 >= p || ct.c2 == 0 || ct.c2 >= p) throw CryptoError(where + ": component outside [1, p-1]");
    enc[n / kXiSize][n % kXiSize] = ct;
    ++n;
  }
  if (n != kPsiSize * kXiSize) throw CryptoError(path.string() + ": expected 90 ciphertexts, found " + std::to_string(n));
  return enc;
}

}  // namespace pamenc
