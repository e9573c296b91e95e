#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "pamenc/crypto.hpp"
#include "test_util.hpp"

using namespace pamenc;

namespace {

__extension__ using u128 = unsigned __int128;

u64 oracle_mul(u64 a, u64 b, u64 m) { return static_cast<u64>(static_cast<u128>(a) * b % m); }

// Textbook square-and-multiply, bit by bit from the top.
u64 oracle_pow(u64 b, u64 e, u64 m) {
  u64 r = 1 % m;
  for (int bit = 63; bit >= 0; --bit) {
    r = oracle_mul(r, r, m);
    if ((e >> bit) & 1) r = oracle_mul(r, b, m);
  }
  return r;
}

const ElGamalKeys& key64() {
  static const ElGamalKeys k = keygen(64, 42);
  return k;
}

PhiMatrix random_phi(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  PhiMatrix phi;
  for (auto& row : phi.m)
    for (auto& v : row) v = u(rng);
  return phi;
}

}  // namespace

TEST(Arithmetic, MulmodPowmodAgainstOracle) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const u64 m = rng() | 1, a = rng() % m, b = rng() % m, e = rng();
    EXPECT_EQ(mulmod(a, b, m), oracle_mul(a, b, m));
    EXPECT_EQ(powmod(a, e, m), oracle_pow(a, e, m));
  }
}

TEST(Arithmetic, IsPrime) {
  for (u64 p : {2ull, 3ull, 65537ull, 4294967291ull, 18446744073709551557ull}) EXPECT_TRUE(is_prime(p)) << p;
  for (u64 c : {0ull, 1ull, 4ull, 561ull, 3215031751ull, 18446744073709551615ull, 4294967291ull * 3ull})
    EXPECT_FALSE(is_prime(c)) << c;
}

TEST(Random, SeededStreamsAreReproducible) {
  RandomSource a(9), b(9), c(10);
  for (int i = 0; i < 100; ++i) {
    const u64 x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    (void)c;
  }
  RandomSource d(9), e(10);
  EXPECT_NE(d.next_u64(), e.next_u64());
  RandomSource r(3);
  for (int i = 0; i < 1000; ++i) {
    const u64 v = r.uniform(5, 9);
    EXPECT_GE(v, 5u);
    EXPECT_LE(v, 9u);
  }
}

TEST(Keygen, DeterministicForSeed) {
  EXPECT_EQ(keygen(16, 7), keygen(16, 7));
  EXPECT_EQ(keygen(64, 7), keygen(64, 7));
  EXPECT_NE(keygen(32, 7).p, keygen(32, 8).p);
}

TEST(Keygen, SafePrimeOfRequestedWidthAndGenerator) {
  for (int bits : {16, 24, 32, 48, 64}) {
    const auto k = keygen(bits, 100 + static_cast<u64>(bits));
    EXPECT_EQ(64 - __builtin_clzll(k.p), bits);
    EXPECT_TRUE(is_prime(k.p));
    EXPECT_TRUE(is_prime((k.p - 1) / 2));
    EXPECT_NE(oracle_pow(k.g, (k.p - 1) / 2, k.p), 1u);
    EXPECT_NE(oracle_pow(k.g, 2, k.p), 1u);
    EXPECT_EQ(oracle_pow(k.g, k.p - 1, k.p), 1u);
    EXPECT_EQ(k.h, oracle_pow(k.g, k.s, k.p));
    EXPECT_GE(k.s, 2u);
    EXPECT_LE(k.s, k.p - 2);
    EXPECT_NO_THROW(validate(k));
  }
}

TEST(Keygen, RejectsBadSizesAndKeys) {
  EXPECT_THROW(keygen(15, 1), CryptoError);
  EXPECT_THROW(keygen(65, 1), CryptoError);
  auto k = keygen(32, 3);
  k.h ^= 1;
  EXPECT_THROW(validate(k), CryptoError);
  PublicKey bad{15, 2, 4};
  EXPECT_THROW(validate(bad), CryptoError);
}

TEST(Encoding, Examples) {
  const u64 p = key64().p;
  EXPECT_EQ(encode(1.0, 1e8, p), 100000000u);
  EXPECT_EQ(encode(0.0, 1e8, p), 1u);
  EXPECT_EQ(encode(-2.5, 1e8, p), p - 250000000u);
  EXPECT_EQ(encode(0.5e-8, 1e8, p), 1u);            // half rounds away from zero
  EXPECT_EQ(encode(-0.5e-8, 1e8, p), p - 1);
  EXPECT_EQ(decode(p - 1, 1e8, p), -1e-8);
  EXPECT_EQ(centered(p - 5, p), -5);
  EXPECT_THROW(encode(1e12, 1e8, p), OverflowError);
  EXPECT_THROW(encode(std::nan(""), 1e8, p), OverflowError);
}

TEST(Encoding, RoundTripWithinResolution) {
  const u64 p = key64().p;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1e4, 1e4);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng);
    EXPECT_LE(std::abs(decode(encode(v, 1e8, p), 1e8, p) - v), 0.5e-8 + 1e-12);
  }
  // Exact fixed-point values come back exactly.
  for (std::int64_t n : {-123456789LL, -1LL, 7LL, 99999999999LL}) {
    EXPECT_EQ(decode(encode(static_cast<double>(n) / 1e8, 1e8, p), 1e8, p), static_cast<double>(n) / 1e8);
  }
}

TEST(ElGamal, RoundTrip) {
  const auto& k = key64();
  RandomSource rng(3);
  for (int i = 0; i < 1000; ++i) {
    const u64 m = rng.uniform(1, k.p - 1);
    EXPECT_EQ(decrypt(encrypt(m, k.public_key(), rng), k), m);
  }
}

TEST(ElGamal, FreshNonces) {
  const auto& k = key64();
  RandomSource rng(4);
  const auto a = encrypt(12345, k.public_key(), rng);
  const auto b = encrypt(12345, k.public_key(), rng);
  EXPECT_NE(a, b);
}

TEST(ElGamal, FixedNonceMatchesModexp) {
  const auto& k = key64();
  const u64 nonce = 0x123456789abcdefULL % (k.p - 2) + 1, m = 987654321;
  const auto ct = encrypt_with_nonce(m, k.public_key(), nonce);
  EXPECT_EQ(ct.c1, oracle_pow(k.g, nonce, k.p));
  EXPECT_EQ(ct.c2, oracle_mul(m, oracle_pow(k.h, nonce, k.p), k.p));
  // Decryption via explicit inverse c1^(p-1-s).
  EXPECT_EQ(oracle_mul(ct.c2, oracle_pow(ct.c1, k.p - 1 - k.s, k.p), k.p), m);
}

TEST(ElGamal, Homomorphism) {
  const auto& k = key64();
  RandomSource rng(5);
  for (int i = 0; i < 1000; ++i) {
    const u64 a = rng.uniform(1, k.p - 1), b = rng.uniform(1, k.p - 1);
    const auto ct = hom_mul(encrypt(a, k.public_key(), rng), encrypt(b, k.public_key(), rng), k.p);
    EXPECT_EQ(decrypt(ct, k), oracle_mul(a, b, k.p));
  }
  const auto one = encrypt(1, k.public_key(), rng);
  const auto a = encrypt(777, k.public_key(), rng);
  EXPECT_EQ(decrypt(hom_mul(a, one, k.p), k), 777u);
  const auto b = encrypt(31, k.public_key(), rng), c = encrypt(1009, k.public_key(), rng);
  EXPECT_EQ(decrypt(hom_mul(hom_mul(a, b, k.p), c, k.p), k), decrypt(hom_mul(a, hom_mul(b, c, k.p), k.p), k));
}

TEST(EncMatrix, RoundTripAndZeroSubstitution) {
  const auto& k = key64();
  std::mt19937_64 gen(6);
  auto phi = random_phi(gen, 100);
  phi.m[2][7] = 0.0;
  RandomSource rng(7);
  const EncodingParams enc{};
  const auto e = enc_matrix(phi, enc, k.public_key(), rng);
  EXPECT_EQ(e.size(), kPsiSize);
  EXPECT_EQ(e[0].size(), kXiSize);
  for (std::size_t i = 0; i < kPsiSize; ++i)
    for (std::size_t j = 0; j < kXiSize; ++j) {
      if (phi.m[i][j] == 0.0) continue;
      EXPECT_LE(std::abs(decode(decrypt(e[i][j], k), enc.delta_phi, k.p) - phi.m[i][j]), 0.5e-8 + 1e-12);
    }
  EXPECT_EQ(decrypt(e[2][7], k), 1u);
}

TEST(EncMatrix, OverflowNamesEntry) {
  const auto k = keygen(32, 8);
  PhiMatrix phi;
  phi.m[3][11] = 1e6;
  RandomSource rng(9);
  try {
    enc_matrix(phi, {}, k.public_key(), rng);
    FAIL();
  } catch (const OverflowError& e) {
    EXPECT_NE(std::string(e.what()).find("(4,12)"), std::string::npos) << e.what();
  }
}

TEST(EncEval, ElementwiseProducts) {
  const auto& k = key64();
  std::mt19937_64 gen(10);
  // Products stay below p/2 ~ 4.6e18 at the combined scale 1e16.
  const auto phi = random_phi(gen, 20);
  std::uniform_real_distribution<double> u(-20, 20);
  XiVector xi;
  for (auto& v : xi.v) v = u(gen);
  RandomSource rng(11);
  const EncodingParams enc{};
  const auto prod = enc_eval(enc_matrix(phi, enc, k.public_key(), rng), encrypt_xi(xi, enc, k.public_key(), rng), k.p);
  for (std::size_t i = 0; i < kPsiSize; ++i) {
    for (std::size_t j = 0; j < kXiSize; ++j) {
      const auto a = centered(encode(phi.m[i][j], enc.delta_phi, k.p), k.p);
      const auto b = centered(encode(xi.v[j], enc.delta_xi, k.p), k.p);
      EXPECT_EQ(centered(decrypt(prod[i][j], k), k.p), a * b);
    }
  }
}

TEST(EncEval, AllOnesInputReturnsMatrix) {
  const auto& k = key64();
  std::mt19937_64 gen(12);
  const auto phi = random_phi(gen, 10);
  XiVector ones;
  ones.v.fill(1.0);
  RandomSource rng(13);
  const EncodingParams enc{};
  const auto psi = dec_plus(enc_eval(enc_matrix(phi, enc, k.public_key(), rng),
                                     encrypt_xi(ones, enc, k.public_key(), rng), k.p),
                            enc, k);
  for (std::size_t i = 0; i < kPsiSize; ++i) {
    double s = 0;
    for (double v : phi.m[i]) s += v;
    EXPECT_NEAR(psi[i], s, 18 * 1e-8);
  }
}

TEST(DecPlus, QuantizationBound) {
  const auto& k = key64();
  std::mt19937_64 gen(14);
  const EncodingParams enc{};
  RandomSource rng(15);
  for (int trial = 0; trial < 50; ++trial) {
    auto phi = random_phi(gen, 1.0);
    std::uniform_real_distribution<double> u(-400, 400);
    XiVector xi;
    for (auto& v : xi.v) v = u(gen);
    phi.m[1][3] = 0.0;
    xi.v[6] = 0.0;
    const auto prod = enc_eval(enc_matrix(phi, enc, k.public_key(), rng), encrypt_xi(xi, enc, k.public_key(), rng), k.p);
    const auto psi = dec_plus(prod, enc, k);
    const auto zeros = known_zeros(phi, xi);
    const auto masked = dec_plus(prod, enc, k, nullptr, &zeros);
    for (std::size_t i = 0; i < kPsiSize; ++i) {
      double exact = 0, bound = 0;
      for (std::size_t j = 0; j < kXiSize; ++j) {
        exact += phi.m[i][j] * xi.v[j];
        bound += std::abs(phi.m[i][j]) / enc.delta_xi + std::abs(xi.v[j]) / enc.delta_phi +
                 1.0 / (enc.delta_xi * enc.delta_phi);
      }
      EXPECT_LE(std::abs(psi[i] - exact), bound + 1e-9);
      EXPECT_LE(std::abs(masked[i] - exact), bound + 1e-9);
    }
  }
}

TEST(DecPlus, MaskRemovesZeroSubstitutionBias) {
  const auto& k = key64();
  PhiMatrix phi;
  phi.m[0][0] = 0.0;
  phi.m[0][1] = 2.0;
  XiVector xi;
  xi.v[0] = 400.0;  // paired with a zero entry
  xi.v[1] = 3.0;
  RandomSource rng(16);
  const EncodingParams enc{};
  const auto prod = enc_eval(enc_matrix(phi, enc, k.public_key(), rng), encrypt_xi(xi, enc, k.public_key(), rng), k.p);
  const auto zeros = known_zeros(phi, xi);
  EXPECT_GT(std::abs(dec_plus(prod, enc, k)[0] - 6.0), 1e-6);
  EXPECT_EQ(dec_plus(prod, enc, k, nullptr, &zeros)[0], 6.0);
}

TEST(DecPlus, SingleColumn) {
  const auto& k = key64();
  PhiMatrix phi;
  for (std::size_t i = 0; i < kPsiSize; ++i) phi.m[i][4] = static_cast<double>(i) - 2.0;
  XiVector xi;
  xi.v[4] = 1.5;
  RandomSource rng(17);
  const EncodingParams enc{};
  const auto prod = enc_eval(enc_matrix(phi, enc, k.public_key(), rng), encrypt_xi(xi, enc, k.public_key(), rng), k.p);
  const auto zeros = known_zeros(phi, xi);
  const auto psi = dec_plus(prod, enc, k, nullptr, &zeros);
  for (std::size_t i = 0; i < kPsiSize; ++i) EXPECT_EQ(psi[i], (static_cast<double>(i) - 2.0) * 1.5);
}

TEST(OverflowGuard, RejectsSmallModulus) {
  std::mt19937_64 gen(18);
  const auto phi = random_phi(gen, 0.1);
  EXPECT_THROW(make_overflow_guard(phi, {}, keygen(48, 1).p), OverflowError);
  EXPECT_NO_THROW(make_overflow_guard(phi, {}, key64().p));
  EXPECT_THROW(make_overflow_guard(phi, {1e10, 1e10}, key64().p), OverflowError);
}

TEST(OverflowGuard, ChecksInputsAndDecodedProducts) {
  const auto& k = key64();
  PhiMatrix phi;
  phi.m[0][11] = 0.01;
  const auto guard = make_overflow_guard(phi, {}, k.p);
  XiVector xi;
  xi.v[15] = 1.0;
  xi.v[11] = 800.0;  // pressure beyond 750 kPa
  EXPECT_THROW(guard.check_xi(xi), OverflowError);
  xi.v[11] = 700.0;
  EXPECT_NO_THROW(guard.check_xi(xi));

  // A product ciphertext decoding beyond the bound is a scale error.
  RandomSource rng(19);
  ProductMatrix prod;
  for (auto& row : prod)
    for (auto& c : row) c = encrypt(1, k.public_key(), rng);
  prod[0][11] = encrypt(encode(100.0, 1e16, k.p), k.public_key(), rng);
  EXPECT_THROW(dec_plus(prod, {}, k, &guard), OverflowError);
}

TEST(KeyFiles, RoundTripAndValidation) {
  test::TempDir dir;
  const auto& k = key64();
  save_secret_key(dir / "k.key", k);
  save_public_key(dir / "k.pub", k.public_key());
  EXPECT_EQ(load_secret_key(dir / "k.key"), k);
  EXPECT_EQ(load_public_key(dir / "k.pub"), k.public_key());
  {
    std::ofstream f(dir / "bad.key");
    f << "p = 0x17\ng = 0x5\nh = 0x3\ns = 0x2\n";
  }
  EXPECT_THROW(load_secret_key(dir / "bad.key"), std::runtime_error);
}

TEST(EncryptedPhiFile, RoundTrip) {
  test::TempDir dir;
  const auto& k = key64();
  std::mt19937_64 gen(20);
  RandomSource rng(21);
  const auto e = enc_matrix(random_phi(gen, 10), {}, k.public_key(), rng);
  save_encrypted_phi(dir / "phi.enc", e);
  EXPECT_EQ(load_encrypted_phi(dir / "phi.enc", k.p), e);
  EXPECT_THROW(load_encrypted_phi(dir / "phi.enc", keygen(32, 1).p), std::runtime_error);
}
